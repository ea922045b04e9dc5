//! CLI behavior: exit codes, file outputs, idempotence.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_cyclesvc")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().unwrap()
}

fn write_config(dir: &Path, extra: &str) -> std::path::PathBuf {
    let path = dir.join("desk.cfg");
    std::fs::write(&path, format!("preset=desk\n{extra}")).unwrap();
    path
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

#[test]
fn usage_errors_exit_one() {
    let out = run(&["no-such-command"]);
    assert_eq!(code(&out), 1);
    let out = run(&["preprocess", "--bogus-flag"]);
    assert_eq!(code(&out), 1);
    // Help succeeds.
    let out = run(&["--help"]);
    assert_eq!(code(&out), 0);
}

#[test]
fn config_errors_exit_one_with_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "preset=desk\nnot_a_key=3\n").unwrap();
    let input = dir.path().join("in");
    std::fs::create_dir_all(&input).unwrap();
    let out = run(&[
        "preprocess",
        "--input",
        input.to_str().unwrap(),
        "--output",
        dir.path().join("out").to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains(":2:"), "stderr: {stderr}");
    assert!(stderr.contains("not_a_key"), "stderr: {stderr}");

    // Missing preset is a named error.
    std::fs::write(&cfg, "lr=0.001\n").unwrap();
    let out = run(&[
        "preprocess",
        "--input",
        input.to_str().unwrap(),
        "--output",
        dir.path().join("out").to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("preset"));
}

#[test]
fn preprocess_rejects_corpora_without_usable_clips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    // One clip, shorter than the 2 s minimum.
    let spk = dir.path().join("in/solo");
    std::fs::create_dir_all(&spk).unwrap();
    let short = cyclesvc::testsignal::sine(220.0, 0.4, 1.0, 44100);
    cyclesvc::audio::write_wav(spk.join("short.wav"), &short).unwrap();

    let out = run(&[
        "preprocess",
        "--input",
        dir.path().join("in").to_str().unwrap(),
        "--output",
        dir.path().join("feat").to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("skipped"), "stderr: {stderr}");
}

#[test]
fn preprocess_writes_records_and_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let corpus = dir.path().join("corpus");
    let out = run(&[
        "synth-corpus",
        "--output",
        corpus.to_str().unwrap(),
        "--clips",
        "1",
        "--seconds",
        "2.05",
        "--seed",
        "3",
    ]);
    assert_eq!(code(&out), 0);

    let feat = dir.path().join("feat");
    let args = [
        "preprocess",
        "--input",
        corpus.to_str().unwrap(),
        "--output",
        feat.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
    ];
    assert_eq!(code(&run(&args)), 0);
    let stats1 = std::fs::read(feat.join("stats.json")).unwrap();
    let rec1 = std::fs::read(feat.join("records/alda__clip000.svcf")).unwrap();
    assert_eq!(code(&run(&args)), 0);
    assert_eq!(std::fs::read(feat.join("stats.json")).unwrap(), stats1);
    assert_eq!(
        std::fs::read(feat.join("records/alda__clip000.svcf")).unwrap(),
        rec1
    );
}

#[test]
fn convert_unknown_speaker_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "max_steps=1\nbatch_size=1\nsegment_frames=16\nhidden=8\nddsp_layers=1\ndenoiser_layers=1\ndenoiser_channels=8\ncontent_dim=4\ncheckpoint_every=0\n",
    );
    let corpus = dir.path().join("corpus");
    run(&[
        "synth-corpus",
        "--output",
        corpus.to_str().unwrap(),
        "--clips",
        "1",
        "--seconds",
        "2.05",
    ]);
    let feat = dir.path().join("feat");
    run(&[
        "preprocess",
        "--input",
        corpus.to_str().unwrap(),
        "--output",
        feat.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
    ]);
    let run_dir = dir.path().join("run");
    let out = run(&[
        "train",
        "--data",
        feat.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--run-dir",
        run_dir.to_str().unwrap(),
        "--log-every",
        "0",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let ckpt = run_dir.join("model.svck");

    let source = corpus.join("alda/clip000.wav");
    let out = run(&[
        "convert",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--source",
        source.to_str().unwrap(),
        "--speaker",
        "nonexistent",
        "--output",
        dir.path().join("x.wav").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);

    // Valid call emits one wav.
    let out_path = dir.path().join("ok.wav");
    let out = run(&[
        "convert",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--source",
        source.to_str().unwrap(),
        "--speaker",
        "bruno",
        "--key",
        "4",
        "--shallow-steps",
        "3",
        "--output",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_path.exists());
}

#[test]
fn evaluate_pairs_by_stem_and_reports_mismatches() {
    let dir = tempfile::tempdir().unwrap();
    let refs = dir.path().join("refs");
    let outs = dir.path().join("outs");
    std::fs::create_dir_all(&refs).unwrap();
    std::fs::create_dir_all(&outs).unwrap();
    let clip = cyclesvc::testsignal::sing(&cyclesvc::testsignal::SingSpec::default());
    cyclesvc::audio::write_wav(refs.join("a.wav"), &clip).unwrap();
    cyclesvc::audio::write_wav(outs.join("a.wav"), &clip).unwrap();
    cyclesvc::audio::write_wav(refs.join("only_ref.wav"), &clip).unwrap();

    let csv = dir.path().join("m.csv");
    let out = run(&[
        "evaluate",
        "--ref-dir",
        refs.to_str().unwrap(),
        "--out-dir",
        outs.to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let body = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = body.trim().lines().collect();
    assert_eq!(lines[0], "file,mel_ssim,f0_rmse_hz,hnr_db");
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("a.wav,"));
    assert!(String::from_utf8_lossy(&out.stderr).contains("only_ref"));

    // Empty dirs: header-only CSV, success.
    let empty1 = dir.path().join("e1");
    let empty2 = dir.path().join("e2");
    std::fs::create_dir_all(&empty1).unwrap();
    std::fs::create_dir_all(&empty2).unwrap();
    let csv2 = dir.path().join("empty.csv");
    let out = run(&[
        "evaluate",
        "--ref-dir",
        empty1.to_str().unwrap(),
        "--out-dir",
        empty2.to_str().unwrap(),
        "--csv",
        csv2.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(
        std::fs::read_to_string(&csv2).unwrap().trim(),
        "file,mel_ssim,f0_rmse_hz,hnr_db"
    );
}
