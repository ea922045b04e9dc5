//! Band-limited sample-rate conversion.
//!
//! Windowed-sinc interpolation evaluated per output sample. The lowpass
//! cutoff sits just below the Nyquist frequency of the lower of the two
//! rates, so downsampling does not alias and upsampling does not image.

use std::f64::consts::PI;

use crate::audio::AudioClip;
use crate::error::{Error, Result};

/// Half-width of the sinc kernel in input samples at unit ratio.
const HALF_TAPS: usize = 32;

/// Fraction of the limiting Nyquist used as the filter cutoff.
const CUTOFF: f64 = 0.945;

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Resample a clip to `target_rate` with polyphase windowed-sinc
/// interpolation.
///
/// Rates reduce to an `up/down` rational, so fractional positions cycle
/// through `up` phases; the kernel taps for each phase are tabulated once
/// per call and the hot loop is pure multiply-accumulate. The identity
/// case returns the input unchanged. Output length is
/// `round(len * target / source)`, so duration is preserved to within one
/// sample period.
pub fn resample(clip: &AudioClip, target_rate: u32) -> Result<AudioClip> {
    if target_rate == 0 {
        return Err(Error::OutOfRange {
            what: "target_rate",
            msg: "must be positive".into(),
        });
    }
    if clip.is_empty() {
        return Err(Error::EmptyClip);
    }
    if target_rate == clip.sample_rate {
        return Ok(clip.clone());
    }

    let g = gcd(target_rate, clip.sample_rate);
    let up = (target_rate / g) as usize;
    let down = (clip.sample_rate / g) as usize;
    let ratio = target_rate as f64 / clip.sample_rate as f64;
    let out_len = (clip.len() as f64 * ratio).round().max(1.0) as usize;

    // When downsampling, the kernel stretches by 1/ratio and the cutoff
    // drops below the input Nyquist; when upsampling it stays at the input
    // Nyquist.
    let (cutoff, half_width) = if ratio < 1.0 {
        (CUTOFF * ratio, (HALF_TAPS as f64 / ratio).ceil() as usize)
    } else {
        (CUTOFF, HALF_TAPS)
    };
    let taps = 2 * half_width + 1;

    // Phase p covers output samples with fractional input offset p*down/up.
    let mut kernel = vec![0.0; up * taps];
    for p in 0..up {
        let frac = p as f64 / up as f64;
        let row = &mut kernel[p * taps..(p + 1) * taps];
        for (j, k) in row.iter_mut().enumerate() {
            let d = frac + half_width as f64 - j as f64;
            let w = 0.5 * (1.0 + (PI * d / (half_width as f64 + 1.0)).cos());
            *k = cutoff * sinc(cutoff * d) * w;
        }
    }

    let x = &clip.samples;
    let n = x.len() as isize;
    let mut out = Vec::with_capacity(out_len);
    for m in 0..out_len {
        let num = m * down;
        let base = (num / up) as isize;
        let phase = num % up;
        let row = &kernel[phase * taps..(phase + 1) * taps];
        let lo = base - half_width as isize;
        let mut acc = 0.0;
        if lo >= 0 && lo + taps as isize <= n {
            let seg = &x[lo as usize..lo as usize + taps];
            acc = crate::mat::dot(row, seg);
        } else {
            for (j, k) in row.iter().enumerate() {
                let idx = lo + j as isize;
                if idx >= 0 && idx < n {
                    acc += x[idx as usize] * k;
                }
            }
        }
        out.push(acc);
    }

    let mut res = AudioClip::new(out, target_rate);
    res.speaker_id = clip.speaker_id;
    Ok(res)
}
