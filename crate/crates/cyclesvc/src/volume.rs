//! Per-frame RMS volume, aligned with the mel framing.

use crate::error::{Error, Result};
use crate::stft::num_frames;
use crate::AudioClip;

/// Root-mean-square level per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeContour {
    pub rms: Vec<f64>,
}

impl VolumeContour {
    pub fn len(&self) -> usize {
        self.rms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rms.is_empty()
    }
}

/// Unweighted RMS over the same centered `window_len` frame used by the
/// mel spectrogram, one value per `hop` samples.
pub fn extract_volume(clip: &AudioClip, hop: usize, window_len: usize) -> Result<VolumeContour> {
    if hop == 0 {
        return Err(Error::OutOfRange {
            what: "hop",
            msg: "must be positive".into(),
        });
    }
    let frames = num_frames(clip.len(), hop);
    let half = (window_len / 2) as isize;
    let mut rms = Vec::with_capacity(frames);
    for t in 0..frames {
        let center = (t * hop) as isize;
        let mut acc = 0.0;
        for i in -half..half {
            let idx = center + i;
            if idx >= 0 && (idx as usize) < clip.len() {
                let v = clip.samples[idx as usize];
                acc += v * v;
            }
        }
        rms.push((acc / window_len as f64).sqrt());
    }
    Ok(VolumeContour { rms })
}
