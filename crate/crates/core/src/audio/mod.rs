//! Deterministic signal-processing front end.
//!
//! All frame-based features share one 5 ms grid: frame `t` is centred on
//! sample `t * hop + hop / 2` and the signal is reflected at both edges, so a
//! clip of `n` samples yields `ceil(n / hop)` frames. A 1.12 s segment gives
//! 224 frames on every stream (mel, MFCC, pitch) and 56 frames on the 20 ms
//! character grid.

mod dump;
mod frames;
mod mel;
mod pitch;
mod resample;
mod wav;

pub use dump::{read_feature_dump, write_feature_dump, FeatureDump, DUMP_VERSION};
pub use frames::{upsample_frames, Frames};
pub use mel::{acoustic_frames, mel_filterbank, mel_spectrogram, mfcc_from_mel, AcousticFrames, MelSpectrogram};
pub use pitch::{extract_pitch, PitchTrack};
pub(crate) use mel::{hann as hann_window, MAG_EPS};
pub use resample::resample;
pub use wav::{read_wav, write_wav, write_wav_atomic};

use crate::error::{invalid, Result};

pub const SAMPLE_RATE: u32 = 16_000;

/// 1.12 s at 16 kHz.
pub const SEGMENT_SAMPLES: usize = 17_920;

/// Mono audio.
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(invalid("sample rate must be positive"));
        }
        if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
            return Err(invalid(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn silence(len: usize, sample_rate: u32) -> Self {
        Self {
            samples: vec![0.0; len],
            sample_rate,
        }
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Split into fixed-length segments.
///
/// A trailing partial segment is zero-padded when it fills at least
/// `min_fill` of a segment and dropped otherwise.
pub fn segment(waveform: &Waveform, seg_samples: usize, min_fill: f64) -> Vec<Waveform> {
    assert!(seg_samples > 0);
    let s = waveform.samples();
    let mut out = Vec::with_capacity(s.len() / seg_samples + 1);
    for chunk in s.chunks(seg_samples) {
        if chunk.len() == seg_samples {
            out.push(Waveform {
                samples: chunk.to_vec(),
                sample_rate: waveform.sample_rate,
            });
        } else if chunk.len() as f64 >= min_fill * seg_samples as f64 {
            let mut v = chunk.to_vec();
            v.resize(seg_samples, 0.0);
            out.push(Waveform {
                samples: v,
                sample_rate: waveform.sample_rate,
            });
        }
    }
    out
}

/// Index into a signal of length `n` with mirror reflection at both ends
/// (the edge sample is not repeated).
pub(crate) fn reflect_index(i: isize, n: usize) -> usize {
    debug_assert!(n > 0);
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Start sample (may be negative) of the analysis window of frame `t`.
pub(crate) fn window_start(t: usize, hop: usize, win: usize) -> isize {
    (t * hop + hop / 2) as isize - (win / 2) as isize
}
