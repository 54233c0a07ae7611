use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{reflect_index, window_start, Frames, PitchTrack, Waveform};
use crate::config::FeatureConfig;
use crate::error::{invalid, Error, Result};

/// Added under the square root of the power spectrum.
pub(crate) const MAG_EPS: f64 = 1e-9;

/// `T × n_mels` natural-log mel magnitudes.
#[derive(Clone, Debug, PartialEq)]
pub struct MelSpectrogram {
    pub frames: Frames,
    pub hop: usize,
}

/// `T × (n_mfcc + 1)`: MFCCs followed by the periodicity of each frame.
#[derive(Clone, Debug, PartialEq)]
pub struct AcousticFrames {
    pub frames: Frames,
    pub hop: usize,
}

/// Periodic Hann window.
pub(crate) fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

fn hz_to_mel(f: f64) -> f64 {
    const F_SP: f64 = 200.0 / 3.0;
    const MIN_LOG_HZ: f64 = 1000.0;
    let min_log_mel = MIN_LOG_HZ / F_SP;
    let logstep = 6.4f64.ln() / 27.0;
    if f >= MIN_LOG_HZ {
        min_log_mel + (f / MIN_LOG_HZ).ln() / logstep
    } else {
        f / F_SP
    }
}

fn mel_to_hz(m: f64) -> f64 {
    const F_SP: f64 = 200.0 / 3.0;
    const MIN_LOG_HZ: f64 = 1000.0;
    let min_log_mel = MIN_LOG_HZ / F_SP;
    let logstep = 6.4f64.ln() / 27.0;
    if m >= min_log_mel {
        MIN_LOG_HZ * (logstep * (m - min_log_mel)).exp()
    } else {
        F_SP * m
    }
}

/// Slaney-style triangular filterbank, area-normalized, as a
/// `(n_fft/2 + 1) × n_mels` row-major matrix (bins by mel bands).
pub fn mel_filterbank(cfg: &FeatureConfig) -> Vec<f64> {
    let n_bins = cfg.n_fft / 2 + 1;
    let n_mels = cfg.n_mels;
    let sr = cfg.sample_rate as f64;
    let fft_hz: Vec<f64> = (0..n_bins).map(|k| k as f64 * sr / cfg.n_fft as f64).collect();
    let (mlo, mhi) = (hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax));
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mlo + (mhi - mlo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    let mut fb = vec![0.0; n_bins * n_mels];
    for m in 0..n_mels {
        let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        let norm = 2.0 / (hi - lo);
        for (k, &f) in fft_hz.iter().enumerate() {
            let up = (f - lo) / (mid - lo);
            let down = (hi - f) / (hi - mid);
            fb[k * n_mels + m] = up.min(down).max(0.0) * norm;
        }
    }
    fb
}

/// Log-mel spectrogram on the centred 5 ms grid.
pub fn mel_spectrogram(waveform: &Waveform, cfg: &FeatureConfig) -> Result<MelSpectrogram> {
    if waveform.sample_rate() != cfg.sample_rate {
        return Err(invalid(format!(
            "mel_spectrogram expects {} Hz audio, got {} Hz",
            cfg.sample_rate,
            waveform.sample_rate()
        )));
    }
    let x = waveform.samples();
    let n_frames = if x.is_empty() { 0 } else { cfg.frames_for(x.len()) };
    let (n_fft, win) = (cfg.n_fft, cfg.win_length);
    let n_bins = n_fft / 2 + 1;
    let offset = (n_fft - win) / 2;
    let window = hann(win);
    let fb = mel_filterbank(cfg);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_fft);
    let floor = cfg.log_floor;
    let n_mels = cfg.n_mels;

    let rows: Vec<Vec<f32>> = accentvc_tensor::exec::map_range(n_frames, n_fft * 16, |t| {
        let start = window_start(t, cfg.hop_length, win);
        let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
        for j in 0..win {
            let s = x[reflect_index(start + j as isize, x.len())] as f64;
            buf[offset + j] = Complex::new(s * window[j], 0.0);
        }
        fft.process(&mut buf);
        let mut mel = vec![0.0f64; n_mels];
        for (k, c) in buf.iter().take(n_bins).enumerate() {
            let mag = (c.norm_sqr() + MAG_EPS).sqrt();
            let fbr = &fb[k * n_mels..(k + 1) * n_mels];
            for (m, w) in mel.iter_mut().zip(fbr) {
                *m += w * mag;
            }
        }
        mel.iter().map(|&v| v.max(floor).ln() as f32).collect()
    });
    Ok(MelSpectrogram {
        frames: Frames::from_rows(&rows)?.reshape_empty(n_mels),
        hop: cfg.hop_length,
    })
}

impl Frames {
    /// Give a zero-row matrix the intended width.
    fn reshape_empty(self, dims: usize) -> Frames {
        if self.rows() == 0 {
            Frames::zeros(0, dims)
        } else {
            self
        }
    }
}

/// Orthonormal DCT-II of each log-mel row, keeping the first `n_mfcc`
/// coefficients (c0 included).
pub fn mfcc_from_mel(mel: &MelSpectrogram, n_mfcc: usize) -> Frames {
    let m = mel.frames.dims();
    let basis: Vec<f64> = (0..n_mfcc)
        .flat_map(|k| {
            let scale = if k == 0 { (1.0 / m as f64).sqrt() } else { (2.0 / m as f64).sqrt() };
            (0..m).map(move |j| scale * (PI * k as f64 * (2 * j + 1) as f64 / (2 * m) as f64).cos())
        })
        .collect();
    let mut out = Frames::zeros(mel.frames.rows(), n_mfcc);
    for t in 0..mel.frames.rows() {
        let row = mel.frames.row(t);
        let dst = out.row_mut(t);
        for (k, d) in dst.iter_mut().enumerate() {
            let b = &basis[k * m..(k + 1) * m];
            *d = b.iter().zip(row).map(|(w, &v)| w * v as f64).sum::<f64>() as f32;
        }
    }
    out
}

/// MFCCs plus periodicity, one row per 5 ms frame.
pub fn acoustic_frames(
    waveform: &Waveform,
    pitch: &PitchTrack,
    cfg: &FeatureConfig,
) -> Result<AcousticFrames> {
    let mel = mel_spectrogram(waveform, cfg)?;
    if mel.frames.rows() != pitch.len() {
        return Err(Error::Consistency(format!(
            "MFCC grid has {} frames but pitch track has {}",
            mel.frames.rows(),
            pitch.len()
        )));
    }
    let mfcc = mfcc_from_mel(&mel, cfg.n_mfcc);
    let dims = cfg.n_mfcc + 1;
    let mut out = Frames::zeros(mfcc.rows(), dims);
    for t in 0..mfcc.rows() {
        let row = out.row_mut(t);
        row[..cfg.n_mfcc].copy_from_slice(mfcc.row(t));
        row[cfg.n_mfcc] = pitch.periodicity[t].clamp(0.0, 1.0);
    }
    Ok(AcousticFrames {
        frames: out,
        hop: cfg.hop_length,
    })
}
