//! Differentiable log-mel spectrogram for the reconstruction loss.
//!
//! Same framing, window, magnitude floor and filterbank as
//! [`crate::audio::mel_spectrogram`], with the FFT replaced by explicit
//! windowed DFT matrices so gradients reach the waveform.

use std::f64::consts::PI;
use std::rc::Rc;

use accentvc_tensor::{Tensor, Var};

use crate::audio::{mel_filterbank, Frames};
use crate::config::FeatureConfig;
use crate::error::{invalid, Result};

pub struct MelBasis {
    cfg: FeatureConfig,
    /// `[win, 2 * n_bins]`: windowed cosines then windowed sines.
    dft: Tensor,
    /// `[n_bins, n_mels]`.
    filterbank: Tensor,
}

impl MelBasis {
    pub fn new(cfg: &FeatureConfig) -> Self {
        let (n_fft, win) = (cfg.n_fft, cfg.win_length);
        let n_bins = n_fft / 2 + 1;
        let offset = (n_fft - win) / 2;
        let window = crate::audio::hann_window(win);
        let mut dft = vec![0.0; win * 2 * n_bins];
        for j in 0..win {
            let n = (offset + j) as f64;
            for k in 0..n_bins {
                let a = 2.0 * PI * k as f64 * n / n_fft as f64;
                dft[j * 2 * n_bins + k] = window[j] * a.cos();
                dft[j * 2 * n_bins + n_bins + k] = -window[j] * a.sin();
            }
        }
        Self {
            cfg: cfg.clone(),
            dft: Tensor::new(&[win, 2 * n_bins], dft),
            filterbank: Tensor::new(&[n_bins, cfg.n_mels], mel_filterbank(cfg)),
        }
    }

    /// `audio[B, L]` to log-mel `[B, T, n_mels]`.
    pub fn forward(&self, audio: &Var) -> Var {
        let s = audio.shape();
        let (b, len) = (s[0], s[1]);
        let (hop, win) = (self.cfg.hop_length, self.cfg.win_length);
        let n_bins = self.cfg.n_fft / 2 + 1;
        let t = self.cfg.frames_for(len);
        let mut idx = Vec::with_capacity(b * t * win);
        for bi in 0..b {
            for ti in 0..t {
                let start = crate::audio::window_start(ti, hop, win);
                for j in 0..win {
                    idx.push(bi * len + crate::audio::reflect_index(start + j as isize, len));
                }
            }
        }
        let frames = audio.gather(Rc::new(idx), &[b * t, win]);
        let spec = frames.matmul(&Var::constant(self.dft.clone()));
        let re = spec.slice(1, 0, n_bins);
        let im = spec.slice(1, n_bins, n_bins);
        let mag = re.square().add(&im.square()).add_scalar(crate::audio::MAG_EPS).sqrt_eps(0.0);
        mag.matmul(&Var::constant(self.filterbank.clone()))
            .clamp(self.cfg.log_floor, f64::INFINITY)
            .ln()
            .reshape(&[b, t, self.cfg.n_mels])
    }
}

/// Mean absolute log-mel difference between `target` (constant) and
/// `audio[B, L]`. `target` is `[B, T, n_mels]`.
pub fn loss_mel(basis: &MelBasis, target: &Tensor, audio: &Var) -> Result<Var> {
    let m = basis.forward(audio);
    if m.shape() != target.shape() {
        return Err(invalid(format!(
            "mel target {:?} does not match audio mel {:?}",
            target.shape(),
            m.shape()
        )));
    }
    Ok(m.sub(&Var::constant(target.clone())).abs().mean())
}

/// Stack per-item mel frames into a `[B, T, n_mels]` target.
pub(crate) fn stack_mels(mels: &[&Frames]) -> Result<Tensor> {
    let (t, d) = mels.first().map_or((0, 0), |m| (m.rows(), m.dims()));
    if mels.iter().any(|m| m.rows() != t || m.dims() != d) {
        return Err(invalid("mel targets in a batch differ in shape"));
    }
    Ok(Tensor::new(
        &[mels.len(), t, d],
        mels.iter().flat_map(|m| m.data().iter().map(|&x| x as f64)).collect(),
    ))
}
