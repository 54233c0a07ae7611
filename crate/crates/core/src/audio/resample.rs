use std::f64::consts::PI;

use super::Waveform;
use crate::error::{invalid, Result};

/// Zero crossings of the interpolation kernel on each side, at the lower rate.
const HALF_ZEROS: f64 = 16.0;
/// Passband edge relative to the lower Nyquist frequency.
const ROLLOFF: f64 = 0.945;

/// Band-limited resampling with a Hann-windowed sinc kernel.
///
/// The output holds `round(len * target / source)` samples. Equal rates return
/// the input unchanged.
pub fn resample(waveform: &Waveform, target_rate: u32) -> Result<Waveform> {
    if target_rate == 0 {
        return Err(invalid("target sample rate must be positive"));
    }
    let src = waveform.sample_rate();
    if src == target_rate {
        return Ok(waveform.clone());
    }
    let x = waveform.samples();
    let out_len = ((x.len() as u64 * target_rate as u64 + src as u64 / 2) / src as u64) as usize;
    let step = src as f64 / target_rate as f64;
    let cutoff = ROLLOFF * (target_rate as f64 / src as f64).min(1.0);
    let half = HALF_ZEROS / cutoff;

    let y = accentvc_tensor::exec::map_range(out_len, (2.0 * half) as usize, |n| {
        let t = n as f64 * step;
        let lo = (t - half).ceil().max(0.0) as usize;
        let hi = ((t + half).floor() as usize).min(x.len().saturating_sub(1));
        let mut acc = 0.0;
        for (k, &xk) in x.iter().enumerate().take(hi + 1).skip(lo) {
            let u = t - k as f64;
            let win = 0.5 * (1.0 + (PI * u / half).cos());
            acc += xk as f64 * cutoff * sinc(cutoff * u) * win;
        }
        acc as f32
    });
    Waveform::new(y, target_rate)
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}
