//! F0 tracking on the shared 5 ms / 20 ms-window grid.
//!
//! Per frame, the normalized cross-correlation (NCCF) between the analysis
//! window and its lagged copy is evaluated over the lag range of
//! `[pitch_min_hz, pitch_max_hz]`. Local NCCF peaks become voiced candidates;
//! a Viterbi pass over candidates plus an unvoiced state picks a smooth track.

use super::{reflect_index, window_start, Waveform};
use crate::config::FeatureConfig;
use crate::error::{invalid, Result};

const MAX_CANDIDATES: usize = 6;

/// Per-frame F0 (0 when unvoiced), voicing flag and periodicity strength.
#[derive(Clone, Debug, PartialEq)]
pub struct PitchTrack {
    pub f0_hz: Vec<f32>,
    pub voicing: Vec<bool>,
    /// NCCF value at the chosen lag, 0 for unvoiced frames.
    pub periodicity: Vec<f32>,
}

impl PitchTrack {
    pub fn len(&self) -> usize {
        self.f0_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f0_hz.is_empty()
    }

    /// All frames unvoiced.
    pub fn unvoiced(frames: usize) -> Self {
        Self {
            f0_hz: vec![0.0; frames],
            voicing: vec![false; frames],
            periodicity: vec![0.0; frames],
        }
    }

    pub fn slice(&self, start: usize, len: usize) -> Self {
        Self {
            f0_hz: self.f0_hz[start..start + len].to_vec(),
            voicing: self.voicing[start..start + len].to_vec(),
            periodicity: self.periodicity[start..start + len].to_vec(),
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Candidate {
    f0: f64,
    strength: f64,
    cost: f64,
}

struct FrameAnalysis {
    candidates: Vec<Candidate>,
    unvoiced_cost: f64,
}

pub fn extract_pitch(waveform: &Waveform, cfg: &FeatureConfig) -> Result<PitchTrack> {
    if waveform.sample_rate() != cfg.sample_rate {
        return Err(invalid(format!(
            "pitch tracking expects {} Hz audio, got {} Hz",
            cfg.sample_rate,
            waveform.sample_rate()
        )));
    }
    if waveform.len() < cfg.win_length {
        return Err(invalid(format!(
            "waveform of {} samples is shorter than one {}-sample window",
            waveform.len(),
            cfg.win_length
        )));
    }
    let n_frames = cfg.frames_for(waveform.len());
    let frames: Vec<FrameAnalysis> = accentvc_tensor::exec::map_range(
        n_frames,
        cfg.win_length * 300,
        |t| analyze_frame(waveform.samples(), t, cfg),
    );
    Ok(viterbi(&frames, cfg))
}

fn analyze_frame(x: &[f32], t: usize, cfg: &FeatureConfig) -> FrameAnalysis {
    let sr = cfg.sample_rate as f64;
    let win = cfg.win_length;
    let lag_min = (sr / cfg.pitch_max_hz).ceil() as usize;
    let lag_max = (sr / cfg.pitch_min_hz).floor() as usize;
    let start = window_start(t, cfg.hop_length, win);
    let span = win + lag_max + 1;
    let seg: Vec<f64> = (0..span)
        .map(|j| x[reflect_index(start + j as isize, x.len())] as f64)
        .collect();

    let e0: f64 = seg[..win].iter().map(|v| v * v).sum();
    let rms = (e0 / win as f64).sqrt();
    if rms < cfg.energy_threshold || e0 <= 0.0 {
        return FrameAnalysis {
            candidates: Vec::new(),
            unvoiced_cost: 0.0,
        };
    }

    // NCCF over [lag_min - 1, lag_max + 1] so every interior lag has neighbours.
    let lo = lag_min - 1;
    let hi = lag_max + 1;
    let mut el: f64 = seg[lo..lo + win].iter().map(|v| v * v).sum();
    let mut r = vec![0.0; hi - lo + 1];
    for (i, lag) in (lo..=hi).enumerate() {
        if i > 0 {
            let out = seg[lag - 1];
            let inn = if lag + win - 1 < span { seg[lag + win - 1] } else { 0.0 };
            el = (el - out * out + inn * inn).max(0.0);
        }
        let dot: f64 = seg[..win]
            .iter()
            .zip(&seg[lag..(lag + win).min(span)])
            .map(|(a, b)| a * b)
            .sum();
        let denom = (e0 * el).sqrt();
        r[i] = if denom > 0.0 { dot / denom } else { 0.0 };
    }

    let mut cands = Vec::new();
    for i in 1..r.len() - 1 {
        let lag = lo + i;
        if lag < lag_min || lag > lag_max {
            continue;
        }
        if r[i] > r[i - 1] && r[i] >= r[i + 1] && r[i] >= cfg.voicing_threshold {
            let (a, b, c) = (r[i - 1], r[i], r[i + 1]);
            let curv = a - 2.0 * b + c;
            let delta = if curv < 0.0 { (0.5 * (a - c) / curv).clamp(-0.5, 0.5) } else { 0.0 };
            let frac_lag = lag as f64 + delta;
            let peak = (b - 0.25 * (a - c) * delta).min(1.0);
            let f0 = (sr / frac_lag).clamp(cfg.pitch_min_hz, cfg.pitch_max_hz);
            let cost = 1.0 - peak * (1.0 - cfg.pitch_lag_weight * frac_lag / lag_max as f64);
            cands.push(Candidate {
                f0,
                strength: peak,
                cost,
            });
        }
    }
    cands.sort_by(|a, b| a.cost.total_cmp(&b.cost));
    cands.truncate(MAX_CANDIDATES);
    let best = cands.iter().map(|c| c.strength).fold(0.0, f64::max);
    FrameAnalysis {
        candidates: cands,
        unvoiced_cost: best,
    }
}

fn viterbi(frames: &[FrameAnalysis], cfg: &FeatureConfig) -> PitchTrack {
    let n = frames.len();
    if n == 0 {
        return PitchTrack::unvoiced(0);
    }
    // State k < candidates.len() is a voiced candidate; the last is unvoiced.
    let transition = |a: Option<&Candidate>, b: Option<&Candidate>| -> f64 {
        match (a, b) {
            (Some(a), Some(b)) => cfg.pitch_transition_cost * (a.f0 / b.f0).log2().abs(),
            (None, None) => 0.0,
            _ => cfg.pitch_switch_cost,
        }
    };
    let local = |f: &FrameAnalysis, k: usize| {
        f.candidates.get(k).map_or(f.unvoiced_cost, |c| c.cost)
    };

    let mut cost: Vec<f64> = (0..=frames[0].candidates.len())
        .map(|k| local(&frames[0], k))
        .collect();
    let mut back: Vec<Vec<usize>> = vec![vec![0; cost.len()]];
    for t in 1..n {
        let (prev, cur) = (&frames[t - 1], &frames[t]);
        let mut next = Vec::with_capacity(cur.candidates.len() + 1);
        let mut bp = Vec::with_capacity(cur.candidates.len() + 1);
        for k in 0..=cur.candidates.len() {
            let (mut best, mut arg) = (f64::INFINITY, 0);
            for (j, &cj) in cost.iter().enumerate() {
                let c = cj + transition(prev.candidates.get(j), cur.candidates.get(k));
                if c < best {
                    best = c;
                    arg = j;
                }
            }
            next.push(best + local(cur, k));
            bp.push(arg);
        }
        cost = next;
        back.push(bp);
    }

    let mut k = cost
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap();
    let mut track = PitchTrack::unvoiced(n);
    for t in (0..n).rev() {
        if let Some(c) = frames[t].candidates.get(k) {
            track.f0_hz[t] = c.f0 as f32;
            track.voicing[t] = true;
            track.periodicity[t] = c.strength.clamp(0.0, 1.0) as f32;
        }
        k = back[t][k];
    }
    track
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::SEGMENT_SAMPLES;
    use std::f64::consts::PI;

    fn cfg() -> FeatureConfig {
        FeatureConfig::standard()
    }

    fn sine(freq: f64, n: usize) -> Waveform {
        Waveform::new(
            (0..n)
                .map(|i| (0.5 * (2.0 * PI * freq * i as f64 / 16_000.0).sin()) as f32)
                .collect(),
            16_000,
        )
        .unwrap()
    }

    /// Frames whose window and largest lag stay inside the signal.
    fn interior(n_samples: usize, c: &FeatureConfig) -> std::ops::Range<usize> {
        let lag_max = (c.sample_rate as f64 / c.pitch_min_hz) as usize;
        let first = (c.win_length / 2).div_ceil(c.hop_length);
        let last = (n_samples - c.win_length - lag_max) / c.hop_length;
        first..last
    }

    #[test]
    fn recovers_sine_frequencies() {
        let c = cfg();
        for f in [120.0, 200.0, 350.0] {
            let track = extract_pitch(&sine(f, SEGMENT_SAMPLES), &c).unwrap();
            let range = interior(SEGMENT_SAMPLES, &c);
            let total = range.len();
            let good = range
                .filter(|&t| track.voicing[t] && ((track.f0_hz[t] as f64 - f) / f).abs() <= 0.02)
                .count();
            assert!(good as f64 >= 0.9 * total as f64, "{f} Hz: {good}/{total}");
        }
    }

    #[test]
    fn silence_is_unvoiced() {
        let track = extract_pitch(&Waveform::silence(SEGMENT_SAMPLES, 16_000), &cfg()).unwrap();
        assert_eq!(track.len(), 224);
        assert!(track.voicing.iter().all(|v| !v));
        assert!(track.f0_hz.iter().all(|&f| f == 0.0));
    }

    #[test]
    fn voicing_matches_f0_and_range() {
        let mut s = sine(220.0, 8000).into_samples();
        s.extend(std::iter::repeat(0.0).take(4000));
        let track = extract_pitch(&Waveform::new(s, 16_000).unwrap(), &cfg()).unwrap();
        assert_eq!(track.len(), 150);
        for t in 0..track.len() {
            assert_eq!(track.f0_hz[t] != 0.0, track.voicing[t]);
            if track.voicing[t] {
                assert!((50.0..=600.0).contains(&track.f0_hz[t]));
            }
        }
        assert!(track.voicing[..90].iter().filter(|&&v| v).count() > 80);
        assert!(track.voicing[110..].iter().all(|v| !v));
    }

    #[test]
    fn too_short_is_rejected() {
        assert!(extract_pitch(&Waveform::silence(319, 16_000), &cfg()).is_err());
        assert_eq!(extract_pitch(&Waveform::silence(320, 16_000), &cfg()).unwrap().len(), 4);
    }

    #[test]
    fn deterministic() {
        let w = sine(180.0, 5000);
        assert_eq!(extract_pitch(&w, &cfg()).unwrap(), extract_pitch(&w, &cfg()).unwrap());
    }
}
