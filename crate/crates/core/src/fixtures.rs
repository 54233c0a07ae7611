//! Synthetic voice-like clips for tests, demos and smoke runs.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::accent::AccentId;
use crate::audio::{write_wav, Waveform, SAMPLE_RATE};
use crate::error::Result;
use crate::train::{write_manifest, ManifestEntry};

/// Harmonic source up to 4 kHz with a slowly moving F0, syllable-rate
/// amplitude envelope, one formant bump over a 1/h tilt and a low noise floor.
pub fn voice_clip(base_f0: f64, samples: usize, seed: u64) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sr = SAMPLE_RATE as f64;
    let vib_rate = rng.random_range(3.0..6.0);
    let syl_rate = rng.random_range(2.5..4.5);
    let formant = rng.random_range(500.0..900.0);
    let mut phase = 0.0;
    let out = (0..samples)
        .map(|i| {
            let t = i as f64 / sr;
            let f0 = base_f0 * (1.0 + 0.05 * (2.0 * PI * vib_rate * t).sin());
            phase += 2.0 * PI * f0 / sr;
            let mut v = 0.0;
            let harmonics = (4000.0 / f0) as usize;
            for h in 1..=harmonics {
                let fh = f0 * h as f64;
                let gain = 1.0 / (1.0 + ((fh - formant) / 400.0).powi(2)) + 0.3 / h as f64;
                v += gain * (phase * h as f64).sin();
            }
            let env = 0.55 + 0.45 * (2.0 * PI * syl_rate * t).sin();
            let noise: f64 = rng.random_range(-1.0..1.0);
            (0.08 * env * v + 0.001 * noise) as f32
        })
        .collect();
    Waveform::new(out, SAMPLE_RATE).expect("positive rate")
}

/// Typical speaking F0 per accent, spread so the corpus is not one voice.
pub fn accent_f0(accent: AccentId) -> f64 {
    110.0 + 15.0 * accent.index() as f64
}

pub struct ClipSpec {
    pub stem: String,
    pub accent: AccentId,
    pub subset: String,
    pub samples: usize,
    pub seed: u64,
}

/// Write each clip as a WAV under `dir` plus `dir/manifest.jsonl`.
pub fn write_corpus(dir: &Path, specs: &[ClipSpec]) -> Result<Vec<ManifestEntry>> {
    std::fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(specs.len());
    for s in specs {
        let path = dir.join(format!("{}.wav", s.stem));
        write_wav(&path, &voice_clip(accent_f0(s.accent), s.samples, s.seed))?;
        entries.push(ManifestEntry {
            path,
            accent: s.accent,
            subset: s.subset.clone(),
            duration_s: s.samples as f64 / SAMPLE_RATE as f64,
        });
    }
    write_manifest(&dir.join("manifest.jsonl"), &entries)?;
    Ok(entries)
}
