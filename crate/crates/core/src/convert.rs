//! Checkpoint inference: any-length clips in, same-length clips out.

use std::path::{Path, PathBuf};

use crate::accent::AccentId;
use crate::audio::{acoustic_frames, extract_pitch, read_wav, resample, write_wav_atomic, Waveform};
use crate::config::FrontendConfig;
use crate::error::Result;
use crate::frontend::{char_frames_for, provider_from_config, CharProvider};
use crate::model::AccentVcModel;
use crate::train::{clip_stem, load_checkpoint, ManifestEntry};

pub struct Converter {
    pub model: AccentVcModel,
    provider: Box<dyn CharProvider>,
}

impl Converter {
    pub fn new(model: AccentVcModel, provider: Box<dyn CharProvider>) -> Self {
        Self { model, provider }
    }

    /// Load a checkpoint; `frontend` replaces the stored frontend settings.
    pub fn load(checkpoint: &Path, frontend: Option<FrontendConfig>) -> Result<Self> {
        let mut model = load_checkpoint(checkpoint)?.model;
        if let Some(f) = frontend {
            if f.vocab != model.config.frontend.vocab {
                return Err(crate::Error::Config(
                    "frontend vocab differs from the one the checkpoint was trained with".into(),
                ));
            }
            model.config.frontend = f;
        }
        let provider = provider_from_config(&model.config.frontend)?;
        Ok(Self::new(model, provider))
    }

    /// Convert a 16 kHz clip. Segments are converted independently, the
    /// last one zero-padded, and the result trimmed to the input length.
    pub fn convert_waveform(&self, clip: &str, wave: &Waveform, accent: AccentId) -> Result<Waveform> {
        let f = &self.model.config.features;
        let wave = resample(wave, f.sample_rate)?;
        let n = wave.len();
        if n == 0 {
            return Waveform::new(Vec::new(), f.sample_rate);
        }
        let chars = self.provider.char_predictions(clip, &wave)?;
        let seg = f.segment_samples;
        let per = char_frames_for(seg);
        let mut out = Vec::with_capacity(n.div_ceil(seg) * seg);
        for (k, chunk) in wave.samples().chunks(seg).enumerate() {
            let mut s = chunk.to_vec();
            s.resize(seg, 0.0);
            let s = Waveform::new(s, f.sample_rate)?;
            let pitch = extract_pitch(&s, f)?;
            let frames = acoustic_frames(&s, &pitch, f)?;
            let c = chars.window(k * per, per, 0);
            out.extend(self.model.synthesize(&c, &frames, &pitch, accent)?);
        }
        out.truncate(n);
        Waveform::new(out, f.sample_rate)
    }

    pub fn convert_file(&self, input: &Path, accent: AccentId, output: &Path) -> Result<()> {
        let wave = read_wav(input)?;
        let out = self.convert_waveform(&clip_stem(input), &wave, accent)?;
        write_wav_atomic(output, &out)
    }
}

#[derive(Debug)]
pub struct ItemFailure {
    pub input: PathBuf,
    pub accent: AccentId,
    pub error: String,
}

#[derive(Debug, Default)]
pub struct BatchReport {
    pub outputs: Vec<PathBuf>,
    pub failures: Vec<ItemFailure>,
}

impl BatchReport {
    pub fn is_success(&self) -> bool {
        self.failures.is_empty()
    }
}

/// `<stem>.<ACCENT>.wav` under `out_dir`.
pub fn output_name(out_dir: &Path, input: &Path, accent: AccentId) -> PathBuf {
    out_dir.join(format!("{}.{}.wav", clip_stem(input), accent.code()))
}

/// Convert every (clip, accent) pair, running clips in parallel. A failing
/// item is recorded and the rest of the batch continues.
pub fn batch_convert(
    conv: &Converter,
    entries: &[ManifestEntry],
    accents: &[AccentId],
    out_dir: &Path,
) -> Result<BatchReport> {
    std::fs::create_dir_all(out_dir)?;
    let results = accentvc_tensor::exec::map_slice(entries, |e| {
        let wave = read_wav(&e.path);
        accents
            .iter()
            .map(|&a| {
                let out = output_name(out_dir, &e.path, a);
                let r = wave.as_ref().map_err(|err| err.to_string()).and_then(|w| {
                    conv.convert_waveform(&e.stem(), w, a)
                        .and_then(|o| write_wav_atomic(&out, &o))
                        .map_err(|err| err.to_string())
                });
                (e.path.clone(), a, out, r)
            })
            .collect::<Vec<_>>()
    });
    let mut report = BatchReport::default();
    for (input, accent, out, r) in results.into_iter().flatten() {
        match r {
            Ok(()) => report.outputs.push(out),
            Err(error) => {
                log::warn!("{} -> {}: {error}", input.display(), accent);
                report.failures.push(ItemFailure { input, accent, error });
            }
        }
    }
    Ok(report)
}
