//! Clips turned into fixed-length training segments with precomputed features.

use crate::accent::AccentId;
use crate::audio::{acoustic_frames, extract_pitch, mel_spectrogram, read_wav, resample, segment};
use crate::audio::{AcousticFrames, Frames, PitchTrack, Waveform};
use crate::config::FeatureConfig;
use crate::error::{invalid, Result};
use crate::frontend::{char_frames_for, CharPosteriorSequence, CharProvider};

use super::manifest::ManifestEntry;

/// One segment with every feature the training step needs.
#[derive(Clone, Debug)]
pub struct TrainItem {
    pub accent: AccentId,
    pub audio: Vec<f64>,
    pub chars: CharPosteriorSequence,
    pub frames: AcousticFrames,
    pub pitch: PitchTrack,
    pub mel: Frames,
}

impl TrainItem {
    pub fn from_segment(
        seg: &Waveform,
        chars: CharPosteriorSequence,
        accent: AccentId,
        cfg: &FeatureConfig,
    ) -> Result<Self> {
        let pitch = extract_pitch(seg, cfg)?;
        let frames = acoustic_frames(seg, &pitch, cfg)?;
        let mel = mel_spectrogram(seg, cfg)?.frames;
        if chars.len() * cfg.upsample_factor != pitch.len() {
            return Err(crate::error::Error::Consistency(format!(
                "{} char frames do not cover {} feature frames",
                chars.len(),
                pitch.len()
            )));
        }
        Ok(Self {
            accent,
            audio: seg.samples().iter().map(|&x| x as f64).collect(),
            chars,
            frames,
            pitch,
            mel,
        })
    }

    pub fn is_native(&self) -> bool {
        self.accent.is_native()
    }
}

#[derive(Clone, Debug)]
pub struct TrainClip {
    pub stem: String,
    pub subset: String,
    pub segments: Vec<TrainItem>,
}

/// Split a 16 kHz clip into segments, slicing the clip-level char
/// posteriors to match.
pub fn clip_segments(
    wave: &Waveform,
    chars: &CharPosteriorSequence,
    accent: AccentId,
    cfg: &FeatureConfig,
    one_hot: bool,
) -> Result<Vec<TrainItem>> {
    let per = char_frames_for(cfg.segment_samples);
    segment(wave, cfg.segment_samples, cfg.segment_min_fill)
        .iter()
        .enumerate()
        .map(|(k, seg)| {
            let mut c = chars.window(k * per, per, 0);
            if one_hot {
                c = c.to_one_hot();
            }
            TrainItem::from_segment(seg, c, accent, cfg)
        })
        .collect()
}

pub fn load_clip(
    entry: &ManifestEntry,
    provider: &dyn CharProvider,
    cfg: &FeatureConfig,
    one_hot: bool,
) -> Result<TrainClip> {
    let wave = resample(&read_wav(&entry.path)?, cfg.sample_rate)?;
    let stem = entry.stem();
    let chars = provider.char_predictions(&stem, &wave)?;
    let segments = clip_segments(&wave, &chars, entry.accent, cfg, one_hot)?;
    if segments.is_empty() {
        return Err(invalid(format!(
            "{} is shorter than half a training segment",
            entry.path.display()
        )));
    }
    Ok(TrainClip {
        stem,
        subset: entry.subset.clone(),
        segments,
    })
}
