//! Training harness: data loading, sampling, the alternating update step,
//! loss logging and checkpoints.

mod checkpoint;
mod data;
mod log;
mod manifest;
mod sampler;
mod schedule;
mod step;

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, TrainingState, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use data::{clip_segments, load_clip, TrainClip, TrainItem};
pub use log::{read_loss_log, LossLog, LossReport};
pub use manifest::{clip_stem, load_manifest, write_manifest, ManifestEntry};
pub use sampler::WeightedSampler;
pub use schedule::learning_rate;
pub use step::{adversarial_weight, evaluate_mel, train_step, Optimizers};

use crate::error::{invalid, Result};
use crate::frontend::CharProvider;
use crate::model::AccentVcModel;

const BATCH_STREAM_SALT: u64 = 0x5eed_ba7c;

/// Owns the model, optimizers, data and position of a training run.
pub struct Trainer {
    pub model: AccentVcModel,
    pub optimizers: Optimizers,
    pub iteration: u64,
    clips: Vec<TrainClip>,
    sampler: WeightedSampler,
}

impl Trainer {
    pub fn new(state: TrainingState, clips: Vec<TrainClip>) -> Result<Self> {
        if clips.iter().any(|c| c.segments.is_empty()) {
            return Err(invalid("every training clip needs at least one segment"));
        }
        let subsets: Vec<String> = clips.iter().map(|c| c.subset.clone()).collect();
        let sampler = WeightedSampler::new(&subsets, &state.model.config.sampler.weights)?;
        Ok(Self {
            model: state.model,
            optimizers: state.optimizers,
            iteration: state.iteration,
            clips,
            sampler,
        })
    }

    /// Fresh model and optimizers from the config seed.
    pub fn fresh(config: crate::Config, clips: Vec<TrainClip>) -> Result<Self> {
        let model = AccentVcModel::new(config.clone(), config.train.seed)?;
        let optimizers = Optimizers::new(&config.train);
        Self::new(
            TrainingState {
                model,
                optimizers,
                iteration: 0,
            },
            clips,
        )
    }

    /// Load every manifest entry through `provider`.
    pub fn load_clips(
        entries: &[ManifestEntry],
        provider: &dyn CharProvider,
        config: &crate::Config,
    ) -> Result<Vec<TrainClip>> {
        entries
            .iter()
            .map(|e| load_clip(e, provider, &config.features, config.frontend.one_hot))
            .collect()
    }

    pub fn clips(&self) -> &[TrainClip] {
        &self.clips
    }

    /// Batch for `iteration`: weighted clip draws, then a uniform segment.
    /// Depends only on the seed and iteration, so resumed runs see the same
    /// data.
    pub fn batch_indices(&self, iteration: u64) -> Vec<(usize, usize)> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.model.config.train.seed ^ BATCH_STREAM_SALT);
        rng.set_stream(iteration);
        (0..self.model.config.train.batch_size)
            .map(|_| {
                let c = self.sampler.draw(&mut rng);
                (c, rng.random_range(0..self.clips[c].segments.len()))
            })
            .collect()
    }

    pub fn step(&mut self) -> Result<LossReport> {
        let idx = self.batch_indices(self.iteration);
        let batch: Vec<&TrainItem> = idx.iter().map(|&(c, s)| &self.clips[c].segments[s]).collect();
        let report = train_step(&mut self.model, &mut self.optimizers, &batch, self.iteration)?;
        self.iteration += 1;
        Ok(report)
    }

    /// Run until `until` iterations are complete, logging every step and
    /// checkpointing every `checkpoint_every` iterations and at the end.
    pub fn run(&mut self, until: u64, mut log: Option<&mut LossLog>, checkpoint: Option<&Path>) -> Result<Vec<LossReport>> {
        let every = self.model.config.train.checkpoint_every.max(1);
        let mut reports = Vec::new();
        while self.iteration < until {
            let r = self.step()?;
            if let Some(l) = log.as_deref_mut() {
                l.append(&r)?;
            }
            if r.iteration % 100 == 0 {
                ::log::info!(
                    "iter {} mel {:.4} hd {:.4} ad {:.4} lr {:.2e}",
                    r.iteration,
                    r.l_mel,
                    r.l_hd,
                    r.l_ad,
                    r.lr
                );
            }
            reports.push(r);
            if let Some(path) = checkpoint {
                if self.iteration % every == 0 || self.iteration == until {
                    self.save(path)?;
                }
            }
        }
        Ok(reports)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_checkpoint(path, &self.model, &self.optimizers, self.iteration)
    }
}

/// Default checkpoint file inside a run directory.
pub fn checkpoint_path(run_dir: &Path) -> PathBuf {
    run_dir.join("model.ckpt")
}
