//! Every tunable constant of the system, loadable from a single TOML file.
//!
//! Three profiles ship with the crate: [`Config::desk`] (the default,
//! CPU-trainable), [`Config::paper`] (the original schedule: 3M iterations,
//! 50k warm-up, batch 16) and [`Config::tiny`] (narrow widths for tests).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub features: FeatureConfig,
    pub frontend: FrontendConfig,
    pub pronunciation: PronunciationConfig,
    pub acoustic: AcousticConfig,
    pub adversary: AdversaryConfig,
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    pub train: TrainConfig,
    pub sampler: SamplerConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureConfig {
    pub sample_rate: u32,
    pub segment_samples: usize,
    /// A trailing partial segment is kept (zero-padded) when at least this
    /// fraction of it is filled.
    pub segment_min_fill: f64,
    pub n_fft: usize,
    pub win_length: usize,
    pub hop_length: usize,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub log_floor: f64,
    pub n_mfcc: usize,
    pub pitch_min_hz: f64,
    pub pitch_max_hz: f64,
    /// Minimum normalized autocorrelation for a voiced frame.
    pub voicing_threshold: f64,
    /// Minimum frame RMS for a voiced frame.
    pub energy_threshold: f64,
    /// Octave-jump penalty of the pitch smoothing pass, per unit |log2 ratio|.
    pub pitch_transition_cost: f64,
    /// Bias towards short lags (high F0) in the local pitch cost.
    pub pitch_lag_weight: f64,
    /// Cost of switching between voiced and unvoiced.
    pub pitch_switch_cost: f64,
    pub char_hop: usize,
    pub upsample_factor: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrontendKind {
    Cached,
    Synthetic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrontendConfig {
    pub kind: FrontendKind,
    pub cache_dir: Option<String>,
    /// Symbols in index order; the first one is the CTC blank.
    pub vocab: String,
    /// Feed argmax one-hot rows instead of full posteriors.
    pub one_hot: bool,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DropoutLocation {
    /// After the final transformer block.
    Output,
    /// Inside every residual branch.
    Residual,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PronunciationConfig {
    pub d_model: usize,
    pub d_accent: usize,
    pub ff_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub dropout: f64,
    pub dropout_location: DropoutLocation,
    pub max_frames: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcousticConfig {
    pub channels: Vec<usize>,
    pub kernels: Vec<usize>,
    pub dilations: Vec<usize>,
    pub heads: usize,
    pub leaky_slope: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversaryConfig {
    /// `false` reproduces the ablation model without an accent discriminator.
    pub enabled: bool,
    pub hidden: usize,
    pub warmup_steps: u64,
    pub lambda: f64,
    pub clamp_eps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub base_channels: usize,
    pub pre_kernel: usize,
    pub upsample_rates: Vec<usize>,
    pub upsample_kernels: Vec<usize>,
    pub resblock_kernels: Vec<usize>,
    pub resblock_dilations: Vec<Vec<usize>>,
    pub post_kernel: usize,
    pub leaky_slope: f64,
    pub init_std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscriminatorConfig {
    pub mpd_periods: Vec<usize>,
    pub mpd_channels: Vec<usize>,
    pub mpd_kernel: usize,
    pub mpd_stride: usize,
    pub msd_scales: usize,
    pub msd_channels: Vec<usize>,
    pub msd_kernels: Vec<usize>,
    pub msd_strides: Vec<usize>,
    pub msd_groups: Vec<usize>,
    pub leaky_slope: f64,
    pub min_samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub lr_decay: f64,
    pub decay_every: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub total_steps: u64,
    pub lambda_mel: f64,
    pub lambda_fm: f64,
    pub lambda_hd: f64,
    pub grad_clip: f64,
    pub seed: u64,
    pub checkpoint_every: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub weights: BTreeMap<String, f64>,
}

impl Default for Config {
    fn default() -> Self {
        Self::desk()
    }
}

impl FeatureConfig {
    pub fn standard() -> Self {
        Self {
            sample_rate: 16_000,
            segment_samples: 17_920,
            segment_min_fill: 0.5,
            n_fft: 512,
            win_length: 320,
            hop_length: 80,
            n_mels: 80,
            fmin: 0.0,
            fmax: 8000.0,
            log_floor: 1e-5,
            n_mfcc: 13,
            pitch_min_hz: 50.0,
            pitch_max_hz: 600.0,
            voicing_threshold: 0.6,
            energy_threshold: 1e-3,
            pitch_transition_cost: 0.5,
            pitch_lag_weight: 0.3,
            pitch_switch_cost: 0.2,
            char_hop: 320,
            upsample_factor: 4,
        }
    }

    /// Frames on the 5 ms grid for `samples` samples.
    pub fn frames_for(&self, samples: usize) -> usize {
        samples.div_ceil(self.hop_length)
    }

    /// Width of the acoustic-encoder input: MFCCs plus periodicity.
    pub fn acoustic_dims(&self) -> usize {
        self.n_mfcc + 1
    }
}

impl SamplerConfig {
    /// Subset weights of the original training mix.
    pub fn table_weights() -> Self {
        let weights = [
            ("LibriTTS", 1.0),
            ("VCTK", 6.0),
            ("SAA", 10.0),
            ("L2-Arctic", 15.0),
            ("Indic TTS", 2.0),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        Self { weights }
    }
}

impl Config {
    /// CPU-trainable defaults.
    pub fn desk() -> Self {
        Self {
            features: FeatureConfig::standard(),
            frontend: FrontendConfig {
                kind: FrontendKind::Synthetic,
                cache_dir: None,
                vocab: crate::frontend::DEFAULT_VOCAB.to_string(),
                one_hot: false,
                seed: 0,
            },
            pronunciation: PronunciationConfig {
                d_model: 256,
                d_accent: 128,
                ff_dim: 1024,
                layers: 4,
                heads: 8,
                dropout: 0.3,
                dropout_location: DropoutLocation::Output,
                max_frames: 224,
            },
            acoustic: AcousticConfig {
                channels: vec![64, 128, 256, 256],
                kernels: vec![5, 3, 3, 1],
                dilations: vec![1, 2, 1, 1],
                heads: 4,
                leaky_slope: 0.1,
            },
            adversary: AdversaryConfig {
                enabled: true,
                hidden: 128,
                warmup_steps: 1_000,
                lambda: 1.0,
                clamp_eps: 1e-7,
            },
            generator: GeneratorConfig {
                base_channels: 128,
                pre_kernel: 11,
                upsample_rates: vec![5, 4, 2, 2],
                upsample_kernels: vec![10, 8, 4, 4],
                resblock_kernels: vec![3, 7, 11],
                resblock_dilations: vec![vec![1, 3, 5], vec![1, 3, 5], vec![1, 3, 5]],
                post_kernel: 7,
                leaky_slope: 0.1,
                init_std: 0.01,
            },
            discriminator: DiscriminatorConfig {
                mpd_periods: vec![2, 3, 5, 7, 11],
                mpd_channels: vec![16, 32, 64, 128, 128],
                mpd_kernel: 5,
                mpd_stride: 3,
                msd_scales: 3,
                msd_channels: vec![16, 16, 32, 64, 128, 128, 128],
                msd_kernels: vec![15, 41, 41, 41, 41, 41, 5],
                msd_strides: vec![1, 2, 2, 4, 4, 1, 1],
                msd_groups: vec![1, 4, 16, 16, 16, 16, 1],
                leaky_slope: 0.1,
                min_samples: 640,
            },
            train: TrainConfig {
                lr: 2e-4,
                lr_decay: 0.999,
                decay_every: 1_000,
                beta1: 0.8,
                beta2: 0.99,
                adam_eps: 1e-8,
                weight_decay: 0.01,
                batch_size: 4,
                total_steps: 20_000,
                lambda_mel: 45.0,
                lambda_fm: 2.0,
                lambda_hd: 1.0,
                grad_clip: 10.0,
                seed: 1234,
                checkpoint_every: 1_000,
            },
            sampler: SamplerConfig::table_weights(),
        }
    }

    /// The original training schedule (3M iterations, batch 16, 50k warm-up).
    pub fn paper() -> Self {
        let mut c = Self::desk();
        c.train.total_steps = 3_000_000;
        c.train.batch_size = 16;
        c.adversary.warmup_steps = 50_000;
        c
    }

    /// Narrow model for tests and smoke runs. Same topology, fewer channels.
    pub fn tiny() -> Self {
        let mut c = Self::desk();
        c.pronunciation.d_model = 32;
        c.pronunciation.d_accent = 8;
        c.pronunciation.ff_dim = 64;
        c.acoustic.channels = vec![16, 16, 32, 32];
        c.acoustic.heads = 4;
        c.adversary.hidden = 16;
        c.generator.base_channels = 32;
        c.generator.resblock_kernels = vec![3, 7];
        c.generator.resblock_dilations = vec![vec![1, 3], vec![1, 3]];
        c.discriminator.mpd_channels = vec![4, 8, 16, 16, 16];
        c.discriminator.msd_channels = vec![4, 8, 16, 16, 16, 16, 16];
        c.discriminator.msd_groups = vec![1, 2, 4, 4, 4, 4, 1];
        c
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let c: Config = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)?;
        Self::from_toml_str(&s)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config is always serializable")
    }

    /// Acoustic embedding width (output of the last conv layer).
    pub fn embedding_dim(&self) -> usize {
        *self.acoustic.channels.last().expect("validated non-empty")
    }

    /// Width of one decoder-input row: pronunciation, embedding, F0.
    pub fn decoder_input_dim(&self) -> usize {
        self.pronunciation.d_model + self.embedding_dim() + 1
    }

    pub fn vocab_size(&self) -> usize {
        self.frontend.vocab.chars().count()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        let f = &self.features;
        if f.sample_rate == 0 || f.hop_length == 0 || f.win_length == 0 || f.n_fft < f.win_length {
            return bad("feature frame geometry must be positive with n_fft >= win_length");
        }
        if f.char_hop != f.hop_length * f.upsample_factor {
            return bad("char_hop must equal hop_length * upsample_factor");
        }
        if f.segment_samples % f.char_hop != 0 {
            return bad("segment_samples must be a multiple of char_hop");
        }
        if f.n_mfcc == 0 || f.n_mfcc > f.n_mels {
            return bad("n_mfcc must be in 1..=n_mels");
        }
        let p = &self.pronunciation;
        if p.heads == 0 || p.d_model % p.heads != 0 {
            return bad("pronunciation d_model must be divisible by heads");
        }
        if !(0.0..1.0).contains(&p.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        if p.max_frames * f.char_hop < f.segment_samples {
            return bad("pronunciation max_frames too small for one segment");
        }
        let a = &self.acoustic;
        if a.channels.is_empty()
            || a.channels.len() != a.kernels.len()
            || a.channels.len() != a.dilations.len()
        {
            return bad("acoustic channels/kernels/dilations must be equal-length and non-empty");
        }
        if a.heads == 0 || self.embedding_dim() % a.heads != 0 {
            return bad("acoustic embedding width must be divisible by heads");
        }
        let g = &self.generator;
        if g.upsample_rates.len() != g.upsample_kernels.len() {
            return bad("upsample_rates and upsample_kernels differ in length");
        }
        let prod: usize = g.upsample_rates.iter().product();
        if prod != f.hop_length {
            return bad("product of upsample_rates must equal hop_length");
        }
        for (&r, &k) in g.upsample_rates.iter().zip(&g.upsample_kernels) {
            if k < r {
                return bad("upsample kernels must be at least the rate");
            }
        }
        if g.base_channels >> g.upsample_rates.len() == 0 {
            return bad("generator base_channels too small for the number of upsampling stages");
        }
        if g.resblock_kernels.len() != g.resblock_dilations.len() {
            return bad("resblock kernels/dilations differ in length");
        }
        let d = &self.discriminator;
        let n = d.msd_channels.len();
        if n == 0 || d.msd_kernels.len() != n || d.msd_strides.len() != n || d.msd_groups.len() != n {
            return bad("msd layer lists must be equal-length and non-empty");
        }
        let mut cin = 1;
        for (&c, &gr) in d.msd_channels.iter().zip(&d.msd_groups) {
            if gr == 0 || cin % gr != 0 || c % gr != 0 {
                return bad("msd channels must be divisible by groups");
            }
            cin = c;
        }
        if d.mpd_channels.is_empty() || d.mpd_periods.is_empty() || d.msd_scales == 0 {
            return bad("discriminator lists must be non-empty");
        }
        let t = &self.train;
        if !(t.lr > 0.0 && t.lr_decay > 0.0 && t.decay_every > 0 && t.batch_size > 0) {
            return bad("train lr, decay, decay_every and batch_size must be positive");
        }
        if self.adversary.warmup_steps > t.total_steps {
            return bad("warmup_steps must not exceed total_steps");
        }
        if self.sampler.weights.values().any(|w| !(*w > 0.0)) {
            return bad("sampler weights must be positive");
        }
        if self.vocab_size() < 2 {
            return bad("vocab needs at least two symbols");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles_validate() {
        Config::desk().validate().unwrap();
        Config::paper().validate().unwrap();
        Config::tiny().validate().unwrap();
    }

    #[test]
    fn toml_roundtrip() {
        let c = Config::desk();
        let s = c.to_toml_string();
        assert_eq!(Config::from_toml_str(&s).unwrap(), c);
    }

    #[test]
    fn paper_profile_schedule() {
        let p = Config::paper();
        assert_eq!(p.train.total_steps, 3_000_000);
        assert_eq!(p.adversary.warmup_steps, 50_000);
        assert_eq!(p.train.batch_size, 16);
        assert_eq!(p.train.lr, 0.0002);
        assert_eq!((p.train.beta1, p.train.beta2), (0.8, 0.99));
    }

    #[test]
    fn bad_upsampling_is_rejected() {
        let mut c = Config::desk();
        c.generator.upsample_rates = vec![5, 4, 2, 3];
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut s = Config::desk().to_toml_string();
        s = s.replace("[adversary]", "[adversary]\nbogus = 1");
        assert!(Config::from_toml_str(&s).is_err());
    }
}
