//! All trainable modules and their parameters in one store.

use accentvc_tensor::{Binder, ParamStore, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::accent::AccentId;
use crate::acoustic::{self, AcousticEncoder};
use crate::adversary::{self, AccentDiscriminator};
use crate::audio::{AcousticFrames, PitchTrack};
use crate::config::Config;
use crate::error::Result;
use crate::frontend::CharPosteriorSequence;
use crate::pronunciation::{self, PronunciationEncoder};
use crate::vocoder::{assemble_decoder_input, Generator, HifiDiscriminators, MelBasis, DISC_GROUP, GEN_GROUP};

/// Parameter groups updated by the generator step.
pub const GENERATOR_PATH: [&str; 3] = [pronunciation::GROUP, acoustic::GROUP, GEN_GROUP];
pub const HIFI_DISC: &str = DISC_GROUP;
pub const ACCENT_DISC: &str = adversary::GROUP;

pub struct AccentVcModel {
    pub config: Config,
    pub store: ParamStore,
    pub pronunciation: PronunciationEncoder,
    pub acoustic: AcousticEncoder,
    pub accent_disc: AccentDiscriminator,
    pub generator: Generator,
    pub discriminators: HifiDiscriminators,
    pub mel: MelBasis,
}

/// Generator-path outputs for a batch.
pub struct GeneratorPass {
    /// `[B, L]`.
    pub audio: Var,
    /// `[B, d_z]`.
    pub z: Var,
}

impl AccentVcModel {
    /// Fresh parameters drawn from `seed`.
    pub fn new(config: Config, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let c = &config;
        let pronunciation = PronunciationEncoder::new(&mut store, &c.pronunciation, c.vocab_size(), &mut rng);
        let acoustic = AcousticEncoder::new(&mut store, &c.acoustic, c.features.acoustic_dims(), &mut rng);
        let accent_disc = AccentDiscriminator::new(&mut store, &c.adversary, c.embedding_dim(), &mut rng);
        let generator = Generator::new(&mut store, &c.generator, c.decoder_input_dim(), &mut rng);
        let discriminators = HifiDiscriminators::new(&mut store, &c.discriminator, &mut rng);
        let mel = MelBasis::new(&c.features);
        Ok(Self {
            config,
            store,
            pronunciation,
            acoustic,
            accent_disc,
            generator,
            discriminators,
            mel,
        })
    }

    /// Pronunciation encoding, acoustic embedding, decoder input and audio.
    #[allow(clippy::too_many_arguments)]
    pub fn generator_pass(
        &self,
        p: &Binder,
        chars: &Tensor,
        frames: &Tensor,
        pitch: &[&PitchTrack],
        accents: &[AccentId],
        training: bool,
        rng: &mut impl Rng,
    ) -> Result<GeneratorPass> {
        let chars = Var::input(chars.clone());
        let pron = self.pronunciation.forward(p, &chars, accents, training, rng)?;
        let z = self.acoustic.forward(p, &Var::input(frames.clone()))?;
        let input = assemble_decoder_input(&pron, &z, pitch, self.config.features.upsample_factor)?;
        let audio = self.generator.forward(p, &input);
        Ok(GeneratorPass { audio, z })
    }

    /// Inference for one segment: target-accent pronunciation, source-audio
    /// embedding, dropout off.
    pub fn synthesize(
        &self,
        chars: &CharPosteriorSequence,
        frames: &AcousticFrames,
        pitch: &PitchTrack,
        accent: AccentId,
    ) -> Result<Vec<f32>> {
        let chars = if self.config.frontend.one_hot { chars.to_one_hot() } else { chars.clone() };
        let p = Binder::frozen(&self.store);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = self.generator_pass(
            &p,
            &pronunciation::stack_chars(&[&chars])?,
            &acoustic::stack_frames(&[frames])?,
            &[pitch],
            &[accent],
            false,
            &mut rng,
        )?;
        Ok(out.audio.value().data().iter().map(|&x| x as f32).collect())
    }
}
