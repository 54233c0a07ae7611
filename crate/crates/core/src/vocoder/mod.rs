//! HiFiGAN-style decoder with multi-period and multi-scale discriminators.

mod discriminator;
mod generator;
mod losses;
mod mel;

pub use discriminator::{DiscOutput, HifiDiscriminators, GROUP as DISC_GROUP};
pub use generator::{assemble_decoder_input, DecoderInput, Generator, GROUP as GEN_GROUP};
pub use losses::{loss_feature_matching, loss_hifigan_adversarial, loss_hifigan_discriminator};
pub use mel::{loss_mel, MelBasis};
pub(crate) use mel::stack_mels;
