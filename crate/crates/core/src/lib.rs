pub mod accent;
pub mod acoustic;
pub mod adversary;
pub mod audio;
pub mod config;
pub mod convert;
pub mod error;
pub mod fixtures;
pub mod frontend;
pub mod layers;
pub mod model;
pub mod pronunciation;
pub mod train;
pub mod vocoder;

pub use accent::AccentId;
pub use config::Config;
pub use error::{Error, Result};
