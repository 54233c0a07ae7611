//! Acoustic encoder: MFCC + periodicity frames to a single embedding `z`.
//!
//! Four same-padded dilated convolutions (each followed by layer norm over
//! channels and a leaky rectifier), one residual self-attention layer, then
//! the mean over time. The convolutions are the only positional signal.

use accentvc_tensor::{Binder, Conv1dSpec, ParamStore, Tensor, Var};
use rand::Rng;

use crate::audio::AcousticFrames;
use crate::config::AcousticConfig;
use crate::error::{invalid, Error, Result};
use crate::layers::{mean_pool, Conv, LayerNorm, SelfAttention};

pub const GROUP: &str = "acoustic";

#[derive(Clone, Debug)]
pub struct AcousticEncoder {
    in_dims: usize,
    slope: f64,
    convs: Vec<(Conv, LayerNorm)>,
    attention: SelfAttention,
}

impl AcousticEncoder {
    pub fn new(store: &mut ParamStore, cfg: &AcousticConfig, in_dims: usize, rng: &mut impl Rng) -> Self {
        let mut cin = in_dims;
        let mut convs = Vec::new();
        for (i, ((&c, &k), &d)) in cfg.channels.iter().zip(&cfg.kernels).zip(&cfg.dilations).enumerate() {
            let conv = Conv::new(store, &format!("ac.conv{i}"), GROUP, cin, c, k, Conv1dSpec::same(k, d), None, rng);
            convs.push((conv, LayerNorm::new(store, &format!("ac.ln{i}"), GROUP, c)));
            cin = c;
        }
        Self {
            in_dims,
            slope: cfg.leaky_slope,
            convs,
            attention: SelfAttention::new(store, "ac.att", GROUP, cin, cfg.heads, rng),
        }
    }

    /// Per-frame features `[B, T, C]` before pooling.
    pub fn sequence(&self, p: &Binder, frames: &Var) -> Result<Var> {
        let s = frames.shape();
        if s.len() != 3 || s[2] != self.in_dims {
            return Err(Error::Shape(format!(
                "acoustic encoder expects [B, T, {}], got {s:?}",
                self.in_dims
            )));
        }
        if s[1] == 0 {
            return Err(invalid("acoustic encoder needs at least one frame"));
        }
        let mut h = frames.clone();
        for (conv, ln) in &self.convs {
            let y = conv.forward(p, &h.permute(&[0, 2, 1])).permute(&[0, 2, 1]);
            h = ln.forward(p, &y).leaky_relu(self.slope);
        }
        Ok(h.add(&self.attention.forward(p, &h)))
    }

    /// `[B, T, in_dims]` to `[B, C]`.
    pub fn forward(&self, p: &Binder, frames: &Var) -> Result<Var> {
        mean_pool(&self.sequence(p, frames)?)
    }
}

pub fn stack_frames(frames: &[&AcousticFrames]) -> Result<Tensor> {
    let t = frames.first().map_or(0, |f| f.frames.rows());
    let d = frames.first().map_or(0, |f| f.frames.dims());
    if frames.iter().any(|f| f.frames.rows() != t || f.frames.dims() != d) {
        return Err(Error::Shape("acoustic frames in a batch differ in shape".into()));
    }
    let data = frames.iter().flat_map(|f| f.frames.data().iter().map(|&x| x as f64)).collect();
    Ok(Tensor::new(&[frames.len(), t, d], data))
}

/// Embedding of one clip.
pub fn encode_acoustic(enc: &AcousticEncoder, store: &ParamStore, frames: &AcousticFrames) -> Result<Vec<f64>> {
    let p = Binder::frozen(store);
    let z = enc.forward(&p, &Var::input(stack_frames(&[frames])?))?;
    Ok(z.value().data().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::Frames;
    use crate::config::Config;
    use accentvc_tensor::testing::check_grad;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn frames(t: usize) -> AcousticFrames {
        let data = (0..t * 14).map(|i| ((i * 7919 % 97) as f32 / 48.0) - 1.0).collect();
        AcousticFrames {
            frames: Frames::new(t, 14, data).unwrap(),
            hop: 80,
        }
    }

    fn setup(cfg: &AcousticConfig) -> (ParamStore, AcousticEncoder) {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::new();
        let enc = AcousticEncoder::new(&mut store, cfg, 14, &mut rng);
        (store, enc)
    }

    #[test]
    fn any_length_gives_256() {
        let (store, enc) = setup(&Config::desk().acoustic);
        for t in [224, 56, 1] {
            let z = encode_acoustic(&enc, &store, &frames(t)).unwrap();
            assert_eq!(z.len(), 256);
            assert!(z.iter().all(|v| v.is_finite()));
        }
        assert_eq!(
            encode_acoustic(&enc, &store, &frames(56)).unwrap(),
            encode_acoustic(&enc, &store, &frames(56)).unwrap()
        );
    }

    #[test]
    fn empty_and_wrong_width() {
        let (store, enc) = setup(&Config::tiny().acoustic);
        let p = Binder::frozen(&store);
        assert!(enc.forward(&p, &Var::input(Tensor::zeros(&[1, 0, 14]))).is_err());
        assert!(matches!(
            enc.forward(&p, &Var::input(Tensor::zeros(&[1, 4, 13]))),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn input_gradient() {
        let (store, enc) = setup(&Config::tiny().acoustic);
        let x = stack_frames(&[&frames(8)]).unwrap();
        check_grad(
            &x,
            |x| {
                let p = Binder::frozen(&store);
                let z = enc.forward(&p, x).unwrap();
                z.mul(&z).sum().add(&z.sum())
            },
            1e-3,
        );
    }
}
