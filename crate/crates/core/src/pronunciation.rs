//! Accent-conditioned pronunciation encoder.
//!
//! Every character-posterior frame is concatenated with the target accent's
//! embedding, projected to `d_model`, given a learned absolute position and
//! passed through a pre-norm transformer stack.

use accentvc_tensor::{Binder, ParamId, ParamStore, Tensor, Var};
use rand::Rng;

use crate::accent::AccentId;
use crate::config::{DropoutLocation, PronunciationConfig};
use crate::error::{Error, Result};
use crate::frontend::CharPosteriorSequence;
use crate::layers::{broadcast_time, dropout, LayerNorm, Linear, SelfAttention};

pub const GROUP: &str = "pronunciation";

#[derive(Clone, Debug)]
struct Block {
    ln1: LayerNorm,
    att: SelfAttention,
    ln2: LayerNorm,
    ff1: Linear,
    ff2: Linear,
}

#[derive(Clone, Debug)]
pub struct PronunciationEncoder {
    cfg: PronunciationConfig,
    vocab: usize,
    /// `8 × d_accent`, one row per accent in [`AccentId::ALL`] order.
    pub accent_table: ParamId,
    input: Linear,
    positions: ParamId,
    blocks: Vec<Block>,
    ln_out: LayerNorm,
}

impl PronunciationEncoder {
    pub fn new(store: &mut ParamStore, cfg: &PronunciationConfig, vocab: usize, rng: &mut impl Rng) -> Self {
        let g = GROUP;
        let d = cfg.d_model;
        let accent_table = store.add_normal("pron.accent_table", g, &[AccentId::ALL.len(), cfg.d_accent], 1.0, rng);
        let input = Linear::new(store, "pron.input", g, vocab + cfg.d_accent, d, rng);
        let positions = store.add_normal("pron.positions", g, &[cfg.max_frames, d], 0.02, rng);
        let blocks = (0..cfg.layers)
            .map(|i| {
                let n = format!("pron.block{i}");
                Block {
                    ln1: LayerNorm::new(store, &format!("{n}.ln1"), g, d),
                    att: SelfAttention::new(store, &format!("{n}.att"), g, d, cfg.heads, rng),
                    ln2: LayerNorm::new(store, &format!("{n}.ln2"), g, d),
                    ff1: Linear::new(store, &format!("{n}.ff1"), g, d, cfg.ff_dim, rng),
                    ff2: Linear::new(store, &format!("{n}.ff2"), g, cfg.ff_dim, d, rng),
                }
            })
            .collect();
        let ln_out = LayerNorm::new(store, "pron.ln_out", g, d);
        Self {
            cfg: cfg.clone(),
            vocab,
            accent_table,
            input,
            positions,
            blocks,
            ln_out,
        }
    }

    pub fn d_model(&self) -> usize {
        self.cfg.d_model
    }

    /// `[B, d_accent]` embedding rows for `accents`.
    pub fn embed_accent(&self, p: &Binder, accents: &[AccentId]) -> Var {
        let idx: Vec<usize> = accents.iter().map(|a| a.index()).collect();
        p.get(self.accent_table).index_select(0, &idx)
    }

    /// `chars[B, T, V]` to `[B, T, d_model]`. A dropout mask is drawn from
    /// `rng` only when `training` is set.
    pub fn forward(
        &self,
        p: &Binder,
        chars: &Var,
        accents: &[AccentId],
        training: bool,
        rng: &mut impl Rng,
    ) -> Result<Var> {
        let s = chars.shape().to_vec();
        if s.len() != 3 || s[2] != self.vocab || s[0] != accents.len() {
            return Err(Error::Shape(format!(
                "pronunciation encoder expects [{}, T, {}] chars, got {s:?}",
                accents.len(),
                self.vocab
            )));
        }
        let t = s[1];
        if t > self.cfg.max_frames {
            return Err(Error::Shape(format!(
                "{t} char frames exceed the {} learned positions",
                self.cfg.max_frames
            )));
        }
        let p_drop = if training { self.cfg.dropout } else { 0.0 };
        let residual_drop = self.cfg.dropout_location == DropoutLocation::Residual;

        let acc = broadcast_time(&self.embed_accent(p, accents), t);
        let mut h = self.input.forward(p, &Var::concat(&[chars.clone(), acc], 2));
        h = h.add_suffix(&p.get(self.positions).slice(0, 0, t));
        for blk in &self.blocks {
            let mut a = blk.att.forward(p, &blk.ln1.forward(p, &h));
            if residual_drop {
                a = dropout(&a, p_drop, rng);
            }
            h = h.add(&a);
            let mut f = blk.ff2.forward(p, &blk.ff1.forward(p, &blk.ln2.forward(p, &h)).gelu());
            if residual_drop {
                f = dropout(&f, p_drop, rng);
            }
            h = h.add(&f);
        }
        h = self.ln_out.forward(p, &h);
        if !residual_drop {
            h = dropout(&h, p_drop, rng);
        }
        Ok(h)
    }
}

/// Stack sequences of equal length into `[B, T, V]`.
pub fn stack_chars(seqs: &[&CharPosteriorSequence]) -> Result<Tensor> {
    let t = seqs.first().map_or(0, |s| s.len());
    let v = seqs.first().map_or(0, |s| s.frames.dims());
    if seqs.iter().any(|s| s.len() != t || s.frames.dims() != v) {
        return Err(Error::Shape("char sequences in a batch differ in shape".into()));
    }
    let data = seqs.iter().flat_map(|s| s.frames.data().iter().map(|&x| x as f64)).collect();
    Ok(Tensor::new(&[seqs.len(), t, v], data))
}

/// Single-sequence convenience wrapper returning `T × d_model` values.
pub fn encode_pronunciation(
    enc: &PronunciationEncoder,
    store: &ParamStore,
    chars: &CharPosteriorSequence,
    accent: AccentId,
    training: bool,
    rng: &mut impl Rng,
) -> Result<Tensor> {
    let p = Binder::frozen(store);
    let x = Var::input(stack_chars(&[chars])?);
    let y = enc.forward(&p, &x, &[accent], training, rng)?;
    let s = y.shape().to_vec();
    Ok(y.value().clone().reshape(&[s[1], s[2]]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Config;
    use crate::frontend::{synthetic_provider, CharVocab};
    use accentvc_tensor::testing::{max_relative_error, numerical_grad};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(cfg: &PronunciationConfig) -> (ParamStore, PronunciationEncoder) {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut store = ParamStore::new();
        let enc = PronunciationEncoder::new(&mut store, cfg, 29, &mut rng);
        (store, enc)
    }

    fn chars(t: usize) -> CharPosteriorSequence {
        synthetic_provider(if t >= 13 { "the quick fox" } else { "ox" }, t, &CharVocab::default(), 3).unwrap()
    }

    #[test]
    fn desk_shape() {
        let cfg = Config::desk().pronunciation;
        let (store, enc) = setup(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let y = encode_pronunciation(&enc, &store, &chars(56), AccentId::Hi, false, &mut rng).unwrap();
        assert_eq!(y.shape(), &[56, 256]);
        assert!(y.all_finite());
    }

    #[test]
    fn embedding_lookup() {
        let (store, enc) = setup(&Config::tiny().pronunciation);
        let p = Binder::frozen(&store);
        let am = enc.embed_accent(&p, &[AccentId::Am]);
        let table = store.value(enc.accent_table);
        assert_eq!(am.value().data(), &table.data()[..table.dim(1)]);
        let hi = enc.embed_accent(&p, &[AccentId::Hi]);
        assert_ne!(am.value(), hi.value());
        assert_eq!(am.value(), enc.embed_accent(&Binder::frozen(&store), &[AccentId::Am]).value());
    }

    #[test]
    fn accents_and_dropout() {
        let (store, enc) = setup(&Config::tiny().pronunciation);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = chars(20);
        let run = |a, train, rng: &mut ChaCha8Rng| encode_pronunciation(&enc, &store, &c, a, train, rng).unwrap();
        assert_ne!(run(AccentId::Hi, false, &mut rng), run(AccentId::Am, false, &mut rng));
        assert_eq!(run(AccentId::Hi, false, &mut rng), run(AccentId::Hi, false, &mut rng));
        assert_ne!(run(AccentId::Hi, true, &mut rng), run(AccentId::Hi, true, &mut rng));
    }

    #[test]
    fn vocab_mismatch_is_a_shape_error() {
        let (store, enc) = setup(&Config::tiny().pronunciation);
        let small = synthetic_provider("ab", 8, &CharVocab::new("_ab").unwrap(), 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = encode_pronunciation(&enc, &store, &small, AccentId::Am, false, &mut rng);
        assert!(matches!(r, Err(Error::Shape(_))));
    }

    #[test]
    fn every_output_frame_sees_every_input_frame() {
        let (store, enc) = setup(&Config::tiny().pronunciation);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = chars(12);
        let base = encode_pronunciation(&enc, &store, &c, AccentId::Ko, false, &mut rng).unwrap();
        let d = base.dim(1);
        for src in [0, 5, 11] {
            let mut c2 = c.clone();
            let row = c2.frames.row_mut(src);
            row.swap(0, 5);
            let out = encode_pronunciation(&enc, &store, &c2, AccentId::Ko, false, &mut rng).unwrap();
            for t in 0..12 {
                let diff: f64 = (0..d)
                    .map(|j| (out.data()[t * d + j] - base.data()[t * d + j]).abs())
                    .sum();
                assert!(diff > 1e-6, "frame {t} ignores input frame {src}");
            }
        }
    }

    #[test]
    fn gradient_wrt_accent_embedding() {
        let (mut store, enc) = setup(&Config::tiny().pronunciation);
        let c = chars(6);
        let x = Var::input(stack_chars(&[&c]).unwrap());
        let f = |store: &ParamStore| -> Var {
            let p = Binder::new(store, &[GROUP]);
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let y = enc.forward(&p, &x, &[AccentId::Sp], false, &mut rng).unwrap();
            y.mul(&y).sum().scale(0.01).add(&y.sum())
        };
        let table = store.value(enc.accent_table).clone();
        let p = Binder::new(&store, &[GROUP]);
        let out = {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let y = enc.forward(&p, &x, &[AccentId::Sp], false, &mut rng).unwrap();
            y.mul(&y).sum().scale(0.01).add(&y.sum())
        };
        let analytic = out.backward().param(enc.accent_table).unwrap().clone();
        drop(p);
        let numeric = numerical_grad(&table, 1e-5, |t| {
            *store.value_mut(enc.accent_table) = t.clone();
            f(&store).item()
        });
        assert!(max_relative_error(&analytic, &numeric) < 1e-3);
        // only the SP row receives gradient
        let w = table.dim(1);
        for a in AccentId::ALL {
            let norm: f64 = analytic.data()[a.index() * w..(a.index() + 1) * w].iter().map(|g| g * g).sum();
            assert_eq!(norm > 0.0, a == AccentId::Sp);
        }
    }
}
