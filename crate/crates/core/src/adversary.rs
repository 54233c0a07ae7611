//! Native/foreign accent discriminator over the acoustic embedding and the
//! two losses that train it and fool it.

use accentvc_tensor::{Binder, ParamStore, Var};
use rand::Rng;

use crate::config::AdversaryConfig;
use crate::error::{invalid, Result};
use crate::layers::Linear;

pub const GROUP: &str = "accent_disc";

#[derive(Clone, Debug)]
pub struct AccentDiscriminator {
    hidden: Linear,
    out: Linear,
    eps: f64,
}

impl AccentDiscriminator {
    pub fn new(store: &mut ParamStore, cfg: &AdversaryConfig, dim: usize, rng: &mut impl Rng) -> Self {
        Self {
            hidden: Linear::new(store, "ad.hidden", GROUP, dim, cfg.hidden, rng),
            out: Linear::new(store, "ad.out", GROUP, cfg.hidden, 1, rng),
            eps: cfg.clamp_eps,
        }
    }

    /// `z[B, D]` to native probabilities `[B]`, clamped to `[eps, 1 - eps]`.
    pub fn forward(&self, p: &Binder, z: &Var) -> Var {
        let b = z.shape()[0];
        let h = self.hidden.forward(p, z).relu();
        self.out
            .forward(p, &h)
            .sigmoid()
            .clamp(self.eps, 1.0 - self.eps)
            .reshape(&[b])
    }
}

/// Native probability of one embedding.
pub fn discriminate(disc: &AccentDiscriminator, store: &ParamStore, z: &[f64]) -> f64 {
    let p = Binder::frozen(store);
    let z = Var::input(accentvc_tensor::Tensor::new(&[1, z.len()], z.to_vec()));
    disc.forward(&p, &z).item()
}

/// A loss value plus whether one of its expectations had no members.
pub struct ClassLoss {
    pub value: Var,
    pub missing_class: bool,
}

fn split(native: &[bool]) -> (Vec<usize>, Vec<usize>) {
    let nat = (0..native.len()).filter(|&i| native[i]).collect();
    let foreign = (0..native.len()).filter(|&i| !native[i]).collect();
    (nat, foreign)
}

fn neg_mean_ln(x: &Var) -> Var {
    x.ln().mean().neg()
}

/// `-E_native[ln AD(z)] - E_foreign[ln(1 - AD(z))]` from probabilities.
///
/// An empty class contributes 0 and sets `missing_class`.
pub fn loss_accent_discriminator(probs: &Var, native: &[bool]) -> Result<ClassLoss> {
    if native.is_empty() || probs.shape() != [native.len()] {
        return Err(invalid("accent batch must be non-empty with one flag per probability"));
    }
    let (nat, foreign) = split(native);
    let zero = || Var::constant(accentvc_tensor::Tensor::scalar(0.0));
    let ln = if nat.is_empty() { zero() } else { neg_mean_ln(&probs.index_select(0, &nat)) };
    let lf = if foreign.is_empty() {
        zero()
    } else {
        neg_mean_ln(&probs.index_select(0, &foreign).neg().add_scalar(1.0))
    };
    let missing_class = nat.is_empty() || foreign.is_empty();
    if missing_class {
        log::warn!("accent batch has only one class; the missing term counts as 0");
    }
    Ok(ClassLoss {
        value: ln.add(&lf),
        missing_class,
    })
}

/// `-E_foreign[ln AD(z)]`; native items do not contribute. A batch without
/// foreign items yields 0 with `missing_class` set.
pub fn loss_accent_adversarial(probs: &Var, native: &[bool]) -> Result<ClassLoss> {
    if native.is_empty() || probs.shape() != [native.len()] {
        return Err(invalid("accent batch must be non-empty with one flag per probability"));
    }
    let (_, foreign) = split(native);
    if foreign.is_empty() {
        log::warn!("accent batch has no foreign items; adversarial term is 0");
        return Ok(ClassLoss {
            value: Var::constant(accentvc_tensor::Tensor::scalar(0.0)),
            missing_class: true,
        });
    }
    Ok(ClassLoss {
        value: neg_mean_ln(&probs.index_select(0, &foreign)),
        missing_class: false,
    })
}
