//! Least-squares GAN and feature-matching losses, each summed over
//! sub-discriminators.

use accentvc_tensor::{Tensor, Var};

use crate::error::{invalid, Error, Result};

fn zero() -> Var {
    Var::constant(Tensor::scalar(0.0))
}

/// `Σ_d mean((real_d - 1)²) + mean(fake_d²)`.
pub fn loss_hifigan_discriminator(real: &[Var], fake: &[Var]) -> Result<Var> {
    if real.is_empty() || real.len() != fake.len() {
        return Err(invalid("need one real and one fake score map per sub-discriminator"));
    }
    let mut total = zero();
    for (r, f) in real.iter().zip(fake) {
        if r.shape()[0] != f.shape()[0] || r.value().numel() == 0 {
            return Err(invalid("real and fake batches differ or are empty"));
        }
        total = total.add(&r.add_scalar(-1.0).square().mean()).add(&f.square().mean());
    }
    Ok(total)
}

/// `Σ_d mean((fake_d - 1)²)`.
pub fn loss_hifigan_adversarial(fake: &[Var]) -> Result<Var> {
    if fake.is_empty() || fake.iter().any(|f| f.value().numel() == 0) {
        return Err(invalid("no fake scores"));
    }
    Ok(fake.iter().fold(zero(), |acc, f| acc.add(&f.add_scalar(-1.0).square().mean())))
}

/// `Σ_d Σ_layer mean|real - fake|`. Real features are treated as constants.
pub fn loss_feature_matching(real: &[Vec<Var>], fake: &[Vec<Var>]) -> Result<Var> {
    if real.len() != fake.len() {
        return Err(Error::Shape("feature sets have different sub-discriminator counts".into()));
    }
    let mut total = zero();
    for (rd, fd) in real.iter().zip(fake) {
        if rd.len() != fd.len() {
            return Err(Error::Shape("feature sets have different layer counts".into()));
        }
        for (r, f) in rd.iter().zip(fd) {
            if r.shape() != f.shape() {
                return Err(Error::Shape(format!("feature shapes {:?} vs {:?}", r.shape(), f.shape())));
            }
            total = total.add(&f.sub(&r.detach()).abs().mean());
        }
    }
    Ok(total)
}
