use std::collections::BTreeMap;

use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;
use crate::var::Gradients;

/// Per-parameter Adam moments.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Tensor,
    pub v: Tensor,
}

/// Adam with decoupled weight decay.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    state: BTreeMap<ParamId, AdamState>,
}

impl AdamW {
    pub fn new(beta1: f64, beta2: f64, eps: f64, weight_decay: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            weight_decay,
            state: BTreeMap::new(),
        }
    }

    pub fn state(&self) -> &BTreeMap<ParamId, AdamState> {
        &self.state
    }

    pub fn set_state(&mut self, state: BTreeMap<ParamId, AdamState>) {
        self.state = state;
    }

    /// Update every parameter that has a gradient in `grads`.
    ///
    /// Parameters without a gradient are left untouched, so callers control
    /// which group moves by choosing what the binder made trainable.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients, lr: f64) {
        let mut ids: Vec<ParamId> = grads.params().map(|(id, _)| id).collect();
        ids.sort();
        for id in ids {
            let g = grads.param(id).expect("listed above");
            let value = store.value_mut(id);
            assert_eq!(g.shape(), value.shape(), "gradient shape mismatch");
            let st = self.state.entry(id).or_insert_with(|| AdamState {
                step: 0,
                m: Tensor::zeros(value.shape()),
                v: Tensor::zeros(value.shape()),
            });
            st.step += 1;
            let bc1 = 1.0 - self.beta1.powi(st.step as i32);
            let bc2 = 1.0 - self.beta2.powi(st.step as i32);
            let decay = 1.0 - lr * self.weight_decay;
            let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
            let m = st.m.data_mut();
            let v = st.v.data_mut();
            for (((w, &gi), mi), vi) in value
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mi = b1 * *mi + (1.0 - b1) * gi;
                *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *w = *w * decay - lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Binder;

    #[test]
    fn minimizes_a_quadratic() {
        let mut store = ParamStore::new();
        let id = store.add("w", "g", Tensor::new(&[2], vec![3.0, -2.0]));
        let mut opt = AdamW::new(0.9, 0.999, 1e-8, 0.0);
        for _ in 0..2000 {
            let grads = {
                let b = Binder::new(&store, &["g"]);
                let w = b.get(id);
                w.square().sum().backward()
            };
            opt.step(&mut store, &grads, 0.05);
        }
        assert!(store.value(id).data().iter().all(|x| x.abs() < 1e-2));
    }

    #[test]
    fn first_step_moves_by_lr() {
        // Bias-corrected first step is lr * sign(g).
        let mut store = ParamStore::new();
        let id = store.add("w", "g", Tensor::new(&[1], vec![1.0]));
        let mut opt = AdamW::new(0.8, 0.99, 1e-12, 0.0);
        let grads = {
            let b = Binder::new(&store, &["g"]);
            b.get(id).scale(3.0).sum().backward()
        };
        opt.step(&mut store, &grads, 0.1);
        assert!((store.value(id).data()[0] - 0.9).abs() < 1e-9);
    }

    #[test]
    fn frozen_groups_get_no_update() {
        let mut store = ParamStore::new();
        let a = store.add("a", "gen", Tensor::new(&[1], vec![1.0]));
        let d = store.add("d", "disc", Tensor::new(&[1], vec![1.0]));
        let mut opt = AdamW::new(0.8, 0.99, 1e-8, 0.01);
        let grads = {
            let b = Binder::new(&store, &["gen"]);
            b.get(a).mul(&b.get(d)).sum().backward()
        };
        opt.step(&mut store, &grads, 0.1);
        assert_ne!(store.value(a).data()[0], 1.0);
        assert_eq!(store.value(d).data()[0], 1.0);
    }
}
