//! Parameterized building blocks shared by the encoders and the vocoder.

use std::rc::Rc;

use accentvc_tensor::{Binder, Conv1dSpec, ParamId, ParamStore, Tensor, Var};
use rand::Rng;
use rand_distr::{Bernoulli, Distribution};

use crate::error::{invalid, Result};

#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, group: &str, d_in: usize, d_out: usize, rng: &mut impl Rng) -> Self {
        let std = (1.0 / d_in as f64).sqrt();
        Self {
            w: store.add_normal(format!("{name}.w"), group, &[d_in, d_out], std, rng),
            b: store.add(format!("{name}.b"), group, Tensor::zeros(&[d_out])),
        }
    }

    pub fn forward(&self, p: &Binder, x: &Var) -> Var {
        x.linear(&p.get(self.w), Some(&p.get(self.b)))
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, group: &str, dim: usize) -> Self {
        Self {
            gamma: store.add(format!("{name}.gamma"), group, Tensor::full(&[dim], 1.0)),
            beta: store.add(format!("{name}.beta"), group, Tensor::zeros(&[dim])),
        }
    }

    /// Normalizes the last axis.
    pub fn forward(&self, p: &Binder, x: &Var) -> Var {
        x.layer_norm(&p.get(self.gamma), &p.get(self.beta), 1e-5)
    }
}

#[derive(Clone, Debug)]
pub struct Conv {
    pub w: ParamId,
    pub b: ParamId,
    pub spec: Conv1dSpec,
}

impl Conv {
    /// `std = None` uses `1/sqrt(fan_in)`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        group: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        spec: Conv1dSpec,
        std: Option<f64>,
        rng: &mut impl Rng,
    ) -> Self {
        let cin_g = cin / spec.groups;
        let std = std.unwrap_or_else(|| (1.0 / (cin_g * kernel) as f64).sqrt());
        Self {
            w: store.add_normal(format!("{name}.w"), group, &[cout, cin_g, kernel], std, rng),
            b: store.add(format!("{name}.b"), group, Tensor::zeros(&[cout])),
            spec,
        }
    }

    /// `[B, Cin, L] -> [B, Cout, L']`.
    pub fn forward(&self, p: &Binder, x: &Var) -> Var {
        x.conv1d(&p.get(self.w), Some(&p.get(self.b)), self.spec)
    }
}

/// Multi-head self-attention over `[B, T, D]` without masking.
#[derive(Clone, Debug)]
pub struct SelfAttention {
    pub qkv: Linear,
    pub out: Linear,
    pub heads: usize,
}

impl SelfAttention {
    pub fn new(store: &mut ParamStore, name: &str, group: &str, dim: usize, heads: usize, rng: &mut impl Rng) -> Self {
        Self {
            qkv: Linear::new(store, &format!("{name}.qkv"), group, dim, 3 * dim, rng),
            out: Linear::new(store, &format!("{name}.out"), group, dim, dim, rng),
            heads,
        }
    }

    pub fn forward(&self, p: &Binder, x: &Var) -> Var {
        let s = x.shape();
        let (b, t, d) = (s[0], s[1], s[2]);
        let h = self.heads;
        let dh = d / h;
        let qkv = self
            .qkv
            .forward(p, x)
            .reshape(&[b, t, 3, h, dh])
            .permute(&[2, 0, 3, 1, 4]);
        let part = |i: usize| qkv.slice(0, i, 1).reshape(&[b * h, t, dh]);
        let (q, k, v) = (part(0), part(1), part(2));
        let att = q.bmm(&k, false, true).scale(1.0 / (dh as f64).sqrt()).softmax_last();
        let y = att
            .bmm(&v, false, false)
            .reshape(&[b, h, t, dh])
            .permute(&[0, 2, 1, 3])
            .reshape(&[b, t, d]);
        self.out.forward(p, &y)
    }
}

/// Repeat `v[B, D]` along a new time axis: `[B, T, D]`.
pub fn broadcast_time(v: &Var, t: usize) -> Var {
    let s = v.shape();
    let (b, d) = (s[0], s[1]);
    let idx: Vec<usize> = (0..b)
        .flat_map(|bi| (0..t).flat_map(move |_| (0..d).map(move |di| bi * d + di)))
        .collect();
    v.gather(Rc::new(idx), &[b, t, d])
}

/// Repeat each time step `factor` times: `[B, T, D] -> [B, factor*T, D]`.
pub fn repeat_time(x: &Var, factor: usize) -> Var {
    let s = x.shape();
    let (b, t, d) = (s[0], s[1], s[2]);
    let idx: Vec<usize> = (0..b)
        .flat_map(|bi| {
            (0..t * factor).flat_map(move |ti| (0..d).map(move |di| (bi * t + ti / factor) * d + di))
        })
        .collect();
    x.gather(Rc::new(idx), &[b, t * factor, d])
}

/// Inverted dropout with a mask drawn from `rng`; identity when `p == 0`.
pub fn dropout(x: &Var, p: f64, rng: &mut impl Rng) -> Var {
    if p <= 0.0 {
        return x.clone();
    }
    let bern = Bernoulli::new(1.0 - p).expect("dropout probability in [0, 1)");
    let keep = Tensor::from_fn(x.shape(), |_| if bern.sample(rng) { 1.0 } else { 0.0 });
    x.dropout_with_mask(&keep, p)
}

/// Mean over the time axis of `[B, T, D]`.
pub fn mean_pool(seq: &Var) -> Result<Var> {
    let s = seq.shape();
    if s.len() != 3 || s[1] == 0 {
        return Err(invalid(format!("mean_pool needs [B, T>0, D], got {s:?}")));
    }
    Ok(seq.mean_axis(1))
}
