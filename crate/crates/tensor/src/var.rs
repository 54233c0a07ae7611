//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! A [`Var`] is an immutable node in a dynamically built graph. Node ids grow
//! monotonically, so sorting by id gives a valid topological order for the
//! backward sweep.

use std::cell::Cell;
use std::collections::HashMap;
use std::rc::Rc;

use crate::params::ParamId;
use crate::tensor::Tensor;

/// Computes parent gradients from `(upstream grad, forward output, which
/// parents need a gradient)`.
pub(crate) type BackwardFn = Box<dyn Fn(&Tensor, &Tensor, &[bool]) -> Vec<Option<Tensor>>>;

thread_local! {
    static NEXT_ID: Cell<u64> = const { Cell::new(0) };
}

fn next_id() -> u64 {
    NEXT_ID.with(|c| {
        let id = c.get();
        c.set(id + 1);
        id
    })
}

pub(crate) struct Node {
    id: u64,
    value: Tensor,
    parents: Vec<Var>,
    backward: Option<BackwardFn>,
    requires_grad: bool,
    param: Option<ParamId>,
}

#[derive(Clone)]
pub struct Var(Rc<Node>);

impl Var {
    /// A value that never receives a gradient.
    pub fn constant(value: Tensor) -> Self {
        Self::leaf(value, false, None)
    }

    /// A leaf that collects a gradient (e.g. an input under test).
    pub fn input(value: Tensor) -> Self {
        Self::leaf(value, true, None)
    }

    pub(crate) fn leaf(value: Tensor, requires_grad: bool, param: Option<ParamId>) -> Self {
        Var(Rc::new(Node {
            id: next_id(),
            value,
            parents: Vec::new(),
            backward: None,
            requires_grad,
            param,
        }))
    }

    pub(crate) fn from_op(value: Tensor, parents: Vec<Var>, backward: BackwardFn) -> Self {
        let requires_grad = parents.iter().any(|p| p.requires_grad());
        if requires_grad {
            Var(Rc::new(Node {
                id: next_id(),
                value,
                parents,
                backward: Some(backward),
                requires_grad,
                param: None,
            }))
        } else {
            Self::constant(value)
        }
    }

    pub fn value(&self) -> &Tensor {
        &self.0.value
    }

    pub fn shape(&self) -> &[usize] {
        self.0.value.shape()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn id(&self) -> u64 {
        self.0.id
    }

    pub fn param(&self) -> Option<ParamId> {
        self.0.param
    }

    /// Same value, cut from the graph.
    pub fn detach(&self) -> Var {
        Var::constant(self.0.value.clone())
    }

    pub fn item(&self) -> f64 {
        self.0.value.item()
    }

    /// Back-propagate from this scalar.
    pub fn backward(&self) -> Gradients {
        assert_eq!(
            self.0.value.numel(),
            1,
            "backward() needs a scalar, got shape {:?}",
            self.shape()
        );
        self.backward_with(Tensor::full(self.shape(), 1.0))
    }

    /// Back-propagate a given upstream gradient.
    pub fn backward_with(&self, seed: Tensor) -> Gradients {
        assert_eq!(seed.shape(), self.shape(), "seed shape mismatch");
        let mut out = Gradients::default();
        if !self.requires_grad() {
            return out;
        }
        let mut order: Vec<Var> = Vec::new();
        let mut seen: HashMap<u64, ()> = HashMap::new();
        let mut stack = vec![self.clone()];
        while let Some(v) = stack.pop() {
            if seen.insert(v.id(), ()).is_some() {
                continue;
            }
            for p in &v.0.parents {
                if p.requires_grad() && !seen.contains_key(&p.id()) {
                    stack.push(p.clone());
                }
            }
            order.push(v);
        }
        order.sort_by_key(|v| std::cmp::Reverse(v.id()));

        let mut grads: HashMap<u64, Tensor> = HashMap::new();
        grads.insert(self.id(), seed);
        for v in order {
            let Some(g) = grads.remove(&v.id()) else {
                continue;
            };
            match &v.0.backward {
                Some(bw) => {
                    let needs: Vec<bool> = v.0.parents.iter().map(|p| p.requires_grad()).collect();
                    let pg = bw(&g, &v.0.value, &needs);
                    debug_assert_eq!(pg.len(), v.0.parents.len());
                    for ((p, need), pgrad) in v.0.parents.iter().zip(&needs).zip(pg) {
                        if !need {
                            continue;
                        }
                        let Some(pgrad) = pgrad else { continue };
                        debug_assert_eq!(pgrad.shape(), p.shape(), "gradient shape mismatch");
                        match grads.get_mut(&p.id()) {
                            Some(acc) => acc.add_assign(&pgrad),
                            None => {
                                grads.insert(p.id(), pgrad);
                            }
                        }
                    }
                }
                None => {
                    if let Some(pid) = v.0.param {
                        match out.params.get_mut(&pid) {
                            Some(acc) => acc.add_assign(&g),
                            None => {
                                out.params.insert(pid, g.clone());
                            }
                        }
                    }
                    out.leaves.insert(v.id(), g);
                }
            }
        }
        out
    }
}

impl std::fmt::Debug for Var {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}({:?})", self.id(), self.value())
    }
}

/// Gradients of leaves reached by a backward sweep.
#[derive(Default, Debug)]
pub struct Gradients {
    leaves: HashMap<u64, Tensor>,
    params: HashMap<ParamId, Tensor>,
}

impl Gradients {
    pub fn wrt(&self, v: &Var) -> Option<&Tensor> {
        self.leaves.get(&v.id())
    }

    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.params.get(&id)
    }

    pub fn params(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.params.iter().map(|(k, v)| (*k, v))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = (ParamId, &mut Tensor)> {
        self.params.iter_mut().map(|(k, v)| (*k, v))
    }

    /// L2 norm over all parameter gradients.
    pub fn param_norm(&self) -> f64 {
        let mut ids: Vec<_> = self.params.keys().copied().collect();
        ids.sort();
        ids.iter().map(|k| self.params[k].sq_norm()).sum::<f64>().sqrt()
    }

    /// Rescale parameter gradients so their global norm is at most `max_norm`.
    /// Returns the norm before clipping.
    pub fn clip_param_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.param_norm();
        if norm > max_norm && norm > 0.0 {
            let s = max_norm / norm;
            for g in self.params.values_mut() {
                g.data_mut().iter_mut().for_each(|x| *x *= s);
            }
        }
        norm
    }
}
