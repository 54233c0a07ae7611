use std::cell::RefCell;
use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::tensor::Tensor;
use crate::var::Var;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub group: String,
    pub value: Tensor,
}

/// Owns every trainable tensor of a model, tagged with an update group.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
    by_name: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, group: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        assert!(
            !self.by_name.contains_key(&name),
            "duplicate parameter name {name}"
        );
        let id = ParamId(self.params.len());
        self.by_name.insert(name.clone(), id);
        self.params.push(Param {
            name,
            group: group.into(),
            value,
        });
        id
    }

    /// Gaussian init with the given standard deviation.
    pub fn add_normal(
        &mut self,
        name: impl Into<String>,
        group: impl Into<String>,
        shape: &[usize],
        std: f64,
        rng: &mut impl Rng,
    ) -> ParamId {
        let normal = Normal::new(0.0, std).expect("std must be finite and non-negative");
        let value = Tensor::from_fn(shape, |_| normal.sample(rng));
        self.add(name, group, value)
    }

    pub fn add_const(
        &mut self,
        name: impl Into<String>,
        group: impl Into<String>,
        shape: &[usize],
        value: f64,
    ) -> ParamId {
        self.add(name, group, Tensor::full(shape, value))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn ids_in_group<'a>(&'a self, group: &'a str) -> impl Iterator<Item = ParamId> + 'a {
        self.iter().filter(move |(_, p)| p.group == group).map(|(id, _)| id)
    }

    /// Total scalar count.
    pub fn numel(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    /// Snapshot of all values in a group, for before/after comparisons.
    pub fn snapshot_group(&self, group: &str) -> Vec<Tensor> {
        self.params
            .iter()
            .filter(|p| p.group == group)
            .map(|p| p.value.clone())
            .collect()
    }
}

/// Hands out graph leaves for parameters during one forward pass.
///
/// Parameters whose group is trainable become gradient-carrying leaves; all
/// others enter the graph as constants. Each parameter maps to a single leaf
/// no matter how often it is requested.
pub struct Binder<'a> {
    store: &'a ParamStore,
    trainable: Vec<String>,
    bound: RefCell<HashMap<ParamId, Var>>,
}

impl<'a> Binder<'a> {
    /// Nothing trainable: pure inference.
    pub fn frozen(store: &'a ParamStore) -> Self {
        Self::new(store, &[])
    }

    pub fn new(store: &'a ParamStore, trainable_groups: &[&str]) -> Self {
        Self {
            store,
            trainable: trainable_groups.iter().map(|s| s.to_string()).collect(),
            bound: RefCell::new(HashMap::new()),
        }
    }

    pub fn store(&self) -> &'a ParamStore {
        self.store
    }

    pub fn get(&self, id: ParamId) -> Var {
        if let Some(v) = self.bound.borrow().get(&id) {
            return v.clone();
        }
        let p = self.store.get(id);
        let trainable = self.trainable.iter().any(|g| *g == p.group);
        let v = Var::leaf(p.value.clone(), trainable, Some(id));
        self.bound.borrow_mut().insert(id, v.clone());
        v
    }
}
