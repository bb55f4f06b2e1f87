use std::collections::HashMap;

use super::tape::{Gradients, Tape, Var};
use super::tensor::Tensor;

/// Index of a tensor inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Ordered, named set of learnable tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    lookup: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a tensor. Names must be unique.
    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        assert!(!self.lookup.contains_key(&name), "duplicate parameter {name}");
        self.lookup.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.tensors.push(value);
        ParamId(self.tensors.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.lookup.get(name).copied().map(ParamId)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalars across all tensors.
    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }
}

/// A fresh tape with every parameter bound as a trainable leaf.
pub struct Session {
    pub tape: Tape,
    vars: Vec<Var>,
}

impl Session {
    pub fn new(params: &ParamStore) -> Self {
        let mut tape = Tape::new();
        let vars = params
            .tensors()
            .iter()
            .map(|t| tape.parameter(t.clone()))
            .collect();
        Self { tape, vars }
    }

    /// Binds parameters as constants, for evaluation without gradients.
    pub fn frozen(params: &ParamStore) -> Self {
        let mut tape = Tape::new();
        let vars = params
            .tensors()
            .iter()
            .map(|t| tape.constant(t.clone()))
            .collect();
        Self { tape, vars }
    }

    pub fn param(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    /// Parameter gradients in store order, zero where a parameter was unused.
    pub fn param_grads(&self, grads: &Gradients) -> Vec<Tensor> {
        self.vars.iter().map(|&v| grads.get_or_zero(v)).collect()
    }
}
