use crate::graph::{Gradients, Graph, NodeId};
use crate::tensor::Tensor;

/// Ordered, named collection of trainable tensors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a parameter and returns its index.
    pub fn push(&mut self, name: impl Into<String>, value: Tensor) -> usize {
        self.names.push(name.into());
        self.tensors.push(value);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, i: usize) -> &Tensor {
        &self.tensors[i]
    }

    pub fn get_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.tensors[i]
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Total number of scalar values.
    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Inserts every parameter into `graph` as a borrowed leaf, in order.
    pub fn bind<'a>(&'a self, graph: &mut Graph<'a>) -> Vec<NodeId> {
        self.tensors.iter().map(|t| graph.param(t)).collect()
    }

    /// Inserts every parameter as a constant leaf (no gradient).
    pub fn bind_frozen<'a>(&'a self, graph: &mut Graph<'a>) -> Vec<NodeId> {
        self.tensors.iter().map(|t| graph.constant_ref(t)).collect()
    }

    /// Gradients for the ids returned by [`ParamSet::bind`], zero-filled for
    /// parameters that did not reach the loss.
    pub fn collect_grads(&self, ids: &[NodeId], grads: &Gradients) -> Vec<Tensor> {
        ids.iter()
            .zip(&self.tensors)
            .map(|(id, t)| grads.get_or_zeros(*id, t))
            .collect()
    }
}
