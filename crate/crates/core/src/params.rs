//! Named trainable parameters and their binding into graphs.

use crate::autodiff::{Graph, Node};
use crate::error::{CoreError, Result};
use crate::tensor::Tensor;
use std::collections::BTreeMap;

/// Where a parameter set came from; used to enforce stage ordering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Fresh,
    Pretrained,
    Finetuned,
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Provenance::Fresh => write!(f, "fresh"),
            Provenance::Pretrained => write!(f, "pretrained"),
            Provenance::Finetuned => write!(f, "finetuned"),
        }
    }
}

/// All trainable weights, keyed by name. Iteration order is sorted, which
/// keeps every pass over the parameters. deterministic.
#[derive(Debug, Clone)]
pub struct ParamSet {
    map: BTreeMap<String, Tensor>,
    pub provenance: Provenance,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet {
            map: BTreeMap::new(),
            provenance: Provenance::Fresh,
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.map.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.map
            .get(name)
            .ok_or_else(|| CoreError::Config(format!("missing parameter '{name}'")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.map
            .get_mut(name)
            .ok_or_else(|| CoreError::Config(format!("missing parameter '{name}'")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.map.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.map.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.map.iter_mut()
    }

    pub fn total_values(&self) -> usize {
        self.map.values().map(|t| t.numel()).sum()
    }

    /// Bind every parameter into `graph` as a trainable leaf.
    pub fn bind(&self, graph: &Graph) -> Result<BoundParams> {
        self.bind_inner(graph, true)
    }

    /// Bind as constants (evaluation: no gradient bookkeeping).
    pub fn bind_const(&self, graph: &Graph) -> Result<BoundParams> {
        self.bind_inner(graph, false)
    }

    fn bind_inner(&self, graph: &Graph, trainable: bool) -> Result<BoundParams> {
        let mut nodes = BTreeMap::new();
        for (name, tensor) in &self.map {
            let node = if trainable {
                graph.leaf(tensor.clone().with_requires_grad(true))?
            } else {
                graph.constant(tensor.clone())?
            };
            nodes.insert(name.clone(), node);
        }
        Ok(BoundParams { nodes })
    }
}

impl Default for ParamSet {
    fn default() -> Self {
        Self::new()
    }
}

/// Leaf nodes for one graph, one per parameter.
pub struct BoundParams {
    nodes: BTreeMap<String, Node>,
}

impl BoundParams {
    pub fn node(&self, name: &str) -> Result<Node> {
        self.nodes
            .get(name)
            .cloned()
            .ok_or_else(|| CoreError::Config(format!("missing bound parameter '{name}'")))
    }

    /// Gradients after a backward pass; parameters the loss never touched
    /// report zeros.
    pub fn grads(&self) -> BTreeMap<String, Vec<f64>> {
        self.nodes
            .iter()
            .map(|(name, node)| {
                let g = node
                    .grad()
                    .map(|t| t.data().to_vec())
                    .unwrap_or_else(|| vec![0.0; node.value().numel()]);
                (name.clone(), g)
            })
            .collect()
    }
}
