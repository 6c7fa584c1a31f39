//! Named parameter tensors grouped by layer index.

use indexmap::IndexMap;

use super::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry {
    pub tensor: Tensor,
    pub layer: usize,
}

/// Insertion-ordered set of named parameters; names are unique and every
/// parameter carries the index of the layer it belongs to.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    entries: IndexMap<String, ParamEntry>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, layer: usize, tensor: Tensor) {
        let prior = self.entries.insert(name.to_string(), ParamEntry { tensor, layer });
        assert!(prior.is_none(), "duplicate parameter name '{name}'");
    }

    pub fn get(&self, name: &str) -> &Tensor {
        &self
            .entries
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter '{name}'"))
            .tensor
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Tensor {
        &mut self
            .entries
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter '{name}'"))
            .tensor
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn layer_of(&self, name: &str) -> usize {
        self.entries[name].layer
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &ParamEntry)> {
        self.entries.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_values(&self) -> usize {
        self.entries.values().map(|e| e.tensor.len()).sum()
    }

    /// λ·Σ‖θ_l‖² over parameters whose layer passes the filter.
    pub fn l2_penalty_where(&self, lambda: f64, layer_filter: impl Fn(usize) -> bool) -> f64 {
        assert!(lambda >= 0.0, "penalty strength must be non-negative");
        lambda
            * self
                .entries
                .values()
                .filter(|e| layer_filter(e.layer))
                .map(|e| e.tensor.data.iter().map(|v| v * v).sum::<f64>())
                .sum::<f64>()
    }

    /// λ·Σ‖θ_l‖² over every layer.
    pub fn l2_penalty(&self, lambda: f64) -> f64 {
        self.l2_penalty_where(lambda, |_| true)
    }
}

/// Standalone form of the weight penalty (value semantics of the layer-wise
/// L2 term; its gradient contribution is 2λθ per parameter).
pub fn l2_penalty(params: &ParamStore, lambda: f64) -> f64 {
    params.l2_penalty(lambda)
}
