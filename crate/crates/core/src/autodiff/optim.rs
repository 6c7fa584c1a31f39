//! First-order optimizers over a [`ParamStore`].

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::AdError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OptKind {
    Sgd,
    Adam,
}

impl OptKind {
    pub fn label(self) -> &'static str {
        match self {
            OptKind::Sgd => "sgd",
            OptKind::Adam => "adam",
        }
    }
}

/// Gradient buffers keyed by parameter name.
pub type Grads = IndexMap<String, Vec<f64>>;

#[derive(Debug, Clone)]
pub struct Optimizer {
    pub kind: OptKind,
    pub learning_rate: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step_count: u64,
    first_moment: IndexMap<String, Vec<f64>>,
    second_moment: IndexMap<String, Vec<f64>>,
}

impl Optimizer {
    pub fn new(kind: OptKind, learning_rate: f64) -> Self {
        Optimizer {
            kind,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step_count: 0,
            first_moment: IndexMap::new(),
            second_moment: IndexMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Applies one update. Parameters without a gradient entry are left
    /// untouched.
    pub fn step(&mut self, params: &mut ParamStore, grads: &Grads) -> Result<(), AdError> {
        self.step_count += 1;
        for (name, g) in grads {
            if !params.contains(name) {
                return Err(AdError::ShapeMismatch {
                    context: format!("gradient for unknown parameter '{name}'"),
                });
            }
            let theta = params.get_mut(name);
            if theta.len() != g.len() {
                return Err(AdError::ShapeMismatch {
                    context: format!(
                        "parameter '{name}' has {} values but gradient has {}",
                        theta.len(),
                        g.len()
                    ),
                });
            }
            match self.kind {
                OptKind::Sgd => {
                    for (t, gi) in theta.data.iter_mut().zip(g) {
                        *t -= self.learning_rate * gi;
                    }
                }
                OptKind::Adam => {
                    let m = self
                        .first_moment
                        .entry(name.clone())
                        .or_insert_with(|| vec![0.0; g.len()]);
                    let v = self
                        .second_moment
                        .entry(name.clone())
                        .or_insert_with(|| vec![0.0; g.len()]);
                    let b1t = 1.0 - self.beta1.powi(self.step_count as i32);
                    let b2t = 1.0 - self.beta2.powi(self.step_count as i32);
                    let theta = params.get_mut(name);
                    for i in 0..g.len() {
                        m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                        v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                        let m_hat = m[i] / b1t;
                        let v_hat = v[i] / b2t;
                        theta.data[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::tensor::Tensor;

    fn store_with(v: f64) -> ParamStore {
        let mut p = ParamStore::new();
        p.insert("w", 0, Tensor::from_vec(1, 1, vec![v]));
        p
    }

    fn grads_of(g: f64) -> Grads {
        let mut grads = Grads::new();
        grads.insert("w".into(), vec![g]);
        grads
    }

    #[test]
    fn sgd_moves_against_the_gradient() {
        let mut p = store_with(1.0);
        let mut opt = Optimizer::new(OptKind::Sgd, 1e-3);
        opt.step(&mut p, &grads_of(1.0)).unwrap();
        assert_eq!(p.get("w").data[0], 1.0 - 1e-3);
    }

    #[test]
    fn sgd_zero_gradient_is_a_fixed_point() {
        let mut p = store_with(0.75);
        let mut opt = Optimizer::new(OptKind::Sgd, 1e-2);
        opt.step(&mut p, &grads_of(0.0)).unwrap();
        assert_eq!(p.get("w").data[0], 0.75);
    }

    #[test]
    fn adam_first_step_is_learning_rate_sized() {
        let mut p = store_with(0.0);
        let mut opt = Optimizer::new(OptKind::Adam, 1e-3);
        opt.step(&mut p, &grads_of(1.0)).unwrap();
        // Bias correction makes m̂ = ĝ = 1, so Δθ = −lr/(1+eps) exactly.
        assert_eq!(p.get("w").data[0], -0.0009999999900000003);
        assert_eq!(opt.step_count(), 1);
    }

    #[test]
    fn adam_step_is_sign_symmetric() {
        let mut p1 = store_with(0.0);
        let mut p2 = store_with(0.0);
        let mut o1 = Optimizer::new(OptKind::Adam, 1e-3);
        let mut o2 = Optimizer::new(OptKind::Adam, 1e-3);
        o1.step(&mut p1, &grads_of(2.5)).unwrap();
        o2.step(&mut p2, &grads_of(-2.5)).unwrap();
        assert_eq!(p1.get("w").data[0], -p2.get("w").data[0]);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut p = store_with(0.0);
        let mut opt = Optimizer::new(OptKind::Sgd, 1e-3);
        let mut grads = Grads::new();
        grads.insert("w".into(), vec![1.0, 2.0]);
        assert!(matches!(opt.step(&mut p, &grads), Err(AdError::ShapeMismatch { .. })));
        grads.clear();
        grads.insert("nope".into(), vec![1.0]);
        assert!(matches!(opt.step(&mut p, &grads), Err(AdError::ShapeMismatch { .. })));
    }
}
