//! Central-difference verification of reverse-mode gradients.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::optim::Grads;
use super::params::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckReport {
    pub max_rel_error: f64,
    pub coordinates_checked: usize,
}

/// Compares analytic gradients against central differences of the loss at
/// `samples` randomly chosen parameter coordinates. `value` must be a pure
/// function of the store (stochastic layers disabled). Relative error is
/// |analytic − numeric| / max(|analytic|, |numeric|, 1e-8).
pub fn gradient_check(
    value: &dyn Fn(&ParamStore) -> f64,
    analytic: &Grads,
    params: &ParamStore,
    eps: f64,
    samples: usize,
    seed: u64,
) -> CheckReport {
    assert!(
        (1e-6..=1e-3).contains(&eps),
        "step size {eps} outside the supported [1e-6, 1e-3] window"
    );
    let coords: Vec<(&String, usize)> = analytic
        .iter()
        .flat_map(|(name, g)| (0..g.len()).map(move |i| (name, i)))
        .collect();
    assert!(!coords.is_empty(), "no gradient coordinates to check");

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut working = params.clone();
    let mut max_rel = 0.0f64;
    let n = samples.min(coords.len());
    // Sample without replacement when feasible, else draw indices.
    let picks: Vec<usize> = if n == coords.len() {
        (0..n).collect()
    } else {
        let mut idx: Vec<usize> = (0..coords.len()).collect();
        for i in 0..n {
            let j = rng.random_range(i..idx.len());
            idx.swap(i, j);
        }
        idx.truncate(n);
        idx
    };

    for pick in picks {
        let (name, i) = coords[pick];
        let original = params.get(name).data[i];
        working.get_mut(name).data[i] = original + eps;
        let hi = value(&working);
        working.get_mut(name).data[i] = original - eps;
        let lo = value(&working);
        working.get_mut(name).data[i] = original;
        let numeric = (hi - lo) / (2.0 * eps);
        let a = analytic[name.as_str()][i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        max_rel = max_rel.max(rel);
    }
    CheckReport { max_rel_error: max_rel, coordinates_checked: n }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::tape::Tape;
    use crate::autodiff::tensor::Tensor;

    fn quadratic_loss(p: &ParamStore) -> f64 {
        let mut tape = Tape::new();
        let w = tape.param(p.get("w"));
        let loss = tape.sum_squares(w);
        tape.scalar_value(loss)
    }

    fn quadratic_grads(p: &ParamStore) -> Grads {
        let mut tape = Tape::new();
        let w = tape.param(p.get("w"));
        let loss = tape.sum_squares(w);
        tape.backward(loss);
        let mut g = Grads::new();
        g.insert("w".into(), tape.grad(w).unwrap().to_vec());
        g
    }

    #[test]
    fn exact_for_quadratics() {
        let mut p = ParamStore::new();
        p.insert("w", 0, Tensor::random(1, 6, 3));
        let grads = quadratic_grads(&p);
        let rep = gradient_check(&quadratic_loss, &grads, &p, 1e-4, 6, 0);
        assert_eq!(rep.coordinates_checked, 6);
        assert!(rep.max_rel_error < 1e-9, "error {}", rep.max_rel_error);
    }

    #[test]
    fn corrupted_gradient_is_flagged() {
        let mut p = ParamStore::new();
        p.insert("w", 0, Tensor::from_vec(1, 3, vec![0.4, -1.0, 2.0]));
        let mut grads = quadratic_grads(&p);
        grads.get_mut("w").unwrap()[1] *= 1.5; // deliberate corruption
        let rep = gradient_check(&quadratic_loss, &grads, &p, 1e-4, 3, 0);
        assert!(rep.max_rel_error > 1e-2, "error {}", rep.max_rel_error);
    }

    #[test]
    #[should_panic(expected = "step size")]
    fn out_of_window_eps_rejected() {
        let mut p = ParamStore::new();
        p.insert("w", 0, Tensor::scalar(1.0));
        let grads = quadratic_grads(&p);
        gradient_check(&quadratic_loss, &grads, &p, 1e-2, 1, 0);
    }
}
