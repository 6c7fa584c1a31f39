//! One-sided Wilcoxon signed-rank test for paired error comparisons.
//!
//! The alternative hypothesis is that the first series is stochastically
//! smaller than the second (model A makes smaller errors than model B), so
//! the p-value is the lower-tail probability of the positive-rank sum. Small
//! samples (n ≤ 20 after dropping zero differences) use the exact null
//! distribution; larger samples use a normal approximation with tie and
//! continuity corrections.

use super::EvalError;
use statrs::distribution::{ContinuousCDF, Normal};

const EXACT_LIMIT: usize = 20;
const MIN_PAIRS: usize = 5;

/// Average ranks of |d|, doubled so ties (half-integer averages) stay exact
/// integers. Input must be nonempty with no zeros.
fn doubled_ranks(diffs: &[f64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..diffs.len()).collect();
    order.sort_by(|&a, &b| diffs[a].abs().partial_cmp(&diffs[b].abs()).unwrap());
    let mut ranks2 = vec![0u64; diffs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && diffs[order[j + 1]].abs() == diffs[order[i]].abs() {
            j += 1;
        }
        // Tied block occupies ranks i+1 ..= j+1; average = (i + j + 2) / 2,
        // so the doubled average is the exact integer i + j + 2.
        let doubled = (i + j + 2) as u64;
        for &idx in &order[i..=j] {
            ranks2[idx] = doubled;
        }
        i = j + 1;
    }
    ranks2
}

/// Exact lower-tail probability P(W⁺ ≤ observed) for the signed-rank null:
/// every sign pattern over the given (doubled) ranks is equally likely.
/// Subset-sum dynamic program; counts fit u64 comfortably for n ≤ ~60.
fn exact_lower_tail(ranks2: &[u64], observed2: u64) -> f64 {
    let total: u64 = ranks2.iter().sum();
    let mut counts = vec![0u64; total as usize + 1];
    counts[0] = 1;
    for &r in ranks2 {
        for s in (r as usize..counts.len()).rev() {
            counts[s] += counts[s - r as usize];
        }
    }
    let favorable: u64 = counts[..=(observed2.min(total)) as usize].iter().sum();
    favorable as f64 / (1u64 << ranks2.len()) as f64
}

/// Normal approximation with tie correction and a continuity correction of
/// one half, on the doubled-rank scale.
fn approx_lower_tail(ranks2: &[u64], observed2: u64) -> f64 {
    let n = ranks2.len() as f64;
    // On the doubled scale: mean = n(n+1)/2, variance = n(n+1)(2n+1)/6 minus
    // the tie correction Σ(t³−t)/12 over tie groups (4× the usual values).
    let mean = n * (n + 1.0) / 2.0;
    let mut sorted = ranks2.to_vec();
    sorted.sort_unstable();
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let variance = n * (n + 1.0) * (2.0 * n + 1.0) / 6.0 - tie_term / 12.0;
    let z = (observed2 as f64 + 1.0 - mean) / variance.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    normal.cdf(z)
}

/// One-sided paired Wilcoxon signed-rank test of H₁: `errors_a` tends to be
/// smaller than `errors_b`. Zero differences are dropped; ties share average
/// ranks. Returns the p-value.
pub fn wilcoxon_one_sided(errors_a: &[f64], errors_b: &[f64]) -> Result<f64, EvalError> {
    assert_eq!(errors_a.len(), errors_b.len(), "paired series must align");
    assert!(!errors_a.is_empty(), "paired series must be nonempty");
    let diffs: Vec<f64> = errors_a
        .iter()
        .zip(errors_b)
        .map(|(a, b)| a - b)
        .filter(|d| *d != 0.0)
        .collect();
    if diffs.is_empty() {
        return Err(EvalError::AllZeroDifferences);
    }
    if diffs.len() < MIN_PAIRS {
        return Err(EvalError::TooFewPairs { got: diffs.len() });
    }
    let ranks2 = doubled_ranks(&diffs);
    let observed2: u64 = ranks2
        .iter()
        .zip(&diffs)
        .filter(|(_, d)| **d > 0.0)
        .map(|(r, _)| *r)
        .sum();
    if diffs.len() <= EXACT_LIMIT {
        Ok(exact_lower_tail(&ranks2, observed2))
    } else {
        Ok(approx_lower_tail(&ranks2, observed2))
    }
}
