//! Dense row-major 2-D tensors with 64-bit elements, plus the gemm
//! helpers every layer builds on.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A rows×cols matrix; vectors are 1×n or n×1, scalars 1×1.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
    pub requires_grad: bool,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor { rows, cols, data: vec![0.0; rows * cols], requires_grad: false }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor { rows: 1, cols: 1, data: vec![v], requires_grad: false }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "buffer length must match shape");
        Tensor { rows, cols, data, requires_grad: false }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        assert!(!rows.is_empty(), "need at least one row");
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Tensor { rows: rows.len(), cols, data, requires_grad: false }
    }

    /// Uniform fan-scaled initialization: ±√(6/(fan_in+fan_out)).
    pub fn glorot(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols)
            .map(|_| rng.random_range(-limit..limit))
            .collect();
        Tensor { rows, cols, data, requires_grad: false }
    }

    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Seeded builder for deterministic test fixtures.
    pub fn random(rows: usize, cols: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor { rows, cols, data, requires_grad: false }
    }
}

/// c ← α·op(a)·op(b) + β·c for row-major buffers; transposition is
/// expressed through strides so no copies are made.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert_eq!(a.len(), m * k, "lhs buffer mismatch");
    assert_eq!(b.len(), k * n, "rhs buffer mismatch");
    assert_eq!(c.len(), m * n, "out buffer mismatch");
    // A physical row-major [r, s] buffer has strides (s, 1); viewing it as
    // its transpose [s, r] gives strides (1, s).
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// out = a·b for row-major matrices (a: m×k, b: k×n).
pub fn matmul(a: &Tensor, b: &Tensor) -> Tensor {
    assert_eq!(a.cols, b.rows, "inner dimensions disagree: {:?} × {:?}", a.shape(), b.shape());
    let mut out = Tensor::zeros(a.rows, b.cols);
    gemm(a.rows, a.cols, b.cols, 1.0, &a.data, false, &b.data, false, 0.0, &mut out.data);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn naive_matmul(a: &Tensor, b: &Tensor) -> Tensor {
        let mut out = Tensor::zeros(a.rows, b.cols);
        for i in 0..a.rows {
            for j in 0..b.cols {
                let mut s = 0.0;
                for t in 0..a.cols {
                    s += a.get(i, t) * b.get(t, j);
                }
                out.set(i, j, s);
            }
        }
        out
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let a = Tensor::random(3, 4, 1);
        let b = Tensor::random(4, 2, 2);
        let fast = matmul(&a, &b);
        let slow = naive_matmul(&a, &b);
        for (x, y) in fast.data.iter().zip(&slow.data) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn transposed_gemm_matches_explicit_transpose() {
        let a = Tensor::random(4, 3, 3); // used as aᵀ: 3×4
        let b = Tensor::random(4, 2, 4);
        let mut out = vec![0.0; 3 * 2];
        gemm(3, 4, 2, 1.0, &a.data, true, &b.data, false, 0.0, &mut out);
        // Explicit transpose oracle.
        let mut at = Tensor::zeros(3, 4);
        for i in 0..4 {
            for j in 0..3 {
                at.set(j, i, a.get(i, j));
            }
        }
        let want = naive_matmul(&at, &b);
        for (x, y) in out.iter().zip(&want.data) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn right_transposed_gemm_matches_explicit_transpose() {
        let a = Tensor::random(3, 4, 5);
        let b = Tensor::random(2, 4, 6); // used as bᵀ: 4×2
        let mut out = vec![0.0; 3 * 2];
        gemm(3, 4, 2, 1.0, &a.data, false, &b.data, true, 0.0, &mut out);
        let mut bt = Tensor::zeros(4, 2);
        for i in 0..2 {
            for j in 0..4 {
                bt.set(j, i, b.get(i, j));
            }
        }
        let want = naive_matmul(&a, &bt);
        for (x, y) in out.iter().zip(&want.data) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn gemm_accumulates_with_beta() {
        let a = Tensor::random(2, 3, 7);
        let b = Tensor::random(3, 2, 8);
        let mut out = vec![1.0; 4];
        gemm(2, 3, 2, 1.0, &a.data, false, &b.data, false, 1.0, &mut out);
        let want = naive_matmul(&a, &b);
        for (x, y) in out.iter().zip(&want.data) {
            assert_abs_diff_eq!(*x, y + 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn glorot_respects_fan_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let t = Tensor::glorot(30, 20, &mut rng);
        let limit = (6.0 / 50.0f64).sqrt();
        assert!(t.data.iter().all(|v| v.abs() < limit));
        assert!(t.data.iter().any(|v| v.abs() > limit * 0.5));
    }

    #[test]
    #[should_panic(expected = "inner dimensions")]
    fn mismatched_matmul_panics() {
        let a = Tensor::zeros(2, 3);
        let b = Tensor::zeros(2, 2);
        matmul(&a, &b);
    }
}
