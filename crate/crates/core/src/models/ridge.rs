//! Closed-form multi-output ridge regression: solves (XᵀX + λI)W = XᵀY by
//! Cholesky factorization. Serves as the linear oracle other learners are
//! tested against.

use nalgebra::{Cholesky, DMatrix};

use super::ModelError;

/// Returns the d×m coefficient matrix (row j = coefficients of feature j
/// across the m outputs). No intercept column is added; append a ones
/// column to `x` if one is wanted.
pub fn fit_ridge(x: &[Vec<f64>], y: &[Vec<f64>], lambda: f64) -> Result<Vec<Vec<f64>>, ModelError> {
    assert!(lambda >= 0.0, "ridge penalty must be nonnegative");
    assert!(!x.is_empty(), "need at least one sample");
    assert_eq!(x.len(), y.len(), "feature/target row mismatch");
    let n = x.len();
    let d = x[0].len();
    let m = y[0].len();
    assert!(x.iter().all(|r| r.len() == d), "ragged feature rows");
    assert!(y.iter().all(|r| r.len() == m), "ragged target rows");

    let xm = DMatrix::from_fn(n, d, |r, c| x[r][c]);
    let ym = DMatrix::from_fn(n, m, |r, c| y[r][c]);
    let mut gram = xm.transpose() * &xm;
    for i in 0..d {
        gram[(i, i)] += lambda;
    }
    let rhs = xm.transpose() * ym;
    let chol = Cholesky::new(gram).ok_or(ModelError::SingularSystem)?;
    let w = chol.solve(&rhs);
    Ok((0..d).map(|r| (0..m).map(|c| w[(r, c)]).collect()).collect())
}

pub fn predict_ridge(coef: &[Vec<f64>], x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let m = coef[0].len();
    x.iter()
        .map(|row| {
            (0..m)
                .map(|o| row.iter().zip(coef).map(|(v, w)| v * w[o]).sum())
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| (0..d).map(|_| r.random_range(-1.0..1.0)).collect()).collect()
    }

    #[test]
    fn unpenalized_square_system_interpolates() {
        let x = vec![vec![1.0, 0.0], vec![1.0, 1.0]];
        let y = vec![vec![2.0], vec![5.0]];
        let coef = fit_ridge(&x, &y, 0.0).unwrap();
        let pred = predict_ridge(&coef, &x);
        assert_abs_diff_eq!(pred[0][0], 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(pred[1][0], 5.0, epsilon = 1e-10);
    }

    #[test]
    fn infinite_penalty_limit_shrinks_coefficients_to_zero() {
        let x = random_matrix(15, 3, 1);
        let y = random_matrix(15, 2, 2);
        for row in fit_ridge(&x, &y, 1e12).unwrap() {
            for w in row {
                assert!(w.abs() < 1e-6, "coefficient {w} survived the penalty");
            }
        }
    }

    #[test]
    fn normal_equation_residual_vanishes() {
        let x = random_matrix(20, 5, 3);
        let y = random_matrix(20, 3, 4);
        let lambda = 0.7;
        let w = fit_ridge(&x, &y, lambda).unwrap();
        // Residual XᵀXw + λw − XᵀY must vanish coordinate-wise.
        let d = 5;
        let m = 3;
        for j in 0..d {
            for o in 0..m {
                let mut xtxw = 0.0;
                for i in 0..20 {
                    let xi_w: f64 = (0..d).map(|k| x[i][k] * w[k][o]).sum();
                    xtxw += x[i][j] * xi_w;
                }
                let xty: f64 = (0..20).map(|i| x[i][j] * y[i][o]).sum();
                let residual = xtxw + lambda * w[j][o] - xty;
                assert!(residual.abs() < 1e-8, "residual {residual} at ({j},{o})");
            }
        }
    }

    #[test]
    fn exact_linear_signal_is_recovered() {
        let x = random_matrix(40, 4, 5);
        let truth = [[1.5, -2.0], [0.0, 3.0], [-1.0, 0.5], [2.5, 1.0]];
        let y: Vec<Vec<f64>> = x
            .iter()
            .map(|row| {
                (0..2).map(|o| row.iter().zip(&truth).map(|(v, t)| v * t[o]).sum()).collect()
            })
            .collect();
        let w = fit_ridge(&x, &y, 0.0).unwrap();
        for (row, t) in w.iter().zip(&truth) {
            for (a, b) in row.iter().zip(t) {
                assert_abs_diff_eq!(*a, *b, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn rank_deficiency_without_penalty_is_reported() {
        // A zero feature column makes XᵀX exactly singular.
        let mut x = random_matrix(10, 3, 6);
        for row in &mut x {
            row[1] = 0.0;
        }
        let y = random_matrix(10, 1, 7);
        assert!(matches!(fit_ridge(&x, &y, 0.0), Err(ModelError::SingularSystem)));
        assert!(fit_ridge(&x, &y, 1e-3).is_ok());
    }
}
