//! Ridge regression with the penalty chosen by efficient leave-one-out
//! (generalized) cross-validation.
//!
//! The design is centered, then diagonalized once through the eigen
//! decomposition of the smaller Gram matrix. For each alpha the fitted
//! values, hat diagonal and LOO residuals `e_i / (1 - h_ii)` follow in
//! closed form.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 13 log-spaced penalties from 1e-3 to 1e3.
pub fn default_alpha_grid() -> Vec<f64> {
    (0..13).map(|i| 10f64.powf(-3.0 + 0.5 * i as f64)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeFit {
    pub coef: Vec<f64>,
    pub intercept: f64,
    pub alpha: f64,
    /// Mean squared LOO error per grid entry.
    pub loo_errors: Vec<f64>,
}

impl RidgeFit {
    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let w = DVector::from_column_slice(&self.coef);
        (x * w).iter().map(|v| v + self.intercept).collect()
    }
}

pub fn fit_ridge(x: &DMatrix<f64>, y: &[f64], alpha_grid: &[f64]) -> Result<RidgeFit> {
    let (n, p) = x.shape();
    if n != y.len() {
        return Err(Error::InvalidParameter("design rows and targets differ".into()));
    }
    if n < 2 {
        return Err(Error::Model("ridge needs at least 2 samples".into()));
    }
    if p == 0 {
        return Err(Error::Model("ridge needs at least 1 feature".into()));
    }
    if alpha_grid.is_empty() || alpha_grid.iter().any(|a| !(*a > 0.0) || !a.is_finite()) {
        return Err(Error::InvalidParameter("alpha grid must hold positive values".into()));
    }

    let col_means: Vec<f64> = (0..p).map(|j| x.column(j).mean()).collect();
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let mut xc = x.clone();
    for j in 0..p {
        let m = col_means[j];
        xc.column_mut(j).iter_mut().for_each(|v| *v -= m);
    }
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));

    let spectral = Spectral::new(&xc, &yc);
    let mut loo_errors = Vec::with_capacity(alpha_grid.len());
    let mut best = 0;
    for (a, &alpha) in alpha_grid.iter().enumerate() {
        let (fitted, hat) = spectral.fitted_and_hat(alpha);
        let inv_n = 1.0 / n as f64;
        let err = (0..n)
            .map(|i| {
                let e = (yc[i] - fitted[i]) / (1.0 - hat[i] - inv_n);
                e * e
            })
            .sum::<f64>()
            / n as f64;
        let err = if err.is_finite() { err } else { f64::INFINITY };
        if err < loo_errors.get(best).copied().unwrap_or(f64::INFINITY) {
            best = a;
        }
        loo_errors.push(err);
    }
    let alpha = alpha_grid[best];
    let w = spectral.coefficients(&xc, alpha);
    let intercept = y_mean - w.iter().zip(&col_means).map(|(a, b)| a * b).sum::<f64>();
    Ok(RidgeFit {
        coef: w.iter().copied().collect(),
        intercept,
        alpha,
        loo_errors,
    })
}

/// Eigen-basis of the centered design. With `p <= n` it holds
/// `Z = Xc V` and the eigenvalues of `Xc' Xc`; otherwise the eigenvectors
/// `U` of `Xc Xc'`.
enum Spectral {
    Primal {
        v: DMatrix<f64>,
        z: DMatrix<f64>,
        lambda: Vec<f64>,
        zty: DVector<f64>,
    },
    Dual {
        u: DMatrix<f64>,
        lambda: Vec<f64>,
        uty: DVector<f64>,
    },
}

impl Spectral {
    fn new(xc: &DMatrix<f64>, yc: &DVector<f64>) -> Spectral {
        let (n, p) = xc.shape();
        if p <= n {
            let eig = SymmetricEigen::new(xc.tr_mul(xc));
            let lambda = eig.eigenvalues.iter().map(|l| l.max(0.0)).collect();
            let z = xc * &eig.eigenvectors;
            let zty = z.tr_mul(yc);
            Spectral::Primal {
                v: eig.eigenvectors,
                z,
                lambda,
                zty,
            }
        } else {
            let eig = SymmetricEigen::new(xc * xc.transpose());
            let lambda = eig.eigenvalues.iter().map(|l| l.max(0.0)).collect();
            let uty = eig.eigenvectors.tr_mul(yc);
            Spectral::Dual {
                u: eig.eigenvectors,
                lambda,
                uty,
            }
        }
    }

    /// Centered fitted values and the hat diagonal without the intercept
    /// term `1/n`.
    fn fitted_and_hat(&self, alpha: f64) -> (DVector<f64>, Vec<f64>) {
        match self {
            Spectral::Primal { z, lambda, zty, .. } => {
                let n = z.nrows();
                let scaled = DVector::from_iterator(
                    lambda.len(),
                    zty.iter().zip(lambda).map(|(c, l)| c / (l + alpha)),
                );
                let fitted = z * scaled;
                let mut hat = vec![0.0; n];
                for (j, l) in lambda.iter().enumerate() {
                    let d = 1.0 / (l + alpha);
                    for (i, h) in hat.iter_mut().enumerate() {
                        let v = z[(i, j)];
                        *h += v * v * d;
                    }
                }
                (fitted, hat)
            }
            Spectral::Dual { u, lambda, uty } => {
                let n = u.nrows();
                let shrink: Vec<f64> = lambda.iter().map(|l| l / (l + alpha)).collect();
                let scaled = DVector::from_iterator(
                    lambda.len(),
                    uty.iter().zip(&shrink).map(|(c, s)| c * s),
                );
                let fitted = u * scaled;
                let mut hat = vec![0.0; n];
                for (j, s) in shrink.iter().enumerate() {
                    for (i, h) in hat.iter_mut().enumerate() {
                        let v = u[(i, j)];
                        *h += v * v * s;
                    }
                }
                (fitted, hat)
            }
        }
    }

    fn coefficients(&self, xc: &DMatrix<f64>, alpha: f64) -> DVector<f64> {
        match self {
            Spectral::Primal { v, lambda, zty, .. } => {
                let scaled = DVector::from_iterator(
                    lambda.len(),
                    zty.iter().zip(lambda).map(|(c, l)| c / (l + alpha)),
                );
                v * scaled
            }
            Spectral::Dual { u, lambda, uty } => {
                let scaled = DVector::from_iterator(
                    lambda.len(),
                    uty.iter().zip(lambda).map(|(c, l)| c / (l + alpha)),
                );
                xc.tr_mul(&(u * scaled))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Gradient of `||y - Xw - b||^2 + alpha ||w||^2` at the solution,
    /// relative to the gradient scale at zero.
    fn relative_gradient(x: &DMatrix<f64>, y: &[f64], fit: &RidgeFit) -> f64 {
        let yv = DVector::from_column_slice(y);
        let w = DVector::from_column_slice(&fit.coef);
        let resid = x * &w + DVector::from_element(y.len(), fit.intercept) - &yv;
        let g = 2.0 * x.tr_mul(&resid) + 2.0 * fit.alpha * &w;
        let gb = 2.0 * resid.sum();
        let scale = 2.0 * x.tr_mul(&yv).norm() + 2.0 * yv.sum().abs() + 1e-300;
        (g.norm_squared() + gb * gb).sqrt() / scale
    }

    fn random_problem(rng: &mut ChaCha8Rng, n: usize, p: usize) -> (DMatrix<f64>, Vec<f64>) {
        let x = DMatrix::from_fn(n, p, |_, _| rng.gen_range(-1.0..1.0));
        let y = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        (x, y)
    }

    #[test]
    fn grid_is_log_spaced() {
        let g = default_alpha_grid();
        assert_eq!(g.len(), 13);
        assert!((g[0] - 1e-3).abs() < 1e-15);
        assert!((g[12] - 1e3).abs() < 1e-9);
    }

    #[test]
    fn gradient_vanishes_at_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let (x, y) = random_problem(&mut rng, 20, 5);
            let fit = fit_ridge(&x, &y, &default_alpha_grid()).unwrap();
            assert!(relative_gradient(&x, &y, &fit) <= 1e-8);
        }
    }

    #[test]
    fn wide_design_uses_dual_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (x, y) = random_problem(&mut rng, 6, 15);
        let fit = fit_ridge(&x, &y, &[0.5]).unwrap();
        assert!(relative_gradient(&x, &y, &fit) <= 1e-8);
    }

    #[test]
    fn loo_error_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (x, y) = random_problem(&mut rng, 12, 3);
        let alpha = 0.3;
        let fit = fit_ridge(&x, &y, &[alpha]).unwrap();
        let mut sse = 0.0;
        for i in 0..12 {
            let keep: Vec<usize> = (0..12).filter(|&r| r != i).collect();
            let xs = x.select_rows(&keep);
            let ys: Vec<f64> = keep.iter().map(|&r| y[r]).collect();
            let f = fit_ridge(&xs, &ys, &[alpha]).unwrap();
            let pred = f.predict(&x.select_rows(&[i]))[0];
            sse += (y[i] - pred).powi(2);
        }
        assert!((fit.loo_errors[0] - sse / 12.0).abs() < 1e-9);
    }

    #[test]
    fn two_point_slope() {
        let x = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let fit = fit_ridge(&x, &[0.0, 1.0], &[1e-3]).unwrap();
        // Centered: x = ±0.5, y = ±0.5, slope = 0.5 / (0.5 + alpha).
        assert!((fit.coef[0] - 0.5 / (0.5 + 1e-3)).abs() < 1e-12);
        assert!((fit.coef[0] - 1.0).abs() < 1e-2);
    }

    #[test]
    fn zero_design_predicts_mean() {
        let x = DMatrix::zeros(4, 2);
        let y = [1.0, 2.0, 3.0, 6.0];
        let fit = fit_ridge(&x, &y, &default_alpha_grid()).unwrap();
        assert!(fit.predict(&x).iter().all(|p| (p - 3.0).abs() < 1e-12));
    }

    #[test]
    fn exact_linear_recovery() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = DMatrix::from_fn(50, 3, |_, _| rng.gen_range(-1.0..1.0));
        let y: Vec<f64> = (0..50)
            .map(|i| 2.0 * x[(i, 0)] - x[(i, 1)] + 0.5 * x[(i, 2)] + 1.0)
            .collect();
        let fit = fit_ridge(&x, &y, &[1e-3]).unwrap();
        let r2 = super::super::metrics::r2(&y, &fit.predict(&x)).unwrap();
        assert!(r2 >= 0.999);
    }

    #[test]
    fn rejects_degenerate_inputs() {
        let x = DMatrix::zeros(1, 1);
        assert!(fit_ridge(&x, &[1.0], &[1.0]).is_err());
        let x = DMatrix::zeros(3, 0);
        assert!(fit_ridge(&x, &[1.0, 2.0, 3.0], &[1.0]).is_err());
        let x = DMatrix::zeros(3, 1);
        assert!(fit_ridge(&x, &[1.0, 2.0, 3.0], &[0.0]).is_err());
    }
}
