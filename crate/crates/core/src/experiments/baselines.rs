use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{population_test_loss, RegressionDataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub w: Vec<f64>,
    pub test_loss: f64,
    pub iterations: usize,
    /// False for a rank-deficient pseudo-solve or an ADMM run that hit its
    /// iteration cap.
    pub exact: bool,
}

fn design(data: &RegressionDataset) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if data.n() > data.d() {
        return Err(Error::invalid(format!(
            "interpolation baselines need n ≤ d, got n = {} and d = {}",
            data.n(),
            data.d()
        )));
    }
    Ok((
        DMatrix::from_row_slice(data.n(), data.d(), data.inputs()),
        DVector::from_column_slice(data.targets()),
    ))
}

/// Solves `G a = b` for the Gram matrix `G = XXᵀ`, by Cholesky when it is
/// positive definite and by an SVD pseudo-solve with relative cutoff `10⁻¹⁰`
/// otherwise. The flag reports which path was taken.
struct GramSolver {
    chol: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
    svd: Option<nalgebra::SVD<f64, nalgebra::Dyn, nalgebra::Dyn>>,
    cutoff: f64,
}

impl GramSolver {
    fn new(x: &DMatrix<f64>) -> Self {
        let g = x * x.transpose();
        match g.clone().cholesky() {
            Some(chol) => GramSolver {
                chol: Some(chol),
                svd: None,
                cutoff: 0.0,
            },
            None => {
                let svd = g.svd(true, true);
                let cutoff = 1e-10 * svd.singular_values.max();
                GramSolver {
                    chol: None,
                    svd: Some(svd),
                    cutoff,
                }
            }
        }
    }

    fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        match (&self.chol, &self.svd) {
            (Some(c), _) => c.solve(b),
            (None, Some(s)) => s
                .solve(b, self.cutoff)
                .expect("SVD was computed with both factors"),
            _ => unreachable!(),
        }
    }

    fn exact(&self) -> bool {
        self.chol.is_some()
    }
}

/// Least-norm interpolant `w = Xᵀ(XXᵀ)⁻¹y`.
pub fn min_l2_baseline(data: &RegressionDataset) -> Result<Baseline> {
    let (x, y) = design(data)?;
    let gram = GramSolver::new(&x);
    let w = x.transpose() * gram.solve(&y);
    let w: Vec<f64> = w.iter().copied().collect();
    Ok(Baseline {
        test_loss: population_test_loss(&w, data),
        w,
        iterations: 0,
        exact: gram.exact(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmmOptions {
    pub tol: f64,
    pub max_iters: usize,
    pub rho: f64,
    /// Over-relaxation parameter in `[1, 2)`.
    pub relaxation: f64,
}

impl Default for AdmmOptions {
    fn default() -> Self {
        AdmmOptions {
            tol: 1e-10,
            max_iters: 200_000,
            rho: 1.0,
            relaxation: 1.5,
        }
    }
}

/// Basis pursuit `min ‖w‖₁ s.t. Xw = y` by over-relaxed ADMM. Stops when
/// the primal residual `‖x − z‖` and dual residual `ρ‖z − z_prev‖` both fall
/// below `tol`.
pub fn min_l1_baseline(data: &RegressionDataset, opts: &AdmmOptions) -> Result<Baseline> {
    if !(opts.tol > 0.0) || !(opts.rho > 0.0) || !(1.0..2.0).contains(&opts.relaxation) {
        return Err(Error::invalid(
            "ADMM needs tol > 0, rho > 0 and relaxation in [1,2)",
        ));
    }
    let (x, y) = design(data)?;
    let d = data.d();
    let gram = GramSolver::new(&x);
    let xt = x.transpose();
    // Projection onto {w : Xw = y}: v − Xᵀ(XXᵀ)⁻¹(Xv − y).
    let project = |v: &DVector<f64>| v - &xt * gram.solve(&(&x * v - &y));

    let kappa = 1.0 / opts.rho;
    let mut z = DVector::zeros(d);
    let mut u = DVector::zeros(d);
    let mut w = project(&z);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iters {
        iterations += 1;
        w = project(&(&z - &u));
        let w_hat = opts.relaxation * &w + (1.0 - opts.relaxation) * &z;
        let z_prev = z.clone();
        z = (&w_hat + &u).map(|a| a.signum() * (a.abs() - kappa).max(0.0));
        u += &w_hat - &z;
        let primal = (&w - &z).norm();
        let dual = opts.rho * (&z - &z_prev).norm();
        if primal < opts.tol && dual < opts.tol {
            converged = true;
            break;
        }
    }
    let w: Vec<f64> = w.iter().copied().collect();
    Ok(Baseline {
        test_loss: population_test_loss(&w, data),
        w,
        iterations,
        exact: converged && gram.exact(),
    })
}

pub fn l1_norm(w: &[f64]) -> f64 {
    w.iter().map(|x| x.abs()).sum()
}

pub fn l2_norm(w: &[f64]) -> f64 {
    w.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{generate_sparse_regression, DatasetConfig};

    fn small(n: usize, d: usize, seed: u64) -> RegressionDataset {
        generate_sparse_regression(&DatasetConfig {
            n,
            d,
            sigma2: 1.0,
            mu: vec![0.5; d],
            k: 2.min(d),
            seed,
        })
        .unwrap()
    }

    #[test]
    fn l2_interpolates_and_is_least_norm() {
        let data = small(4, 8, 3);
        let b = min_l2_baseline(&data).unwrap();
        assert!(b.exact);
        let mut xw = vec![0.0; 4];
        data.apply(&b.w, &mut xw);
        for (a, y) in xw.iter().zip(data.targets()) {
            assert!((a - y).abs() <= 1e-8 * y.abs().max(1.0));
        }
        // w_star also interpolates, so it cannot be shorter.
        assert!(l2_norm(&b.w) <= l2_norm(data.w_star()) + 1e-12);
    }

    #[test]
    fn square_system_recovers_inverse() {
        let data = small(5, 5, 1);
        let b = min_l2_baseline(&data).unwrap();
        for (a, w) in b.w.iter().zip(data.w_star()) {
            assert!((a - w).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_targets_give_zero() {
        let data = small(3, 6, 2);
        let zero = RegressionDataset::from_parts(
            data.rows().map(<[f64]>::to_vec).collect(),
            vec![0.0; 3],
            vec![0.0; 6],
            data.config().clone(),
        )
        .unwrap();
        let b = min_l1_baseline(&zero, &AdmmOptions::default()).unwrap();
        assert!(b.w.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn overdetermined_is_rejected() {
        assert!(min_l2_baseline(&small(6, 4, 0)).is_err());
    }
}
