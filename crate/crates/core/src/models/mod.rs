//! Analytic models with hand-derived gradients and Hessians.

mod dataset;
mod ldn;
mod scalar_relu;
mod simple2d;

pub use dataset::{generate_sparse_regression, population_test_loss, DatasetConfig, RegressionDataset};
pub use ldn::{eval_ldn, ldn_hvp, DiagonalNet, DiagonalNetState};
pub use scalar_relu::{eval_scalar_relu, ScalarRelu, ScalarReluState};
pub use simple2d::{eval_simple2d, Simple2D, Simple2DState};

use serde::{Deserialize, Serialize};

/// Symmetric 2x2 matrix stored row-major.
pub type Sym2 = [[f64; 2]; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub loss: f64,
    pub grad: Vec<f64>,
    /// Present only for two-parameter models.
    pub hessian: Option<Sym2>,
}

/// A twice-differentiable training loss over a flat parameter vector.
pub trait Model: Send + Sync {
    fn name(&self) -> &'static str;

    fn dim(&self) -> usize;

    /// Writes the gradient into `grad` and returns the loss.
    fn loss_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64;

    fn loss(&self, theta: &[f64]) -> f64 {
        let mut g = vec![0.0; self.dim()];
        self.loss_grad(theta, &mut g)
    }

    /// Hessian-vector product `∇²L(theta)·vec` written into `out`.
    fn hvp(&self, theta: &[f64], vec: &[f64], out: &mut [f64]);

    /// Closed-form Hessian for two-parameter models.
    fn hessian2(&self, _theta: &[f64]) -> Option<Sym2> {
        None
    }

    fn eval(&self, theta: &[f64]) -> EvalResult {
        let mut grad = vec![0.0; self.dim()];
        let loss = self.loss_grad(theta, &mut grad);
        EvalResult {
            loss,
            grad,
            hessian: self.hessian2(theta),
        }
    }
}

pub(crate) fn sym2_apply(h: &Sym2, v: &[f64], out: &mut [f64]) {
    out[0] = h[0][0] * v[0] + h[0][1] * v[1];
    out[1] = h[1][0] * v[0] + h[1][1] * v[1];
}

#[cfg(test)]
pub(crate) mod fd {
    //! Finite-difference helpers shared by the model unit tests.
    use super::Model;

    pub fn grad(model: &dyn Model, theta: &[f64]) -> Vec<f64> {
        (0..theta.len())
            .map(|i| {
                let h = 1e-6 * (1.0 + theta[i].abs());
                let mut p = theta.to_vec();
                let mut m = theta.to_vec();
                p[i] += h;
                m[i] -= h;
                (model.loss(&p) - model.loss(&m)) / (2.0 * h)
            })
            .collect()
    }

    pub fn assert_close(a: &[f64], b: &[f64], rel: f64) {
        assert_eq!(a.len(), b.len());
        let scale = a.iter().chain(b).fold(0.0f64, |m, x| m.max(x.abs()));
        for (x, y) in a.iter().zip(b) {
            let err = (x - y).abs();
            if x.abs().max(y.abs()) < 1e-8 {
                assert!(err < 1e-8 * (1.0 + scale), "{x} vs {y}");
            } else {
                assert!(err <= rel * x.abs().max(y.abs()).max(1e-3 * scale), "{x} vs {y}");
            }
        }
    }
}
