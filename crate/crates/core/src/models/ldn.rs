use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{EvalResult, Model, RegressionDataset};
use crate::error::{check_len, Error, Result};

/// Depth-2 diagonal linear network `⟨u⊙u − v⊙v, x⟩`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagonalNetState {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl DiagonalNetState {
    pub fn new(u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        check_len("v", u.len(), v.len())?;
        Ok(DiagonalNetState { u, v })
    }

    /// `u = v = alpha·1`.
    pub fn broadcast(alpha: f64, d: usize) -> Self {
        DiagonalNetState {
            u: vec![alpha; d],
            v: vec![alpha; d],
        }
    }

    /// Effective linear coefficients `u⊙u − v⊙v`.
    pub fn coefficients(&self) -> Vec<f64> {
        coefficients(&self.u, &self.v)
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = self.u.clone();
        out.extend_from_slice(&self.v);
        out
    }

    pub fn from_flat(theta: &[f64]) -> Result<Self> {
        if !theta.len().is_multiple_of(2) {
            return Err(Error::invalid("flat LDN parameters must have even length"));
        }
        let d = theta.len() / 2;
        Ok(DiagonalNetState {
            u: theta[..d].to_vec(),
            v: theta[d..].to_vec(),
        })
    }
}

fn coefficients(u: &[f64], v: &[f64]) -> Vec<f64> {
    u.iter().zip(v).map(|(a, b)| a * a - b * b).collect()
}

/// MSE `(1/2N)Σ rₙ²` and its gradient; no dense Hessian (use [`ldn_hvp`]).
pub fn eval_ldn(state: &DiagonalNetState, data: &RegressionDataset) -> Result<EvalResult> {
    check_len("u", data.d(), state.u.len())?;
    check_len("v", data.d(), state.v.len())?;
    let net = DiagonalNet::new(Arc::new(data.clone()));
    let mut grad = vec![0.0; 2 * data.d()];
    let loss = net.loss_grad(&state.to_flat(), &mut grad);
    Ok(EvalResult {
        loss,
        grad,
        hessian: None,
    })
}

pub fn ldn_hvp(state: &DiagonalNetState, data: &RegressionDataset, vec: &[f64]) -> Result<Vec<f64>> {
    check_len("u", data.d(), state.u.len())?;
    check_len("v", data.d(), state.v.len())?;
    check_len("hvp vector", 2 * data.d(), vec.len())?;
    let net = DiagonalNet::new(Arc::new(data.clone()));
    let mut out = vec![0.0; vec.len()];
    net.hvp(&state.to_flat(), vec, &mut out);
    Ok(out)
}

/// LDN over a shared dataset; parameters are laid out as `[u; v]`.
#[derive(Debug, Clone)]
pub struct DiagonalNet {
    data: Arc<RegressionDataset>,
}

impl DiagonalNet {
    pub fn new(data: Arc<RegressionDataset>) -> Self {
        DiagonalNet { data }
    }

    pub fn data(&self) -> &RegressionDataset {
        &self.data
    }

    /// Residuals `Xw − y` and `g = Xᵀr/N`.
    fn residual_and_backprojection(&self, theta: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let d = self.data.d();
        let w = coefficients(&theta[..d], &theta[d..]);
        let mut r = vec![0.0; self.data.n()];
        self.data.apply(&w, &mut r);
        for (ri, yi) in r.iter_mut().zip(self.data.targets()) {
            *ri -= yi;
        }
        let mut g = vec![0.0; d];
        self.data.apply_transpose_mean(&r, &mut g);
        (r, g)
    }
}

impl Model for DiagonalNet {
    fn name(&self) -> &'static str {
        "ldn"
    }

    fn dim(&self) -> usize {
        2 * self.data.d()
    }

    fn loss_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let d = self.data.d();
        let (r, g) = self.residual_and_backprojection(theta);
        let (gu, gv) = grad.split_at_mut(d);
        for j in 0..d {
            gu[j] = 2.0 * theta[j] * g[j];
            gv[j] = -2.0 * theta[d + j] * g[j];
        }
        0.5 * r.iter().map(|x| x * x).sum::<f64>() / self.data.n() as f64
    }

    fn loss(&self, theta: &[f64]) -> f64 {
        let (r, _) = self.residual_and_backprojection(theta);
        0.5 * r.iter().map(|x| x * x).sum::<f64>() / self.data.n() as f64
    }

    fn hvp(&self, theta: &[f64], vec: &[f64], out: &mut [f64]) {
        // grad_u = 2u⊙g, grad_v = −2v⊙g with g = G(u⊙u − v⊙v) − Xᵀy/N, G = XᵀX/N.
        // Directional derivative along (a, b): δw = 2u⊙a − 2v⊙b, δg = Gδw.
        let d = self.data.d();
        let (u, v) = theta.split_at(d);
        let (a, b) = vec.split_at(d);
        let (_, g) = self.residual_and_backprojection(theta);
        let dw: Vec<f64> = (0..d).map(|j| 2.0 * (u[j] * a[j] - v[j] * b[j])).collect();
        let mut dr = vec![0.0; self.data.n()];
        self.data.apply(&dw, &mut dr);
        let mut dg = vec![0.0; d];
        self.data.apply_transpose_mean(&dr, &mut dg);
        let (ou, ov) = out.split_at_mut(d);
        for j in 0..d {
            ou[j] = 2.0 * (a[j] * g[j] + u[j] * dg[j]);
            ov[j] = -2.0 * (b[j] * g[j] + v[j] * dg[j]);
        }
    }
}
