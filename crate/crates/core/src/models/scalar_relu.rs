use serde::{Deserialize, Serialize};

use super::{sym2_apply, EvalResult, Model, Sym2};

/// Parameters of `f(x; u, v) = v·relu(u·x)` fitted to the single point (1, 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarReluState {
    pub u: f64,
    pub v: f64,
}

/// `L(u, v) = ½u²v²·1[u ≥ 0]`. The gradient and Hessian are taken as zero at
/// `u = 0`, matching the flat region `u < 0`.
pub fn eval_scalar_relu(state: ScalarReluState) -> EvalResult {
    let ScalarReluState { u, v } = state;
    let loss = if u >= 0.0 { 0.5 * u * u * v * v } else { 0.0 };
    let (grad, hessian) = if u > 0.0 {
        (
            vec![u * v * v, u * u * v],
            [[v * v, 2.0 * u * v], [2.0 * u * v, u * u]],
        )
    } else {
        (vec![0.0, 0.0], [[0.0; 2]; 2])
    };
    EvalResult {
        loss,
        grad,
        hessian: Some(hessian),
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ScalarRelu;

impl Model for ScalarRelu {
    fn name(&self) -> &'static str {
        "scalar_relu"
    }

    fn dim(&self) -> usize {
        2
    }

    fn loss_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let (u, v) = (theta[0], theta[1]);
        if u > 0.0 {
            grad[0] = u * v * v;
            grad[1] = u * u * v;
        } else {
            grad[0] = 0.0;
            grad[1] = 0.0;
        }
        if u >= 0.0 {
            0.5 * u * u * v * v
        } else {
            0.0
        }
    }

    fn hvp(&self, theta: &[f64], vec: &[f64], out: &mut [f64]) {
        let h = self.hessian2(theta).expect("two-parameter model");
        sym2_apply(&h, vec, out);
    }

    fn hessian2(&self, theta: &[f64]) -> Option<Sym2> {
        eval_scalar_relu(ScalarReluState {
            u: theta[0],
            v: theta[1],
        })
        .hessian
    }
}
