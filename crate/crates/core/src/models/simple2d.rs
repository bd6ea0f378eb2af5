use serde::{Deserialize, Serialize};

use super::{sym2_apply, EvalResult, Model, Sym2};

/// Two-parameter diagonal network fitted to the single point (e₁, 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Simple2DState {
    pub u: f64,
    pub v: f64,
}

/// `L(u, v) = ½(u² − v² − 1)²`.
pub fn eval_simple2d(state: Simple2DState) -> EvalResult {
    let Simple2DState { u, v } = state;
    let r = u * u - v * v - 1.0;
    EvalResult {
        loss: 0.5 * r * r,
        grad: vec![2.0 * r * u, -2.0 * r * v],
        hessian: Some(hessian(u, v)),
    }
}

fn hessian(u: f64, v: f64) -> Sym2 {
    let off = -4.0 * u * v;
    [
        [6.0 * u * u - 2.0 * v * v - 2.0, off],
        [off, 6.0 * v * v - 2.0 * u * u + 2.0],
    ]
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Simple2D;

impl Model for Simple2D {
    fn name(&self) -> &'static str {
        "simple2d"
    }

    fn dim(&self) -> usize {
        2
    }

    fn loss_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let (u, v) = (theta[0], theta[1]);
        let r = u * u - v * v - 1.0;
        grad[0] = 2.0 * r * u;
        grad[1] = -2.0 * r * v;
        0.5 * r * r
    }

    fn hvp(&self, theta: &[f64], vec: &[f64], out: &mut [f64]) {
        sym2_apply(&hessian(theta[0], theta[1]), vec, out);
    }

    fn hessian2(&self, theta: &[f64]) -> Option<Sym2> {
        Some(hessian(theta[0], theta[1]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::fd;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn global_minimum() {
        let r = eval_simple2d(Simple2DState { u: 1.0, v: 0.0 });
        assert_eq!(r.loss, 0.0);
        assert_eq!(r.grad, vec![0.0, -0.0]);
        assert_eq!(r.hessian, Some([[4.0, -0.0], [-0.0, 0.0]]));
    }

    #[test]
    fn off_minimum_value() {
        let r = eval_simple2d(Simple2DState { u: 2.0, v: 0.0 });
        assert_eq!(r.loss, 4.5);
        assert_eq!(r.grad[0], 12.0);
        assert_eq!(r.grad[1], 0.0);
    }

    #[test]
    fn symmetries() {
        let base = eval_simple2d(Simple2DState { u: 1.7, v: -0.4 }).loss;
        assert_eq!(base, eval_simple2d(Simple2DState { u: -1.7, v: 0.4 }).loss);
        assert_eq!(base, eval_simple2d(Simple2DState { u: 1.7, v: 0.4 }).loss);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let theta = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            let g = Simple2D.eval(&theta).grad;
            fd::assert_close(&g, &fd::grad(&Simple2D, &theta), 1e-5);
        }
    }
}
