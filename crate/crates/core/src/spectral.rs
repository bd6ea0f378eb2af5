//! Sharpness: the algebraically largest Hessian eigenvalue and its eigenvector.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{Model, Sym2};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITERS: usize = 10_000;

/// Components below this magnitude are skipped when fixing the eigenvector sign.
const SIGN_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharpnessEstimate {
    pub value: f64,
    pub eigvec: Vec<f64>,
    pub iterations: usize,
    /// `‖H·eigvec − value·eigvec‖`.
    pub residual: f64,
    pub converged: bool,
    /// Distance to the second eigenvalue, when known exactly.
    pub gap: Option<f64>,
}

/// Closed-form top eigenpair of a symmetric 2x2 matrix.
pub fn sharpness_exact_2x2(h: &Sym2) -> SharpnessEstimate {
    let (a, b, c) = (h[0][0], 0.5 * (h[0][1] + h[1][0]), h[1][1]);
    let mean = 0.5 * (a + c);
    let half_gap = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    let value = mean + half_gap;

    let mut eigvec = if b == 0.0 {
        if a >= c {
            vec![1.0, 0.0]
        } else {
            vec![0.0, 1.0]
        }
    } else {
        // Two spanning candidates for the null space of H − λI; keep the better scaled one.
        let p = [value - c, b];
        let q = [b, value - a];
        let (np, nq) = (norm(&p), norm(&q));
        if np >= nq {
            vec![p[0] / np, p[1] / np]
        } else {
            vec![q[0] / nq, q[1] / nq]
        }
    };
    normalize_sign(&mut eigvec);

    let hv = [a * eigvec[0] + b * eigvec[1], b * eigvec[0] + c * eigvec[1]];
    let residual = ((hv[0] - value * eigvec[0]).powi(2) + (hv[1] - value * eigvec[1]).powi(2)).sqrt();
    SharpnessEstimate {
        value,
        eigvec,
        iterations: 0,
        residual,
        converged: true,
        gap: Some(2.0 * half_gap),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerOptions {
    pub tol: f64,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for PowerOptions {
    fn default() -> Self {
        PowerOptions {
            tol: DEFAULT_TOL,
            max_iters: DEFAULT_MAX_ITERS,
            seed: 0,
        }
    }
}

/// Shifted power iteration on `H + cI` using only Hessian-vector products.
///
/// The shift is 1.5× the largest `‖Hv‖/‖v‖` seen during a short plain power
/// run, so the iteration targets the algebraically largest eigenvalue even when
/// a negative eigenvalue dominates in magnitude. `init` warm-starts the
/// iteration; otherwise a seeded Gaussian vector is used.
pub fn sharpness_power<F>(
    hvp: F,
    dim: usize,
    opts: &PowerOptions,
    init: Option<&[f64]>,
) -> Result<SharpnessEstimate>
where
    F: Fn(&[f64], &mut [f64]),
{
    if dim == 0 {
        return Err(Error::invalid("power iteration needs dim ≥ 1"));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::invalid("power iteration tolerance must be positive"));
    }

    let mut v = match init {
        Some(x) if x.len() == dim && norm(x) > 0.0 => x.to_vec(),
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect()
        }
    };
    scale_to_unit(&mut v);

    let mut hv = vec![0.0; dim];
    let mut iterations = 0;

    let mut radius = 0.0f64;
    let mut w = v.clone();
    for _ in 0..30.min(opts.max_iters) {
        hvp(&w, &mut hv);
        iterations += 1;
        let n = norm(&hv);
        radius = radius.max(n);
        if n == 0.0 {
            break;
        }
        w.iter_mut().zip(&hv).for_each(|(wi, hi)| *wi = hi / n);
    }
    let shift = 1.5 * radius;

    let mut value = 0.0;
    let mut residual = f64::INFINITY;
    let mut converged = false;
    while iterations < opts.max_iters.max(1) {
        hvp(&v, &mut hv);
        iterations += 1;
        value = dot(&v, &hv);
        residual = hv
            .iter()
            .zip(&v)
            .map(|(h, x)| (h - value * x).powi(2))
            .sum::<f64>()
            .sqrt();
        if residual <= opts.tol * value.abs().max(1.0) {
            converged = true;
            break;
        }
        v.iter_mut().zip(&hv).for_each(|(x, h)| *x = h + shift * *x);
        scale_to_unit(&mut v);
    }

    normalize_sign(&mut v);
    Ok(SharpnessEstimate {
        value,
        eigvec: v,
        iterations,
        residual,
        converged,
        gap: None,
    })
}

/// Flip `v` so its first component with magnitude above 1e-12 is positive.
pub fn normalize_sign(v: &mut [f64]) {
    if let Some(first) = v.iter().find(|x| x.abs() > SIGN_EPS) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Sharpness of a model, exact for two-parameter models and warm-started
/// power iteration otherwise.
#[derive(Debug, Clone)]
pub struct SharpnessProbe {
    opts: PowerOptions,
    last: Option<Vec<f64>>,
}

impl SharpnessProbe {
    pub fn new(opts: PowerOptions) -> Self {
        SharpnessProbe { opts, last: None }
    }

    pub fn probe(&mut self, model: &dyn Model, theta: &[f64]) -> SharpnessEstimate {
        if let Some(h) = model.hessian2(theta) {
            return sharpness_exact_2x2(&h);
        }
        let est = sharpness_power(
            |x, out| model.hvp(theta, x, out),
            model.dim(),
            &self.opts,
            self.last.as_deref(),
        )
        .expect("model dimension and tolerance validated at construction");
        self.last = Some(est.eigvec.clone());
        est
    }
}

impl Default for SharpnessProbe {
    fn default() -> Self {
        SharpnessProbe::new(PowerOptions::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdSharpnessGradient {
    pub grad: Vec<f64>,
    /// Set when the top two eigenvalues came within `10·h` at any probe point.
    pub degenerate: bool,
}

/// Default finite-difference step `10⁻⁴·(1 + ‖θ‖)`.
pub fn default_fd_step(theta: &[f64]) -> f64 {
    1e-4 * (1.0 + norm(theta))
}

/// Central differences of `S(θ)` along each coordinate.
pub fn grad_sharpness_fd(model: &dyn Model, theta: &[f64], h: f64) -> Result<FdSharpnessGradient> {
    if !(h > 0.0) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let mut probe = SharpnessProbe::default();
    let mut degenerate = false;
    let mut sharp = |x: &[f64], degenerate: &mut bool| {
        let est = probe.probe(model, x);
        if est.gap.is_some_and(|g| g < 10.0 * h) {
            *degenerate = true;
        }
        est.value
    };
    let mut grad = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        let mut p = theta.to_vec();
        let mut m = theta.to_vec();
        p[i] += h;
        m[i] -= h;
        grad.push((sharp(&p, &mut degenerate) - sharp(&m, &mut degenerate)) / (2.0 * h));
    }
    Ok(FdSharpnessGradient { grad, degenerate })
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn scale_to_unit(v: &mut [f64]) {
    let n = norm(v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ScalarRelu, Simple2D};
    use rand::Rng;

    fn dense_hvp(m: &[Vec<f64>]) -> impl Fn(&[f64], &mut [f64]) + '_ {
        move |x, out| {
            for (o, row) in out.iter_mut().zip(m) {
                *o = dot(row, x);
            }
        }
    }

    #[test]
    fn diagonal_2x2() {
        let e = sharpness_exact_2x2(&[[4.0, 0.0], [0.0, 0.0]]);
        assert_eq!(e.value, 4.0);
        assert_eq!(e.eigvec, vec![1.0, 0.0]);
    }

    #[test]
    fn scalar_relu_minimum_has_sharpness_u_squared() {
        let u: f64 = 3.0;
        let e = sharpness_exact_2x2(&[[0.0, 0.0], [0.0, u * u]]);
        assert_eq!(e.value, 9.0);
        assert_eq!(e.eigvec, vec![0.0, 1.0]);
    }

    #[test]
    fn coupled_2x2() {
        let e = sharpness_exact_2x2(&[[2.0, 1.0], [1.0, 2.0]]);
        assert!((e.value - 3.0).abs() < 1e-15);
        let s = 1.0 / 2f64.sqrt();
        assert!((e.eigvec[0] - s).abs() < 1e-15 && (e.eigvec[1] - s).abs() < 1e-15);
        assert!(e.residual < 1e-14);
        assert_eq!(e.gap, Some(2.0));
    }

    #[test]
    fn identity_power() {
        for dim in [1, 3, 17] {
            let id: Vec<Vec<f64>> = (0..dim)
                .map(|i| (0..dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                .collect();
            let e = sharpness_power(dense_hvp(&id), dim, &PowerOptions::default(), None).unwrap();
            assert!((e.value - 1.0).abs() < 1e-12);
            assert!(e.converged);
        }
    }

    #[test]
    fn power_prefers_algebraically_largest() {
        let m = vec![vec![-5.0, 0.0], vec![0.0, 1.0]];
        let e = sharpness_power(dense_hvp(&m), 2, &PowerOptions::default(), None).unwrap();
        assert!((e.value - 1.0).abs() < 1e-8, "{}", e.value);
        assert!(e.eigvec[1].abs() > 1.0 - 1e-8);
    }

    #[test]
    fn power_agrees_with_exact_on_2x2() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..200 {
            let (a, b, c) = (
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
            );
            let h = [[a, b], [b, c]];
            let exact = sharpness_exact_2x2(&h);
            if exact.gap.unwrap() < 1e-3 {
                continue;
            }
            let m = vec![vec![a, b], vec![b, c]];
            let p = sharpness_power(dense_hvp(&m), 2, &PowerOptions::default(), None).unwrap();
            assert!(
                (p.value - exact.value).abs() <= 1e-8 * exact.value.abs().max(1.0),
                "{} vs {}",
                p.value,
                exact.value
            );
            assert!(p.residual <= 1e-8 * p.value.abs().max(1.0));
            let unit = norm(&p.eigvec);
            assert!((unit - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn sign_normalization_is_deterministic() {
        let mut v = vec![1e-13, -0.5, 0.2];
        normalize_sign(&mut v);
        assert_eq!(v, vec![-1e-13, 0.5, -0.2]);
        let h = [[1.0, -3.0], [-3.0, 2.0]];
        assert_eq!(sharpness_exact_2x2(&h).eigvec, sharpness_exact_2x2(&h).eigvec);
        assert!(sharpness_exact_2x2(&h).eigvec[0] > 0.0);
    }

    #[test]
    fn zero_matrix() {
        let z = vec![vec![0.0; 3]; 3];
        let e = sharpness_power(dense_hvp(&z), 3, &PowerOptions::default(), None).unwrap();
        assert_eq!(e.value, 0.0);
        assert!(e.converged);
    }

    #[test]
    fn fd_sharpness_gradient_scalar_relu() {
        let theta = [2.5, 0.0];
        let h = default_fd_step(&theta);
        let g = grad_sharpness_fd(&ScalarRelu, &theta, h).unwrap();
        assert!((g.grad[0] - 5.0).abs() < 1e-6, "{:?}", g.grad);
        assert!(g.grad[1].abs() < 1e-6);
        assert!(!g.degenerate);

        let dead = grad_sharpness_fd(&ScalarRelu, &[-1.0, 0.3], 1e-4).unwrap();
        assert_eq!(dead.grad, vec![0.0, 0.0]);
        assert!(dead.degenerate);
    }

    #[test]
    fn fd_sharpness_gradient_along_simple2d_minima() {
        // Parameterize the minima by v: (√(1+v²), v) with S = 8v² + 4, so
        // dS/dv along the manifold is 16v.
        let v: f64 = 1.3;
        let theta = [(1.0 + v * v).sqrt(), v];
        let g = grad_sharpness_fd(&Simple2D, &theta, 1e-5).unwrap();
        let tangent = [v / (1.0 + v * v).sqrt(), 1.0];
        let directional = g.grad[0] * tangent[0] + g.grad[1] * tangent[1];
        assert!((directional - 16.0 * v).abs() < 1e-4, "{directional}");
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(sharpness_power(|_, _| {}, 0, &PowerOptions::default(), None).is_err());
        let opts = PowerOptions {
            tol: 0.0,
            ..Default::default()
        };
        assert!(sharpness_power(|_, _| {}, 2, &opts, None).is_err());
        assert!(grad_sharpness_fd(&ScalarRelu, &[1.0, 1.0], 0.0).is_err());
    }
}
