use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{eval_simple2d, Model, Simple2DState};
use crate::spectral::norm;

/// Gradient-flow limit of the two-parameter model from `(u0, v0)` with
/// `u0 > 0` and `L(u0, v0) < ½`:
/// `u∞ = √((1 + √(1 + 4u0²v0²))/2)`, `v∞ = u0·v0/u∞`.
pub fn gf_closed_form_2dldn(u0: f64, v0: f64) -> Result<(f64, f64)> {
    if !(u0 > 0.0) {
        return Err(Error::invalid(format!("closed form needs u0 > 0, got {u0}")));
    }
    let loss = eval_simple2d(Simple2DState { u: u0, v: v0 }).loss;
    if !(loss < 0.5) {
        return Err(Error::invalid(format!(
            "closed form needs L(u0, v0) < 1/2, got {loss}"
        )));
    }
    Ok(closed_form(u0, v0))
}

fn closed_form(u0: f64, v0: f64) -> (f64, f64) {
    let p = u0 * v0;
    let u = ((1.0 + (1.0 + 4.0 * p * p).sqrt()) / 2.0).sqrt();
    (u, p / u)
}

/// Gradient-flow limit for any start with `u ≠ 0`.
///
/// The flow conserves `uv`, so `u` never changes sign while `uv ≠ 0`, and the
/// only critical points with `u > 0` lie on `u² − v² = 1`. Starts with
/// `u < 0` map through the `(u, v) → (−u, −v)` symmetry. This covers
/// momentum iterates that leave the `L < ½` region.
pub fn simple2d_closest_minimum(theta: &[f64]) -> Result<Vec<f64>> {
    if theta.len() != 2 {
        return Err(Error::DimensionMismatch {
            what: "simple2d parameters",
            expected: 2,
            got: theta.len(),
        });
    }
    let (u, v) = (theta[0], theta[1]);
    if u > 0.0 {
        let (a, b) = closed_form(u, v);
        Ok(vec![a, b])
    } else if u < 0.0 {
        let (a, b) = closed_form(-u, -v);
        Ok(vec![-a, -b])
    } else {
        Err(Error::Undefined(
            "gradient flow from u = 0 ends at the saddle at the origin".into(),
        ))
    }
}

/// `S(θ*) = 8v*² + 4` at a minimum of the two-parameter model.
pub fn simple2d_min_sharpness(v_star: f64) -> f64 {
    8.0 * v_star * v_star + 4.0
}

/// Leading Hessian eigenvector `(√(v*²+1), −v*)/√(2v*²+1)` at a minimum.
pub fn simple2d_min_eigvec(v_star: f64) -> [f64; 2] {
    let n = (2.0 * v_star * v_star + 1.0).sqrt();
    [(v_star * v_star + 1.0).sqrt() / n, -v_star / n]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GfOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for GfOptions {
    fn default() -> Self {
        GfOptions {
            rtol: 1e-10,
            atol: 1e-12,
            max_steps: 10_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GfResult {
    pub theta: Vec<f64>,
    pub time: f64,
    pub grad_norm: f64,
    pub converged: bool,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

// Dormand–Prince 5(4) tableau. The field is autonomous, so the nodes are
// not needed.
const A: [&[f64]; 6] = [
    &[1.0 / 5.0],
    &[3.0 / 40.0, 9.0 / 40.0],
    &[44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0],
    &[
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
    ],
    &[
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
    ],
    &[
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrates `dθ/dt = −∇L(θ)` with adaptive Dormand–Prince steps until
/// `‖∇L‖ ≤ tol` or `t_max`.
///
/// Near a minimum the explicit steps settle at the stability edge, leaving
/// a gradient floor of roughly `λ_max·rtol·‖θ‖`; `tol` must sit above it.
pub fn gf_integrate(model: &dyn Model, theta0: &[f64], tol: f64, t_max: f64) -> Result<GfResult> {
    gf_integrate_with(model, theta0, tol, t_max, &GfOptions::default())
}

pub fn gf_integrate_with(
    model: &dyn Model,
    theta0: &[f64],
    tol: f64,
    t_max: f64,
    opts: &GfOptions,
) -> Result<GfResult> {
    if !(tol > 0.0) || !(t_max > 0.0) {
        return Err(Error::invalid("tolerance and time horizon must be positive"));
    }
    let n = model.dim();
    crate::error::check_len("initial parameters", n, theta0.len())?;

    let field = |y: &[f64], out: &mut [f64]| {
        model.loss_grad(y, out);
        out.iter_mut().for_each(|g| *g = -*g);
    };

    let mut y = theta0.to_vec();
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    field(&y, &mut k[0]);
    let mut gnorm = norm(&k[0]);
    let mut t = 0.0;
    let (mut accepted, mut rejected) = (0, 0);
    let mut h = initial_step(&y, &k[0], opts);
    let mut stage = vec![0.0; n];
    let mut y_new = vec![0.0; n];

    while gnorm > tol && t < t_max && accepted + rejected < opts.max_steps {
        h = h.min(t_max - t);
        for (s, row) in A.iter().enumerate() {
            let (done, rest) = k.split_at_mut(s + 1);
            for i in 0..n {
                let incr: f64 = row.iter().zip(done.iter()).map(|(a, kj)| a * kj[i]).sum();
                stage[i] = y[i] + h * incr;
            }
            field(&stage, &mut rest[0]);
        }
        // The last stage was evaluated at the fifth-order solution.
        y_new.copy_from_slice(&stage);
        let mut err = 0.0;
        for i in 0..n {
            let e: f64 = h * E.iter().enumerate().map(|(j, c)| c * k[j][i]).sum::<f64>();
            let sc = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
            err += (e / sc).powi(2);
        }
        let err = (err / n as f64).sqrt();
        if !err.is_finite() {
            return Err(Error::NotConverged(
                "gradient flow produced non-finite values".into(),
            ));
        }
        if err <= 1.0 {
            t += h;
            y.copy_from_slice(&y_new);
            k.swap(0, 6);
            gnorm = norm(&k[0]);
            accepted += 1;
        } else {
            rejected += 1;
        }
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        h *= factor;
    }

    Ok(GfResult {
        theta: y,
        time: t,
        grad_norm: gnorm,
        converged: gnorm <= tol,
        accepted_steps: accepted,
        rejected_steps: rejected,
    })
}

fn initial_step(y: &[f64], f: &[f64], opts: &GfOptions) -> f64 {
    let scale = |i: usize| opts.atol + opts.rtol * y[i].abs();
    let d0 = (y
        .iter()
        .enumerate()
        .map(|(i, x)| (x / scale(i)).powi(2))
        .sum::<f64>()
        / y.len() as f64)
        .sqrt();
    let d1 = (f
        .iter()
        .enumerate()
        .map(|(i, x)| (x / scale(i)).powi(2))
        .sum::<f64>()
        / y.len() as f64)
        .sqrt();
    if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        (0.01 * d0 / d1).min(1.0)
    }
}
