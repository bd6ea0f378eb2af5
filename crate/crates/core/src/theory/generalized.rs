use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Model;
use crate::par;
use crate::spectral::{dot, SharpnessProbe};

use super::{check_epsilon, tail_bound, u_inf_upper_bound, StabilizationQuantities};

/// Quantities built from the closest minima `θ*_t` of a parameter series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralizedQuantities {
    pub quantities: StabilizationQuantities,
    /// `S(θ*_t)` for every recorded step.
    pub min_sharpness: Vec<f64>,
    pub s0: f64,
    pub s_final: f64,
    /// `S(θ*_0) − S(θ*_T)`.
    pub measured_reduction: f64,
    /// `S(θ*_0) − bound²`.
    pub predicted_reduction: f64,
}

/// `τ_u`, `C_u` and `C_v` with `√S(θ*_t)` in place of `u_t` and the
/// projection `⟨w_max(θ*_t), θ_t − θ*_t⟩` in place of `v_t`.
///
/// `params` must hold consecutive iterates `θ_0, …, θ_T`; `eta` is the GD
/// step (heavy ball ran with `(1+β)·eta`).
pub fn generalized_quantities<S>(
    params: &[Vec<f64>],
    model: &dyn Model,
    solver: S,
    eta: f64,
    epsilon: f64,
    beta: f64,
) -> Result<GeneralizedQuantities>
where
    S: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    check_epsilon(epsilon)?;
    if params.len() < 2 {
        return Err(Error::invalid("need at least two iterates"));
    }
    let per_step: Vec<Result<(f64, f64)>> = par::map(params, |theta| {
        let star = solver(theta)?;
        let est = SharpnessProbe::default().probe(model, &star);
        let diff: Vec<f64> = theta.iter().zip(&star).map(|(a, b)| a - b).collect();
        Ok((est.value, dot(&est.eigvec, &diff)))
    });
    let mut sharp = Vec::with_capacity(params.len());
    let mut proj = Vec::with_capacity(params.len());
    for r in per_step {
        let (s, p) = r?;
        sharp.push(s);
        proj.push(p);
    }

    let threshold = (2.0 - epsilon) / eta;
    let tau_u = sharp
        .iter()
        .position(|&s| s < threshold)
        .ok_or_else(|| Error::Undefined("S(θ*_t) never fell below (2−ε)/η".into()))?;
    if tau_u == 0 {
        return Err(Error::Undefined(
            "C_u needs a predecessor of tau_u, but tau_u = 0".into(),
        ));
    }
    let c_u = (sharp[tau_u].sqrt() - beta * sharp[tau_u - 1].sqrt()) / (1.0 - beta);
    let scale = (1.0 + beta) / (1.0 - beta);
    let c_v = scale * proj[tau_u..].iter().map(|p| p * p).sum::<f64>();
    let last = proj[proj.len() - 1];
    let c_v_tail_bound = tail_bound(scale * last * last, epsilon);
    let bound = u_inf_upper_bound(c_u, c_v, eta);

    let n = params.len();
    let step: f64 = params[n - 1]
        .iter()
        .zip(&params[n - 2])
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let s0 = sharp[0];
    let s_final = sharp[n - 1];
    Ok(GeneralizedQuantities {
        quantities: StabilizationQuantities {
            tau_0: None,
            tau_u: Some(tau_u),
            c_u,
            c_v,
            c_v_tail_bound,
            u_inf_bound: bound,
            beta,
            eta,
            epsilon,
            converged: step < 1e-10 && last * last < 1e-16,
            tail_adequate: c_v_tail_bound < 1e-6 * c_v,
        },
        s0,
        s_final,
        measured_reduction: s0 - s_final,
        predicted_reduction: s0 - bound * bound,
        min_sharpness: sharp,
    })
}
