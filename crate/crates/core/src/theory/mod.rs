//! Stabilization quantities and bounds for the scalar ReLU model, the
//! elliptical energy argument for GD, gradient-flow limits, and the
//! generalized quantities computed through closest minima.

mod energy;
mod flow;
mod generalized;

pub use energy::{
    energy, energy_cubic, energy_step_check, energy_trace, gd_lower_bound, p_tau_u_analytic_bound,
    v_tau_bound, EnergyStepCheck, EnergyTrace, GdLowerBound,
};
pub use flow::{
    gf_closed_form_2dldn, gf_integrate, simple2d_closest_minimum, simple2d_min_eigvec,
    simple2d_min_sharpness, GfOptions, GfResult,
};
pub use generalized::{generalized_quantities, GeneralizedQuantities};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Quantities entering the `u_∞ ≤ C_u / (1 + ηC_v)` bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilizationQuantities {
    pub tau_0: Option<usize>,
    pub tau_u: Option<usize>,
    #[serde(rename = "C_u")]
    pub c_u: f64,
    #[serde(rename = "C_v")]
    pub c_v: f64,
    #[serde(rename = "C_v_tail_bound")]
    pub c_v_tail_bound: f64,
    pub u_inf_bound: f64,
    pub beta: f64,
    pub eta: f64,
    pub epsilon: f64,
    /// `|u_T − u_{T−1}| < 1e-10` and `v_T² < 1e-16`.
    pub converged: bool,
    /// Truncation tail below `1e-6·C_v`.
    pub tail_adequate: bool,
}

/// `inf{t : u_t² < (2−ε)/η}`, or `None` when the series never crosses.
pub fn compute_tau_u(u: &[f64], eta: f64, epsilon: f64) -> Result<Option<usize>> {
    check_epsilon(epsilon)?;
    let threshold = (2.0 - epsilon) / eta;
    Ok(u.iter().position(|x| x * x < threshold))
}

/// First index with `u_t < 0`.
pub fn compute_tau_0(u: &[f64]) -> Option<usize> {
    u.iter().position(|&x| x < 0.0)
}

/// `C_u = (u_{τ_u} − βu_{τ_u−1}) / (1−β)`.
pub fn compute_cu(u: &[f64], tau_u: usize, beta: f64) -> Result<f64> {
    if tau_u == 0 {
        return Err(Error::Undefined(
            "C_u needs a predecessor of tau_u, but tau_u = 0".into(),
        ));
    }
    if tau_u >= u.len() {
        return Err(Error::invalid("tau_u lies beyond the series"));
    }
    Ok((u[tau_u] - beta * u[tau_u - 1]) / (1.0 - beta))
}

/// Truncated `C_v = (1+β)/(1−β)·Σ_{t ≥ τ_u} v_t²` together with the
/// geometric tail bound `scale·v_T²·ρ/(1−ρ)`, `ρ = (1−ε)²`.
pub fn compute_cv(v: &[f64], tau_u: usize, beta: f64, _eta: f64, epsilon: f64) -> Result<(f64, f64)> {
    check_epsilon(epsilon)?;
    if tau_u >= v.len() {
        return Err(Error::invalid(format!(
            "series of length {} ends before tau_u = {tau_u}",
            v.len()
        )));
    }
    let scale = (1.0 + beta) / (1.0 - beta);
    let sum: f64 = v[tau_u..].iter().map(|x| x * x).sum();
    let last = v[v.len() - 1];
    Ok((scale * sum, tail_bound(scale * last * last, epsilon)))
}

pub(crate) fn tail_bound(scaled_last_term: f64, epsilon: f64) -> f64 {
    let rho = (1.0 - epsilon) * (1.0 - epsilon);
    scaled_last_term * rho / (1.0 - rho)
}

/// `C_u / (1 + ηC_v)`.
pub fn u_inf_upper_bound(c_u: f64, c_v: f64, eta: f64) -> f64 {
    c_u / (1.0 + eta * c_v)
}

/// Limit of the iterates once they enter the dead region `u < 0`:
/// `(u_{τ₀} − βu_{τ₀−1}) / (1−β)`.
pub fn crossing_limit(u: &[f64], tau_0: Option<usize>, beta: f64) -> Result<f64> {
    let tau_0 = tau_0
        .ok_or_else(|| Error::Undefined("the limit formula requires the series to cross u < 0".into()))?;
    if tau_0 == 0 || tau_0 >= u.len() {
        return Err(Error::invalid("tau_0 must be an interior index ≥ 1"));
    }
    Ok((u[tau_0] - beta * u[tau_0 - 1]) / (1.0 - beta))
}

/// All scalar-model quantities from a recorded `(u_t, v_t)` series.
pub fn stabilization_quantities(
    u: &[f64],
    v: &[f64],
    eta: f64,
    epsilon: f64,
    beta: f64,
) -> Result<StabilizationQuantities> {
    if u.len() != v.len() || u.len() < 2 {
        return Err(Error::invalid("u and v series must have equal length ≥ 2"));
    }
    let tau_0 = compute_tau_0(u);
    let tau_u = compute_tau_u(u, eta, epsilon)?
        .ok_or_else(|| Error::Undefined("u_t² never fell below (2−ε)/η".into()))?;
    let c_u = compute_cu(u, tau_u, beta)?;
    let (c_v, c_v_tail_bound) = compute_cv(v, tau_u, beta, eta, epsilon)?;
    let n = u.len();
    let converged = (u[n - 1] - u[n - 2]).abs() < 1e-10 && v[n - 1] * v[n - 1] < 1e-16;
    Ok(StabilizationQuantities {
        tau_0,
        tau_u: Some(tau_u),
        c_u,
        c_v,
        c_v_tail_bound,
        u_inf_bound: u_inf_upper_bound(c_u, c_v, eta),
        beta,
        eta,
        epsilon,
        converged,
        tail_adequate: c_v_tail_bound < 1e-6 * c_v,
    })
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon < 2.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "epsilon must lie in (0, 2), got {epsilon}"
        )))
    }
}
