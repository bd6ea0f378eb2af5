use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::compute_tau_u;

/// `P = (u − √(2/η))² + ½v²`.
pub fn energy(u: f64, v: f64, eta: f64) -> f64 {
    let d = u - (2.0 / eta).sqrt();
    d * d + 0.5 * v * v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyTrace {
    #[serde(rename = "P")]
    pub p: Vec<f64>,
    pub eta: f64,
}

pub fn energy_trace(u: &[f64], v: &[f64], eta: f64) -> EnergyTrace {
    EnergyTrace {
        p: u.iter().zip(v).map(|(&a, &b)| energy(a, b, eta)).collect(),
        eta,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyStepCheck {
    /// `None` where `u_t < 1/√η` and the inequality does not apply.
    pub holds: Vec<Option<bool>>,
    /// Largest `P_{t+1} − P_t·exp(2η²u_t²v_t²)` over applicable steps.
    pub max_violation: f64,
    /// Smallest `slack − violation`; negative exactly when a step fails.
    pub min_margin: f64,
    pub applicable_steps: usize,
}

impl EnergyStepCheck {
    pub fn all_hold(&self) -> bool {
        self.holds.iter().all(|h| h.unwrap_or(true))
    }
}

/// Checks `P_{t+1} ≤ P_t·exp(2η²u_t²v_t²)` at each step with `u_t ≥ 1/√η`.
///
/// `P_t` loses relative precision when `u_t` sits near `√(2/η)`, so each
/// comparison allows `10⁻¹²·P_t` plus a few ulps of `u_t·|u_t − √(2/η)|`.
pub fn energy_step_check(u: &[f64], v: &[f64], eta: f64) -> Result<EnergyStepCheck> {
    if u.len() != v.len() {
        return Err(Error::invalid("u and v series must have equal length"));
    }
    let center = (2.0 / eta).sqrt();
    let floor = 1.0 / eta.sqrt();
    let mut holds = Vec::with_capacity(u.len().saturating_sub(1));
    let mut max_violation = f64::NEG_INFINITY;
    let mut min_margin = f64::INFINITY;
    let mut applicable_steps = 0;
    for t in 0..u.len().saturating_sub(1) {
        if u[t] < floor {
            holds.push(None);
            continue;
        }
        applicable_steps += 1;
        let p = energy(u[t], v[t], eta);
        let next = energy(u[t + 1], v[t + 1], eta);
        let limit = p * (2.0 * eta * eta * u[t] * u[t] * v[t] * v[t]).exp();
        let slack = 1e-12 * p + 8.0 * f64::EPSILON * u[t].abs() * (u[t] - center).abs();
        let violation = next - limit;
        max_violation = max_violation.max(violation);
        min_margin = min_margin.min(slack - violation);
        holds.push(Some(violation <= slack));
    }
    Ok(EnergyStepCheck {
        holds,
        max_violation,
        min_margin,
        applicable_steps,
    })
}

/// Lower bound on the GD limit of `u` together with the measured and
/// analytic values of `P_{τ_u}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GdLowerBound {
    pub tau_u: usize,
    pub p_tau_u: f64,
    pub p_tau_u_analytic_bound: f64,
    pub lower_bound: f64,
}

/// `(ε/η + ½v₀²)·exp(2(2+ε)√((2+ε)/(2−ε)) + 2(2+ε)√(2ε/(2−ε)))`.
pub fn p_tau_u_analytic_bound(eta: f64, epsilon: f64, v0: f64) -> f64 {
    let a = 2.0 + epsilon;
    let b = 2.0 - epsilon;
    (epsilon / eta + 0.5 * v0 * v0) * (2.0 * a * (a / b).sqrt() + 2.0 * a * (2.0 * epsilon / b).sqrt()).exp()
}

/// `√(2/η) − √(P_{τ_u}·exp(4η²u_{τ_u}²P_{τ_u} / (ε(2−ε))))` from a GD run.
pub fn gd_lower_bound(u: &[f64], v: &[f64], eta: f64, epsilon: f64) -> Result<GdLowerBound> {
    if u.len() != v.len() || u.is_empty() {
        return Err(Error::invalid(
            "u and v series must be nonempty and of equal length",
        ));
    }
    let tau_u = compute_tau_u(u, eta, epsilon)?
        .ok_or_else(|| Error::Undefined("u_t² never fell below (2−ε)/η".into()))?;
    let p = energy(u[tau_u], v[tau_u], eta);
    let ut = u[tau_u];
    let expo = 4.0 * eta * eta * ut * ut * p / (epsilon * (2.0 - epsilon));
    Ok(GdLowerBound {
        tau_u,
        p_tau_u: p,
        p_tau_u_analytic_bound: p_tau_u_analytic_bound(eta, epsilon, v[0]),
        lower_bound: (2.0 / eta).sqrt() - (p * expo.exp()).sqrt(),
    })
}

/// `√((2+ε)/(2−ε))/η`, the ceiling on `v_{τ_u−1}²` along GD.
pub fn v_tau_bound(eta: f64, epsilon: f64) -> f64 {
    ((2.0 + epsilon) / (2.0 - epsilon)).sqrt() / eta
}

/// `3z³ − 8√2·z² + 14z − 4√2`.
pub fn energy_cubic(z: f64) -> f64 {
    let r2 = std::f64::consts::SQRT_2;
    ((3.0 * z - 8.0 * r2) * z + 14.0) * z - 4.0 * r2
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn energy_cases() {
        let eta: f64 = 0.0201;
        assert!(energy((2.0 / eta).sqrt(), 0.0, eta).abs() < 1e-15);
        let p0 = energy(10.0, 1e-6, eta);
        assert!((p0 - 6.20e-4).abs() < 5e-6, "{p0}");
        assert!(p0 <= 0.01 / eta + 0.5e-12);
    }

    #[test]
    fn step_check_without_v() {
        let eta = 0.02;
        let u = [10.0, 10.0, 10.0];
        let v = [0.0; 3];
        let check = energy_step_check(&u, &v, eta).unwrap();
        assert!(check.all_hold());
        assert_eq!(check.max_violation, 0.0);
        assert_eq!(check.applicable_steps, 2);
    }

    #[test]
    fn step_check_reports_violation() {
        let eta = 0.02;
        let u = [10.0, 11.0];
        let v = [0.1, 0.1];
        let check = energy_step_check(&u, &v, eta).unwrap();
        assert!(!check.all_hold());
        assert!(check.max_violation > 0.0);
    }

    #[test]
    fn step_check_skips_small_u() {
        let check = energy_step_check(&[1.0, 5.0], &[0.0, 0.0], 0.02).unwrap();
        assert_eq!(check.holds, vec![None]);
        assert!(check.all_hold());
    }

    #[test]
    fn lower_bound_tends_to_center() {
        // Crossing exactly at the threshold with v = 0.
        let eta: f64 = 0.02;
        let c = (2.0 / eta).sqrt();
        let mut gaps = Vec::new();
        for eps in [1e-2, 1e-4, 1e-6] {
            let edge = ((2.0 - eps) / eta).sqrt() * (1.0 - 1e-15);
            let b = gd_lower_bound(&[11.0, edge], &[0.0, 0.0], eta, eps).unwrap();
            assert_eq!(b.tau_u, 1);
            assert!(b.lower_bound < c);
            gaps.push(c - b.lower_bound);
        }
        assert!(
            gaps[0] > gaps[1] && gaps[1] > gaps[2] && gaps[2] < 1e-5,
            "{gaps:?}"
        );
    }

    #[test]
    fn cubic_extrema() {
        let r2 = std::f64::consts::SQRT_2;
        assert!(energy_cubic(r2).abs() < 1e-12);
        let zmax = 7.0 * r2 / 9.0;
        assert!((energy_cubic(zmax) - 8.0 * r2 / 243.0).abs() < 1e-12);
        assert!(energy_cubic(1.0) > 0.0);
    }
}
