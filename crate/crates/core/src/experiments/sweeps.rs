use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{ScalarRelu, Simple2D};
use crate::optim::{run, RunConfig, Schedule};
use crate::par;
use crate::theory::{generalized_quantities, simple2d_closest_minimum, stabilization_quantities};

/// One momentum value of the scalar sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaSweepRow {
    pub beta: f64,
    pub tau_0: Option<usize>,
    pub tau_u: Option<usize>,
    pub c_u: f64,
    pub c_v: f64,
    pub c_v_tail_bound: f64,
    /// `1/(1 + ηC_v)`.
    pub inv_factor: f64,
    pub u_inf_bound: f64,
    pub u_final: f64,
    /// `u₀² − u_T²`.
    pub delta_s_measured: f64,
    /// `u₀² − ū∞²`.
    pub delta_s_bound: f64,
    pub converged: bool,
    pub diverged: bool,
    pub error: Option<String>,
}

const SWEEP_HEADER: &str = "beta,tau_0,tau_u,C_u,C_v,C_v_tail_bound,inv_factor,u_inf_bound,u_final,delta_s_measured,delta_s_bound,converged";

pub fn beta_sweep_csv(rows: &[BetaSweepRow]) -> String {
    let mut s = String::from(SWEEP_HEADER);
    s.push('\n');
    let opt = |x: Option<usize>| x.map(|v| v.to_string()).unwrap_or_default();
    for r in rows {
        let _ = writeln!(
            s,
            "{:?},{},{},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{}",
            r.beta,
            opt(r.tau_0),
            opt(r.tau_u),
            r.c_u,
            r.c_v,
            r.c_v_tail_bound,
            r.inv_factor,
            r.u_inf_bound,
            r.u_final,
            r.delta_s_measured,
            r.delta_s_bound,
            r.converged
        );
    }
    s
}

/// `β ∈ {0, step, …}` below 1, e.g. `beta_grid(0.01, 0.99)` for 0.00..0.99.
pub fn beta_grid(step: f64, max: f64) -> Vec<f64> {
    let n = (max / step).round() as usize;
    (0..=n).map(|i| i as f64 * step).filter(|b| *b < 1.0).collect()
}

fn check_betas(betas: &[f64]) -> Result<()> {
    if betas.is_empty() {
        return Err(Error::invalid("beta grid is empty"));
    }
    match betas.iter().find(|b| !(0.0..1.0).contains(*b)) {
        Some(b) => Err(Error::invalid(format!("beta must be in [0,1), got {b}"))),
        None => Ok(()),
    }
}

/// Heavy ball with step `(1+β)·eta` on the scalar ReLU model for each β,
/// with the stabilization quantities and bound evaluated at GD step `eta`.
pub fn beta_sweep(
    init: [f64; 2],
    eta: f64,
    epsilon: f64,
    betas: &[f64],
    steps: u64,
) -> Result<Vec<BetaSweepRow>> {
    check_betas(betas)?;
    let u0 = init[0];
    Ok(par::map(betas, |&beta| {
        let mut cfg = RunConfig::new(Schedule::constant((1.0 + beta) * eta), beta, steps);
        cfg.record_params = true;
        let mut row = BetaSweepRow {
            beta,
            tau_0: None,
            tau_u: None,
            c_u: f64::NAN,
            c_v: f64::NAN,
            c_v_tail_bound: f64::NAN,
            inv_factor: f64::NAN,
            u_inf_bound: f64::NAN,
            u_final: f64::NAN,
            delta_s_measured: f64::NAN,
            delta_s_bound: f64::NAN,
            converged: false,
            diverged: false,
            error: None,
        };
        let traj = match run(&ScalarRelu, &init, &cfg) {
            Ok(t) => t,
            Err(e) => {
                row.error = Some(e.to_string());
                return row;
            }
        };
        row.diverged = traj.meta.diverged;
        let u = traj.param_series(0);
        let v = traj.param_series(1);
        row.u_final = u[u.len() - 1];
        row.delta_s_measured = u0 * u0 - row.u_final * row.u_final;
        match stabilization_quantities(&u, &v, eta, epsilon, beta) {
            Ok(q) => {
                row.tau_0 = q.tau_0;
                row.tau_u = q.tau_u;
                row.c_u = q.c_u;
                row.c_v = q.c_v;
                row.c_v_tail_bound = q.c_v_tail_bound;
                row.inv_factor = 1.0 / (1.0 + eta * q.c_v);
                row.u_inf_bound = q.u_inf_bound;
                row.delta_s_bound = u0 * u0 - q.u_inf_bound * q.u_inf_bound;
                row.converged = q.converged && !row.diverged;
            }
            Err(e) => row.error = Some(e.to_string()),
        }
        row
    }))
}

/// One momentum value of the two-parameter sweep built on closest minima.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralizedSweepRow {
    pub beta: f64,
    pub tau_u: Option<usize>,
    pub c_u: f64,
    pub c_v: f64,
    pub inv_factor: f64,
    pub s0: f64,
    pub s_final: f64,
    pub delta_s_measured: f64,
    pub delta_s_predicted: f64,
    pub converged: bool,
    pub diverged: bool,
    pub error: Option<String>,
}

pub fn generalized_sweep_csv(rows: &[GeneralizedSweepRow]) -> String {
    let mut s =
        String::from("beta,tau_u,C_u,C_v,inv_factor,s0,s_final,delta_s_measured,delta_s_bound,converged\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{:?},{},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{}",
            r.beta,
            r.tau_u.map(|v| v.to_string()).unwrap_or_default(),
            r.c_u,
            r.c_v,
            r.inv_factor,
            r.s0,
            r.s_final,
            r.delta_s_measured,
            r.delta_s_predicted,
            r.converged
        );
    }
    s
}

/// Heavy ball on the two-parameter model with the quantities taken at the
/// gradient-flow limit of every iterate.
pub fn generalized_beta_sweep(
    init: [f64; 2],
    eta: f64,
    epsilon: f64,
    betas: &[f64],
    steps: u64,
) -> Result<Vec<GeneralizedSweepRow>> {
    check_betas(betas)?;
    Ok(par::map(betas, |&beta| {
        let mut row = GeneralizedSweepRow {
            beta,
            tau_u: None,
            c_u: f64::NAN,
            c_v: f64::NAN,
            inv_factor: f64::NAN,
            s0: f64::NAN,
            s_final: f64::NAN,
            delta_s_measured: f64::NAN,
            delta_s_predicted: f64::NAN,
            converged: false,
            diverged: false,
            error: None,
        };
        let mut cfg = RunConfig::new(Schedule::constant((1.0 + beta) * eta), beta, steps);
        cfg.record_params = true;
        let result = run(&Simple2D, &init, &cfg).and_then(|traj| {
            row.diverged = traj.meta.diverged;
            let params: Vec<Vec<f64>> = traj.records.into_iter().filter_map(|r| r.params).collect();
            generalized_quantities(&params, &Simple2D, simple2d_closest_minimum, eta, epsilon, beta)
        });
        match result {
            Ok(g) => {
                let q = g.quantities;
                row.tau_u = q.tau_u;
                row.c_u = q.c_u;
                row.c_v = q.c_v;
                row.inv_factor = 1.0 / (1.0 + eta * q.c_v);
                row.s0 = g.s0;
                row.s_final = g.s_final;
                row.delta_s_measured = g.measured_reduction;
                row.delta_s_predicted = g.predicted_reduction;
                row.converged = q.converged && !row.diverged;
            }
            Err(e) => row.error = Some(e.to_string()),
        }
        row
    }))
}
