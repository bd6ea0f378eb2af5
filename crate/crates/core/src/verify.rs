//! Theory check suite.
//!
//! Every bound and invariant becomes a named [`Check`]. The margin is the
//! distance to the failure boundary in the check's own units, so a negative
//! margin means the check failed.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::presets;
use crate::experiments::{
    alpha_eta_sweep, beta_grid, beta_sweep, detect_catapults, generalized_beta_sweep, l1_norm, l2_norm,
    min_l1_baseline, min_l2_baseline, scenario_compare, sweep_cell, warm_start_ldn, AdmmOptions,
    DetectorConfig, ScenarioOptions, SweepConfig, SweepResult,
};
use crate::models::{generate_sparse_regression, DatasetConfig, DiagonalNet, ScalarRelu, Simple2D};
use crate::optim::{run, RunConfig, Schedule};
use crate::par;
use crate::theory::{
    compute_tau_0, crossing_limit, energy_cubic, energy_step_check, gd_lower_bound, gf_closed_form_2dldn,
    gf_integrate, simple2d_min_sharpness, v_tau_bound,
};
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// `None` when the check could not be evaluated.
    pub margin: Option<f64>,
    pub detail: String,
    /// Reported but left out of the overall verdict.
    #[serde(default)]
    pub advisory: bool,
}

impl Check {
    fn margin(name: impl Into<String>, margin: f64, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            passed: margin >= 0.0,
            margin: Some(margin),
            detail: detail.into(),
            advisory: false,
        }
    }

    fn flag(name: impl Into<String>, passed: bool, margin: Option<f64>, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            passed,
            margin,
            detail: detail.into(),
            advisory: false,
        }
    }

    fn errored(name: impl Into<String>, err: &Error) -> Self {
        Check::flag(name, false, None, format!("error: {err}"))
    }

    fn advisory(mut self) -> Self {
        self.advisory = true;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    /// All non-advisory checks passed.
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn new(checks: Vec<Check>) -> Self {
        VerifyReport {
            passed: checks.iter().all(|c| c.passed || c.advisory),
            checks,
        }
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed && !c.advisory).collect()
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Heavy-ball runs on the scalar ReLU model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScalarChecks {
    pub init: [f64; 2],
    pub epsilon: f64,
    /// Spacing of the momentum grid `{0, step, …} ∩ [0, 0.99]`.
    pub beta_step: f64,
    pub steps: u64,
    /// Bound over measured reduction must reach this for `β ≤ tightness_beta_max`.
    pub tightness_floor: f64,
    pub tightness_beta_max: f64,
}

impl Default for ScalarChecks {
    fn default() -> Self {
        ScalarChecks {
            init: presets::SCALAR_INIT,
            epsilon: presets::SCALAR_EPSILON,
            beta_step: 0.01,
            steps: presets::SCALAR_STEPS,
            tightness_floor: 0.5,
            tightness_beta_max: 0.9,
        }
    }
}

/// Plain GD runs for the energy argument.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GdChecks {
    pub u0: f64,
    pub v0: f64,
    pub epsilons: Vec<f64>,
    pub steps: u64,
    pub cubic_points: usize,
}

impl Default for GdChecks {
    fn default() -> Self {
        GdChecks {
            u0: presets::SCALAR_INIT[0],
            v0: presets::SCALAR_INIT[1],
            epsilons: vec![0.005, 0.01, 0.02],
            steps: presets::SCALAR_STEPS,
            cubic_points: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowChecks {
    pub starts: usize,
    pub seed: u64,
    /// Gradient-norm stopping tolerance of the integrator.
    pub tol: f64,
    pub match_tol: f64,
    pub drift_tol: f64,
}

impl Default for FlowChecks {
    fn default() -> Self {
        FlowChecks {
            starts: 50,
            seed: 0,
            tol: 1e-7,
            match_tol: 1e-6,
            drift_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneralizedChecks {
    pub init: [f64; 2],
    pub eta: f64,
    pub epsilon: f64,
    pub betas: Vec<f64>,
    pub steps: u64,
}

impl Default for GeneralizedChecks {
    fn default() -> Self {
        GeneralizedChecks {
            init: presets::SIMPLE2D_INIT,
            eta: presets::SIMPLE2D_ETA,
            epsilon: presets::SIMPLE2D_EPSILON,
            betas: presets::simple2d_betas(),
            steps: presets::SCALAR_STEPS,
        }
    }
}

/// Diagonal-network checks. These dominate the runtime of the suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LdnChecks {
    pub enabled: bool,
    pub dataset_seed: u64,
    pub scenario_steps: u64,
    /// Runs the GD and heavy-ball initialization-scale sweeps.
    pub sweep: bool,
    pub sweep_alphas: Vec<f64>,
    pub sweep_eta_fs: Vec<f64>,
}

impl Default for LdnChecks {
    fn default() -> Self {
        LdnChecks {
            enabled: true,
            dataset_seed: presets::DATASET_SEED,
            scenario_steps: presets::LDN_SCENARIO_STEPS,
            sweep: true,
            sweep_alphas: presets::sweep_alphas(),
            sweep_eta_fs: presets::SWEEP_ETA_FS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub scalar: ScalarChecks,
    pub gd: GdChecks,
    pub flow: FlowChecks,
    pub generalized: GeneralizedChecks,
    pub ldn: LdnChecks,
    pub detector: DetectorConfig,
}

impl VerifyConfig {
    pub fn validate(&self) -> Result<()> {
        let s = &self.scalar;
        if !(s.epsilon > 0.0 && s.epsilon < 1.0) || self.gd.epsilons.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
            return Err(Error::invalid("epsilon must be in (0,1)"));
        }
        if !(s.beta_step > 0.0 && s.beta_step < 1.0) {
            return Err(Error::invalid("beta_step must be in (0,1)"));
        }
        if self.generalized.betas.iter().any(|b| !(0.0..1.0).contains(b)) {
            return Err(Error::invalid("beta must be in [0,1)"));
        }
        if s.steps < 2 || self.gd.steps < 2 || self.generalized.steps < 2 {
            return Err(Error::invalid("steps must be at least 2"));
        }
        if !(self.flow.tol > 0.0) {
            return Err(Error::invalid("flow tol must be positive"));
        }
        self.detector.validate()
    }
}

/// Runs every check group and collects the results.
pub fn verify_theory(cfg: &VerifyConfig) -> Result<VerifyReport> {
    cfg.validate()?;
    let mut checks = scalar_checks(&cfg.scalar, &cfg.detector);
    checks.extend(gd_checks(&cfg.gd));
    checks.extend(flow_checks(&cfg.flow));
    checks.extend(generalized_checks(&cfg.generalized));
    if cfg.ldn.enabled {
        checks.extend(ldn_checks(&cfg.ldn, &cfg.detector));
    }
    Ok(VerifyReport::new(checks))
}

fn scalar_run(init: [f64; 2], eta: f64, beta: f64, steps: u64) -> Result<Trajectory> {
    let mut cfg = RunConfig::new(Schedule::constant(eta), beta, steps);
    cfg.record_params = true;
    run(&ScalarRelu, &init, &cfg)
}

fn max_increase(u: &[f64]) -> f64 {
    u.windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Adjacent increases along a sequence that should not increase.
fn increases(xs: &[f64]) -> Vec<f64> {
    xs.windows(2).map(|w| w[1] - w[0]).filter(|d| *d > 0.0).collect()
}

fn scalar_checks(cfg: &ScalarChecks, detector: &DetectorConfig) -> Vec<Check> {
    let mut out = Vec::new();
    let eta = (2.0 + cfg.epsilon) / (cfg.init[0] * cfg.init[0]);
    let betas = beta_grid(cfg.beta_step, 0.99);

    match beta_sweep(cfg.init, eta, cfg.epsilon, &betas, cfg.steps) {
        Err(e) => out.push(Check::errored("beta_sweep", &e)),
        Ok(rows) => {
            let eligible: Vec<_> = rows
                .iter()
                .filter(|r| r.converged && r.tau_0.is_none() && r.error.is_none())
                .collect();
            let skipped = rows.len() - eligible.len();
            let margin = eligible
                .iter()
                .map(|r| (r.u_inf_bound * (1.0 + 1e-3) - r.u_final) / r.u_inf_bound)
                .fold(f64::INFINITY, f64::min);
            out.push(if eligible.is_empty() {
                Check::flag(
                    "upper_bound_on_limit",
                    false,
                    None,
                    "no converged run without a sign change",
                )
            } else {
                Check::margin(
                    "upper_bound_on_limit",
                    margin,
                    format!(
                        "u_T ≤ (1+1e-3)·C_u/(1+ηC_v) on {} runs, {skipped} skipped",
                        eligible.len()
                    ),
                )
            });

            let tight: Vec<_> = eligible
                .iter()
                .filter(|r| r.beta <= cfg.tightness_beta_max + 1e-12)
                .collect();
            let ratio = tight
                .iter()
                .map(|r| r.delta_s_bound / r.delta_s_measured)
                .fold(f64::INFINITY, f64::min);
            out.push(Check::margin(
                "bound_tightness",
                ratio - cfg.tightness_floor,
                format!(
                    "min bound/measured reduction {ratio:.4} over {} runs with beta ≤ {}",
                    tight.len(),
                    cfg.tightness_beta_max
                ),
            ));

            let tail = eligible
                .iter()
                .map(|r| 1e-6 - r.c_v_tail_bound / r.c_v)
                .fold(f64::INFINITY, f64::min);
            out.push(Check::margin(
                "c_v_tail_adequate",
                tail,
                "C_v tail bound < 1e-6·C_v",
            ));

            for (name, values) in [
                (
                    "c_u_non_increasing",
                    rows.iter().map(|r| r.c_u).collect::<Vec<_>>(),
                ),
                (
                    "inv_factor_non_increasing",
                    rows.iter().map(|r| r.inv_factor).collect(),
                ),
            ] {
                let inc = increases(&values);
                let worst = inc.iter().cloned().fold(0.0, f64::max);
                let passed = inc.len() <= 2 && worst < 1e-3;
                out.push(
                    Check::flag(
                        name,
                        passed,
                        Some(2.0 - inc.len() as f64),
                        format!("{} adjacent increases, largest {worst:.3e}", inc.len()),
                    )
                    .advisory(),
                );
            }
        }
    }

    let monotone_betas = [0.0, 0.5, 0.9, 0.99];
    let runs = par::map(&monotone_betas, |&b| {
        scalar_run(cfg.init, (1.0 + b) * eta, b, cfg.steps)
    });
    let mut worst = f64::NEG_INFINITY;
    let mut err = None;
    for r in runs {
        match r {
            Ok(t) => worst = worst.max(max_increase(&t.param_series(0))),
            Err(e) => err = Some(e),
        }
    }
    let crossing = crossing_run();
    match (&err, &crossing) {
        (Some(e), _) | (None, Err(e)) => out.push(Check::errored("u_non_increasing", e)),
        (None, Ok((t, _))) => {
            let worst = worst.max(max_increase(&t.param_series(0)));
            out.push(Check::margin(
                "u_non_increasing",
                1e-12 - worst,
                format!("largest step-to-step increase of u is {worst:.3e}"),
            ));
        }
    }
    match crossing {
        Err(e) => out.push(Check::errored("dead_region_limit", &e)),
        Ok((t, limit)) => {
            let u_t = t.final_theta[0];
            let gap = (u_t - limit).abs();
            out.push(Check::margin(
                "dead_region_limit",
                1e-8 - gap,
                format!("u_T = {u_t:.12}, predicted {limit:.12}"),
            ));
        }
    }

    let opts = ScenarioOptions::default();
    match scenario_compare(
        &ScalarRelu,
        &cfg.init,
        Some(eta),
        cfg.epsilon,
        presets::SCALAR_BETA,
        cfg.steps,
        &opts,
    ) {
        Err(e) => out.push(Check::errored("scalar_scenario_ordering", &e)),
        Ok((report, trajs)) => {
            out.push(ordering_check("scalar_scenario_ordering", &report));
            out.push(mss_consistency(&trajs));
            out.extend(detector_checks(&trajs[0], &trajs[3], detector));
        }
    }
    out.push(quiet_detector_check(detector));
    out
}

/// Heavy ball from `(1, 5)` with `η = 0.1`, `β = 0.5`: the first step lands
/// in `u < 0` and momentum carries the iterate to its limit.
fn crossing_run() -> Result<(Trajectory, f64)> {
    let beta = 0.5;
    let t = scalar_run([1.0, 5.0], 0.1, beta, 200)?;
    let u = t.param_series(0);
    let limit = crossing_limit(&u, compute_tau_0(&u), beta)?;
    Ok((t, limit))
}

fn ordering_check(name: &str, report: &crate::experiments::ScenarioReport) -> Check {
    let deltas: Vec<String> = report
        .rows
        .iter()
        .map(|r| format!("{} {:.4}", r.scenario.label(), r.delta_s))
        .collect();
    Check::margin(
        name,
        report.min_relative_margin() - 0.01,
        format!(
            "ΔS {}; ordering margins must reach 1% of ΔS(GD)",
            deltas.join(", ")
        ),
    )
}

fn mss_consistency(trajs: &[Trajectory]) -> Check {
    let mut worst: f64 = 0.0;
    for t in trajs {
        let betas = [0.0, t.meta.beta, t.meta.switch.beta];
        for r in &t.records {
            let implied = r.mss * r.eta / 2.0 - 1.0;
            let gap = betas
                .iter()
                .map(|b| (implied - b).abs())
                .fold(f64::INFINITY, f64::min);
            worst = worst.max(gap);
        }
    }
    Check::margin(
        "mss_matches_step_and_momentum",
        1e-12 - worst,
        format!("largest |mss·η/2 − 1 − β| = {worst:.3e}"),
    )
}

fn detector_checks(gd: &Trajectory, phb: &Trajectory, cfg: &DetectorConfig) -> Vec<Check> {
    let mut out = Vec::new();
    let (gd_events, phb_events) = match (detect_catapults(gd, cfg), detect_catapults(phb, cfg)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return vec![Check::errored("detector", &e)],
    };
    out.push(Check::flag(
        "heavy_ball_single_catapult",
        phb_events.len() == 1,
        None,
        format!(
            "{} events on the heavy-ball run, {} on GD",
            phb_events.len(),
            gd_events.len()
        ),
    ));
    let well_formed = phb_events
        .iter()
        .chain(&gd_events)
        .all(|e| e.start <= e.peak_step && e.peak_step <= e.end && e.loss_spike_ratio >= cfg.kappa);
    out.push(Check::flag(
        "events_well_formed",
        well_formed,
        None,
        "start ≤ peak ≤ end, spike ≥ kappa",
    ));
    let again = detect_catapults(phb, cfg).ok();
    out.push(Check::flag(
        "detector_idempotent",
        again.as_ref() == Some(&phb_events),
        None,
        "repeated detection returns identical events",
    ));
    let counts: Vec<usize> = [2, 5]
        .iter()
        .filter_map(|&k| detect_catapults(&phb.subsample(k), cfg).ok().map(|e| e.len()))
        .collect();
    out.push(Check::flag(
        "detector_subsampling_invariant",
        counts.len() == 2 && counts.iter().all(|&c| c == phb_events.len()),
        None,
        format!("event counts at subsampling 2 and 5: {counts:?}"),
    ));
    out
}

/// Small constant step on the two-parameter model: loss decays without spikes.
fn quiet_detector_check(cfg: &DetectorConfig) -> Check {
    let mut rc = RunConfig::new(Schedule::constant(1e-4), 0.0, 2000);
    rc.sharpness_every = Some(1);
    match run(&Simple2D, &presets::SIMPLE2D_INIT, &rc).and_then(|t| detect_catapults(&t, cfg)) {
        Ok(ev) => Check::flag(
            "no_catapult_at_small_step",
            ev.is_empty(),
            None,
            format!("{} events", ev.len()),
        ),
        Err(e) => Check::errored("no_catapult_at_small_step", &e),
    }
}

fn gd_checks(cfg: &GdChecks) -> Vec<Check> {
    let runs = par::map(&cfg.epsilons, |&eps| {
        let eta = (2.0 + eps) / (cfg.u0 * cfg.u0);
        (eps, eta, scalar_run([cfg.u0, cfg.v0], eta, 0.0, cfg.steps))
    });
    let mut out = Vec::new();
    for (eps, eta, traj) in runs {
        let tag = |name: &str| format!("{name}[eps={eps}]");
        let traj = match traj {
            Ok(t) => t,
            Err(e) => {
                out.push(Check::errored(tag("gd_run"), &e));
                continue;
            }
        };
        let u = traj.param_series(0);
        let v = traj.param_series(1);
        match energy_step_check(&u, &v, eta) {
            Ok(c) => out.push(Check::flag(
                tag("energy_step"),
                c.all_hold(),
                Some(c.min_margin),
                format!("{} applicable steps", c.applicable_steps),
            )),
            Err(e) => out.push(Check::errored(tag("energy_step"), &e)),
        }
        match gd_lower_bound(&u, &v, eta, eps) {
            Ok(b) => {
                let u_t = u[u.len() - 1];
                let converged = (u_t - u[u.len() - 2]).abs() < 1e-10;
                out.push(Check::flag(
                    tag("gd_lower_bound"),
                    converged && u_t >= b.lower_bound - 1e-8,
                    Some(u_t - b.lower_bound + 1e-8),
                    format!(
                        "u_T = {u_t:.8}, bound {:.8}, converged {converged}",
                        b.lower_bound
                    ),
                ));
                out.push(Check::margin(
                    tag("energy_at_tau_u"),
                    b.p_tau_u_analytic_bound - b.p_tau_u,
                    format!(
                        "P = {:.4e} against analytic {:.4e}",
                        b.p_tau_u, b.p_tau_u_analytic_bound
                    ),
                ));
                let vt = v[b.tau_u.saturating_sub(1)];
                let bound = v_tau_bound(eta, eps);
                out.push(Check::margin(
                    tag("v_before_tau_u"),
                    bound - vt * vt,
                    format!("v² = {:.4e} against {bound:.4e}", vt * vt),
                ));
            }
            Err(e) => out.push(Check::errored(tag("gd_lower_bound"), &e)),
        }
    }
    out.extend(cubic_checks(cfg.cubic_points));
    out
}

fn cubic_checks(points: usize) -> Vec<Check> {
    let n = points.max(2);
    let min = (0..n)
        .map(|i| energy_cubic(1.0 + 999.0 * i as f64 / (n - 1) as f64))
        .fold(f64::INFINITY, f64::min);
    let grid = Check::flag(
        "cubic_nonnegative_grid",
        min >= -1e-12,
        Some(min + 1e-12),
        format!("min over {n} points of [1, 1000] is {min:.3e}"),
    );
    // f'(z) = 9z² − 16√2 z + 14 has roots 7√2/9 (local max) and √2 (local min).
    let r2 = std::f64::consts::SQRT_2;
    let disc = (16.0 * r2).powi(2) - 4.0 * 9.0 * 14.0;
    let z_min = (16.0 * r2 + disc.sqrt()) / 18.0;
    let f_min = energy_cubic(z_min);
    let f_one = energy_cubic(1.0);
    let curvature = 18.0 * z_min - 16.0 * r2;
    let analytic = Check::flag(
        "cubic_minimum_at_sqrt2",
        (z_min - r2).abs() < 1e-12 && f_min.abs() < 1e-12 && f_one >= 0.0 && curvature > 0.0,
        Some(f_min.min(f_one) + 1e-12),
        format!("critical point {z_min:.15}, f there {f_min:.3e}, f(1) = {f_one:.6}"),
    );
    vec![grid, analytic]
}

fn flow_checks(cfg: &FlowChecks) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut starts = Vec::with_capacity(cfg.starts);
    while starts.len() < cfg.starts {
        let u: f64 = rng.random_range(0.3..3.0);
        let r: f64 = rng.random_range(-0.9..0.9);
        let v2 = u * u - 1.0 - r;
        if v2 < 0.0025 {
            continue;
        }
        let v = if rng.random::<bool>() {
            v2.sqrt()
        } else {
            -v2.sqrt()
        };
        starts.push([u, v]);
    }
    let results = par::map(&starts, |s| -> Result<(f64, f64)> {
        let (ue, ve) = gf_closed_form_2dldn(s[0], s[1])?;
        let r = gf_integrate(&Simple2D, s, cfg.tol, 1e6)?;
        if !r.converged {
            return Err(Error::NotConverged(format!("flow from {s:?}")));
        }
        let err = (r.theta[0] - ue).abs().max((r.theta[1] - ve).abs());
        let p0 = s[0] * s[1];
        let drift = (r.theta[0] * r.theta[1] - p0).abs() / p0.abs();
        Ok((err, drift))
    });
    let mut out = Vec::new();
    match results.into_iter().collect::<Result<Vec<_>>>() {
        Err(e) => out.push(Check::errored("flow_matches_closed_form", &e)),
        Ok(r) => {
            let err = r.iter().map(|x| x.0).fold(0.0, f64::max);
            let drift = r.iter().map(|x| x.1).fold(0.0, f64::max);
            out.push(Check::margin(
                "flow_matches_closed_form",
                cfg.match_tol - err,
                format!("max deviation {err:.3e} over {} starts", r.len()),
            ));
            out.push(Check::margin(
                "flow_conserves_uv",
                cfg.drift_tol - drift,
                format!("max relative uv drift {drift:.3e}"),
            ));
        }
    }
    let target = (2.0 + presets::SIMPLE2D_EPSILON) / presets::SIMPLE2D_ETA;
    match gf_integrate(&Simple2D, &presets::SIMPLE2D_INIT, cfg.tol, 1e6) {
        Ok(r) => {
            let s = simple2d_min_sharpness(r.theta[1]);
            let rel = (s - target).abs() / target;
            out.push(Check::margin(
                "flow_limit_sharpness",
                5e-3 - rel,
                format!("limit sharpness {s:.4} against (2+ε)/η = {target}"),
            ));
        }
        Err(e) => out.push(Check::errored("flow_limit_sharpness", &e)),
    }
    out
}

fn generalized_checks(cfg: &GeneralizedChecks) -> Vec<Check> {
    let rows = match generalized_beta_sweep(cfg.init, cfg.eta, cfg.epsilon, &cfg.betas, cfg.steps) {
        Ok(r) => r,
        Err(e) => return vec![Check::errored("closest_minimum_sweep", &e)],
    };
    let mut out = Vec::new();
    let bad: Vec<f64> = rows
        .iter()
        .filter(|r| !r.converged || r.error.is_some())
        .map(|r| r.beta)
        .collect();
    out.push(Check::flag(
        "closest_minimum_runs_converged",
        bad.is_empty(),
        None,
        format!("unconverged betas: {bad:?}"),
    ));
    let margin = rows
        .iter()
        .map(|r| r.delta_s_measured - r.delta_s_predicted)
        .fold(f64::INFINITY, f64::min);
    out.push(Check::margin(
        "closest_minimum_bound",
        margin,
        "measured sharpness reduction minus predicted, minimum over betas",
    ));
    let measured: Vec<f64> = rows.iter().map(|r| r.delta_s_measured).collect();
    let drops: Vec<usize> = measured
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[1] < w[0])
        .map(|(i, _)| i + 1)
        .collect();
    let last = rows.len() - 1;
    let ok = drops.is_empty() || (drops == [last] && rows[last].beta >= 0.99);
    out.push(Check::flag(
        "closest_minimum_reduction_grows",
        ok,
        None,
        format!("decreases at indices {drops:?}"),
    ));
    out
}

/// GD and heavy-ball sweeps with the same grid.
pub fn ldn_sweeps(
    data: &Arc<crate::models::RegressionDataset>,
    alphas: &[f64],
    eta_fs: &[f64],
    cfg: &SweepConfig,
) -> Result<(SweepResult, SweepResult)> {
    let gd = alpha_eta_sweep(data, alphas, eta_fs, 0.0, cfg)?;
    let phb = alpha_eta_sweep(data, alphas, eta_fs, presets::SWEEP_BETA, cfg)?;
    Ok((gd, phb))
}

/// `(eta_f, alpha)` heavy-ball cells at or past `ᾱ(η_f)` that end below the
/// test-loss threshold.
pub fn large_catapult_cells(phb: &SweepResult) -> Vec<(f64, f64)> {
    let threshold = phb.config.alpha_bar_fraction * phb.baselines.l2_test_loss;
    phb.alpha_bar
        .iter()
        .filter_map(|ab| ab.alpha_bar.map(|a| (ab.eta_f, a)))
        .flat_map(|(eta_f, a)| {
            phb.row(eta_f)
                .into_iter()
                .filter(move |c| c.alpha >= a && !c.diverged && c.test_loss < threshold)
                .map(|c| (c.eta_f, c.alpha))
                .collect::<Vec<_>>()
        })
        .collect()
}

fn ldn_checks(cfg: &LdnChecks, detector: &DetectorConfig) -> Vec<Check> {
    let mut out = Vec::new();
    let data = match generate_sparse_regression(&DatasetConfig::sparse_default(cfg.dataset_seed)) {
        Ok(d) => Arc::new(d),
        Err(e) => return vec![Check::errored("dataset", &e)],
    };

    match (
        min_l1_baseline(&data, &AdmmOptions::default()),
        min_l2_baseline(&data),
    ) {
        (Ok(l1), Ok(l2)) => {
            let a = l1_norm(&l2.w) - l1_norm(&l1.w);
            let b = l2_norm(&l1.w) - l2_norm(&l2.w);
            out.push(Check::margin(
                "baseline_norm_ordering",
                a.min(b) + 1e-8,
                format!("l1 gap {a:.4e}, l2 gap {b:.4e}"),
            ));
        }
        (Err(e), _) | (_, Err(e)) => out.push(Check::errored("baseline_norm_ordering", &e)),
    }

    let warm = warm_start_ldn(&data, presets::WARM_ALPHA, presets::WARM_ETA, presets::WARM_LOSS);
    match warm {
        Err(e) => out.push(Check::errored("ldn_scenario_ordering", &e)),
        Ok(w) => {
            let model = DiagonalNet::new(Arc::clone(&data));
            let opts = ScenarioOptions {
                sharpness_every: presets::LDN_SCENARIO_SHARPNESS_EVERY,
                ..ScenarioOptions::default()
            };
            match scenario_compare(
                &model,
                &w.state.to_flat(),
                None,
                presets::LDN_SCENARIO_EPSILON,
                presets::SCALAR_BETA,
                cfg.scenario_steps,
                &opts,
            ) {
                Ok((report, _)) => out.push(ordering_check("ldn_scenario_ordering", &report)),
                Err(e) => out.push(Check::errored("ldn_scenario_ordering", &e)),
            }
        }
    }

    let sweep_cfg = SweepConfig {
        detector: *detector,
        ..SweepConfig::default()
    };
    match sweep_cell(
        &data,
        presets::GD_WARMUP_ALPHA,
        presets::GD_WARMUP_ETA_F,
        0.0,
        &sweep_cfg,
    ) {
        Ok((cell, _)) => out.push(Check::flag(
            "gd_warmup_multiple_catapults",
            cell.catapults >= 2,
            Some(cell.catapults as f64 - 2.0),
            format!("{} events", cell.catapults),
        )),
        Err(e) => out.push(Check::errored("gd_warmup_multiple_catapults", &e)),
    }

    if cfg.sweep {
        match ldn_sweeps(&data, &cfg.sweep_alphas, &cfg.sweep_eta_fs, &sweep_cfg) {
            Ok((gd, phb)) => out.extend(sweep_sharpness_checks(&gd, &phb)),
            Err(e) => out.push(Check::errored("sweep", &e)),
        }
    }
    out
}

fn sweep_sharpness_checks(gd: &SweepResult, phb: &SweepResult) -> Vec<Check> {
    let cells = large_catapult_cells(phb);
    if cells.is_empty() {
        return vec![Check::flag(
            "large_catapult_cells",
            false,
            None,
            "no heavy-ball cell past the threshold",
        )];
    }
    let find = |r: &SweepResult, (e, a): (f64, f64)| {
        r.cells
            .iter()
            .find(|c| c.eta_f == e && c.alpha == a)
            .map(|c| c.sharpness / c.mss)
    };
    let phb_max = cells
        .iter()
        .filter_map(|&k| find(phb, k))
        .fold(f64::NEG_INFINITY, f64::max);
    let gd_ratios: Vec<f64> = cells.iter().filter_map(|&k| find(gd, k)).collect();
    let gd_lo = gd_ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let gd_hi = gd_ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    vec![
        Check::margin(
            "heavy_ball_sharpness_well_below_mss",
            0.5 - phb_max,
            format!("max final sharpness/MSS {phb_max:.4} over {} cells", cells.len()),
        ),
        Check::flag(
            "gd_sharpness_just_below_mss",
            gd_ratios.len() == cells.len() && gd_lo >= 0.8 && gd_hi <= 1.0,
            Some((gd_lo - 0.8).min(1.0 - gd_hi)),
            format!("final sharpness/MSS in [{gd_lo:.4}, {gd_hi:.4}]"),
        ),
    ]
}
