//! Gradient descent and heavy-ball stepping, learning-rate schedules and
//! mid-run optimizer switching.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::models::Model;
use crate::spectral::{norm, PowerOptions, SharpnessProbe};
use crate::trajectory::{Record, Trajectory, TrajectoryMeta};

/// Loss or parameter norm beyond this truncates a run as diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleKind {
    Constant {
        eta: f64,
    },
    LinearWarmup {
        eta_i: f64,
        eta_f: f64,
        warmup_steps: u64,
    },
    StepWarmup {
        eta_low: f64,
        eta_high: f64,
        switch_step: u64,
    },
}

// Unknown keys are rejected by the tagged `kind`; `deny_unknown_fields`
// here would also reject the flattened variant fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    #[serde(flatten)]
    pub kind: ScheduleKind,
    /// Freeze the rate at the first probe where sharpness exceeds the MSS.
    #[serde(default)]
    pub terminate_warmup_on_mss_cross: bool,
}

impl Schedule {
    pub fn constant(eta: f64) -> Self {
        ScheduleKind::Constant { eta }.into()
    }

    pub fn linear_warmup(eta_i: f64, eta_f: f64, warmup_steps: u64) -> Self {
        ScheduleKind::LinearWarmup {
            eta_i,
            eta_f,
            warmup_steps,
        }
        .into()
    }

    pub fn step_warmup(eta_low: f64, eta_high: f64, switch_step: u64) -> Self {
        ScheduleKind::StepWarmup {
            eta_low,
            eta_high,
            switch_step,
        }
        .into()
    }

    pub fn terminating_on_mss_cross(mut self) -> Self {
        self.terminate_warmup_on_mss_cross = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!(
                    "{name} must be a positive finite rate, got {x}"
                )))
            }
        };
        match self.kind {
            ScheduleKind::Constant { eta } => positive("eta", eta),
            ScheduleKind::LinearWarmup {
                eta_i,
                eta_f,
                warmup_steps,
            } => {
                positive("eta_i", eta_i)?;
                positive("eta_f", eta_f)?;
                if eta_i > eta_f {
                    return Err(Error::invalid("eta_i must not exceed eta_f"));
                }
                if warmup_steps == 0 {
                    return Err(Error::invalid("warmup_steps must be at least 1"));
                }
                Ok(())
            }
            ScheduleKind::StepWarmup {
                eta_low, eta_high, ..
            } => {
                positive("eta_low", eta_low)?;
                positive("eta_high", eta_high)
            }
        }
    }
}

impl From<ScheduleKind> for Schedule {
    fn from(kind: ScheduleKind) -> Self {
        Schedule {
            kind,
            terminate_warmup_on_mss_cross: false,
        }
    }
}

/// Learning rate at step `t`.
pub fn lr_at(schedule: &Schedule, t: u64) -> f64 {
    match schedule.kind {
        ScheduleKind::Constant { eta } => eta,
        ScheduleKind::LinearWarmup {
            eta_i,
            eta_f,
            warmup_steps,
        } => eta_i + (eta_f - eta_i) * (t.min(warmup_steps) as f64 / warmup_steps as f64),
        ScheduleKind::StepWarmup {
            eta_low,
            eta_high,
            switch_step,
        } => {
            if t < switch_step {
                eta_low
            } else {
                eta_high
            }
        }
    }
}

/// Learning rate at `t` when the warmup was frozen at `frozen_at`.
pub fn lr_at_frozen(schedule: &Schedule, t: u64, frozen_at: Option<u64>) -> f64 {
    match frozen_at {
        Some(t_star) if t >= t_star => lr_at(schedule, t_star),
        _ => lr_at(schedule, t),
    }
}

/// Maximum stable sharpness `2(1+β)/η`.
pub fn mss(eta: f64, beta: f64) -> Result<f64> {
    if !(eta > 0.0) {
        return Err(Error::invalid(format!(
            "learning rate must be positive, got {eta}"
        )));
    }
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::invalid(format!("beta must be in [0,1), got {beta}")));
    }
    Ok(2.0 * (1.0 + beta) / eta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub theta: Vec<f64>,
    pub theta_prev: Vec<f64>,
    pub step: u64,
}

impl OptimizerState {
    /// Zero initial velocity: `theta_prev = theta`.
    pub fn new(theta: Vec<f64>) -> Self {
        OptimizerState {
            theta_prev: theta.clone(),
            theta,
            step: 0,
        }
    }

    fn advance(&mut self, grad: &[f64], eta: f64, beta: f64) -> Result<()> {
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient { step: self.step });
        }
        for ((x, prev), g) in self.theta.iter_mut().zip(&mut self.theta_prev).zip(grad) {
            let next = *x - eta * g + beta * (*x - *prev);
            *prev = *x;
            *x = next;
        }
        self.step += 1;
        Ok(())
    }
}

/// One heavy-ball update `θ' = θ − η∇L + β(θ − θ_prev)`.
pub fn step(state: &OptimizerState, grad: &[f64], eta_t: f64, beta: f64) -> Result<OptimizerState> {
    check_len("gradient", state.theta.len(), grad.len())?;
    check_len("theta_prev", state.theta.len(), state.theta_prev.len())?;
    let mut next = state.clone();
    next.advance(grad, eta_t, beta)?;
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwitchMode {
    #[default]
    None,
    GdThenPhb,
    PhbThenGd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossingDirection {
    /// Sharpness falls below the MSS.
    #[default]
    Downward,
    Upward,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchPolicy {
    #[serde(default)]
    pub mode: SwitchMode,
    /// Momentum of the heavy-ball phase.
    #[serde(default)]
    pub beta: f64,
    #[serde(default)]
    pub direction: CrossingDirection,
}

impl SwitchPolicy {
    pub fn none() -> Self {
        SwitchPolicy::default()
    }

    pub fn gd_then_phb(beta: f64) -> Self {
        SwitchPolicy {
            mode: SwitchMode::GdThenPhb,
            beta,
            direction: CrossingDirection::Downward,
        }
    }

    pub fn phb_then_gd(beta: f64) -> Self {
        SwitchPolicy {
            mode: SwitchMode::PhbThenGd,
            beta,
            direction: CrossingDirection::Downward,
        }
    }

    fn crossed(&self, sharpness: f64, mss: f64) -> bool {
        match self.direction {
            CrossingDirection::Downward => sharpness < mss,
            CrossingDirection::Upward => sharpness > mss,
        }
    }
}

/// Early exit once training has converged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarlyStop {
    pub loss_below: f64,
    /// Relative change between two consecutive sharpness records.
    pub sharpness_rel_change: f64,
    /// No early exit before this step (e.g. the end of warmup).
    pub min_step: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Step sizes of the initial phase.
    pub schedule: Schedule,
    /// Momentum when no switch is armed; ignored otherwise.
    pub beta: f64,
    pub steps: u64,
    pub switch: SwitchPolicy,
    /// Loss (and optionally parameters) are recorded every this many steps.
    pub record_every: u64,
    /// Sharpness recorded every this many steps; `None` disables recording.
    pub sharpness_every: Option<u64>,
    /// Probe cadence while a switch or warmup termination is armed.
    pub probe_every: u64,
    pub record_params: bool,
    pub power: PowerOptions,
    pub early_stop: Option<EarlyStop>,
}

impl RunConfig {
    pub fn new(schedule: Schedule, beta: f64, steps: u64) -> Self {
        RunConfig {
            schedule,
            beta,
            steps,
            switch: SwitchPolicy::none(),
            record_every: 1,
            sharpness_every: None,
            probe_every: 1,
            record_params: false,
            power: PowerOptions::default(),
            early_stop: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if self.steps == 0 {
            return Err(Error::invalid("steps must be at least 1"));
        }
        if self.record_every == 0 || self.probe_every == 0 || self.sharpness_every == Some(0) {
            return Err(Error::invalid("recording and probe cadences must be at least 1"));
        }
        let beta = match self.switch.mode {
            SwitchMode::None => self.beta,
            _ => self.switch.beta,
        };
        if !(0.0..1.0).contains(&beta) {
            return Err(Error::invalid(format!("beta must be in [0,1), got {beta}")));
        }
        Ok(())
    }

    fn initial_beta(&self) -> f64 {
        match self.switch.mode {
            SwitchMode::None => self.beta,
            SwitchMode::GdThenPhb => 0.0,
            SwitchMode::PhbThenGd => self.switch.beta,
        }
    }
}

/// Iterate the heavy-ball update from `init` for `cfg.steps` steps.
///
/// A switch flips GD↔PHB on the first probe where the sharpness crosses the
/// current MSS, rescaling the step size by `(1+β)` (or its inverse) so the MSS
/// is unchanged. Loss or parameter norm above [`DIVERGENCE_LIMIT`] truncates
/// the trajectory and marks it diverged.
pub fn run(model: &dyn Model, init: &[f64], cfg: &RunConfig) -> Result<Trajectory> {
    cfg.validate()?;
    check_len("initial parameters", model.dim(), init.len())?;

    let mut state = OptimizerState::new(init.to_vec());
    let mut probe = SharpnessProbe::new(cfg.power);
    let mut grad = vec![0.0; model.dim()];

    let mut beta = cfg.initial_beta();
    let mut lr_scale = 1.0;
    let mut switch_armed = cfg.switch.mode != SwitchMode::None;
    let mut switch_fired_at = None;
    let mut warmup_armed = cfg.schedule.terminate_warmup_on_mss_cross;
    let mut frozen_at = None;
    let mut diverged = false;
    let mut records = Vec::new();
    let mut last_sharpness: Option<f64> = None;

    let mut t = 0;
    loop {
        let finished = t == cfg.steps;
        let theta = &state.theta;
        let loss = model.loss_grad(theta, &mut grad);
        let eta = lr_at_frozen(&cfg.schedule, t, frozen_at) * lr_scale;

        if !loss.is_finite() || loss > DIVERGENCE_LIMIT || !(norm(theta) <= DIVERGENCE_LIMIT) {
            diverged = true;
            records.push(Record {
                t,
                loss,
                eta,
                mss: 2.0 * (1.0 + beta) / eta,
                sharpness: None,
                params: cfg.record_params.then(|| theta.clone()),
            });
            break;
        }

        let record_sharpness = cfg.sharpness_every.is_some_and(|k| t % k == 0 || finished);
        let armed_probe = (switch_armed || warmup_armed) && t % cfg.probe_every == 0 && !finished;
        let sharpness = (record_sharpness || armed_probe).then(|| probe.probe(model, theta).value);

        let mut eta = eta;
        if let (Some(s), true) = (sharpness, armed_probe) {
            if switch_armed && cfg.switch.crossed(s, 2.0 * (1.0 + beta) / eta) {
                switch_armed = false;
                switch_fired_at = Some(t);
                let b = cfg.switch.beta;
                match cfg.switch.mode {
                    SwitchMode::GdThenPhb => {
                        beta = b;
                        lr_scale *= 1.0 + b;
                    }
                    SwitchMode::PhbThenGd => {
                        beta = 0.0;
                        lr_scale /= 1.0 + b;
                    }
                    SwitchMode::None => unreachable!(),
                }
                eta = lr_at_frozen(&cfg.schedule, t, frozen_at) * lr_scale;
            }
            if warmup_armed && s > 2.0 * (1.0 + beta) / eta {
                warmup_armed = false;
                frozen_at = Some(t);
            }
        }

        let mss_t = 2.0 * (1.0 + beta) / eta;
        if t % cfg.record_every == 0 || finished || (record_sharpness && sharpness.is_some()) {
            records.push(Record {
                t,
                loss,
                eta,
                mss: mss_t,
                sharpness: if record_sharpness { sharpness } else { None },
                params: cfg.record_params.then(|| theta.clone()),
            });
        }

        if finished {
            break;
        }
        if let (Some(stop), true, Some(s)) = (cfg.early_stop, record_sharpness, sharpness) {
            let stable = last_sharpness
                .is_some_and(|p| (s - p).abs() <= stop.sharpness_rel_change * s.abs().max(p.abs()));
            if loss < stop.loss_below && stable && t >= stop.min_step {
                break;
            }
            last_sharpness = Some(s);
        }

        if state.advance(&grad, eta, beta).is_err() {
            diverged = true;
            break;
        }
        t += 1;
    }

    Ok(Trajectory {
        records,
        final_theta: state.theta,
        meta: TrajectoryMeta {
            model: model.name().to_string(),
            beta: cfg.initial_beta(),
            final_beta: beta,
            schedule: cfg.schedule,
            switch: cfg.switch,
            switch_fired_at,
            warmup_frozen_at: frozen_at,
            steps_completed: t,
            diverged,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Model, ScalarRelu};

    #[test]
    fn linear_warmup_endpoints() {
        let s = Schedule::linear_warmup(1e-8, 0.002, 2000);
        assert_eq!(lr_at(&s, 0), 1e-8);
        assert_eq!(lr_at(&s, 2000), 0.002);
        assert_eq!(lr_at(&s, 5000), 0.002);
        assert!((lr_at(&s, 1000) - (1e-8 + 0.5 * (0.002 - 1e-8))).abs() < 1e-18);
    }

    #[test]
    fn step_warmup_switches() {
        let s = Schedule::step_warmup(1e-5, 0.0023, 10_000);
        assert_eq!(lr_at(&s, 9_999), 1e-5);
        assert_eq!(lr_at(&s, 10_000), 0.0023);
    }

    #[test]
    fn frozen_rate_holds() {
        let s = Schedule::linear_warmup(0.001, 0.01, 100);
        let at = lr_at(&s, 40);
        assert_eq!(lr_at_frozen(&s, 90, Some(40)), at);
        assert_eq!(lr_at_frozen(&s, 30, Some(40)), lr_at(&s, 30));
    }

    #[test]
    fn schedule_validation() {
        assert!(Schedule::linear_warmup(0.1, 0.01, 10).validate().is_err());
        assert!(Schedule::linear_warmup(0.01, 0.1, 0).validate().is_err());
        assert!(Schedule::constant(0.0).validate().is_err());
        assert!(Schedule::step_warmup(1e-5, 0.0023, 0).validate().is_ok());
    }

    #[test]
    fn mss_formula() {
        assert!((mss(0.01, 0.0).unwrap() - 200.0).abs() < 1e-9);
        assert!((mss(0.01, 0.9).unwrap() - 380.0).abs() < 1e-9);
        for beta in [0.0, 0.3, 0.9, 0.99] {
            let eta = 0.0137;
            let a = mss((1.0 + beta) * eta, beta).unwrap();
            let b = mss(eta, 0.0).unwrap();
            assert!((a - b).abs() <= 1e-12 * b);
        }
        assert!(mss(0.0, 0.5).is_err());
        assert!(mss(0.1, 1.0).is_err());
    }

    #[test]
    fn step_cases() {
        let s = OptimizerState::new(vec![1.0, 2.0]);
        let gd = step(&s, &[0.5, -1.0], 0.1, 0.0).unwrap();
        assert_eq!(gd.theta, vec![0.95, 2.1]);
        assert_eq!(gd.theta_prev, vec![1.0, 2.0]);
        assert_eq!(gd.step, 1);

        let still = step(&s, &[0.0, 0.0], 0.1, 0.9).unwrap();
        assert_eq!(still.theta, s.theta);

        let decay = OptimizerState {
            theta: vec![1.0],
            theta_prev: vec![2.0],
            step: 3,
        };
        assert_eq!(step(&decay, &[0.0], 0.1, 0.5).unwrap().theta, vec![0.5]);

        assert!(matches!(
            step(&s, &[f64::NAN, 0.0], 0.1, 0.0),
            Err(Error::NonFiniteGradient { .. })
        ));
        assert!(step(&s, &[0.0], 0.1, 0.0).is_err());
    }

    #[test]
    fn gd_on_quadratic_matches_closed_form() {
        struct Quad;
        impl Model for Quad {
            fn name(&self) -> &'static str {
                "quad"
            }
            fn dim(&self) -> usize {
                2
            }
            fn loss_grad(&self, th: &[f64], g: &mut [f64]) -> f64 {
                g[0] = 3.0 * th[0];
                g[1] = 0.5 * th[1];
                0.5 * (3.0 * th[0] * th[0] + 0.5 * th[1] * th[1])
            }
            fn hvp(&self, _: &[f64], v: &[f64], out: &mut [f64]) {
                out[0] = 3.0 * v[0];
                out[1] = 0.5 * v[1];
            }
        }
        let eta = 0.1;
        let mut cfg = RunConfig::new(Schedule::constant(eta), 0.0, 50);
        cfg.record_params = true;
        let traj = run(&Quad, &[1.0, -2.0], &cfg).unwrap();
        for r in &traj.records {
            let p = r.params.as_ref().unwrap();
            let e0 = (1.0 - eta * 3.0f64).powi(r.t as i32);
            let e1 = -2.0 * (1.0 - eta * 0.5f64).powi(r.t as i32);
            assert!((p[0] - e0).abs() <= 1e-12 * e0.abs().max(1e-300));
            assert!((p[1] - e1).abs() <= 1e-12 * e1.abs());
        }
    }

    #[test]
    fn zero_gradient_region_is_constant() {
        let cfg = RunConfig::new(Schedule::constant(0.5), 0.0, 100);
        let traj = run(&ScalarRelu, &[-1.0, 3.0], &cfg).unwrap();
        assert_eq!(traj.final_theta, vec![-1.0, 3.0]);
        assert!(!traj.meta.diverged);
    }

    #[test]
    fn reruns_are_bit_identical() {
        let mut cfg = RunConfig::new(Schedule::constant(0.0201 * 1.9), 0.9, 2000);
        cfg.sharpness_every = Some(7);
        let a = run(&ScalarRelu, &[10.0, 1e-6], &cfg).unwrap();
        let b = run(&ScalarRelu, &[10.0, 1e-6], &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn divergence_truncates() {
        let cfg = RunConfig::new(Schedule::constant(1.0), 0.0, 1000);
        let traj = run(&crate::models::Simple2D, &[3.0, 1.0], &cfg).unwrap();
        assert!(traj.meta.diverged);
        assert!(traj.meta.steps_completed < 1000);
    }

    #[test]
    fn gd_then_phb_fires_once_at_first_stable_step() {
        let eta = 0.0201;
        let mut cfg = RunConfig::new(Schedule::constant(eta), 0.0, 5000);
        cfg.switch = SwitchPolicy::gd_then_phb(0.9);
        cfg.sharpness_every = Some(1);
        let traj = run(&ScalarRelu, &[10.0, 1e-6], &cfg).unwrap();
        let fired = traj.meta.switch_fired_at.expect("switch fires");
        for r in traj.records.iter().filter(|r| r.t < fired) {
            assert!(r.sharpness.unwrap() >= 2.0 / eta);
        }
        let at = traj.records.iter().find(|r| r.t == fired).unwrap();
        assert!(at.sharpness.unwrap() < at.mss);
        assert!((at.eta - eta * 1.9).abs() < 1e-15);
        assert_eq!(traj.meta.final_beta, 0.9);
    }

    #[test]
    fn upward_crossing_freezes_warmup() {
        let mut cfg = RunConfig::new(
            Schedule::linear_warmup(0.001, 0.03, 500).terminating_on_mss_cross(),
            0.0,
            600,
        );
        cfg.probe_every = 1;
        let traj = run(&ScalarRelu, &[10.0, 1e-3], &cfg).unwrap();
        let frozen = traj.meta.warmup_frozen_at.expect("warmup terminates");
        // S ≈ 100 crosses 2/η once η > 0.02.
        let eta_frozen = lr_at(&cfg.schedule, frozen);
        assert!(eta_frozen > 0.02 && eta_frozen < 0.0201);
        assert!(traj
            .records
            .iter()
            .filter(|r| r.t >= frozen)
            .all(|r| r.eta == eta_frozen));
    }
}
