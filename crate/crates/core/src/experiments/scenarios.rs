use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Model;
use crate::optim::{run, RunConfig, Schedule, SwitchPolicy};
use crate::par;
use crate::spectral::{PowerOptions, SharpnessProbe};
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Gd,
    PhbThenGd,
    GdThenPhb,
    Phb,
}

impl Scenario {
    /// In the order of increasing expected sharpness reduction.
    pub const ALL: [Scenario; 4] = [
        Scenario::Gd,
        Scenario::PhbThenGd,
        Scenario::GdThenPhb,
        Scenario::Phb,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Scenario::Gd => "GD",
            Scenario::PhbThenGd => "PHB->GD",
            Scenario::GdThenPhb => "GD->PHB",
            Scenario::Phb => "PHB",
        }
    }

    pub fn slug(self) -> &'static str {
        match self {
            Scenario::Gd => "gd",
            Scenario::PhbThenGd => "phb_then_gd",
            Scenario::GdThenPhb => "gd_then_phb",
            Scenario::Phb => "phb",
        }
    }

    /// Run configuration at matched MSS for GD step `eta`.
    pub fn run_config(self, eta: f64, beta: f64, steps: u64, opts: &ScenarioOptions) -> RunConfig {
        let phb_eta = (1.0 + beta) * eta;
        let (schedule, run_beta, switch) = match self {
            Scenario::Gd => (Schedule::constant(eta), 0.0, SwitchPolicy::none()),
            Scenario::Phb => (Schedule::constant(phb_eta), beta, SwitchPolicy::none()),
            Scenario::GdThenPhb => (Schedule::constant(eta), 0.0, SwitchPolicy::gd_then_phb(beta)),
            Scenario::PhbThenGd => (Schedule::constant(phb_eta), beta, SwitchPolicy::phb_then_gd(beta)),
        };
        let mut cfg = RunConfig::new(schedule, run_beta, steps);
        cfg.switch = switch;
        cfg.record_every = opts.record_every;
        cfg.sharpness_every = Some(opts.sharpness_every);
        cfg.probe_every = opts.probe_every;
        cfg.record_params = opts.record_params;
        cfg.power = opts.power;
        cfg
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOptions {
    pub record_every: u64,
    pub sharpness_every: u64,
    pub probe_every: u64,
    pub record_params: bool,
    pub power: PowerOptions,
}

impl Default for ScenarioOptions {
    fn default() -> Self {
        ScenarioOptions {
            record_every: 1,
            sharpness_every: 1,
            probe_every: 1,
            record_params: false,
            power: PowerOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRow {
    pub scenario: Scenario,
    pub delta_s: f64,
    pub ratio_to_gd: f64,
    pub final_sharpness: f64,
    pub final_loss: f64,
    pub switch_fired_at: Option<u64>,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub s0: f64,
    pub eta: f64,
    pub beta: f64,
    pub steps: u64,
    pub rows: Vec<ScenarioRow>,
}

impl ScenarioReport {
    pub fn delta_s(&self, scenario: Scenario) -> f64 {
        self.rows
            .iter()
            .find(|r| r.scenario == scenario)
            .map(|r| r.delta_s)
            .expect("every scenario is reported")
    }

    /// Smallest gap between consecutive scenarios in [`Scenario::ALL`]
    /// order, relative to `ΔS(GD)`. Positive means strictly ordered.
    pub fn min_relative_margin(&self) -> f64 {
        let gd = self.delta_s(Scenario::Gd);
        Scenario::ALL
            .windows(2)
            .map(|w| (self.delta_s(w[1]) - self.delta_s(w[0])) / gd.abs())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "scenario,delta_s,ratio_to_gd,final_sharpness,final_loss,switch_fired_at,diverged\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{:?},{:?},{:?},{:?},{},{}",
                r.scenario.label(),
                r.delta_s,
                r.ratio_to_gd,
                r.final_sharpness,
                r.final_loss,
                r.switch_fired_at.map(|t| t.to_string()).unwrap_or_default(),
                r.diverged
            );
        }
        s
    }
}

/// Runs GD, PHB→GD, GD→PHB and PHB from `init` at matched MSS.
///
/// Without an explicit `eta`, the GD step is `(2+ε)/S₀` so the initial
/// sharpness sits just above the MSS.
pub fn scenario_compare(
    model: &dyn Model,
    init: &[f64],
    eta: Option<f64>,
    epsilon: f64,
    beta: f64,
    steps: u64,
    opts: &ScenarioOptions,
) -> Result<(ScenarioReport, Vec<Trajectory>)> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::invalid(format!("beta must be in [0,1), got {beta}")));
    }
    let s0 = SharpnessProbe::new(opts.power).probe(model, init).value;
    let eta = match eta {
        Some(e) => e,
        None => {
            if !(s0 > 0.0) {
                return Err(Error::invalid("initial sharpness must be positive to derive eta"));
            }
            (2.0 + epsilon) / s0
        }
    };
    let trajs: Vec<Result<Trajectory>> = par::map(&Scenario::ALL, |sc| {
        run(model, init, &sc.run_config(eta, beta, steps, opts))
    });
    let trajs = trajs.into_iter().collect::<Result<Vec<_>>>()?;

    let mut rows: Vec<ScenarioRow> = Scenario::ALL
        .iter()
        .zip(&trajs)
        .map(|(&scenario, t)| {
            let final_sharpness = t.final_sharpness().unwrap_or(f64::NAN);
            ScenarioRow {
                scenario,
                delta_s: s0 - final_sharpness,
                ratio_to_gd: f64::NAN,
                final_sharpness,
                final_loss: t.last().loss,
                switch_fired_at: t.meta.switch_fired_at,
                diverged: t.meta.diverged,
            }
        })
        .collect();
    let gd = rows[0].delta_s;
    rows.iter_mut().for_each(|r| r.ratio_to_gd = r.delta_s / gd);
    Ok((
        ScenarioReport {
            s0,
            eta,
            beta,
            steps,
            rows,
        },
        trajs,
    ))
}
