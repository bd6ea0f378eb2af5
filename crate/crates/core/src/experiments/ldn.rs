use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{population_test_loss, DiagonalNet, DiagonalNetState, Model, RegressionDataset};
use crate::optim::{run, EarlyStop, RunConfig, Schedule};
use crate::par;
use crate::spectral::PowerOptions;
use crate::trajectory::Trajectory;

use super::baselines::{min_l1_baseline, min_l2_baseline, AdmmOptions};
use super::catapult::{detect_catapults, DetectorConfig};

pub const WARM_START_STEP_CAP: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarmStart {
    pub state: DiagonalNetState,
    pub steps: u64,
    pub loss: f64,
}

/// GD from `u = v = α·1` with step `eta_small` until the training loss falls
/// below `loss_threshold`.
pub fn warm_start_ldn(
    data: &Arc<RegressionDataset>,
    alpha: f64,
    eta_small: f64,
    loss_threshold: f64,
) -> Result<WarmStart> {
    if !(loss_threshold > 0.0) || !(eta_small > 0.0) {
        return Err(Error::invalid(
            "warm start needs a positive step and loss threshold",
        ));
    }
    let model = DiagonalNet::new(Arc::clone(data));
    let mut theta = DiagonalNetState::broadcast(alpha, data.d()).to_flat();
    let mut grad = vec![0.0; theta.len()];
    for steps in 0..=WARM_START_STEP_CAP {
        let loss = model.loss_grad(&theta, &mut grad);
        if !loss.is_finite() {
            return Err(Error::NonFiniteGradient { step: steps });
        }
        if loss < loss_threshold {
            return Ok(WarmStart {
                state: DiagonalNetState::from_flat(&theta)?,
                steps,
                loss,
            });
        }
        theta.iter_mut().zip(&grad).for_each(|(x, g)| *x -= eta_small * g);
    }
    Err(Error::NotConverged(format!(
        "warm start did not reach loss {loss_threshold} within {WARM_START_STEP_CAP} steps"
    )))
}

/// Protocol for each cell of the initialization-scale sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub eta_i: f64,
    /// Warmup length is `round(eta_f · warmup_per_eta)` steps.
    pub warmup_per_eta: f64,
    /// Steps after warmup, as a multiple of the warmup length.
    pub post_warmup_factor: u64,
    pub sharpness_every: u64,
    /// Exit once past warmup with loss below `1e-10` and two consecutive
    /// sharpness samples within `1e-6` relative.
    pub early_stop: bool,
    /// `ᾱ` threshold as a fraction of the min-ℓ2 test loss.
    pub alpha_bar_fraction: f64,
    pub detector: DetectorConfig,
    pub power: PowerOptions,
    pub admm: AdmmOptions,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            eta_i: 1e-8,
            warmup_per_eta: 1e6,
            post_warmup_factor: 10,
            sharpness_every: 50,
            early_stop: true,
            alpha_bar_fraction: 0.1,
            detector: DetectorConfig::default(),
            power: PowerOptions::default(),
            admm: AdmmOptions::default(),
        }
    }
}

impl SweepConfig {
    pub fn warmup_steps(&self, eta_f: f64) -> u64 {
        ((eta_f * self.warmup_per_eta).round() as u64).max(1)
    }

    /// Run configuration for one cell; heavy ball uses `eta_f` unrescaled.
    pub fn run_config(&self, eta_f: f64, beta: f64) -> RunConfig {
        let warmup = self.warmup_steps(eta_f);
        let mut cfg = RunConfig::new(
            Schedule::linear_warmup(self.eta_i.min(eta_f), eta_f, warmup),
            beta,
            warmup * (1 + self.post_warmup_factor),
        );
        cfg.sharpness_every = Some(self.sharpness_every);
        cfg.probe_every = self.sharpness_every;
        cfg.power = self.power;
        cfg.early_stop = self.early_stop.then_some(EarlyStop {
            loss_below: 1e-10,
            sharpness_rel_change: 1e-6,
            min_step: warmup,
        });
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub alpha: f64,
    pub eta_f: f64,
    pub beta: f64,
    pub test_loss: f64,
    pub train_loss: f64,
    pub sharpness: f64,
    pub mss: f64,
    pub diverged: bool,
    pub catapults: usize,
    pub steps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baselines {
    pub l1_test_loss: f64,
    pub l2_test_loss: f64,
    /// Test loss of `w = 0`, where `α = 0` stays.
    pub zero_test_loss: f64,
    pub l1_exact: bool,
}

impl Baselines {
    pub fn compute(data: &RegressionDataset, admm: &AdmmOptions) -> Result<Self> {
        let l1 = min_l1_baseline(data, admm)?;
        let l2 = min_l2_baseline(data)?;
        Ok(Baselines {
            l1_test_loss: l1.test_loss,
            l2_test_loss: l2.test_loss,
            zero_test_loss: population_test_loss(&vec![0.0; data.d()], data),
            l1_exact: l1.exact,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaBar {
    pub eta_f: f64,
    pub alpha_bar: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub beta: f64,
    /// Ordered by `eta_f`, then `alpha`, following the input grids.
    pub cells: Vec<SweepCell>,
    pub baselines: Baselines,
    pub alpha_bar: Vec<AlphaBar>,
    pub config: SweepConfig,
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("alpha,eta_f,test_loss,train_loss,sharpness,mss,diverged,catapults\n");
        for c in &self.cells {
            let _ = writeln!(
                s,
                "{:?},{:?},{:?},{:?},{:?},{:?},{},{}",
                c.alpha, c.eta_f, c.test_loss, c.train_loss, c.sharpness, c.mss, c.diverged, c.catapults
            );
        }
        s
    }

    pub fn row(&self, eta_f: f64) -> Vec<&SweepCell> {
        self.cells.iter().filter(|c| c.eta_f == eta_f).collect()
    }
}

/// Trains one cell from `u = v = α·1` under linear warmup to `eta_f`.
pub fn sweep_cell(
    data: &Arc<RegressionDataset>,
    alpha: f64,
    eta_f: f64,
    beta: f64,
    cfg: &SweepConfig,
) -> Result<(SweepCell, Trajectory)> {
    let model = DiagonalNet::new(Arc::clone(data));
    let init = DiagonalNetState::broadcast(alpha, data.d()).to_flat();
    let traj = run(&model, &init, &cfg.run_config(eta_f, beta))?;
    let last = traj.last();
    let diverged = traj.meta.diverged;
    let w = DiagonalNetState::from_flat(&traj.final_theta)?.coefficients();
    let catapults = detect_catapults(&traj, &cfg.detector)?.len();
    let nan_if = |x: f64| if diverged { f64::NAN } else { x };
    let cell = SweepCell {
        alpha,
        eta_f,
        beta,
        test_loss: nan_if(population_test_loss(&w, data)),
        train_loss: nan_if(last.loss),
        sharpness: nan_if(traj.final_sharpness().unwrap_or(f64::NAN)),
        mss: 2.0 * (1.0 + beta) / eta_f,
        diverged,
        catapults,
        steps: traj.meta.steps_completed,
    };
    Ok((cell, traj))
}

/// Smallest `α > 0` whose test loss falls below `threshold` after some
/// smaller positive `α` sat at or above it. `α = 0` is skipped because the
/// origin is a critical point and training never leaves it. Diverged cells
/// count as above the threshold.
pub fn extract_alpha_bar(cells: &[&SweepCell], threshold: f64) -> Option<f64> {
    let mut seen_above = false;
    for c in cells.iter().filter(|c| c.alpha > 0.0) {
        let below = !c.diverged && c.test_loss < threshold;
        if below && seen_above {
            return Some(c.alpha);
        }
        seen_above |= !below;
    }
    None
}

/// Every `(eta_f, alpha)` cell of the grid, in parallel, with the baselines
/// and `ᾱ(η_f)`.
pub fn alpha_eta_sweep(
    data: &Arc<RegressionDataset>,
    alphas: &[f64],
    eta_fs: &[f64],
    beta: f64,
    cfg: &SweepConfig,
) -> Result<SweepResult> {
    if alphas.is_empty() || eta_fs.is_empty() {
        return Err(Error::invalid("sweep grids must be nonempty"));
    }
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::invalid(format!("beta must be in [0,1), got {beta}")));
    }
    if eta_fs.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::invalid("eta_f values must be positive"));
    }
    let mut sorted = alphas.to_vec();
    sorted.sort_by(f64::total_cmp);
    let grid: Vec<(f64, f64)> = eta_fs
        .iter()
        .flat_map(|&e| sorted.iter().map(move |&a| (e, a)))
        .collect();
    let cells: Vec<Result<SweepCell>> = par::map(&grid, |&(eta_f, alpha)| {
        sweep_cell(data, alpha, eta_f, beta, cfg).map(|(c, _)| c)
    });
    let cells = cells.into_iter().collect::<Result<Vec<_>>>()?;
    let baselines = Baselines::compute(data, &cfg.admm)?;
    let threshold = cfg.alpha_bar_fraction * baselines.l2_test_loss;
    let alpha_bar = eta_fs
        .iter()
        .map(|&eta_f| {
            let row: Vec<&SweepCell> = cells.iter().filter(|c| c.eta_f == eta_f).collect();
            AlphaBar {
                eta_f,
                alpha_bar: extract_alpha_bar(&row, threshold),
            }
        })
        .collect();
    Ok(SweepResult {
        beta,
        cells,
        baselines,
        alpha_bar,
        config: cfg.clone(),
    })
}
