//! Experiment drivers: catapult detection, optimizer scenario comparison,
//! momentum sweeps, the initialization-scale sweep on the diagonal network
//! and its interpolation baselines.

mod baselines;
mod catapult;
mod ldn;
pub mod presets;
mod scenarios;
mod sweeps;

pub use baselines::{l1_norm, l2_norm, min_l1_baseline, min_l2_baseline, AdmmOptions, Baseline};
pub use catapult::{detect_catapults, CatapultEvent, DetectorConfig};
pub use ldn::{
    alpha_eta_sweep, extract_alpha_bar, sweep_cell, warm_start_ldn, AlphaBar, Baselines, SweepCell,
    SweepConfig, SweepResult, WarmStart, WARM_START_STEP_CAP,
};
pub use scenarios::{scenario_compare, Scenario, ScenarioOptions, ScenarioReport, ScenarioRow};
pub use sweeps::{
    beta_grid, beta_sweep, beta_sweep_csv, generalized_beta_sweep, generalized_sweep_csv, BetaSweepRow,
    GeneralizedSweepRow,
};
