//! Reference configurations shared by the CLI defaults, the theory check
//! suite and the acceptance tests.

use crate::optim::Schedule;

/// Scalar ReLU start `(u₀, v₀)` with `u₀²` just above the GD MSS.
pub const SCALAR_INIT: [f64; 2] = [10.0, 1e-6];
pub const SCALAR_EPSILON: f64 = 0.01;
pub const SCALAR_BETA: f64 = 0.9;
pub const SCALAR_STEPS: u64 = 100_000;

/// GD step `(2+ε)/u₀²` for the scalar reference start.
pub fn scalar_eta() -> f64 {
    (2.0 + SCALAR_EPSILON) / (SCALAR_INIT[0] * SCALAR_INIT[0])
}

/// Two-parameter start whose closest minimum has sharpness `(2+ε)/η`.
pub const SIMPLE2D_INIT: [f64; 2] = [5.060, 4.950];
pub const SIMPLE2D_ETA: f64 = 0.01;
pub const SIMPLE2D_EPSILON: f64 = 0.004;

pub fn simple2d_betas() -> Vec<f64> {
    let mut b: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
    b.push(0.99);
    b
}

pub const DATASET_SEED: u64 = 0;

pub const WARM_ALPHA: f64 = 0.1;
pub const WARM_ETA: f64 = 1e-3;
pub const WARM_LOSS: f64 = 1e-3;
pub const LDN_SCENARIO_EPSILON: f64 = 0.03;
pub const LDN_SCENARIO_STEPS: u64 = 20_000;
pub const LDN_SCENARIO_SHARPNESS_EVERY: u64 = 10;

/// `linspace(0, 0.3, 11)`.
pub fn sweep_alphas() -> Vec<f64> {
    (0..=10).map(|i| 0.03 * i as f64).collect()
}

pub const SWEEP_ETA_FS: [f64; 3] = [0.003, 0.004, 0.005];
pub const SWEEP_BETA: f64 = 0.9;

/// GD warmup run with several small catapults.
pub const GD_WARMUP_ALPHA: f64 = 0.3;
pub const GD_WARMUP_ETA_F: f64 = 0.004;

pub const ABLATION_ALPHA: f64 = 0.3;
pub const ABLATION_BETA: f64 = 0.9;
pub const ABLATION_STEPS: u64 = 20_000;

pub fn step_warmup_ablation() -> Schedule {
    Schedule::step_warmup(1e-5, 0.0023, 10_000)
}

/// Linear warmup over 5000 steps, frozen once sharpness exceeds the MSS.
pub fn terminated_warmup_ablation() -> Schedule {
    Schedule::linear_warmup(1e-8, 0.005, 5000).terminating_on_mss_cross()
}

pub const ABLATION_STEP_PROBE_EVERY: u64 = 10;
/// Crossing probes for the terminated warmup at the sweep cadence.
pub const ABLATION_TERMINATION_PROBE_EVERY: u64 = 50;
