use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::Trajectory;

/// Thresholds for [`detect_catapults`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorConfig {
    /// An event opens when the loss reaches `kappa` times the running minimum.
    pub kappa: f64,
    /// Minimum sharpness drop over the event, as a fraction of the
    /// pre-event sharpness.
    pub rho: f64,
}

impl DetectorConfig {
    pub const DEFAULT_KAPPA: f64 = 5.0;
    pub const DEFAULT_RHO: f64 = 0.02;

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 1.0) {
            return Err(Error::invalid(format!("kappa must exceed 1, got {}", self.kappa)));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::invalid(format!("rho must be in [0,1), got {}", self.rho)));
        }
        Ok(())
    }
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            kappa: Self::DEFAULT_KAPPA,
            rho: Self::DEFAULT_RHO,
        }
    }
}

/// A loss spike together with the sharpness drop it caused.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatapultEvent {
    pub start: u64,
    pub peak_step: u64,
    pub end: u64,
    /// Peak loss over the running minimum before the spike.
    pub loss_spike_ratio: f64,
    pub sharpness_before: f64,
    pub sharpness_after: f64,
    pub sharpness_drop: f64,
    pub final_sharpness_over_mss: f64,
    /// False when the series ended before the loss came back down.
    pub closed: bool,
    /// Sharpness later climbed above 1.5 times its post-event minimum.
    pub overshoot: bool,
}

/// Loss spikes of at least `kappa`× that return below 1.01× the pre-spike
/// minimum, kept when sharpness falls by at least `rho` of its pre-event
/// value between open and close.
pub fn detect_catapults(traj: &Trajectory, cfg: &DetectorConfig) -> Result<Vec<CatapultEvent>> {
    cfg.validate()?;
    let sharp = traj.sharpness_series();
    if sharp.is_empty() {
        return Err(Error::invalid(
            "catapult detection needs a sharpness series; enable sharpness sampling",
        ));
    }
    // Latest sample at or before t, falling back to the first sample.
    let before = |t: u64| {
        let i = sharp.partition_point(|&(s, _)| s <= t);
        sharp[i.saturating_sub(1)].1
    };
    // Earliest sample at or after t, falling back to the last sample.
    let after = |t: u64| {
        let i = sharp.partition_point(|&(s, _)| s < t);
        sharp[i.min(sharp.len() - 1)]
    };

    let recs = &traj.records;
    let mut events = Vec::new();
    let mut running_min = recs[0].loss;
    let mut i = 1;
    while i < recs.len() {
        let loss = recs[i].loss;
        if loss > running_min && loss >= cfg.kappa * running_min {
            let pre_min = running_min;
            let start = recs[i].t;
            let mut j = i;
            let mut peak = i;
            while j + 1 < recs.len() && recs[j].loss >= pre_min * 1.01 {
                j += 1;
                if recs[j].loss > recs[peak].loss {
                    peak = j;
                }
            }
            let closed = recs[j].loss < pre_min * 1.01;
            let end = recs[j].t;
            let s_before = before(recs[i - 1].t);
            let (end_sample, s_after) = after(end);
            let drop = s_before - s_after;
            if drop >= cfg.rho * s_before {
                let min_after = sharp
                    .iter()
                    .filter(|&&(t, _)| t >= end_sample)
                    .map(|&(_, s)| s)
                    .fold(f64::INFINITY, f64::min);
                let final_s = sharp[sharp.len() - 1].1;
                events.push(CatapultEvent {
                    start,
                    peak_step: recs[peak].t,
                    end,
                    loss_spike_ratio: recs[peak].loss / pre_min,
                    sharpness_before: s_before,
                    sharpness_after: s_after,
                    sharpness_drop: drop,
                    final_sharpness_over_mss: s_after / recs[j].mss,
                    closed,
                    overshoot: final_s > 1.5 * min_after,
                });
            }
            running_min = recs[i..=j].iter().map(|r| r.loss).fold(pre_min, f64::min);
            i = j + 1;
        } else {
            running_min = running_min.min(loss);
            i += 1;
        }
    }
    Ok(events)
}
