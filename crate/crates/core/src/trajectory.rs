use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::optim::{Schedule, SwitchPolicy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub t: u64,
    pub loss: f64,
    pub eta: f64,
    pub mss: f64,
    pub sharpness: Option<f64>,
    pub params: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub model: String,
    pub beta: f64,
    /// Momentum in effect at the end (differs from `beta` after a switch).
    pub final_beta: f64,
    pub schedule: Schedule,
    pub switch: SwitchPolicy,
    pub switch_fired_at: Option<u64>,
    pub warmup_frozen_at: Option<u64>,
    pub steps_completed: u64,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub records: Vec<Record>,
    pub final_theta: Vec<f64>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn last(&self) -> &Record {
        self.records
            .last()
            .expect("trajectories hold at least one record")
    }

    pub fn first(&self) -> &Record {
        &self.records[0]
    }

    /// `(t, sharpness)` for records where sharpness was sampled.
    pub fn sharpness_series(&self) -> Vec<(u64, f64)> {
        self.records
            .iter()
            .filter_map(|r| r.sharpness.map(|s| (r.t, s)))
            .collect()
    }

    /// Parameter column `index` over records that carry parameters.
    pub fn param_series(&self, index: usize) -> Vec<f64> {
        self.records
            .iter()
            .filter_map(|r| r.params.as_ref().map(|p| p[index]))
            .collect()
    }

    pub fn final_sharpness(&self) -> Option<f64> {
        self.records.iter().rev().find_map(|r| r.sharpness)
    }

    /// Columns `t,loss,eta,mss,sharpness`; sharpness is empty when unsampled.
    /// When every record carries parameters, `theta_1..theta_k` follow.
    pub fn to_csv(&self) -> String {
        let k = match self
            .records
            .iter()
            .map(|r| r.params.as_ref().map(Vec::len))
            .collect::<Option<Vec<_>>>()
        {
            Some(lens) => lens.first().copied().unwrap_or(0),
            None => 0,
        };
        let mut s = String::from("t,loss,eta,mss,sharpness");
        for i in 1..=k {
            let _ = write!(s, ",theta_{i}");
        }
        s.push('\n');
        for r in &self.records {
            let _ = write!(s, "{},{:?},{:?},{:?},", r.t, r.loss, r.eta, r.mss);
            if let Some(sh) = r.sharpness {
                let _ = write!(s, "{sh:?}");
            }
            if k > 0 {
                for x in r.params.as_deref().unwrap_or_default() {
                    let _ = write!(s, ",{x:?}");
                }
            }
            s.push('\n');
        }
        s
    }

    /// Keep every `k`-th record (plus the last one).
    pub fn subsample(&self, k: usize) -> Trajectory {
        let n = self.records.len();
        let records = self
            .records
            .iter()
            .enumerate()
            .filter(|(i, _)| i % k == 0 || *i + 1 == n)
            .map(|(_, r)| r.clone())
            .collect();
        Trajectory {
            records,
            ..self.clone()
        }
    }
}
