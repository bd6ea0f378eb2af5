//! Experiment configuration: parsing, defaults, validation and hashing.
//!
//! Configs are TOML with one table per concern; JSON with the same shape is
//! accepted too. Every field is optional. Fields whose default depends on the
//! model are `Option`s that [`ExperimentConfig::resolve`] fills in, so the
//! resolved config written next to every output is complete.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use catapult_core::experiments::{beta_grid, presets, DetectorConfig};
use catapult_core::models::DatasetConfig;
use catapult_core::optim::{Schedule, SwitchPolicy};
use catapult_core::theory::{simple2d_closest_minimum, simple2d_min_sharpness};
use catapult_core::verify::VerifyConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[default]
    ScalarRelu,
    Simple2d,
    Ldn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    /// Seeds the dataset (unless `dataset.seed` is set) and power iteration.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub dataset: DatasetSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init: Option<InitSpec>,
    pub optimizer: OptimizerSection,
    pub run: RunSection,
    pub detector: DetectorConfig,
    pub sweep: SweepSection,
    pub scenarios: ScenariosSection,
    pub beta_sweep: BetaSweepSection,
    pub verify: VerifyConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: ModelKind::default(),
            seed: 0,
            output_dir: PathBuf::from("out"),
            dataset: DatasetSection::default(),
            init: None,
            optimizer: OptimizerSection::default(),
            run: RunSection::default(),
            detector: DetectorConfig::default(),
            sweep: SweepSection::default(),
            scenarios: ScenariosSection::default(),
            beta_sweep: BetaSweepSection::default(),
            verify: VerifyConfig::default(),
        }
    }
}

/// `mu = 5.0` broadcasts; `mu = [..]` gives every coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MuSpec {
    Scalar(f64),
    Vector(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    pub n: usize,
    pub d: usize,
    pub sigma2: f64,
    pub mu: MuSpec,
    pub k: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection {
            n: 50,
            d: 100,
            sigma2: 5.0,
            mu: MuSpec::Scalar(5.0),
            k: 5,
            seed: None,
        }
    }
}

impl DatasetSection {
    pub fn to_core(&self, fallback_seed: u64) -> DatasetConfig {
        DatasetConfig {
            n: self.n,
            d: self.d,
            sigma2: self.sigma2,
            mu: match &self.mu {
                MuSpec::Scalar(m) => vec![*m; self.d],
                MuSpec::Vector(v) => v.clone(),
            },
            k: self.k,
            seed: self.seed.unwrap_or(fallback_seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSpec {
    Explicit {
        values: Vec<f64>,
    },
    /// Every parameter set to `alpha`.
    Alpha {
        alpha: f64,
    },
    /// GD from `alpha·1` until the training loss drops below `loss_below`.
    WarmStart {
        alpha: f64,
        eta: f64,
        loss_below: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSection {
    pub beta: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Schedule>,
    pub switch: SwitchPolicy,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        OptimizerSection {
            beta: 0.0,
            schedule: None,
            switch: SwitchPolicy::none(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub steps: u64,
    pub record_every: u64,
    /// Defaults to `record_every`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sharpness_every: Option<u64>,
    pub probe_every: u64,
    pub record_params: bool,
    /// Power-iteration tolerance.
    pub tol: f64,
    pub max_power_iters: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            steps: 100_000,
            record_every: 1,
            sharpness_every: None,
            probe_every: 1,
            record_params: false,
            tol: 1e-8,
            max_power_iters: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub alphas: Vec<f64>,
    pub eta_fs: Vec<f64>,
    pub beta: f64,
    pub eta_i: f64,
    pub warmup_per_eta: f64,
    pub post_warmup_factor: u64,
    pub sharpness_every: u64,
    pub early_stop: bool,
    pub alpha_bar_fraction: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            alphas: presets::sweep_alphas(),
            eta_fs: presets::SWEEP_ETA_FS.to_vec(),
            beta: presets::SWEEP_BETA,
            eta_i: 1e-8,
            warmup_per_eta: 1e6,
            post_warmup_factor: 10,
            sharpness_every: 50,
            early_stop: true,
            alpha_bar_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenariosSection {
    /// GD step; derived as `(2+ε)/S₀` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    pub beta: f64,
    /// Defaults to `run.steps`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<u64>,
}

impl Default for ScenariosSection {
    fn default() -> Self {
        ScenariosSection {
            eta: None,
            epsilon: None,
            beta: 0.9,
            steps: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BetaSweepSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub betas: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<u64>,
}

fn is_json(path: Option<&Path>, text: &str) -> bool {
    match path.and_then(|p| p.extension()) {
        Some(ext) => ext.eq_ignore_ascii_case("json"),
        None => text.trim_start().starts_with('{'),
    }
}

/// Parse a TOML (or JSON) document. Errors name the offending key path.
pub fn parse_str(text: &str, path: Option<&Path>) -> Result<ExperimentConfig> {
    if is_json(path, text) {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de)
            .map_err(|e| anyhow!("{}: {}", display_path(e.path().to_string()), e.inner()))
    } else {
        let de = toml::Deserializer::parse(text).map_err(|e| anyhow!("{}", e.message()))?;
        serde_path_to_error::deserialize(de)
            .map_err(|e| anyhow!("{}: {}", display_path(e.path().to_string()), e.inner().message()))
    }
}

fn display_path(p: String) -> String {
    if p == "." {
        "<root>".into()
    } else {
        p
    }
}

pub fn load(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_str(&text, Some(path)).with_context(|| format!("in {}", path.display()))
}

fn unit_beta(key: &str, beta: f64) -> Result<()> {
    if !(0.0..1.0).contains(&beta) {
        bail!("{key}: beta must be in [0,1), got {beta}");
    }
    Ok(())
}

fn positive(key: &str, x: f64) -> Result<()> {
    if !(x > 0.0 && x.is_finite()) {
        bail!("{key}: must be positive and finite, got {x}");
    }
    Ok(())
}

impl ExperimentConfig {
    /// Number of trainable parameters, before any dataset is generated.
    pub fn dim(&self) -> usize {
        match self.model {
            ModelKind::ScalarRelu | ModelKind::Simple2d => 2,
            ModelKind::Ldn => 2 * self.dataset.d,
        }
    }

    /// Fill every model-dependent default and validate the result.
    pub fn resolve(mut self) -> Result<Self> {
        let model = self.model;
        let (init, schedule, eps) = match model {
            ModelKind::ScalarRelu => (
                InitSpec::Explicit {
                    values: presets::SCALAR_INIT.to_vec(),
                },
                Schedule::constant(presets::scalar_eta()),
                presets::SCALAR_EPSILON,
            ),
            ModelKind::Simple2d => (
                InitSpec::Explicit {
                    values: presets::SIMPLE2D_INIT.to_vec(),
                },
                Schedule::constant(presets::SIMPLE2D_ETA),
                presets::SIMPLE2D_EPSILON,
            ),
            ModelKind::Ldn => (
                InitSpec::WarmStart {
                    alpha: presets::WARM_ALPHA,
                    eta: presets::WARM_ETA,
                    loss_below: presets::WARM_LOSS,
                },
                presets::terminated_warmup_ablation(),
                presets::LDN_SCENARIO_EPSILON,
            ),
        };
        self.init.get_or_insert(init);
        self.optimizer.schedule.get_or_insert(schedule);
        self.run.sharpness_every.get_or_insert(self.run.record_every);
        self.scenarios.epsilon.get_or_insert(eps);
        self.scenarios.steps.get_or_insert(self.run.steps);
        self.beta_sweep.epsilon.get_or_insert(eps);
        self.beta_sweep.steps.get_or_insert(self.run.steps);
        if self.beta_sweep.betas.is_none() {
            self.beta_sweep.betas = Some(match model {
                ModelKind::Simple2d => presets::simple2d_betas(),
                _ => beta_grid(0.01, 0.99),
            });
        }
        self.validate()?;
        if self.beta_sweep.eta.is_none() {
            self.beta_sweep.eta = self.default_beta_sweep_eta()?;
        }
        Ok(self)
    }

    /// `(2+ε)/S` at the start (scalar) or at its gradient-flow limit
    /// (two-parameter model); the diagonal network has no momentum sweep.
    fn default_beta_sweep_eta(&self) -> Result<Option<f64>> {
        let eps = self.beta_sweep.epsilon.unwrap_or_default();
        let Some(InitSpec::Explicit { values }) = &self.init else {
            return Ok(None);
        };
        Ok(match self.model {
            ModelKind::ScalarRelu => Some((2.0 + eps) / (values[0] * values[0])),
            ModelKind::Simple2d => {
                let m = simple2d_closest_minimum(values).context("init.values")?;
                Some((2.0 + eps) / simple2d_min_sharpness(m[1]))
            }
            ModelKind::Ldn => None,
        })
    }

    pub fn validate(&self) -> Result<()> {
        unit_beta("optimizer.beta", self.optimizer.beta)?;
        unit_beta("optimizer.switch.beta", self.optimizer.switch.beta)?;
        unit_beta("sweep.beta", self.sweep.beta)?;
        unit_beta("scenarios.beta", self.scenarios.beta)?;
        if let Some(s) = &self.optimizer.schedule {
            s.validate().map_err(|e| anyhow!("optimizer.schedule: {e}"))?;
        }
        let r = &self.run;
        if r.steps == 0 {
            bail!("run.steps: must be at least 1");
        }
        if r.record_every == 0 || r.probe_every == 0 || r.sharpness_every == Some(0) {
            bail!("run: record_every, sharpness_every and probe_every must be at least 1");
        }
        positive("run.tol", r.tol)?;
        if r.max_power_iters == 0 {
            bail!("run.max_power_iters: must be at least 1");
        }
        self.detector.validate().map_err(|e| anyhow!("detector: {e}"))?;
        match &self.init {
            Some(InitSpec::Explicit { values }) => {
                if values.len() != self.dim() {
                    bail!(
                        "init.values: expected {} values for this model, got {}",
                        self.dim(),
                        values.len()
                    );
                }
                if values.iter().any(|x| !x.is_finite()) {
                    bail!("init.values: must be finite");
                }
            }
            Some(InitSpec::Alpha { alpha }) if !alpha.is_finite() => bail!("init.alpha: must be finite"),
            Some(InitSpec::WarmStart {
                alpha,
                eta,
                loss_below,
            }) => {
                if self.model != ModelKind::Ldn {
                    bail!("init.kind: warm_start needs model = \"ldn\"");
                }
                if !alpha.is_finite() {
                    bail!("init.alpha: must be finite");
                }
                positive("init.eta", *eta)?;
                positive("init.loss_below", *loss_below)?;
            }
            _ => {}
        }
        let d = &self.dataset;
        if d.n == 0 || d.d == 0 || d.k == 0 || d.k > d.d {
            bail!("dataset: need n >= 1, d >= 1 and 1 <= k <= d");
        }
        positive("dataset.sigma2", d.sigma2)?;
        if let MuSpec::Vector(mu) = &d.mu {
            if mu.len() != d.d {
                bail!("dataset.mu: expected {} values, got {}", d.d, mu.len());
            }
        }
        let s = &self.sweep;
        if s.alphas.is_empty() || s.eta_fs.is_empty() {
            bail!("sweep: alphas and eta_fs must be nonempty");
        }
        for e in &s.eta_fs {
            positive("sweep.eta_fs", *e)?;
        }
        positive("sweep.eta_i", s.eta_i)?;
        positive("sweep.warmup_per_eta", s.warmup_per_eta)?;
        if s.sharpness_every == 0 {
            bail!("sweep.sharpness_every: must be at least 1");
        }
        positive("sweep.alpha_bar_fraction", s.alpha_bar_fraction)?;
        if let Some(e) = self.scenarios.eta {
            positive("scenarios.eta", e)?;
        }
        if let Some(e) = self.beta_sweep.eta {
            positive("beta_sweep.eta", e)?;
        }
        for (key, eps) in [
            ("scenarios.epsilon", self.scenarios.epsilon),
            ("beta_sweep.epsilon", self.beta_sweep.epsilon),
        ] {
            if let Some(e) = eps {
                if !(e > 0.0 && e < 1.0) {
                    bail!("{key}: epsilon must be in (0,1), got {e}");
                }
            }
        }
        if self.scenarios.steps == Some(0) || self.beta_sweep.steps.is_some_and(|s| s < 2) {
            bail!("scenarios.steps must be at least 1 and beta_sweep.steps at least 2");
        }
        if let Some(betas) = &self.beta_sweep.betas {
            if betas.is_empty() {
                bail!("beta_sweep.betas: must be nonempty");
            }
            for b in betas {
                unit_beta("beta_sweep.betas", *b)?;
            }
        }
        self.verify.validate().map_err(|e| anyhow!("verify: {e}"))?;
        Ok(())
    }

    /// Resolved config as TOML.
    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Hex SHA-256 of the canonical JSON form, without `output_dir`, so the
    /// same experiment hashes the same wherever its outputs go. Truncated to
    /// 16 hex digits for file names.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(m) = v.as_object_mut() {
            m.remove("output_dir");
        }
        let digest = Sha256::digest(v.to_string().as_bytes());
        hex::encode(digest)[..16].to_string()
    }
}
