use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Generation parameters; also the JSON sidecar written next to the CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub n: usize,
    pub d: usize,
    pub sigma2: f64,
    pub mu: Vec<f64>,
    pub k: usize,
    pub seed: u64,
}

impl DatasetConfig {
    /// N = 50 samples, d = 100, σ² = 5, µ = 5·1, 5-sparse ground truth.
    pub fn sparse_default(seed: u64) -> Self {
        DatasetConfig {
            n: 50,
            d: 100,
            sigma2: 5.0,
            mu: vec![5.0; 100],
            k: 5,
            seed,
        }
    }
}

/// Noiseless linear regression instance with inputs `x_n ~ N(µ, σ²I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionDataset {
    /// Row-major N×d.
    inputs: Vec<f64>,
    targets: Vec<f64>,
    w_star: Vec<f64>,
    config: DatasetConfig,
}

pub fn generate_sparse_regression(config: &DatasetConfig) -> Result<RegressionDataset> {
    let DatasetConfig { n, d, sigma2, k, .. } = *config;
    if n == 0 || d == 0 {
        return Err(Error::invalid("dataset needs n ≥ 1 and d ≥ 1"));
    }
    if k == 0 || k > d {
        return Err(Error::invalid(format!("sparsity k={k} must lie in [1, d={d}]")));
    }
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::invalid("sigma2 must be positive"));
    }
    check_len("mu", d, config.mu.len())?;

    let coef = 1.0 / (k as f64).sqrt();
    let w_star: Vec<f64> = (0..d).map(|i| if i < k { coef } else { 0.0 }).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let sd = sigma2.sqrt();
    let mut inputs = Vec::with_capacity(n * d);
    for _ in 0..n {
        for mu in &config.mu {
            let z: f64 = StandardNormal.sample(&mut rng);
            inputs.push(mu + sd * z);
        }
    }
    let targets = inputs.chunks(d).map(|x| dot(x, &w_star)).collect();
    Ok(RegressionDataset {
        inputs,
        targets,
        w_star,
        config: config.clone(),
    })
}

impl RegressionDataset {
    /// Build from explicit rows; targets must equal `⟨w_star, x⟩` for the
    /// population loss to be meaningful but this is not enforced.
    pub fn from_parts(
        inputs: Vec<Vec<f64>>,
        targets: Vec<f64>,
        w_star: Vec<f64>,
        config: DatasetConfig,
    ) -> Result<Self> {
        let d = config.d;
        check_len("targets", inputs.len(), targets.len())?;
        check_len("w_star", d, w_star.len())?;
        check_len("mu", d, config.mu.len())?;
        let mut flat = Vec::with_capacity(inputs.len() * d);
        for row in &inputs {
            check_len("input row", d, row.len())?;
            flat.extend_from_slice(row);
        }
        Ok(RegressionDataset {
            inputs: flat,
            targets,
            w_star,
            config: DatasetConfig {
                n: inputs.len(),
                ..config
            },
        })
    }

    pub fn n(&self) -> usize {
        self.targets.len()
    }

    pub fn d(&self) -> usize {
        self.w_star.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.d();
        &self.inputs[i * d..(i + 1) * d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.inputs.chunks(self.d())
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn w_star(&self) -> &[f64] {
        &self.w_star
    }

    pub fn mu(&self) -> &[f64] {
        &self.config.mu
    }

    pub fn sigma2(&self) -> f64 {
        self.config.sigma2
    }

    pub fn config(&self) -> &DatasetConfig {
        &self.config
    }

    /// `X·w` into `out` (length N).
    pub fn apply(&self, w: &[f64], out: &mut [f64]) {
        for (o, x) in out.iter_mut().zip(self.rows()) {
            *o = dot(x, w);
        }
    }

    /// `Xᵀ·r / N` into `out` (length d).
    pub fn apply_transpose_mean(&self, r: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (ri, x) in r.iter().zip(self.rows()) {
            for (o, xj) in out.iter_mut().zip(x) {
                *o += ri * xj;
            }
        }
        let inv_n = 1.0 / self.n() as f64;
        out.iter_mut().for_each(|o| *o *= inv_n);
    }

    /// CSV with header `x_1,…,x_d,y` and one row per sample.
    pub fn to_csv(&self) -> String {
        let d = self.d();
        let mut s = String::new();
        for j in 1..=d {
            let _ = write!(s, "x_{j},");
        }
        s.push_str("y\n");
        for (x, y) in self.rows().zip(&self.targets) {
            for xj in x {
                let _ = write!(s, "{xj:?},");
            }
            let _ = writeln!(s, "{y:?}");
        }
        s
    }

    pub fn from_csv(csv: &str, config: DatasetConfig) -> Result<Self> {
        let mut lines = csv.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty CSV".into()))?;
        let cols = header.split(',').count();
        if cols != config.d + 1 {
            return Err(Error::Parse(format!(
                "header has {cols} columns, expected d+1 = {}",
                config.d + 1
            )));
        }
        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        for (lineno, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
            let vals = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse(format!("row {}: {e}", lineno + 1)))?;
            if vals.len() != cols {
                return Err(Error::Parse(format!(
                    "row {} has {} fields",
                    lineno + 1,
                    vals.len()
                )));
            }
            targets.push(vals[config.d]);
            inputs.push(vals[..config.d].to_vec());
        }
        let k = config.k;
        let coef = 1.0 / (k.max(1) as f64).sqrt();
        let w_star = (0..config.d).map(|i| if i < k { coef } else { 0.0 }).collect();
        Self::from_parts(inputs, targets, w_star, config)
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        let csv_path = dir.join(format!("{stem}.csv"));
        let json_path = dir.join(format!("{stem}.json"));
        crate::io::write_atomic(&csv_path, self.to_csv().as_bytes())?;
        let meta = serde_json::to_string_pretty(&self.config)?;
        crate::io::write_atomic(&json_path, meta.as_bytes())
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let csv_path = dir.join(format!("{stem}.csv"));
        let json_path = dir.join(format!("{stem}.json"));
        let meta = std::fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
        let config: DatasetConfig = serde_json::from_str(&meta)?;
        let csv = std::fs::read_to_string(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
        Self::from_csv(&csv, config)
    }
}

/// Exact expected halved squared error over `x ~ N(µ, σ²I)`:
/// `½(w − w*)ᵀ(σ²I + µµᵀ)(w − w*)`.
pub fn population_test_loss(w: &[f64], data: &RegressionDataset) -> f64 {
    let (sq, proj) =
        w.iter()
            .zip(data.w_star())
            .zip(data.mu())
            .fold((0.0, 0.0), |(sq, proj), ((wi, si), mi)| {
                let e = wi - si;
                (sq + e * e, proj + mi * e)
            });
    0.5 * (data.sigma2() * sq + proj * proj)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
