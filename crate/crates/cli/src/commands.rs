use std::sync::Arc;

use anyhow::{bail, Context, Result};
use catapult_core::experiments::{
    alpha_eta_sweep, beta_sweep, beta_sweep_csv, detect_catapults, generalized_beta_sweep,
    generalized_sweep_csv, scenario_compare, warm_start_ldn, AdmmOptions, ScenarioOptions, SweepConfig,
};
use catapult_core::models::{
    generate_sparse_regression, DiagonalNet, DiagonalNetState, Model, RegressionDataset, ScalarRelu, Simple2D,
};
use catapult_core::optim::{run, RunConfig};
use catapult_core::spectral::PowerOptions;
use catapult_core::verify::verify_theory;
use clap::ValueEnum;
use serde::Serialize;
use serde_json::json;

use crate::config::{ExperimentConfig, InitSpec, ModelKind};
use crate::output::OutputDir;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Run,
    Sweep,
    Scenarios,
    BetaSweep,
    VerifyTheory,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Run => "run",
            Command::Sweep => "sweep",
            Command::Scenarios => "scenarios",
            Command::BetaSweep => "beta-sweep",
            Command::VerifyTheory => "verify-theory",
        }
    }

    /// Command/model combinations that cannot run at all.
    pub fn check(self, cfg: &ExperimentConfig) -> Result<()> {
        match (self, cfg.model) {
            (Command::Sweep, m) if m != ModelKind::Ldn => bail!("model: sweep needs model = \"ldn\""),
            (Command::BetaSweep, ModelKind::Ldn) => {
                bail!("model: beta-sweep needs model = \"scalar_relu\" or \"simple2d\"")
            }
            (Command::BetaSweep, ModelKind::ScalarRelu) => match &cfg.init {
                Some(InitSpec::Explicit { .. }) => Ok(()),
                _ => bail!("init: beta-sweep needs an explicit init"),
            },
            (Command::BetaSweep, ModelKind::Simple2d)
                if !matches!(cfg.init, Some(InitSpec::Explicit { .. })) =>
            {
                bail!("init: beta-sweep needs an explicit init")
            }
            _ => Ok(()),
        }
    }
}

pub enum Outcome {
    Done,
    TheoryFailed,
}

#[derive(Serialize)]
struct Metadata<'a, S: Serialize> {
    command: &'static str,
    hash: String,
    version: &'static str,
    config: &'a ExperimentConfig,
    summary: S,
}

fn write_metadata<S: Serialize>(
    out: &OutputDir,
    cmd: Command,
    cfg: &ExperimentConfig,
    summary: S,
) -> Result<()> {
    out.write_json(
        "metadata",
        &Metadata {
            command: cmd.name(),
            hash: cfg.hash(),
            version: env!("CARGO_PKG_VERSION"),
            config: cfg,
            summary,
        },
    )?;
    Ok(())
}

fn power(cfg: &ExperimentConfig) -> PowerOptions {
    PowerOptions {
        tol: cfg.run.tol,
        max_iters: cfg.run.max_power_iters,
        seed: cfg.seed,
    }
}

fn dataset(cfg: &ExperimentConfig) -> Result<Arc<RegressionDataset>> {
    let data = generate_sparse_regression(&cfg.dataset.to_core(cfg.seed)).context("generating dataset")?;
    Ok(Arc::new(data))
}

type Built = (Box<dyn Model>, Option<Arc<RegressionDataset>>);

fn build_model(cfg: &ExperimentConfig) -> Result<Built> {
    Ok(match cfg.model {
        ModelKind::ScalarRelu => (Box::new(ScalarRelu), None),
        ModelKind::Simple2d => (Box::new(Simple2D), None),
        ModelKind::Ldn => {
            let data = dataset(cfg)?;
            (Box::new(DiagonalNet::new(Arc::clone(&data))), Some(data))
        }
    })
}

fn initial_point(cfg: &ExperimentConfig, data: Option<&Arc<RegressionDataset>>) -> Result<Vec<f64>> {
    let init = cfg.init.as_ref().context("config was not resolved")?;
    Ok(match (init, data) {
        (InitSpec::Explicit { values }, _) => values.clone(),
        (InitSpec::Alpha { alpha }, Some(d)) => DiagonalNetState::broadcast(*alpha, d.d()).to_flat(),
        (InitSpec::Alpha { alpha }, None) => vec![*alpha; cfg.dim()],
        (
            InitSpec::WarmStart {
                alpha,
                eta,
                loss_below,
            },
            Some(d),
        ) => warm_start_ldn(d, *alpha, *eta, *loss_below)
            .context("warm start")?
            .state
            .to_flat(),
        (InitSpec::WarmStart { .. }, None) => bail!("warm start needs the diagonal network"),
    })
}

pub fn execute(cmd: Command, cfg: &ExperimentConfig, out: &OutputDir) -> Result<Outcome> {
    match cmd {
        Command::Run => run_cmd(cfg, out),
        Command::Sweep => sweep_cmd(cfg, out),
        Command::Scenarios => scenarios_cmd(cfg, out),
        Command::BetaSweep => beta_sweep_cmd(cfg, out),
        Command::VerifyTheory => verify_cmd(cfg, out),
    }
}

fn run_cmd(cfg: &ExperimentConfig, out: &OutputDir) -> Result<Outcome> {
    let (model, data) = build_model(cfg)?;
    let init = initial_point(cfg, data.as_ref())?;
    let mut rc = RunConfig::new(
        cfg.optimizer.schedule.context("config was not resolved")?,
        cfg.optimizer.beta,
        cfg.run.steps,
    );
    rc.switch = cfg.optimizer.switch;
    rc.record_every = cfg.run.record_every;
    rc.sharpness_every = cfg.run.sharpness_every;
    rc.probe_every = cfg.run.probe_every;
    rc.record_params = cfg.run.record_params;
    rc.power = power(cfg);
    let traj = run(model.as_ref(), &init, &rc)?;
    let events = detect_catapults(&traj, &cfg.detector)?;
    out.write("trajectory", "csv", traj.to_csv().as_bytes())?;
    out.write_json("events", &events)?;
    write_metadata(
        out,
        Command::Run,
        cfg,
        json!({
            "trajectory": traj.meta,
            "final_loss": traj.last().loss,
            "final_sharpness": traj.final_sharpness(),
            "catapults": events.len(),
        }),
    )?;
    println!(
        "{} steps, final loss {:e}, {} catapult(s)",
        traj.meta.steps_completed,
        traj.last().loss,
        events.len()
    );
    Ok(Outcome::Done)
}

fn sweep_cmd(cfg: &ExperimentConfig, out: &OutputDir) -> Result<Outcome> {
    let data = dataset(cfg)?;
    let s = &cfg.sweep;
    let scfg = SweepConfig {
        eta_i: s.eta_i,
        warmup_per_eta: s.warmup_per_eta,
        post_warmup_factor: s.post_warmup_factor,
        sharpness_every: s.sharpness_every,
        early_stop: s.early_stop,
        alpha_bar_fraction: s.alpha_bar_fraction,
        detector: cfg.detector,
        power: power(cfg),
        admm: AdmmOptions::default(),
    };
    let result = alpha_eta_sweep(&data, &s.alphas, &s.eta_fs, s.beta, &scfg)?;
    out.write("sweep", "csv", result.to_csv().as_bytes())?;
    let threshold = s.alpha_bar_fraction * result.baselines.l2_test_loss;
    out.write_json(
        "baselines",
        &json!({
            "baselines": result.baselines,
            "alpha_bar_threshold": threshold,
            "alpha_bar": result.alpha_bar,
        }),
    )?;
    write_metadata(
        out,
        Command::Sweep,
        cfg,
        json!({ "cells": result.cells.len(), "alpha_bar": result.alpha_bar }),
    )?;
    for a in &result.alpha_bar {
        match a.alpha_bar {
            Some(x) => println!("eta_f {}: alpha-bar {x}", a.eta_f),
            None => println!("eta_f {}: no alpha-bar on this grid", a.eta_f),
        }
    }
    Ok(Outcome::Done)
}

fn scenarios_cmd(cfg: &ExperimentConfig, out: &OutputDir) -> Result<Outcome> {
    let (model, data) = build_model(cfg)?;
    let init = initial_point(cfg, data.as_ref())?;
    let sc = &cfg.scenarios;
    let opts = ScenarioOptions {
        record_every: cfg.run.record_every,
        sharpness_every: cfg.run.sharpness_every.unwrap_or(cfg.run.record_every),
        probe_every: cfg.run.probe_every,
        record_params: cfg.run.record_params,
        power: power(cfg),
    };
    let (report, trajs) = scenario_compare(
        model.as_ref(),
        &init,
        sc.eta,
        sc.epsilon.context("config was not resolved")?,
        sc.beta,
        sc.steps.context("config was not resolved")?,
        &opts,
    )?;
    for (row, t) in report.rows.iter().zip(&trajs) {
        out.write(
            &format!("scenario-{}", row.scenario.slug()),
            "csv",
            t.to_csv().as_bytes(),
        )?;
    }
    out.write("delta_s", "csv", report.to_csv().as_bytes())?;
    write_metadata(out, Command::Scenarios, cfg, &report)?;
    print!("{}", report.to_csv());
    Ok(Outcome::Done)
}

fn beta_sweep_cmd(cfg: &ExperimentConfig, out: &OutputDir) -> Result<Outcome> {
    let Some(InitSpec::Explicit { values }) = &cfg.init else {
        bail!("beta-sweep needs an explicit init");
    };
    let init = [values[0], values[1]];
    let b = &cfg.beta_sweep;
    let eta = b.eta.context("config was not resolved")?;
    let eps = b.epsilon.context("config was not resolved")?;
    let betas = b.betas.as_deref().context("config was not resolved")?;
    let steps = b.steps.context("config was not resolved")?;
    let (csv, summary) = match cfg.model {
        ModelKind::ScalarRelu => {
            let rows = beta_sweep(init, eta, eps, betas, steps)?;
            (beta_sweep_csv(&rows), serde_json::to_value(&rows)?)
        }
        ModelKind::Simple2d => {
            let rows = generalized_beta_sweep(init, eta, eps, betas, steps)?;
            (generalized_sweep_csv(&rows), serde_json::to_value(&rows)?)
        }
        ModelKind::Ldn => bail!("beta-sweep needs a two-parameter model"),
    };
    out.write("beta_sweep", "csv", csv.as_bytes())?;
    write_metadata(
        out,
        Command::BetaSweep,
        cfg,
        json!({ "eta": eta, "rows": summary }),
    )?;
    println!("{} momentum values", betas.len());
    Ok(Outcome::Done)
}

fn verify_cmd(cfg: &ExperimentConfig, out: &OutputDir) -> Result<Outcome> {
    let report = verify_theory(&cfg.verify)?;
    out.write_json("report", &report)?;
    write_metadata(
        out,
        Command::VerifyTheory,
        cfg,
        json!({ "passed": report.passed, "checks": report.checks.len() }),
    )?;
    for c in &report.checks {
        let status = match (c.passed, c.advisory) {
            (true, _) => "PASS",
            (false, true) => "WARN",
            (false, false) => "FAIL",
        };
        let margin = c.margin.map(|m| format!("{m:.3e}")).unwrap_or_else(|| "-".into());
        println!("{status} {:<45} margin {margin}", c.name);
    }
    Ok(if report.passed {
        Outcome::Done
    } else {
        Outcome::TheoryFailed
    })
}
