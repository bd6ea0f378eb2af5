use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

mod commands;
mod config;
mod output;

use commands::{Command, Outcome};
use output::OutputDir;

const EXIT_CONFIG: u8 = 1;
const EXIT_THEORY: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

/// Gradient descent and heavy-ball experiments on analytic models.
///
/// Exit status: 0 success, 1 config error, 2 failed theory check,
/// 3 runtime error.
#[derive(Debug, Parser)]
#[command(name = "catapult-lab", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// TOML or JSON experiment config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output root, overriding `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps.
    #[arg(long, env = "CATAPULT_LAB_THREADS")]
    threads: Option<usize>,
    /// Overrides the config's `seed`.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match cli
        .config
        .as_deref()
        .map(config::load)
        .unwrap_or_else(|| Ok(Default::default()))
    {
        Ok(mut c) => {
            if let Some(s) = cli.seed {
                c.seed = s;
            }
            if let Some(o) = &cli.out {
                c.output_dir = o.clone();
            }
            c.resolve().and_then(|c| cli.command.check(&c).map(|_| c))
        }
        Err(e) => Err(e),
    };
    let cfg = match cfg {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e:#}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("config error: --threads must be at least 1");
            return ExitCode::from(EXIT_CONFIG);
        }
        catapult_core::par::configure_threads(n);
    }

    let hash = cfg.hash();
    let out = OutputDir::new(&cfg.output_dir, cli.command.name(), &hash);
    let result = out
        .log(&format!("start {} threads={:?}", cli.command.name(), cli.threads))
        .and_then(|_| out.write("config", "toml", cfg.to_toml()?.as_bytes()))
        .and_then(|_| commands::execute(cli.command, &cfg, &out));
    let (code, status) = match result {
        Ok(Outcome::Done) => (ExitCode::SUCCESS, "ok".to_string()),
        Ok(Outcome::TheoryFailed) => {
            eprintln!(
                "theory checks failed; see {}",
                out.path("report", "json").display()
            );
            (ExitCode::from(EXIT_THEORY), "theory checks failed".to_string())
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            (ExitCode::from(EXIT_RUNTIME), format!("error: {e:#}"))
        }
    };
    let _ = out.log(&format!("end {status}"));
    println!("{}", out.dir().display());
    code
}
