// SPDX-License-Identifier: Apache-2.0

//! `dpergm`: private network release, ERGM fitting and evaluation.
//!
//! Settings precedence is flags > `--config` TOML file > defaults. The
//! output directory falls back to `$DPERGM_OUT_DIR`, then `.`.

mod commands;
mod manifest;
mod settings;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};

use commands::{EpsilonArgs, Finished};
use settings::Settings;

#[derive(Parser)]
#[command(name = "dpergm", version, about = "Edge-private network release and ERGM inference")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Edge list, one `i j` pair of 1-based node ids per line.
    #[arg(long, global = true)]
    graph: Option<PathBuf>,
    /// Comma-delimited node attributes with a `name:cat` / `name:num` header.
    #[arg(long, global = true)]
    attrs: Option<PathBuf>,
    /// Node count; defaults to the attribute rows or the largest edge-list id.
    #[arg(long, global = true)]
    nodes: Option<usize>,
    /// Model file, one term per line.
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// Mechanism config file.
    #[arg(long, global = true)]
    mechanism: Option<PathBuf>,
    /// Root seed; every chain and release seed is derived from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory [default: $DPERGM_OUT_DIR, else .]
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads for `evaluate` replicates; outputs do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Treat the graph as directed.
    #[arg(long, global = true)]
    directed: bool,
    /// Allow infinite-risk mechanism cells (p or q equal to 0 or 1).
    #[arg(long, global = true)]
    non_dp: bool,
    /// Exit 0 even when a fit does not converge.
    #[arg(long, global = true)]
    allow_nonconverged: bool,
    /// TOML file with any of the settings above.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ChainArgs {
    /// Retained draws per chain.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    /// Proposals between retained draws.
    #[arg(long)]
    interval: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Release randomized-response copies of a graph.
    Release {
        /// Number of releases.
        #[arg(long)]
        replicates: Option<usize>,
    },
    /// Fit an ERGM; with --mechanism, the face-value model of a release.
    Fit {
        #[command(flatten)]
        chain: ChainArgs,
        #[arg(long)]
        max_iterations: Option<usize>,
    },
    /// Draw graphs from an ERGM.
    Simulate {
        #[command(flatten)]
        chain: ChainArgs,
        /// Comma-separated parameter vector.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        theta: Option<Vec<f64>>,
    },
    /// Release, refit and score replicates over a sweep of mechanisms.
    Evaluate {
        #[command(flatten)]
        chain: ChainArgs,
        #[arg(long)]
        max_iterations: Option<usize>,
        /// Releases per mechanism.
        #[arg(long)]
        replicates: Option<usize>,
        /// Draws per KL path point.
        #[arg(long)]
        kl_samples: Option<usize>,
        /// Comma-separated uniform flip probabilities.
        #[arg(long, value_delimiter = ',')]
        pi: Option<Vec<f64>>,
    },
    /// Convert between epsilon, flip probability and retention pairs.
    Epsilon {
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        q: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        eps: Option<f64>,
        #[arg(long)]
        pi: Option<f64>,
    },
    /// Re-run the command recorded in a manifest and compare output digests.
    Replay { manifest: PathBuf },
}

fn flag_settings(c: &Common) -> Settings {
    Settings {
        graph: c.graph.clone(),
        attrs: c.attrs.clone(),
        nodes: c.nodes,
        model: c.model.clone(),
        mechanism: c.mechanism.clone(),
        seed: c.seed,
        out_dir: c.out_dir.clone(),
        workers: c.workers,
        directed: c.directed.then_some(true),
        non_dp: c.non_dp.then_some(true),
        allow_nonconverged: c.allow_nonconverged.then_some(true),
        ..Default::default()
    }
}

fn with_chain(s: Settings, c: &ChainArgs) -> Settings {
    Settings {
        samples: c.samples,
        burn_in: c.burn_in,
        interval: c.interval,
        ..Default::default()
    }
    .merge(s)
}

fn run_named(command: &str, s: Settings) -> Result<Finished> {
    match command {
        "release" => commands::release_cmd(s),
        "fit" => commands::fit_cmd(s),
        "simulate" => commands::simulate_cmd(s),
        "evaluate" => commands::evaluate_cmd(s),
        other => bail!("manifest names unknown command {other:?}"),
    }
}

fn replay(path: &Path, flags: Settings) -> Result<Finished> {
    let recorded = manifest::load(path)?;
    for input in &recorded.inputs {
        let now = manifest::digest_file(Path::new(&input.path))?;
        if now.sha256 != input.sha256 {
            bail!("input {} changed since the manifest was written", input.path);
        }
    }
    let settings = Settings {
        out_dir: flags.out_dir,
        ..recorded.settings.clone()
    };
    let done = run_named(&recorded.command, settings)?;
    if done.manifest.outputs != recorded.outputs {
        bail!("outputs differ from the manifest");
    }
    println!(
        "reproduced {} outputs of `{}`",
        recorded.outputs.len(),
        recorded.command
    );
    Ok(done)
}

fn run(cli: Cli) -> Result<Option<Finished>> {
    let flags = flag_settings(&cli.common);
    let config = match &cli.common.config {
        Some(path) => Settings::from_toml_file(path)?,
        None => Settings::default(),
    };
    let layered = |s: Settings| s.merge(flags.clone()).merge(config.clone());
    let done = match cli.command {
        Command::Release { replicates } => commands::release_cmd(layered(Settings {
            replicates,
            ..Default::default()
        }))?,
        Command::Fit { chain, max_iterations } => commands::fit_cmd(layered(with_chain(
            Settings {
                max_iterations,
                ..Default::default()
            },
            &chain,
        )))?,
        Command::Simulate { chain, theta } => commands::simulate_cmd(layered(with_chain(
            Settings {
                theta,
                ..Default::default()
            },
            &chain,
        )))?,
        Command::Evaluate {
            chain,
            max_iterations,
            replicates,
            kl_samples,
            pi,
        } => commands::evaluate_cmd(layered(with_chain(
            Settings {
                max_iterations,
                replicates,
                kl_samples,
                pi,
                ..Default::default()
            },
            &chain,
        )))?,
        Command::Epsilon { p, q, eps, pi } => {
            print!("{}", commands::epsilon_cmd(EpsilonArgs { p, q, eps, pi })?);
            return Ok(None);
        }
        Command::Replay { manifest } => replay(&manifest, flags)?,
    };
    Ok(Some(done))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(done)) => {
            let allowed = done.manifest.settings.allow_nonconverged.unwrap_or(false);
            if done.converged || allowed {
                ExitCode::SUCCESS
            } else {
                eprintln!("error: fit did not converge (pass --allow-nonconverged to accept)");
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
