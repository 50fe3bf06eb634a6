//! `ghast`: scenario runner for the GHAST simulator.
//!
//! ```text
//! ghast run <config> [--seed N] [--out-dir DIR]
//! ghast sweep <config> --axis sim.beta --values 0,0.1,0.2 [--seed N] [--out-dir DIR]
//! ghast risk <query-file> [--out FILE]
//! ```
//!
//! `run` writes the event log, `blocks.csv`, `metrics.json` and the oracle
//! report into the output directory (file names come from `[output]`).
//! It exits with status 2 when the oracle is enabled and reports any
//! violation, 3 on config errors and 4 on I/O errors. `sweep` writes
//! `sweep.csv` with one row per value; run `i` uses seed `seed + i`.
//! Log verbosity comes from `GHAST_LOG` (e.g. `GHAST_LOG=debug`).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ghast_sim::scenario::{
    answer_risk_queries, parse_risk_queries, run_scenario, sweep, sweep_to_csv, write_outputs,
};
use ghast_sim::{ScenarioConfig, SimError};

#[derive(Parser)]
#[command(name = "ghast", version, about = "GHAST consensus simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario.
    Run {
        config: PathBuf,
        /// Overrides `sim.seed`.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Run a scenario once per value of a numeric field.
    Sweep {
        config: PathBuf,
        /// Field as `section.key`, e.g. `sim.beta`.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<String>,
        /// Base seed; defaults to `sim.seed`.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Evaluate confirmation-risk queries (`m n theta t beta eta_w` per line).
    Risk {
        queries: PathBuf,
        /// Write answers here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GHAST_LOG", "info")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), SimError> {
    match cli.cmd {
        Cmd::Run { config, seed, out_dir } => {
            let (mut raw, _) = ScenarioConfig::load(&config)?;
            if let Some(s) = seed {
                raw.set("sim.seed", &s.to_string())?;
            }
            let cfg = ScenarioConfig::from_raw(&raw)?;
            log::info!("running {} rounds, {} nodes, mode {}", cfg.sim.horizon, cfg.sim.m, cfg.sim.mode.as_str());
            let out = run_scenario(&cfg)?;
            write_outputs(&out, &cfg, &out_dir)?;
            let a = &out.metrics.agg;
            log::info!(
                "{} blocks, {} confirmed, latency p50 {:?}, {} reorgs",
                a.blocks,
                a.confirmed_blocks,
                a.latency_p50,
                a.reorgs
            );
            if out.report.violation_count > 0 {
                return Err(SimError::InvariantViolation(out.report.violation_count));
            }
            Ok(())
        }
        Cmd::Sweep { config, axis, values, seed, out_dir } => {
            let (raw, cfg) = ScenarioConfig::load(&config)?;
            let rows = sweep(&raw, &axis, &values, seed.unwrap_or(cfg.sim.seed))?;
            std::fs::create_dir_all(&out_dir).map_err(|e| SimError::io(&out_dir, e))?;
            let path = out_dir.join("sweep.csv");
            std::fs::write(&path, sweep_to_csv(&rows)?).map_err(|e| SimError::io(&path, e))?;
            log::info!("wrote {} rows to {}", rows.len(), path.display());
            let bad: u64 = rows.iter().map(|r| r.oracle_violations).sum();
            if bad > 0 {
                return Err(SimError::InvariantViolation(bad));
            }
            Ok(())
        }
        Cmd::Risk { queries, out } => {
            let text = std::fs::read_to_string(&queries).map_err(|e| SimError::io(&queries, e))?;
            let answers = answer_risk_queries(&parse_risk_queries(&text)?)?;
            match out {
                Some(p) => std::fs::write(&p, answers).map_err(|e| SimError::io(&p, e))?,
                None => print!("{answers}"),
            }
            Ok(())
        }
    }
}
