use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use knee_motion::adaptive::AdaptiveRegressor;
use knee_motion::gait::GaitCondition;
use knee_motion::pipeline::{
    cmd_fit, cmd_inertial, cmd_pipeline, cmd_simulate, cmd_synergy, cmd_synth, PipelineConfig, Run, StageStatus,
};
use knee_motion::{Error, Result};

/// Prosthetic knee motion generation: synthesis, inertial fitting, synergy
/// analysis, regression and closed-loop swing simulation.
#[derive(Parser)]
#[command(name = "knee-motion", version)]
struct Cli {
    /// Pipeline configuration (TOML); built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// RK4 integration step in seconds.
    #[arg(long, global = true)]
    dt: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic trials.
    Synth,
    /// Fit the zero-torque knee motion of each trial.
    Inertial {
        /// Trial CSVs; the steady trials of the trial directory when omitted.
        trials: Vec<PathBuf>,
    },
    /// Synergy analysis per cadence.
    Synergy { trials: Vec<PathBuf> },
    /// Fit the knee map, adaptive regressor and cadence estimator.
    Fit { trials: Vec<PathBuf> },
    /// Closed-loop swing simulation.
    Simulate {
        /// steady, termination or initiation; every configured condition when omitted.
        #[arg(long)]
        condition: Option<GaitCondition>,
        /// Adaptive regressor file; `<out>/fit/adaptive.txt` when omitted.
        #[arg(long)]
        regressor: Option<PathBuf>,
        trials: Vec<PathBuf>,
    },
    /// Run every stage and write a report.
    Pipeline,
}

fn build_run(cli: &Cli) -> Result<Run> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(out) = &cli.out {
        // relative to the working directory, not the config file
        config.out_dir = std::env::current_dir()
            .map_err(|e| Error::io("working directory", e))?
            .join(out);
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if cli.dt.is_some() {
        config.dt = cli.dt;
    }
    Run::new(config)
}

fn or_default(run: &Run, given: &[PathBuf], condition: GaitCondition) -> Result<Vec<PathBuf>> {
    if !given.is_empty() {
        return Ok(given.to_vec());
    }
    let found = run.trial_paths(condition)?;
    if found.is_empty() {
        return Err(Error::param(
            "trials",
            format!(
                "no {condition} trials given or found under {}",
                run.trials_dir().display()
            ),
        ));
    }
    Ok(found)
}

fn execute(cli: &Cli) -> Result<()> {
    let run = build_run(cli)?;
    match &cli.command {
        Command::Synth => {
            let files = cmd_synth(&run)?;
            println!(
                "wrote {} trial files under {}",
                files.len() / 2,
                run.out.join("trials").display()
            );
        }
        Command::Inertial { trials } => {
            let paths = or_default(&run, trials, GaitCondition::Steady)?;
            let (rows, _) = cmd_inertial(&run, &paths)?;
            for r in rows {
                println!(
                    "{:<24} T0 {:.4} s  error initial {:.2e} mid {:.2e} terminal {:.2e}",
                    r.trial, r.t0, r.phase_errors[0], r.phase_errors[1], r.phase_errors[2]
                );
            }
        }
        Command::Synergy { trials } => {
            let paths = or_default(&run, trials, GaitCondition::Steady)?;
            let (rows, _) = cmd_synergy(&run, &paths)?;
            let r = run.config.fit.rank;
            for row in rows {
                println!(
                    "{:<6} cumulative ratio at r = {r}: {:.5}",
                    row.group,
                    row.cumulative[r - 1]
                );
            }
        }
        Command::Fit { trials } => {
            let paths = or_default(&run, trials, GaitCondition::Steady)?;
            let (summary, _) = cmd_fit(&run, &paths)?;
            println!("cadence estimate R² {:.4}", summary.cadence_r2);
            for (c, m, sd, n) in summary.rms {
                println!("{c:>5} bpm  adaptive RMS {m:.4} ± {sd:.4} rad ({n} trials)");
            }
        }
        Command::Simulate {
            condition,
            regressor,
            trials,
        } => {
            let reg_path = regressor.clone().unwrap_or_else(|| run.out.join("fit/adaptive.txt"));
            let reg = AdaptiveRegressor::load(&reg_path)?;
            let conditions = match condition {
                Some(c) => vec![*c],
                None => run.config.simulate.conditions.clone(),
            };
            for cond in conditions {
                let paths = or_default(&run, trials, cond)?;
                let (rows, _) = cmd_simulate(&run, &reg, &paths, cond)?;
                for s in rows {
                    println!(
                        "{cond:<11} {:<24} {:<14} clearance {:+.4} m  final {:.4} rad",
                        s.trial, s.source, s.min_clearance, s.final_knee_angle
                    );
                }
            }
        }
        Command::Pipeline => {
            let outcome = cmd_pipeline(&run)?;
            for (stage, status) in &outcome.stages {
                let s = match status {
                    StageStatus::Ran => "ran",
                    StageStatus::Cached => "cached",
                };
                println!("{stage:<22} {s}");
            }
            println!("report: {}", outcome.report.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
