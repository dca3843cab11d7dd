//! Command-line driver for the adaptive multilevel stochastic Galerkin solver.

mod options;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use mlsgfem::driver::{fit_rate, run, run_with, AdaptiveConfig, Algorithm, RunOutcome, Termination};
use serde::Serialize;

use crate::options::{ConfigEcho, Resolved, RunOptions};
use crate::output::RunFiles;

#[derive(Parser)]
#[command(name = "mlsgfem", version, about = "Adaptive multilevel stochastic Galerkin FEM")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one adaptive algorithm and write its convergence history.
    Run(RunOptions),
    /// Run an ML-C reference to `--ref-tol`, then the requested algorithm
    /// with effectivity indices against the reference energy.
    Effectivity(RunOptions),
    /// Least-squares convergence rate over the final 60% of a convergence CSV.
    FitRate {
        csv: PathBuf,
    },
}

/// Exit code of runs stopped by the iteration or dof cap.
const EXIT_CAP: u8 = 3;

#[derive(Serialize)]
struct ReferenceInfo {
    alg: String,
    tol: f64,
    energy: f64,
    iterations: usize,
    dofs: usize,
}

#[derive(Serialize)]
struct Manifest {
    version: String,
    command: String,
    config: ConfigEcho,
    started_unix: u64,
    finished_unix: u64,
    seconds: f64,
    outputs: Vec<PathBuf>,
    /// No randomness enters a run; results depend only on `config`.
    deterministic: bool,
    termination: String,
    iterations: usize,
    final_dofs: usize,
    final_estimate: f64,
    reference: Option<ReferenceInfo>,
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn adaptive_run(r: &Resolved, config: &AdaptiveConfig, files: &mut RunFiles) -> Result<RunOutcome> {
    let outcome = run_with(&r.problem, config, |step| {
        let rec = step.record;
        log::info!(
            "iter {:3}  dofs {:8}  est {:.4e} (x {:.3e}, p {:.3e})  #P {:3}  solver {:3}  {}",
            rec.iter,
            rec.dofs,
            rec.est,
            rec.est_x,
            rec.est_p,
            rec.card_p,
            rec.solver_iterations,
            rec.branch
        );
        files.record(step).map_err(|e| mlsgfem::Error::Io(std::io::Error::other(e.to_string())))
    })?;
    Ok(outcome)
}

fn execute(options: RunOptions, effectivity: bool) -> Result<ExitCode> {
    let options = options.with_config_file()?;
    let r = options.resolve()?;
    if let Some(n) = r.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let started = unix_now();
    let clock = Instant::now();

    let reference = if effectivity {
        log::info!("reference run: ml-c to tol {:e}", r.ref_tol);
        let mut cfg = AdaptiveConfig::new(&r.problem, Algorithm::MlC);
        cfg.m_bar = r.config.m_bar;
        cfg.tol = r.ref_tol;
        cfg.solver = r.config.solver;
        let records = run(&r.problem, &cfg)?.records;
        let last = records.last().context("reference run produced no iterations")?;
        Some(ReferenceInfo {
            alg: Algorithm::MlC.to_string(),
            tol: r.ref_tol,
            energy: last.energy,
            iterations: records.len(),
            dofs: last.dofs,
        })
    } else {
        None
    };

    let mut files = RunFiles::create(&r.out, r.dump_meshes, reference.as_ref().map(|x| x.energy))?;
    let outcome = adaptive_run(&r, &r.config, &mut files)?;
    let last = outcome.records.last().context("run produced no iterations")?;
    log::info!("{} after {} iterations", outcome.termination, outcome.records.len());

    let manifest_path = r.out.join("manifest.json");
    let mut outputs = files.paths();
    outputs.push(manifest_path.clone());
    let manifest = Manifest {
        version: format!("mlsgfem {}", env!("CARGO_PKG_VERSION")),
        command: std::env::args().collect::<Vec<_>>().join(" "),
        config: r.echo(effectivity, options.config.as_deref()),
        started_unix: started,
        finished_unix: unix_now(),
        seconds: clock.elapsed().as_secs_f64(),
        outputs,
        deterministic: true,
        termination: outcome.termination.to_string(),
        iterations: outcome.records.len(),
        final_dofs: last.dofs,
        final_estimate: last.est,
        reference,
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(&manifest_path, json + "\n").with_context(|| format!("writing {}", manifest_path.display()))?;

    Ok(match outcome.termination {
        Termination::Converged => ExitCode::SUCCESS,
        Termination::IterationCap | Termination::DofCap => ExitCode::from(EXIT_CAP),
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(o) => execute(o, false),
        Command::Effectivity(o) => execute(o, true),
        Command::FitRate { csv } => output::read_convergence(&csv).and_then(|(dofs, est)| {
            let slope = fit_rate(&dofs, &est)?;
            println!("{slope:.6}");
            Ok(ExitCode::SUCCESS)
        }),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::FAILURE
    })
}
