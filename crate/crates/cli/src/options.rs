use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use mlsgfem::driver::{AdaptiveConfig, Algorithm};
use mlsgfem::problems::{ProblemKind, ProblemSpec};
use serde::{Deserialize, Serialize};

/// Options shared by `run` and `effectivity`. Every field is optional so that
/// flags can override a config file, which overrides the defaults.
#[derive(Args, Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct RunOptions {
    /// TOML file with any of the options below (flags take precedence).
    #[arg(long, value_name = "FILE")]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    /// benchmark-square, benchmark-lshape or cookie.
    #[arg(long)]
    pub problem: Option<String>,

    /// ml-a, ml-b, ml-c, sl-a or sl-b.
    #[arg(long)]
    pub alg: Option<String>,

    /// Joint Dörfler parameter (criterion C).
    #[arg(long)]
    pub theta: Option<f64>,

    /// Spatial Dörfler parameter (criteria A and B).
    #[arg(long)]
    pub theta_x: Option<f64>,

    /// Parametric Dörfler parameter (criteria A and B).
    #[arg(long)]
    pub theta_p: Option<f64>,

    /// Weight of the parametric estimate in criteria A and B.
    #[arg(long)]
    pub vartheta: Option<f64>,

    /// Number of new parameters a detail set may activate.
    #[arg(long)]
    pub mbar: Option<usize>,

    /// Stop once the estimate is at most this value.
    #[arg(long)]
    pub tol: Option<f64>,

    /// Relative residual tolerance of the linear solver.
    #[arg(long)]
    pub solver_tol: Option<f64>,

    /// Largest iteration number.
    #[arg(long)]
    pub max_iters: Option<usize>,

    /// Stop before solving a space with more dofs.
    #[arg(long)]
    pub max_dofs: Option<usize>,

    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Write every mesh of every iteration.
    #[arg(long)]
    #[serde(default)]
    pub dump_meshes: bool,

    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,

    /// Tolerance of the ML-C reference run (default: tol / 4).
    #[arg(long)]
    pub ref_tol: Option<f64>,
}

impl RunOptions {
    /// Fills unset fields from the config file named by `--config`.
    pub fn with_config_file(self) -> Result<Self> {
        let Some(path) = self.config.clone() else {
            return Ok(self);
        };
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading config {}", path.display()))?;
        let file: RunOptions = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        Ok(self.merged_over(file))
    }

    fn merged_over(self, base: RunOptions) -> RunOptions {
        RunOptions {
            config: self.config,
            problem: self.problem.or(base.problem),
            alg: self.alg.or(base.alg),
            theta: self.theta.or(base.theta),
            theta_x: self.theta_x.or(base.theta_x),
            theta_p: self.theta_p.or(base.theta_p),
            vartheta: self.vartheta.or(base.vartheta),
            mbar: self.mbar.or(base.mbar),
            tol: self.tol.or(base.tol),
            solver_tol: self.solver_tol.or(base.solver_tol),
            max_iters: self.max_iters.or(base.max_iters),
            max_dofs: self.max_dofs.or(base.max_dofs),
            out: self.out.or(base.out),
            dump_meshes: self.dump_meshes || base.dump_meshes,
            threads: self.threads.or(base.threads),
            ref_tol: self.ref_tol.or(base.ref_tol),
        }
    }

    pub fn resolve(&self) -> Result<Resolved> {
        let kind: ProblemKind = self.problem.as_deref().unwrap_or("benchmark-square").parse()?;
        let algorithm: Algorithm = self.alg.as_deref().unwrap_or("ml-c").parse()?;
        let problem = kind.spec();
        let mut config = AdaptiveConfig::new(&problem, algorithm);
        let m = &mut config.marking;
        m.theta = self.theta.unwrap_or(m.theta);
        m.theta_x = self.theta_x.unwrap_or(m.theta_x);
        m.theta_p = self.theta_p.unwrap_or(m.theta_p);
        m.vartheta = self.vartheta.unwrap_or(m.vartheta);
        config.m_bar = self.mbar.unwrap_or(config.m_bar);
        config.tol = self.tol.unwrap_or(config.tol);
        config.solver.tol = self.solver_tol.unwrap_or(config.solver.tol);
        config.max_iterations = self.max_iters.unwrap_or(config.max_iterations);
        config.max_dofs = self.max_dofs.or(config.max_dofs);
        config.validate()?;
        let ref_tol = self.ref_tol.unwrap_or(config.tol / 4.0);
        if !(ref_tol > 0.0 && ref_tol < config.tol) {
            anyhow::bail!("ref-tol = {ref_tol} must lie in (0, tol)");
        }
        Ok(Resolved {
            kind,
            algorithm,
            problem,
            config,
            out: self.out.clone().unwrap_or_else(|| PathBuf::from("runs")),
            dump_meshes: self.dump_meshes,
            threads: self.threads,
            ref_tol,
        })
    }
}

pub struct Resolved {
    pub kind: ProblemKind,
    pub algorithm: Algorithm,
    pub problem: ProblemSpec,
    pub config: AdaptiveConfig,
    pub out: PathBuf,
    pub dump_meshes: bool,
    pub threads: Option<usize>,
    pub ref_tol: f64,
}

/// Resolved settings as echoed into the manifest.
#[derive(Serialize)]
pub struct ConfigEcho {
    pub problem: String,
    pub alg: String,
    pub theta: f64,
    pub theta_x: f64,
    pub theta_p: f64,
    pub vartheta: f64,
    pub mbar: usize,
    pub tol: f64,
    pub solver: String,
    pub solver_tol: f64,
    pub solver_max_iterations: usize,
    pub max_iters: usize,
    pub max_dofs: Option<usize>,
    pub dump_meshes: bool,
    pub threads: Option<usize>,
    pub ref_tol: Option<f64>,
    pub config_file: Option<PathBuf>,
}

impl Resolved {
    pub fn echo(&self, effectivity: bool, config_file: Option<&Path>) -> ConfigEcho {
        let c = &self.config;
        ConfigEcho {
            problem: self.kind.to_string(),
            alg: self.algorithm.to_string(),
            theta: c.marking.theta,
            theta_x: c.marking.theta_x,
            theta_p: c.marking.theta_p,
            vartheta: c.marking.vartheta,
            mbar: c.m_bar,
            tol: c.tol,
            solver: format!("{:?}", c.solver.method).to_lowercase(),
            solver_tol: c.solver.tol,
            solver_max_iterations: c.solver.max_iterations,
            max_iters: c.max_iterations,
            max_dofs: c.max_dofs,
            dump_meshes: self.dump_meshes,
            threads: self.threads,
            ref_tol: effectivity.then_some(self.ref_tol),
            config_file: config_file.map(Path::to_path_buf),
        }
    }
}
