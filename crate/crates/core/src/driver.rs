//! The adaptive loop: solve, estimate, mark, refine.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use crate::basis::{detail_set, IndexSet, MultiIndex};
use crate::error::{Error, Result};
use crate::estimator::{estimate, Indicators};
use crate::marking::{mark, Branch, Criterion, MarkingConfig};
use crate::mesh::{initial_mesh, Mesh};
use crate::problems::ProblemSpec;
use crate::system::{
    assemble_rhs, embed, solve, Assembler, BlockOperator, BlockVector, MeanPreconditioner, MultilevelSpace, SolverConfig,
};

/// Named algorithm variants: multilevel with criteria A/B/C and single-level
/// with criteria A/B.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algorithm {
    MlA,
    MlB,
    MlC,
    SlA,
    SlB,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [Algorithm::MlA, Algorithm::MlB, Algorithm::MlC, Algorithm::SlA, Algorithm::SlB];

    pub fn criterion(self) -> Criterion {
        match self {
            Algorithm::MlA | Algorithm::SlA => Criterion::A,
            Algorithm::MlB | Algorithm::SlB => Criterion::B,
            Algorithm::MlC => Criterion::C,
        }
    }

    pub fn single_level(self) -> bool {
        matches!(self, Algorithm::SlA | Algorithm::SlB)
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ml-a" => Ok(Algorithm::MlA),
            "ml-b" => Ok(Algorithm::MlB),
            "ml-c" => Ok(Algorithm::MlC),
            "sl-a" => Ok(Algorithm::SlA),
            "sl-b" => Ok(Algorithm::SlB),
            _ => Err(Error::Parse(format!(
                "unknown algorithm '{s}' (expected ml-a, ml-b, ml-c, sl-a or sl-b)"
            ))),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::MlA => "ml-a",
            Algorithm::MlB => "ml-b",
            Algorithm::MlC => "ml-c",
            Algorithm::SlA => "sl-a",
            Algorithm::SlB => "sl-b",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdaptiveConfig {
    pub marking: MarkingConfig,
    /// All indices share one mesh.
    pub single_level: bool,
    pub m_bar: usize,
    pub tol: f64,
    pub solver: SolverConfig,
    /// Largest iteration number `ℓ`.
    pub max_iterations: usize,
    /// Stop before solving once the space exceeds this many dofs.
    pub max_dofs: Option<usize>,
}

impl AdaptiveConfig {
    /// Defaults for `problem` run with `algorithm`.
    pub fn new(problem: &ProblemSpec, algorithm: Algorithm) -> Self {
        AdaptiveConfig {
            marking: MarkingConfig {
                criterion: algorithm.criterion(),
                ..Default::default()
            },
            single_level: algorithm.single_level(),
            m_bar: problem.default_mbar,
            tol: problem.default_tol,
            solver: SolverConfig::default(),
            max_iterations: 200,
            max_dofs: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.marking.validate()?;
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::InvalidConfig(format!("tol = {} must be positive", self.tol)));
        }
        if self.m_bar < 1 {
            return Err(Error::InvalidConfig("mbar must be at least 1".into()));
        }
        if self.single_level && self.marking.criterion == Criterion::C {
            return Err(Error::InvalidConfig("single-level mode supports criteria A and B only".into()));
        }
        if self.solver.tol.is_nan() || self.solver.tol <= 0.0 || self.solver.max_iterations == 0 {
            return Err(Error::InvalidConfig("solver tolerance and iteration cap must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub dofs: usize,
    pub est: f64,
    pub est_x: f64,
    pub est_p: f64,
    pub card_p: usize,
    pub deg_p: u32,
    pub supp_p: usize,
    pub solver_iterations: usize,
    pub residual_history: Vec<f64>,
    /// Branch taken by the marking step (`None` at the final iteration).
    pub branch: Branch,
    pub n_marked_vertices: usize,
    /// Indices activated by this step's marking.
    pub new_indices: Vec<MultiIndex>,
    pub max_spatial: f64,
    pub max_parametric: f64,
    /// `F(u_ℓ) = |||u_ℓ|||²`.
    pub energy: f64,
    /// Dofs per active index, in index order.
    pub index_dofs: Vec<(MultiIndex, usize)>,
    pub seconds: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    Converged,
    IterationCap,
    DofCap,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Termination::Converged => "converged",
            Termination::IterationCap => "iteration-cap",
            Termination::DofCap => "dof-cap",
        })
    }
}

pub struct RunOutcome {
    pub records: Vec<IterationRecord>,
    pub space: MultilevelSpace,
    pub solution: BlockVector,
    pub termination: Termination,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

/// Stop once `est ≤ tol` or the iteration cap is reached.
pub fn stopping_check(record: &IterationRecord, config: &AdaptiveConfig) -> Control {
    if record.est <= config.tol || record.iter >= config.max_iterations {
        Control::Stop
    } else {
        Control::Continue
    }
}

/// Data passed to the per-iteration observer.
pub struct Step<'a> {
    pub record: &'a IterationRecord,
    pub space: &'a MultilevelSpace,
    pub solution: &'a BlockVector,
    pub indicators: &'a Indicators,
    /// Detail set `Q` the parametric indicators refer to.
    pub detail: &'a IndexSet,
    /// Mesh carrying the detail blocks.
    pub coarse: &'a Arc<Mesh>,
}

/// Runs the adaptive loop from `P_0 = {0}` on the initial mesh.
pub fn run(problem: &ProblemSpec, config: &AdaptiveConfig) -> Result<RunOutcome> {
    run_with(problem, config, |_| Ok(()))
}

/// As [`run`], calling `observe` once per iteration after marking.
pub fn run_with(
    problem: &ProblemSpec,
    config: &AdaptiveConfig,
    mut observe: impl FnMut(&Step) -> Result<()>,
) -> Result<RunOutcome> {
    config.validate()?;
    let t0 = Arc::new(initial_mesh(&problem.domain)?);
    let assembler = Assembler::new(problem.coefficient.clone());
    let f = problem.source;
    let mut space = MultilevelSpace::initial(t0.clone());
    let mut previous: Option<(MultilevelSpace, BlockVector)> = None;
    let mut records: Vec<IterationRecord> = Vec::new();

    for iter in 0.. {
        let start = Instant::now();
        let dofs = space.n_dofs();
        if config.max_dofs.is_some_and(|cap| dofs > cap) {
            log::info!("dof cap reached at iteration {iter} with {dofs} dofs");
            let Some((space, solution)) = previous else {
                return Err(Error::CapExceeded { size: dofs, cap: config.max_dofs.unwrap() });
            };
            return Ok(RunOutcome {
                records,
                space,
                solution,
                termination: Termination::DofCap,
            });
        }

        let op = BlockOperator::assemble(&space, &assembler)?;
        let b = assemble_rhs(&space, &f, assembler.quadrature());
        let precond = MeanPreconditioner::new(&space, &assembler)?;
        let mut u = match &previous {
            Some((prev_space, prev_u)) => embed(prev_space, prev_u, &space)?,
            None => BlockVector::zeros(&space.block_sizes()),
        };
        let stats = solve(&op, &b, &precond, &mut u, &config.solver)?;
        let energy = b.dot(&u);
        if let Some(last) = records.last() {
            if energy < last.energy * (1.0 - 1e-6) {
                log::warn!("energy decreased from {} to {energy} at iteration {iter}", last.energy);
            }
        }

        let coarse = if config.single_level { space.meshes[0].clone() } else { t0.clone() };
        let q = detail_set(&space.indices, config.m_bar, problem.max_parameters);
        let indicators = estimate(&space, &u, &assembler, &f, &q, &coarse)?;
        let totals = indicators.totals();
        let mut record = IterationRecord {
            iter,
            dofs,
            est: totals.est,
            est_x: totals.est_x,
            est_p: totals.est_p,
            card_p: space.len(),
            deg_p: space.indices.degree(),
            supp_p: space.indices.n_active_parameters(),
            solver_iterations: stats.iterations,
            residual_history: stats.residual_history,
            branch: Branch::None,
            n_marked_vertices: 0,
            new_indices: Vec::new(),
            max_spatial: indicators.max_spatial(),
            max_parametric: indicators.max_parametric(),
            energy,
            index_dofs: space.indices.iter().cloned().zip(space.block_sizes()).collect(),
            seconds: 0.0,
        };

        let control = stopping_check(&record, config);
        let next = if control == Control::Continue {
            let marks = mark(&indicators, &space, &config.marking, config.single_level)?;
            record.branch = marks.branch();
            record.n_marked_vertices = if config.single_level {
                marks.spatial[0].len()
            } else {
                marks.n_spatial()
            };
            record.new_indices = marks.parametric.clone();
            Some(refine_space(&space, &marks.spatial, &marks.parametric, &t0, config.single_level)?)
        } else {
            None
        };
        record.seconds = start.elapsed().as_secs_f64();
        log::info!(
            "iter {iter}: dofs {dofs} est {:.4e} (X {:.3e}, P {:.3e}) #P {} deg {} M {} its {} branch {}",
            record.est,
            record.est_x,
            record.est_p,
            record.card_p,
            record.deg_p,
            record.supp_p,
            record.solver_iterations,
            record.branch
        );
        observe(&Step {
            record: &record,
            space: &space,
            solution: &u,
            indicators: &indicators,
            detail: &q,
            coarse: &coarse,
        })?;
        records.push(record);

        match next {
            None => {
                let termination = if records.last().unwrap().est <= config.tol {
                    Termination::Converged
                } else {
                    Termination::IterationCap
                };
                return Ok(RunOutcome {
                    records,
                    space,
                    solution: u,
                    termination,
                });
            }
            Some(next) => {
                check_nested(&space, &next, &t0, config.single_level)?;
                let mut live: Vec<u64> = vec![t0.id()];
                live.extend(next.meshes.iter().map(|m| m.id()));
                assembler.retain_meshes(&live);
                previous = Some((space, u));
                space = next;
            }
        }
    }
    unreachable!()
}

/// Refines the marked meshes and appends marked indices on `t0` (or on the
/// shared mesh in single-level mode).
pub fn refine_space(
    space: &MultilevelSpace,
    spatial: &[crate::mesh::MarkedVertexSet],
    parametric: &[MultiIndex],
    t0: &Arc<Mesh>,
    single_level: bool,
) -> Result<MultilevelSpace> {
    let refined: Vec<Arc<Mesh>> = if single_level {
        let shared = if spatial[0].is_empty() {
            space.meshes[0].clone()
        } else {
            Arc::new(space.meshes[0].refine(&spatial[0])?)
        };
        vec![shared; space.len()]
    } else {
        use rayon::prelude::*;
        space
            .meshes
            .par_iter()
            .zip(spatial.par_iter())
            .map(|(mesh, marks)| {
                if marks.is_empty() {
                    Ok(mesh.clone())
                } else {
                    mesh.refine(marks).map(Arc::new)
                }
            })
            .collect::<Result<_>>()?
    };
    let indices = space.indices.extended(parametric.iter());
    let start = if single_level { refined[0].clone() } else { t0.clone() };
    let meshes = indices
        .iter()
        .map(|nu| match space.indices.position(nu) {
            Some(i) => refined[i].clone(),
            None => start.clone(),
        })
        .collect();
    MultilevelSpace::new(indices, meshes)
}

fn check_nested(old: &MultilevelSpace, new: &MultilevelSpace, t0: &Arc<Mesh>, single_level: bool) -> Result<()> {
    for (nu, mesh) in new.indices.iter().zip(&new.meshes) {
        match old.mesh_of(nu) {
            Some(prev) => {
                if !(mesh.id() == prev.id() || mesh.refines(prev)) {
                    return Err(Error::NotNested {
                        coarse: prev.id(),
                        fine: mesh.id(),
                    });
                }
            }
            None => {
                let expected = if single_level { &new.meshes[0] } else { t0 };
                assert_eq!(mesh.id(), expected.id(), "new index {nu} must start on the initial mesh");
            }
        }
    }
    assert!(old.indices.iter().all(|nu| new.indices.contains(nu)));
    Ok(())
}

/// Least-squares slope of `log est` against `log dofs` over the final 60% of
/// the records.
pub fn fit_rate(dofs: &[f64], est: &[f64]) -> Result<f64> {
    if dofs.len() != est.len() {
        return Err(Error::DimensionMismatch {
            expected: dofs.len(),
            found: est.len(),
        });
    }
    let n = dofs.len();
    if n < 5 {
        return Err(Error::InvalidConfig(format!("rate fit needs at least 5 records, got {n}")));
    }
    let k = (0.6 * n as f64).ceil() as usize;
    let xs: Vec<f64> = dofs[n - k..].iter().map(|d| d.ln()).collect();
    let ys: Vec<f64> = est[n - k..].iter().map(|e| e.ln()).collect();
    let mx = xs.iter().sum::<f64>() / k as f64;
    let my = ys.iter().sum::<f64>() / k as f64;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidConfig("rate fit needs distinct dof counts".into()));
    }
    Ok(sxy / sxx)
}

/// Rate fitted to a sequence of records.
pub fn fit_rate_records(records: &[IterationRecord]) -> Result<f64> {
    let dofs: Vec<f64> = records.iter().map(|r| r.dofs as f64).collect();
    let est: Vec<f64> = records.iter().map(|r| r.est).collect();
    fit_rate(&dofs, &est)
}

/// `|||u − u_ℓ||| ≈ sqrt(F(u_ref) − F(u_ℓ))` from reference energy `e_ref`.
pub fn reference_error(energy: f64, e_ref: f64) -> Option<f64> {
    let d = e_ref - energy;
    (d > 0.0).then(|| d.sqrt())
}

/// Effectivity indices `est_ℓ / |||u_ref − u_ℓ|||`.
pub fn effectivity(records: &[IterationRecord], e_ref: f64) -> Vec<Option<f64>> {
    records
        .iter()
        .map(|r| reference_error(r.energy, e_ref).map(|e| r.est / e))
        .collect()
}

/// Active index set of the last record, for reporting.
pub fn final_indices(records: &[IterationRecord]) -> IndexSet {
    IndexSet::new(records.last().map(|r| r.index_dofs.iter().map(|e| e.0.clone()).collect()).unwrap_or_default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Domain;
    use crate::problems::{FourierCoefficient, ProblemKind};

    fn record(iter: usize, est: f64) -> IterationRecord {
        IterationRecord {
            iter,
            dofs: 10,
            est,
            est_x: est,
            est_p: 0.0,
            card_p: 1,
            deg_p: 0,
            supp_p: 0,
            solver_iterations: 0,
            residual_history: Vec::new(),
            branch: Branch::None,
            n_marked_vertices: 0,
            new_indices: Vec::new(),
            max_spatial: 0.0,
            max_parametric: 0.0,
            energy: 0.0,
            index_dofs: Vec::new(),
            seconds: 0.0,
        }
    }

    #[test]
    fn stopping_examples() {
        let problem = ProblemKind::BenchmarkSquare.spec();
        let cfg = AdaptiveConfig {
            tol: 1e-3,
            max_iterations: 5,
            ..AdaptiveConfig::new(&problem, Algorithm::MlC)
        };
        assert_eq!(stopping_check(&record(1, 1e-3), &cfg), Control::Stop);
        assert_eq!(stopping_check(&record(1, 0.0), &cfg), Control::Stop);
        assert_eq!(stopping_check(&record(1, 2e-3), &cfg), Control::Continue);
        assert_eq!(stopping_check(&record(5, 2e-3), &cfg), Control::Stop);
    }

    #[test]
    fn fit_rate_power_laws() {
        let dofs: Vec<f64> = (0..10).map(|k| 100.0 * 1.7f64.powi(k)).collect();
        let half: Vec<f64> = dofs.iter().map(|n| n.powf(-0.5)).collect();
        assert!((fit_rate(&dofs, &half).unwrap() + 0.5).abs() < 1e-12);
        let third: Vec<f64> = dofs.iter().map(|n| 3.0 * n.powf(-1.0 / 3.0)).collect();
        assert!((fit_rate(&dofs, &third).unwrap() + 1.0 / 3.0).abs() < 1e-12);
        assert!(fit_rate(&dofs[..4], &half[..4]).is_err());
    }

    #[test]
    fn algorithm_names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.to_string().parse::<Algorithm>().unwrap(), a);
        }
        assert!("ml-d".parse::<Algorithm>().is_err());
        assert!(Algorithm::SlB.single_level());
        assert_eq!(Algorithm::MlB.criterion(), Criterion::B);
    }

    #[test]
    fn deterministic_problem_never_enriches_parametrically() {
        let mut problem = ProblemKind::BenchmarkSquare.spec();
        problem.domain = Domain::UnitSquare { n: 4 };
        problem.coefficient = Arc::new(FourierCoefficient {
            max_m: Some(0),
            ..FourierCoefficient::benchmark()
        });
        let cfg = AdaptiveConfig {
            tol: 8e-3,
            ..AdaptiveConfig::new(&problem, Algorithm::MlA)
        };
        let out = run(&problem, &cfg).unwrap();
        assert_eq!(out.termination, Termination::Converged);
        assert!(out.records.len() > 2);
        for w in out.records.windows(2) {
            assert!(w[1].dofs > w[0].dofs);
            assert!(w[1].energy >= w[0].energy * (1.0 - 1e-9));
        }
        assert!(out.records.iter().all(|r| r.card_p == 1 && r.est_p == 0.0));
    }

    #[test]
    fn first_activation_is_first_parameter() {
        let problem = ProblemKind::BenchmarkSquare.spec();
        let cfg = AdaptiveConfig {
            max_iterations: 3,
            ..AdaptiveConfig::new(&problem, Algorithm::MlA)
        };
        let mut seen = Vec::new();
        let out = run_with(&problem, &cfg, |s| {
            seen.push(s.record.new_indices.clone());
            assert_eq!(s.indicators.spatial.len(), s.space.len());
            Ok(())
        })
        .unwrap();
        let first = seen.iter().flatten().next().expect("some index activated");
        assert_eq!(*first, MultiIndex::unit(1));
        assert!(out.records.iter().all(|r| r.solver_iterations <= 25));
    }

    #[test]
    fn single_level_keeps_one_mesh() {
        let mut problem = ProblemKind::BenchmarkSquare.spec();
        problem.domain = Domain::UnitSquare { n: 4 };
        let cfg = AdaptiveConfig {
            tol: 1e-2,
            max_iterations: 6,
            ..AdaptiveConfig::new(&problem, Algorithm::SlA)
        };
        let out = run(&problem, &cfg).unwrap();
        let id = out.space.meshes[0].id();
        assert!(out.space.meshes.iter().all(|m| m.id() == id));
        for r in &out.records {
            let n0 = r.index_dofs[0].1;
            assert!(r.index_dofs.iter().all(|e| e.1 == n0));
        }
    }

    #[test]
    fn dof_cap_stops_early() {
        let mut problem = ProblemKind::BenchmarkSquare.spec();
        problem.domain = Domain::UnitSquare { n: 4 };
        let cfg = AdaptiveConfig {
            tol: 1e-6,
            max_dofs: Some(60),
            ..AdaptiveConfig::new(&problem, Algorithm::MlC)
        };
        let out = run(&problem, &cfg).unwrap();
        assert_eq!(out.termination, Termination::DofCap);
        assert!(out.records.iter().all(|r| r.dofs <= 60));
        assert_eq!(out.solution.len(), out.space.n_dofs());
    }

    #[test]
    fn effectivity_uses_energy_gap() {
        let mut r = record(0, 0.3);
        r.energy = 1.0;
        assert_eq!(effectivity(&[r.clone()], 1.09)[0].map(|e| (e * 1e9).round()), Some(1e9));
        assert_eq!(effectivity(&[r], 0.5)[0], None);
    }
}
