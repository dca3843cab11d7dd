//! Two-level spatial indicators, hierarchical parametric indicators and the
//! combined error estimate.

use std::sync::Arc;

use rayon::prelude::*;

use crate::basis::{IndexSet, MultiIndex};
use crate::error::{Error, Result};
use crate::mesh::{Edge, Mesh, Point};
use crate::assembly::{load_vector, stiffness_diagonal};
use crate::system::{
    apply_shared_rows_transient, assemble_rhs, couplings, row_product_transient, table_for, embed, solve, Assembler, BlockOperator, BlockVector,
    MeanPreconditioner, MultilevelSpace, SolverConfig,
};

/// Spatial indicators of one block: block position and per-edge values.
type BlockIndicators = (usize, Vec<(Edge, f64)>);

/// Indicators of one adaptive step.
#[derive(Clone, Debug, Default)]
pub struct Indicators {
    /// `est(ν, z)` for each `ν ∈ P` (in index-set order), keyed by the parent
    /// edge of `z ∈ N+_ν` and sorted by edge.
    pub spatial: Vec<Vec<(Edge, f64)>>,
    /// `est(ν)` for `ν ∈ Q`, in index-set order.
    pub parametric: Vec<(MultiIndex, f64)>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Totals {
    pub est: f64,
    pub est_x: f64,
    pub est_p: f64,
}

impl Indicators {
    pub fn totals(&self) -> Totals {
        total(
            self.spatial.iter().flatten().map(|e| e.1),
            self.parametric.iter().map(|e| e.1),
        )
    }

    pub fn max_spatial(&self) -> f64 {
        self.spatial.iter().flatten().map(|e| e.1).fold(0.0, f64::max)
    }

    pub fn max_parametric(&self) -> f64 {
        self.parametric.iter().map(|e| e.1).fold(0.0, f64::max)
    }
}

/// `(est, est_X, est_P)` from the two indicator families.
pub fn total(spatial: impl IntoIterator<Item = f64>, parametric: impl IntoIterator<Item = f64>) -> Totals {
    let sx: f64 = spatial.into_iter().map(|v| v * v).sum();
    let sp: f64 = parametric.into_iter().map(|v| v * v).sum();
    Totals {
        est: (sx + sp).sqrt(),
        est_x: sx.sqrt(),
        est_p: sp.sqrt(),
    }
}

/// Space with the same indices and every mesh uniformly refined.
pub fn refined_space(space: &MultilevelSpace) -> MultilevelSpace {
    // shared meshes stay shared after refinement
    let meshes = space.meshes.iter().map(|m| m.uniform_refine()).collect();
    MultilevelSpace {
        indices: space.indices.clone(),
        meshes,
    }
}

/// `est(ν, z) = |F(φ̂_z P_ν) − B(u, φ̂_z P_ν)| / ‖φ̂_z‖_D` for `z ∈ N+_ν`.
pub fn spatial_indicators(
    space: &MultilevelSpace,
    u: &BlockVector,
    assembler: &Assembler,
    f: &(dyn Fn(Point) -> f64 + Sync),
) -> Result<Vec<Vec<(Edge, f64)>>> {
    let table = table_for(&[&space.indices]);
    let mut by_row: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); space.len()];
    for (i, j, m, beta) in couplings(&space.indices, &space.indices, &table, assembler.coefficient()) {
        by_row[i].push((j, m, beta));
    }
    // blocks sharing a mesh share its refinement, which lives only for this group
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in 0..space.len() {
        match groups.iter_mut().find(|g| space.meshes[g[0]].id() == space.meshes[i].id()) {
            Some(g) => g.push(i),
            None => groups.push(vec![i]),
        }
    }
    let quad = assembler.quadrature();
    let per_group: Vec<Result<Vec<BlockIndicators>>> = groups
        .par_iter()
        .map(|group| {
            let coarse = &space.meshes[group[0]];
            let fine = coarse.uniform_refine();
            // only the mean block carries the load
            let load = if group.iter().any(|&i| space.indices.get(i).is_zero()) {
                load_vector(&fine, f, quad)
            } else {
                vec![0.0; fine.n_dofs()]
            };
            let diag = stiffness_diagonal(&fine, assembler.coefficient(), 0, quad);
            let new_dofs: Vec<(usize, Edge)> = (0..fine.n_dofs())
                .filter_map(|d| {
                    let v = fine.dof_vertex(d);
                    ((v as usize) >= coarse.n_vertices())
                        .then(|| (d, fine.vertex_parents(v).expect("refined vertex has parents")))
                })
                .collect();
            group
                .iter()
                .map(|&i| {
                    let au = row_product_transient(&fine, &by_row[i], space, assembler, u)?;
                    let mean = space.indices.get(i).is_zero();
                    let mut out: Vec<(Edge, f64)> = new_dofs
                        .iter()
                        .map(|&(d, edge)| {
                            let b = if mean { load[d] } else { 0.0 };
                            (edge, (b - au[d]).abs() / diag[d].sqrt())
                        })
                        .collect();
                    out.sort_by_key(|e| e.0);
                    Ok((i, out))
                })
                .collect()
        })
        .collect();
    let mut result = vec![Vec::new(); space.len()];
    for g in per_group {
        for (i, out) in g? {
            result[i] = out;
        }
    }
    Ok(result)
}

/// `est(ν) = ‖e_ν‖_D` with `⟨e_ν, v⟩ = −B(u, v P_ν)` for all `v` on `coarse`.
pub fn parametric_indicators(
    space: &MultilevelSpace,
    u: &BlockVector,
    assembler: &Assembler,
    q: &IndexSet,
    coarse: &Arc<Mesh>,
) -> Result<Vec<(MultiIndex, f64)>> {
    if q.is_empty() {
        return Ok(Vec::new());
    }
    if q.iter().any(|nu| space.indices.contains(nu)) {
        return Err(Error::InvalidConfig("detail indices must not be active".into()));
    }
    let au = apply_shared_rows_transient(q, coarse, space, assembler, u)?;
    let factor = assembler.factors(std::slice::from_ref(coarse))?.pop().unwrap();
    Ok((0..q.len())
        .into_par_iter()
        .map(|i| {
            let r: Vec<f64> = au.block(i).iter().map(|v| -v).collect();
            let e = factor.solve(&r);
            (q.get(i).clone(), crate::sparse::dot(&e, &r).max(0.0).sqrt())
        })
        .collect())
}

/// Spatial and parametric indicators for one step.
pub fn estimate(
    space: &MultilevelSpace,
    u: &BlockVector,
    assembler: &Assembler,
    f: &(dyn Fn(Point) -> f64 + Sync),
    q: &IndexSet,
    coarse: &Arc<Mesh>,
) -> Result<Indicators> {
    Ok(Indicators {
        spatial: spatial_indicators(space, u, assembler, f)?,
        parametric: parametric_indicators(space, u, assembler, q, coarse)?,
    })
}

/// `|||u_fine − I u_coarse|||` in the energy norm of the fine space.
pub fn energy_distance(
    coarse: &MultilevelSpace,
    u_coarse: &BlockVector,
    fine: &MultilevelSpace,
    u_fine: &BlockVector,
    assembler: &Assembler,
) -> Result<f64> {
    let mut diff = embed(coarse, u_coarse, fine)?;
    diff.data.iter_mut().zip(&u_fine.data).for_each(|(d, f)| *d = f - *d);
    let op = BlockOperator::assemble(fine, assembler)?;
    let ad = op.mul(&diff)?;
    Ok(diff.dot(&ad).max(0.0).sqrt())
}

/// Enriched space `V̂`: uniformly refined meshes on `P`, `coarse` on `Q`.
pub fn enriched_space(space: &MultilevelSpace, q: &IndexSet, coarse: &Arc<Mesh>) -> Result<MultilevelSpace> {
    let indices = space.indices.extended(q.iter());
    let meshes = indices
        .iter()
        .map(|nu| match space.mesh_of(nu) {
            Some(m) => m.uniform_refine(),
            None => coarse.clone(),
        })
        .collect();
    MultilevelSpace::new(indices, meshes)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RatioCheck {
    pub est: f64,
    /// `|||û − u|||`.
    pub error: f64,
    pub ratio: f64,
    pub enriched_dofs: usize,
}

/// Solves on the enriched space and compares the estimate with the energy
/// distance between the enriched and the current Galerkin solutions.
#[allow(clippy::too_many_arguments)]
pub fn theorem_ratio_check(
    space: &MultilevelSpace,
    u: &BlockVector,
    assembler: &Assembler,
    f: &(dyn Fn(Point) -> f64 + Sync),
    q: &IndexSet,
    coarse: &Arc<Mesh>,
    cap: usize,
    solver: &SolverConfig,
) -> Result<RatioCheck> {
    let enriched = enriched_space(space, q, coarse)?;
    let size = enriched.n_dofs();
    if size > cap {
        return Err(Error::CapExceeded { size, cap });
    }
    let est = estimate(space, u, assembler, f, q, coarse)?.totals().est;
    let op = BlockOperator::assemble(&enriched, assembler)?;
    let b = assemble_rhs(&enriched, f, assembler.quadrature());
    let pc = MeanPreconditioner::new(&enriched, assembler)?;
    let mut u_hat = embed(space, u, &enriched)?;
    solve(&op, &b, &pc, &mut u_hat, solver)?;
    let error = energy_distance(space, u, &enriched, &u_hat, assembler)?;
    Ok(RatioCheck {
        est,
        error,
        ratio: est / error,
        enriched_dofs: size,
    })
}
