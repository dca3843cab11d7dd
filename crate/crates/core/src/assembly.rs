//! P1 finite element assembly on single meshes and on pairs of meshes.
//!
//! Only interior vertices carry degrees of freedom; Dirichlet boundary
//! vertices are never assembled.

use log::warn;

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point};
use crate::overlay::{build_overlay, Overlay};
use crate::quadrature::QuadratureRule;
use crate::sparse::SparseMatrix;

/// Affine coefficient family `a(x, y) = a_0(x) + sum_m y_m a_m(x)`.
pub trait CoefficientField: Send + Sync {
    /// `a_m(x)`; `m = 0` is the mean field.
    fn eval(&self, m: usize, x: Point) -> f64;

    /// Largest `m` with `a_m ≠ 0`, or `None` for an infinite expansion.
    fn max_active_m(&self) -> Option<usize>;

    fn a0_min(&self) -> f64;

    fn a0_max(&self) -> f64;

    /// `‖a_m‖_∞`.
    fn sup_norm(&self, m: usize) -> f64;

    /// Analytic upper bound for `‖sum_{m≥1} |a_m|‖_∞ / a0_min`, if known.
    fn tau_bound(&self) -> Option<f64> {
        None
    }

    fn description(&self) -> String;

    fn is_zero(&self, m: usize) -> bool {
        m > 0 && self.max_active_m().is_some_and(|mm| m > mm)
    }

    /// `∫_T a_m` over a triangle. The default applies `quad` directly.
    fn cell_integral(&self, m: usize, tri: [Point; 3], quad: &QuadratureRule) -> f64 {
        if self.is_zero(m) {
            return 0.0;
        }
        quad.integrate(tri, |x| self.eval(m, x))
    }
}

/// Stiffness matrix of a hat basis with constant coefficient on one triangle.
pub fn local_stiffness(tri: [Point; 3]) -> [[f64; 3]; 3] {
    let g = crate::mesh::element_geometry(tri);
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k[i][j] = g.area * (g.grads[i][0] * g.grads[j][0] + g.grads[i][1] * g.grads[j][1]);
        }
    }
    k
}

/// `∫ a_m ∇φ_j · ∇φ_i` over the interior dofs of one mesh.
pub fn stiffness_same(mesh: &Mesh, coeff: &dyn CoefficientField, m: usize, quad: &QuadratureRule) -> SparseMatrix {
    let n = mesh.n_dofs();
    if coeff.is_zero(m) {
        return SparseMatrix::zeros(n, n);
    }
    let geom = mesh.geometry();
    let mut t = Vec::with_capacity(mesh.n_elements() * 9);
    for (e, el) in mesh.elements().iter().enumerate() {
        let integral = coeff.cell_integral(m, mesh.element_points(e), quad);
        if integral == 0.0 {
            continue;
        }
        let g = &geom[e].grads;
        let dofs = el.vertices.map(|v| mesh.dof(v));
        for i in 0..3 {
            let Some(di) = dofs[i] else { continue };
            for j in 0..3 {
                let Some(dj) = dofs[j] else { continue };
                let v = (g[i][0] * g[j][0] + g[i][1] * g[j][1]) * integral;
                t.push((di as u32, dj as u32, v));
            }
        }
    }
    SparseMatrix::from_triplets(n, n, t)
}

/// Diagonal of [`stiffness_same`].
pub fn stiffness_diagonal(mesh: &Mesh, coeff: &dyn CoefficientField, m: usize, quad: &QuadratureRule) -> Vec<f64> {
    let mut d = vec![0.0; mesh.n_dofs()];
    if coeff.is_zero(m) {
        return d;
    }
    let geom = mesh.geometry();
    for (e, el) in mesh.elements().iter().enumerate() {
        let integral = coeff.cell_integral(m, mesh.element_points(e), quad);
        let g = &geom[e].grads;
        for (i, &v) in el.vertices.iter().enumerate() {
            if let Some(di) = mesh.dof(v) {
                d[di] += (g[i][0] * g[i][0] + g[i][1] * g[i][1]) * integral;
            }
        }
    }
    d
}

/// `[K]_ij = ∫ a_m ∇φ^col_j · ∇φ^row_i` with test functions on `row` and trial
/// functions on `col`, integrated over the overlay of the two meshes.
///
/// Swapping the meshes yields the exact transpose.
pub fn stiffness_cross(
    row: &Mesh,
    col: &Mesh,
    coeff: &dyn CoefficientField,
    m: usize,
    quad: &QuadratureRule,
) -> Result<SparseMatrix> {
    if row.id() == col.id() {
        return Ok(stiffness_same(row, coeff, m, quad));
    }
    let overlay = build_overlay(row, col)?;
    Ok(stiffness_cross_many(row, col, &overlay, coeff, &[m], quad).pop().unwrap())
}

/// Cross-mesh stiffness matrices for several `m` sharing one overlay.
pub fn stiffness_cross_many(
    row: &Mesh,
    col: &Mesh,
    overlay: &Overlay,
    coeff: &dyn CoefficientField,
    ms: &[usize],
    quad: &QuadratureRule,
) -> Vec<SparseMatrix> {
    let (gr, gc) = (row.geometry(), col.geometry());
    let (nr, nc) = (row.n_dofs(), col.n_dofs());
    let mut triplets: Vec<Vec<(u32, u32, f64)>> = ms.iter().map(|_| Vec::new()).collect();
    let mut integrals = vec![0.0; ms.len()];
    for (k, cell) in overlay.cells.iter().enumerate() {
        let (tr, tc) = cell.pair();
        let tri = overlay.cell_points(k, row, col);
        let mut any = false;
        for (s, &m) in ms.iter().enumerate() {
            integrals[s] = coeff.cell_integral(m, tri, quad);
            any |= integrals[s] != 0.0;
        }
        if !any {
            continue;
        }
        let (er, ec) = (row.element(tr as usize), col.element(tc as usize));
        let (g_r, g_c) = (&gr[tr as usize].grads, &gc[tc as usize].grads);
        for i in 0..3 {
            let Some(di) = row.dof(er.vertices[i]) else { continue };
            for j in 0..3 {
                let Some(dj) = col.dof(ec.vertices[j]) else { continue };
                let dot = g_r[i][0] * g_c[j][0] + g_r[i][1] * g_c[j][1];
                for (s, &integral) in integrals.iter().enumerate() {
                    if integral != 0.0 {
                        triplets[s].push((di as u32, dj as u32, dot * integral));
                    }
                }
            }
        }
    }
    triplets
        .into_iter()
        .map(|t| SparseMatrix::from_triplets(nr, nc, t))
        .collect()
}

/// `[b]_i = ∫ f φ_i` over the interior dofs.
pub fn load_vector(mesh: &Mesh, f: &dyn Fn(Point) -> f64, quad: &QuadratureRule) -> Vec<f64> {
    let mut b = vec![0.0; mesh.n_dofs()];
    for (e, el) in mesh.elements().iter().enumerate() {
        let tri = mesh.element_points(e);
        let dofs = el.vertices.map(|v| mesh.dof(v));
        if dofs.iter().all(Option::is_none) {
            continue;
        }
        let jac = 2.0 * mesh.geometry()[e].area;
        let mut local = [0.0; 3];
        for (p, w) in quad.points.iter().zip(&quad.weights) {
            let lambda = [1.0 - p[0] - p[1], p[0], p[1]];
            let x = [
                lambda[0] * tri[0][0] + lambda[1] * tri[1][0] + lambda[2] * tri[2][0],
                lambda[0] * tri[0][1] + lambda[1] * tri[1][1] + lambda[2] * tri[2][1],
            ];
            let fx = w * jac * f(x);
            for k in 0..3 {
                local[k] += fx * lambda[k];
            }
        }
        for k in 0..3 {
            if let Some(d) = dofs[k] {
                b[d] += local[k];
            }
        }
    }
    b
}

/// `‖v‖_D = (vᵀ K_0 v)^{1/2}`.
pub fn energy_norm(mesh: &Mesh, coeff: &dyn CoefficientField, dofs: &[f64]) -> Result<f64> {
    if dofs.len() != mesh.n_dofs() {
        return Err(Error::DimensionMismatch {
            expected: mesh.n_dofs(),
            found: dofs.len(),
        });
    }
    let k0 = stiffness_same(mesh, coeff, 0, &QuadratureRule::degree4());
    let kv = k0.mul(dofs);
    Ok(crate::sparse::dot(dofs, &kv).max(0.0).sqrt())
}

/// Interpolation from `coarse` onto a refinement `fine`, as a
/// `fine.n_dofs() x coarse.n_dofs()` matrix.
pub fn prolongation(coarse: &Mesh, fine: &Mesh) -> Result<SparseMatrix> {
    if !fine.refines(coarse) {
        return Err(Error::NotNested {
            coarse: coarse.id(),
            fine: fine.id(),
        });
    }
    let nc = coarse.n_vertices();
    // each fine vertex as a combination of coarse interior dofs
    let mut combos: Vec<Vec<(u32, f64)>> = Vec::with_capacity(fine.n_vertices());
    for v in 0..fine.n_vertices() as u32 {
        let c = if (v as usize) < nc {
            coarse.dof(v).map(|d| vec![(d as u32, 1.0)]).unwrap_or_default()
        } else {
            let e = fine.vertex_parents(v).expect("new vertex without parents");
            let mut c: Vec<(u32, f64)> = combos[e.0 as usize]
                .iter()
                .chain(&combos[e.1 as usize])
                .map(|&(d, w)| (d, 0.5 * w))
                .collect();
            c.sort_by_key(|p| p.0);
            c.dedup_by(|b, a| {
                if a.0 == b.0 {
                    a.1 += b.1;
                    true
                } else {
                    false
                }
            });
            c
        };
        combos.push(c);
    }
    let mut t = Vec::new();
    for d in 0..fine.n_dofs() {
        for &(c, w) in &combos[fine.dof_vertex(d) as usize] {
            t.push((d as u32, c, w));
        }
    }
    Ok(SparseMatrix::from_triplets(fine.n_dofs(), coarse.n_dofs(), t))
}

/// Result of [`validate_coefficient`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoefficientBounds {
    pub tau: f64,
    pub lambda: f64,
    pub big_lambda: f64,
    /// Largest sampled value of the truncated sum, before any analytic bound.
    pub sampled_tau: f64,
    pub admissible: bool,
}

/// Estimates `τ = ‖sum_m |a_m|‖_∞ / a0_min` on `points` and returns `(τ, 1−τ, 1+τ)`.
///
/// For infinite expansions the sum is truncated at `truncation` terms and the
/// analytic bound of the family, when available, takes precedence.
pub fn validate_coefficient(coeff: &dyn CoefficientField, points: &[Point], truncation: usize) -> CoefficientBounds {
    let m_max = coeff.max_active_m().unwrap_or(truncation).min(truncation);
    let sampled = points
        .iter()
        .map(|&x| (1..=m_max).map(|m| coeff.eval(m, x).abs()).sum::<f64>())
        .fold(0.0, f64::max)
        / coeff.a0_min();
    let tau = match coeff.tau_bound() {
        Some(b) => b.max(sampled),
        None => sampled,
    };
    let admissible = coeff.a0_min() > 0.0 && tau < 1.0;
    if !admissible {
        warn!("coefficient {} is not uniformly elliptic: tau = {tau}", coeff.description());
    }
    CoefficientBounds {
        tau,
        lambda: 1.0 - tau,
        big_lambda: 1.0 + tau,
        sampled_tau: sampled,
        admissible,
    }
}
