//! Block Galerkin system `A u = b` on a multilevel space, with cached
//! stiffness matrices and a mean-based block-diagonal preconditioner.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;

use crate::assembly::{load_vector, prolongation, stiffness_cross_many, stiffness_same, CoefficientField};
use crate::basis::{IndexSet, MultiIndex, RecurrenceTable};
use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point};
use crate::overlay::build_overlay;
use crate::quadrature::QuadratureRule;
use crate::sparse::{Cholesky, SparseMatrix};

/// Fine mesh, coarse mesh and the blocks waiting on their cross matrix.
type MeshPairRequest = (Arc<Mesh>, Arc<Mesh>, Vec<usize>);
/// `(block, m)` pair of a coefficient product.
type BlockTerm = (usize, usize);
type BlockTerms = Vec<BlockTerm>;
/// Cross-mesh products of one column mesh, per `(block, m)` term.
type TermProducts = Vec<(BlockTerm, Vec<f64>)>;

/// `V = ⊕_{ν∈P} X_ν ⊗ span{P_ν}`: one mesh per active index.
#[derive(Clone, Debug)]
pub struct MultilevelSpace {
    pub indices: IndexSet,
    pub meshes: Vec<Arc<Mesh>>,
}

impl MultilevelSpace {
    pub fn new(indices: IndexSet, meshes: Vec<Arc<Mesh>>) -> Result<Self> {
        if indices.len() != meshes.len() {
            return Err(Error::DimensionMismatch {
                expected: indices.len(),
                found: meshes.len(),
            });
        }
        Ok(MultilevelSpace { indices, meshes })
    }

    /// `P = {0}` on a single mesh.
    pub fn initial(mesh: Arc<Mesh>) -> Self {
        MultilevelSpace {
            indices: IndexSet::initial(),
            meshes: vec![mesh],
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn mesh_of(&self, nu: &MultiIndex) -> Option<&Arc<Mesh>> {
        self.indices.position(nu).map(|i| &self.meshes[i])
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.meshes.iter().map(|m| m.n_dofs()).collect()
    }

    pub fn offsets(&self) -> Vec<usize> {
        offsets_from_sizes(&self.block_sizes())
    }

    /// `N = sum_ν N_ν`.
    pub fn n_dofs(&self) -> usize {
        self.block_sizes().iter().sum()
    }
}

fn offsets_from_sizes(sizes: &[usize]) -> Vec<usize> {
    let mut off = Vec::with_capacity(sizes.len() + 1);
    off.push(0);
    for s in sizes {
        off.push(off.last().unwrap() + s);
    }
    off
}

/// Block-structured vector stored contiguously.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockVector {
    offsets: Vec<usize>,
    pub data: Vec<f64>,
}

impl BlockVector {
    pub fn zeros(sizes: &[usize]) -> Self {
        let offsets = offsets_from_sizes(sizes);
        let n = *offsets.last().unwrap();
        BlockVector {
            offsets,
            data: vec![0.0; n],
        }
    }

    pub fn from_blocks(blocks: Vec<Vec<f64>>) -> Self {
        let sizes: Vec<usize> = blocks.iter().map(Vec::len).collect();
        BlockVector {
            offsets: offsets_from_sizes(&sizes),
            data: blocks.concat(),
        }
    }

    pub fn n_blocks(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.offsets.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn block(&self, i: usize) -> &[f64] {
        &self.data[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn block_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(self.n_blocks());
        let mut rest = self.data.as_mut_slice();
        for w in self.offsets.windows(2) {
            let (head, tail) = rest.split_at_mut(w[1] - w[0]);
            out.push(head);
            rest = tail;
        }
        out
    }

    pub fn dot(&self, other: &BlockVector) -> f64 {
        crate::sparse::dot(&self.data, &other.data)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }
}

/// A cached stiffness matrix, possibly applied transposed.
#[derive(Clone, Debug)]
pub struct MatRef {
    pub matrix: Arc<SparseMatrix>,
    pub transposed: bool,
}

impl MatRef {
    pub fn nrows(&self) -> usize {
        if self.transposed {
            self.matrix.ncols()
        } else {
            self.matrix.nrows()
        }
    }

    pub fn ncols(&self) -> usize {
        if self.transposed {
            self.matrix.nrows()
        } else {
            self.matrix.ncols()
        }
    }

    /// `y += alpha * op(K) x`
    pub fn mul_add(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        if self.transposed {
            self.matrix.mul_transpose_add(alpha, x, y)
        } else {
            self.matrix.mul_add(alpha, x, y)
        }
    }

    pub fn to_matrix(&self) -> SparseMatrix {
        if self.transposed {
            self.matrix.transpose()
        } else {
            (*self.matrix).clone()
        }
    }
}

type MatKey = (u64, u64, usize);

/// Assembles and caches `K_m` between pairs of meshes, and Cholesky factors
/// of `K_0` per mesh.
///
/// Only one orientation of each mesh pair is stored; the other is applied as
/// a transpose.
pub struct Assembler {
    coeff: Arc<dyn CoefficientField>,
    quad: QuadratureRule,
    matrices: Mutex<HashMap<MatKey, Arc<SparseMatrix>>>,
    factors: Mutex<HashMap<u64, Arc<Cholesky>>>,
}

impl std::fmt::Debug for Assembler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Assembler")
            .field("coefficient", &self.coeff.description())
            .field("cached_matrices", &self.matrices.lock().unwrap().len())
            .finish()
    }
}

/// A request for `K_m` with rows on `row` and columns on `col`.
#[derive(Clone)]
pub struct MatRequest {
    pub row: Arc<Mesh>,
    pub col: Arc<Mesh>,
    pub m: usize,
}

impl Assembler {
    pub fn new(coeff: Arc<dyn CoefficientField>) -> Self {
        Self::with_quadrature(coeff, QuadratureRule::degree4())
    }

    pub fn with_quadrature(coeff: Arc<dyn CoefficientField>, quad: QuadratureRule) -> Self {
        Assembler {
            coeff,
            quad,
            matrices: Mutex::new(HashMap::new()),
            factors: Mutex::new(HashMap::new()),
        }
    }

    pub fn coefficient(&self) -> &dyn CoefficientField {
        self.coeff.as_ref()
    }

    pub fn quadrature(&self) -> &QuadratureRule {
        &self.quad
    }

    pub fn n_cached(&self) -> usize {
        self.matrices.lock().unwrap().len()
    }

    /// Drops cached data for meshes not in `live`.
    pub fn retain_meshes(&self, live: &[u64]) {
        let keep = |id: &u64| live.contains(id);
        self.matrices.lock().unwrap().retain(|k, _| keep(&k.0) && keep(&k.1));
        self.factors.lock().unwrap().retain(|k, _| keep(k));
    }

    /// Fetches or assembles all requested matrices; independent mesh pairs
    /// are assembled in parallel.
    pub fn matrices(&self, requests: &[MatRequest]) -> Result<Vec<MatRef>> {
        let canonical = |r: &MatRequest| -> (MatKey, bool) {
            let (a, b) = (r.row.id(), r.col.id());
            if a <= b {
                ((a, b, r.m), false)
            } else {
                ((b, a, r.m), true)
            }
        };
        // group the missing matrices by mesh pair
        let mut missing: HashMap<(u64, u64), MeshPairRequest> = HashMap::new();
        {
            let cache = self.matrices.lock().unwrap();
            for r in requests {
                let (key, swapped) = canonical(r);
                if cache.contains_key(&key) {
                    continue;
                }
                let (lo, hi) = if swapped { (&r.col, &r.row) } else { (&r.row, &r.col) };
                let entry = missing
                    .entry((key.0, key.1))
                    .or_insert_with(|| (lo.clone(), hi.clone(), Vec::new()));
                if !entry.2.contains(&r.m) {
                    entry.2.push(r.m);
                }
            }
        }
        let mut jobs: Vec<_> = missing.into_values().collect();
        jobs.sort_by_key(|(a, b, _)| (a.id(), b.id()));
        let built: Vec<Result<Vec<(MatKey, SparseMatrix)>>> = jobs
            .par_iter()
            .map(|(row, col, ms)| {
                let mats = if row.id() == col.id() {
                    ms.iter()
                        .map(|&m| stiffness_same(row, self.coeff.as_ref(), m, &self.quad))
                        .collect()
                } else {
                    let overlay = build_overlay(row, col)?;
                    stiffness_cross_many(row, col, &overlay, self.coeff.as_ref(), ms, &self.quad)
                };
                Ok(ms.iter().map(|&m| (row.id(), col.id(), m)).zip(mats).collect())
            })
            .collect();
        let mut cache = self.matrices.lock().unwrap();
        for b in built {
            for (k, mat) in b? {
                cache.insert(k, Arc::new(mat));
            }
        }
        Ok(requests
            .iter()
            .map(|r| {
                let (key, transposed) = canonical(r);
                MatRef {
                    matrix: cache[&key].clone(),
                    transposed,
                }
            })
            .collect())
    }

    pub fn matrix(&self, row: &Arc<Mesh>, col: &Arc<Mesh>, m: usize) -> Result<MatRef> {
        Ok(self
            .matrices(&[MatRequest {
                row: row.clone(),
                col: col.clone(),
                m,
            }])?
            .pop()
            .unwrap())
    }

    /// `K_m` with rows on `row` and columns on `col` for each `m`, taken from the
    /// cache when present and otherwise assembled without being stored.
    pub fn matrices_transient(&self, row: &Arc<Mesh>, col: &Arc<Mesh>, ms: &[usize]) -> Result<Vec<MatRef>> {
        let swapped = row.id() > col.id();
        let key = |m: usize| if swapped { (col.id(), row.id(), m) } else { (row.id(), col.id(), m) };
        let mut out: Vec<Option<MatRef>> = {
            let cache = self.matrices.lock().unwrap();
            ms.iter()
                .map(|&m| {
                    cache.get(&key(m)).map(|k| MatRef {
                        matrix: k.clone(),
                        transposed: swapped,
                    })
                })
                .collect()
        };
        let missing: Vec<usize> = ms.iter().zip(&out).filter(|(_, o)| o.is_none()).map(|(&m, _)| m).collect();
        if !missing.is_empty() {
            let mats = if row.id() == col.id() {
                missing
                    .iter()
                    .map(|&m| stiffness_same(row, self.coeff.as_ref(), m, &self.quad))
                    .collect()
            } else {
                let overlay = build_overlay(row, col)?;
                stiffness_cross_many(row, col, &overlay, self.coeff.as_ref(), &missing, &self.quad)
            };
            let mut fresh = mats.into_iter();
            for o in out.iter_mut().filter(|o| o.is_none()) {
                *o = Some(MatRef {
                    matrix: Arc::new(fresh.next().unwrap()),
                    transposed: false,
                });
            }
        }
        Ok(out.into_iter().map(Option::unwrap).collect())
    }

    /// Cholesky factors of `K_0` on each mesh, computed in parallel when missing.
    pub fn factors(&self, meshes: &[Arc<Mesh>]) -> Result<Vec<Arc<Cholesky>>> {
        let mut todo: Vec<Arc<Mesh>> = Vec::new();
        {
            let cache = self.factors.lock().unwrap();
            for m in meshes {
                if !cache.contains_key(&m.id()) && !todo.iter().any(|t| t.id() == m.id()) {
                    todo.push(m.clone());
                }
            }
        }
        let k0 = self.matrices(
            &todo
                .iter()
                .map(|m| MatRequest {
                    row: m.clone(),
                    col: m.clone(),
                    m: 0,
                })
                .collect::<Vec<_>>(),
        )?;
        let built: Vec<Result<Cholesky>> = k0.par_iter().map(|k| Cholesky::factor(&k.matrix)).collect();
        let mut cache = self.factors.lock().unwrap();
        for (m, f) in todo.iter().zip(built) {
            cache.insert(m.id(), Arc::new(f?));
        }
        Ok(meshes.iter().map(|m| cache[&m.id()].clone()).collect())
    }
}

/// One term `β K` of a block row.
#[derive(Clone, Debug)]
pub struct BlockEntry {
    pub col: usize,
    pub m: usize,
    pub beta: f64,
    pub matrix: MatRef,
}

/// Matrix-free block operator `A_{νμ} = sum_m [G_m]_{νμ} K_m^{νμ}`.
///
/// For `ν ≠ μ` at most one `m` couples the two blocks, and `A_{νν} = K_0^{νν}`.
#[derive(Clone, Debug)]
pub struct BlockOperator {
    row_sizes: Vec<usize>,
    col_sizes: Vec<usize>,
    rows: Vec<Vec<BlockEntry>>,
}

/// Couplings `(ν position, μ position, m, β)` between two index sets.
pub fn couplings(rows: &IndexSet, cols: &IndexSet, table: &RecurrenceTable, coeff: &dyn CoefficientField) -> Vec<(usize, usize, usize, f64)> {
    let col_support = cols.support();
    let mut out = Vec::new();
    for (i, nu) in rows.iter().enumerate() {
        let mut push = |mu: &MultiIndex| {
            if let Some(j) = cols.position(mu) {
                if let Some((m, beta)) = nu.coupling(mu, table) {
                    if !coeff.is_zero(m) {
                        out.push((i, j, m, beta));
                    }
                }
            }
        };
        push(nu);
        for m in col_support
            .iter()
            .copied()
            .chain(nu.support())
            .collect::<std::collections::BTreeSet<_>>()
        {
            push(&nu.raised(m));
            if let Some(down) = nu.lowered(m) {
                push(&down);
            }
        }
    }
    out.sort_by_key(|&(i, j, _, _)| (i, j));
    out.dedup_by_key(|e| (e.0, e.1));
    out
}

pub fn table_for(sets: &[&IndexSet]) -> RecurrenceTable {
    let n = sets.iter().map(|s| s.max_entry()).max().unwrap_or(0) as usize;
    RecurrenceTable::new(n + 2)
}

impl BlockOperator {
    /// Assembles (or fetches from the cache) exactly the matrices with a
    /// nonzero `G` coefficient.
    pub fn assemble(space: &MultilevelSpace, assembler: &Assembler) -> Result<Self> {
        let table = table_for(&[&space.indices]);
        let pairs = couplings(&space.indices, &space.indices, &table, assembler.coefficient());
        let requests: Vec<MatRequest> = pairs
            .iter()
            .map(|&(i, j, m, _)| MatRequest {
                row: space.meshes[i].clone(),
                col: space.meshes[j].clone(),
                m,
            })
            .collect();
        let mats = assembler.matrices(&requests)?;
        let mut rows = vec![Vec::new(); space.len()];
        for ((i, j, m, beta), matrix) in pairs.into_iter().zip(mats) {
            rows[i].push(BlockEntry {
                col: j,
                m,
                beta,
                matrix,
            });
        }
        let sizes = space.block_sizes();
        Ok(BlockOperator {
            row_sizes: sizes.clone(),
            col_sizes: sizes,
            rows,
        })
    }

    /// Rectangular operator with rows on `row_space` and columns on `col_space`.
    pub fn assemble_rect(row_space: &MultilevelSpace, col_space: &MultilevelSpace, assembler: &Assembler) -> Result<Self> {
        let table = table_for(&[&row_space.indices, &col_space.indices]);
        let pairs = couplings(&row_space.indices, &col_space.indices, &table, assembler.coefficient());
        let requests: Vec<MatRequest> = pairs
            .iter()
            .map(|&(i, j, m, _)| MatRequest {
                row: row_space.meshes[i].clone(),
                col: col_space.meshes[j].clone(),
                m,
            })
            .collect();
        let mats = assembler.matrices(&requests)?;
        let mut rows = vec![Vec::new(); row_space.len()];
        for ((i, j, m, beta), matrix) in pairs.into_iter().zip(mats) {
            rows[i].push(BlockEntry {
                col: j,
                m,
                beta,
                matrix,
            });
        }
        Ok(BlockOperator {
            row_sizes: row_space.block_sizes(),
            col_sizes: col_space.block_sizes(),
            rows,
        })
    }

    pub fn row_sizes(&self) -> &[usize] {
        &self.row_sizes
    }

    pub fn col_sizes(&self) -> &[usize] {
        &self.col_sizes
    }

    pub fn block_row(&self, i: usize) -> &[BlockEntry] {
        &self.rows[i]
    }

    /// Number of distinct stiffness matrices referenced (a matrix used in
    /// both orientations counts once).
    pub fn n_stored_matrices(&self) -> usize {
        let mut ptrs: Vec<*const SparseMatrix> = self
            .rows
            .iter()
            .flatten()
            .map(|e| Arc::as_ptr(&e.matrix.matrix))
            .collect();
        ptrs.sort();
        ptrs.dedup();
        ptrs.len()
    }

    /// `y = A x`, parallel over row blocks.
    pub fn apply(&self, x: &BlockVector, y: &mut BlockVector) -> Result<()> {
        if x.sizes() != self.col_sizes || y.sizes() != self.row_sizes {
            return Err(Error::DimensionMismatch {
                expected: self.col_sizes.iter().sum(),
                found: x.len(),
            });
        }
        y.blocks_mut()
            .into_par_iter()
            .zip(self.rows.par_iter())
            .for_each(|(yi, row)| {
                yi.iter_mut().for_each(|v| *v = 0.0);
                for e in row {
                    e.matrix.mul_add(e.beta, x.block(e.col), yi);
                }
            });
        Ok(())
    }

    pub fn mul(&self, x: &BlockVector) -> Result<BlockVector> {
        let mut y = BlockVector::zeros(&self.row_sizes);
        self.apply(x, &mut y)?;
        Ok(y)
    }

    /// Dense matrix for small instances.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let (ro, co) = (offsets_from_sizes(&self.row_sizes), offsets_from_sizes(&self.col_sizes));
        let mut d = vec![vec![0.0; *co.last().unwrap()]; *ro.last().unwrap()];
        for (i, row) in self.rows.iter().enumerate() {
            for e in row {
                let k = e.matrix.to_matrix().to_dense();
                for (r, kr) in k.iter().enumerate() {
                    for (c, &v) in kr.iter().enumerate() {
                        d[ro[i] + r][co[e.col] + c] += e.beta * v;
                    }
                }
            }
        }
        d
    }
}

/// `A x` for the coupling between two spaces without caching new matrices.
/// Block rows are processed independently, so only the matrices of one row
/// are alive per worker.
pub fn apply_rect_transient(
    row_space: &MultilevelSpace,
    col_space: &MultilevelSpace,
    assembler: &Assembler,
    x: &BlockVector,
) -> Result<BlockVector> {
    let table = table_for(&[&row_space.indices, &col_space.indices]);
    let pairs = couplings(&row_space.indices, &col_space.indices, &table, assembler.coefficient());
    let mut by_row: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); row_space.len()];
    for (i, j, m, beta) in pairs {
        by_row[i].push((j, m, beta));
    }
    let blocks: Vec<Result<Vec<f64>>> = by_row
        .par_iter()
        .enumerate()
        .map(|(i, row)| row_product_transient(&row_space.meshes[i], row, col_space, assembler, x))
        .collect();
    Ok(BlockVector::from_blocks(blocks.into_iter().collect::<Result<_>>()?))
}

/// `Σ β K_m(row_mesh, T_j) x_j` over the terms `(j, m, β)` of one block row,
/// with one overlay per distinct column mesh and no caching of new matrices.
pub fn row_product_transient(
    row_mesh: &Arc<Mesh>,
    row: &[(usize, usize, f64)],
    col_space: &MultilevelSpace,
    assembler: &Assembler,
    x: &BlockVector,
) -> Result<Vec<f64>> {
    let mut y = vec![0.0; row_mesh.n_dofs()];
    let mut done = vec![false; row.len()];
    for k in 0..row.len() {
        if done[k] {
            continue;
        }
        let col_mesh = &col_space.meshes[row[k].0];
        let group: Vec<usize> = (k..row.len())
            .filter(|&l| !done[l] && col_space.meshes[row[l].0].id() == col_mesh.id())
            .collect();
        let mut ms: Vec<usize> = group.iter().map(|&l| row[l].1).collect();
        ms.sort_unstable();
        ms.dedup();
        let mats = assembler.matrices_transient(row_mesh, col_mesh, &ms)?;
        for &l in &group {
            let (j, m, beta) = row[l];
            mats[ms.binary_search(&m).unwrap()].mul_add(beta, x.block(j), &mut y);
            done[l] = true;
        }
    }
    Ok(y)
}

/// `A x` for rows on `rows` that all live on `row_mesh`. Matrices are
/// assembled once per column mesh and not cached.
pub fn apply_shared_rows_transient(
    rows: &IndexSet,
    row_mesh: &Arc<Mesh>,
    col_space: &MultilevelSpace,
    assembler: &Assembler,
    x: &BlockVector,
) -> Result<BlockVector> {
    let table = table_for(&[rows, &col_space.indices]);
    let pairs = couplings(rows, &col_space.indices, &table, assembler.coefficient());
    // needed (column block, m) products, grouped by column mesh
    let mut groups: Vec<(Arc<Mesh>, BlockTerms)> = Vec::new();
    for &(_, j, m, _) in &pairs {
        let mesh = &col_space.meshes[j];
        let pos = match groups.iter().position(|g| g.0.id() == mesh.id()) {
            Some(p) => p,
            None => {
                groups.push((mesh.clone(), Vec::new()));
                groups.len() - 1
            }
        };
        if !groups[pos].1.contains(&(j, m)) {
            groups[pos].1.push((j, m));
        }
    }
    let products: Vec<Result<TermProducts>> = groups
        .par_iter()
        .map(|(col_mesh, jm)| {
            let mut ms: Vec<usize> = jm.iter().map(|e| e.1).collect();
            ms.sort_unstable();
            ms.dedup();
            let mats = assembler.matrices_transient(row_mesh, col_mesh, &ms)?;
            Ok(jm
                .iter()
                .map(|&(j, m)| {
                    let mut w = vec![0.0; row_mesh.n_dofs()];
                    mats[ms.binary_search(&m).unwrap()].mul_add(1.0, x.block(j), &mut w);
                    ((j, m), w)
                })
                .collect())
        })
        .collect();
    let mut w: HashMap<(usize, usize), Vec<f64>> = HashMap::new();
    for p in products {
        w.extend(p?);
    }
    let mut y = BlockVector::zeros(&vec![row_mesh.n_dofs(); rows.len()]);
    for (i, j, m, beta) in pairs {
        axpy(beta, &w[&(j, m)], y.block_mut(i));
    }
    Ok(y)
}

/// Embeds `u` from `coarse` into `fine`: blocks of shared indices are
/// interpolated onto the (refined) fine mesh, new indices start at zero.
pub fn embed(coarse: &MultilevelSpace, u: &BlockVector, fine: &MultilevelSpace) -> Result<BlockVector> {
    let blocks: Vec<Result<Vec<f64>>> = fine
        .indices
        .iter()
        .zip(&fine.meshes)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(nu, mesh)| match coarse.indices.position(nu) {
            None => Ok(vec![0.0; mesh.n_dofs()]),
            Some(j) if coarse.meshes[j].id() == mesh.id() => Ok(u.block(j).to_vec()),
            Some(j) => Ok(prolongation(&coarse.meshes[j], mesh)?.mul(u.block(j))),
        })
        .collect();
    Ok(BlockVector::from_blocks(blocks.into_iter().collect::<Result<_>>()?))
}

/// `b_0 = ∫ f φ_i` on the mesh of the zero index, `b_ν = 0` otherwise.
pub fn assemble_rhs(space: &MultilevelSpace, f: &dyn Fn(Point) -> f64, quad: &QuadratureRule) -> BlockVector {
    let mut b = BlockVector::zeros(&space.block_sizes());
    if let Some(i) = space.indices.position(&MultiIndex::zero()) {
        let v = load_vector(&space.meshes[i], f, quad);
        b.block_mut(i).copy_from_slice(&v);
    }
    b
}

/// Block-diagonal preconditioner with blocks `K_0^{νν}`.
#[derive(Clone, Debug)]
pub struct MeanPreconditioner {
    factors: Vec<Arc<Cholesky>>,
}

impl MeanPreconditioner {
    pub fn new(space: &MultilevelSpace, assembler: &Assembler) -> Result<Self> {
        Ok(MeanPreconditioner {
            factors: assembler.factors(&space.meshes)?,
        })
    }

    /// `z = M^{-1} r`
    pub fn apply(&self, r: &BlockVector, z: &mut BlockVector) {
        z.data.copy_from_slice(&r.data);
        z.blocks_mut()
            .into_par_iter()
            .zip(self.factors.par_iter())
            .for_each(|(zi, f)| f.solve_in_place(zi));
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum KrylovMethod {
    #[default]
    Minres,
    Cg,
}

impl std::str::FromStr for KrylovMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "minres" => Ok(KrylovMethod::Minres),
            "cg" => Ok(KrylovMethod::Cg),
            _ => Err(Error::InvalidConfig(format!("unknown solver '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig {
    pub method: KrylovMethod,
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            method: KrylovMethod::Minres,
            tol: 1e-9,
            max_iterations: 200,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolveStats {
    pub iterations: usize,
    /// Preconditioned residual norms relative to the preconditioned rhs norm,
    /// starting with the initial residual.
    pub residual_history: Vec<f64>,
}

/// Solves `A x = b` starting from `x`; stops when the preconditioned residual
/// norm relative to the preconditioned rhs norm is at most `config.tol`.
pub fn solve(
    op: &BlockOperator,
    b: &BlockVector,
    precond: &MeanPreconditioner,
    x: &mut BlockVector,
    config: &SolverConfig,
) -> Result<SolveStats> {
    match config.method {
        KrylovMethod::Minres => minres(op, b, precond, x, config),
        KrylovMethod::Cg => cg(op, b, precond, x, config),
    }
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

fn not_converged(iterations: usize, history: Vec<f64>) -> Error {
    Error::NotConverged {
        iterations,
        last: history.last().copied().unwrap_or(f64::NAN),
        residual_history: history,
    }
}

fn minres(
    op: &BlockOperator,
    b: &BlockVector,
    precond: &MeanPreconditioner,
    x: &mut BlockVector,
    config: &SolverConfig,
) -> Result<SolveStats> {
    let sizes = b.sizes();
    let mut z = BlockVector::zeros(&sizes);
    precond.apply(b, &mut z);
    let b_norm = z.dot(b).max(0.0).sqrt();
    if b_norm == 0.0 {
        x.data.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats {
            iterations: 0,
            residual_history: vec![0.0],
        });
    }
    // v holds the unnormalised Lanczos vectors, z = M^{-1} v
    let mut v = op.mul(x)?;
    v.data.iter_mut().zip(&b.data).for_each(|(vi, bi)| *vi = bi - *vi);
    precond.apply(&v, &mut z);
    let mut gamma = z.dot(&v).max(0.0).sqrt();
    let mut history = vec![gamma / b_norm];
    if gamma / b_norm <= config.tol {
        return Ok(SolveStats {
            iterations: 0,
            residual_history: history,
        });
    }
    let mut v_prev = BlockVector::zeros(&sizes);
    let mut w = BlockVector::zeros(&sizes);
    let mut w_prev = BlockVector::zeros(&sizes);
    let mut az = BlockVector::zeros(&sizes);
    let mut gamma_prev = 1.0;
    let mut eta = gamma;
    let (mut c, mut c_prev, mut s, mut s_prev) = (1.0, 1.0, 0.0, 0.0);
    for it in 1..=config.max_iterations {
        z.data.iter_mut().for_each(|zi| *zi /= gamma);
        op.apply(&z, &mut az)?;
        let delta = az.dot(&z);
        // v_new = A z - (δ/γ) v - (γ/γ_prev) v_prev, stored in v_prev
        for ((vp, &a), &vi) in v_prev.data.iter_mut().zip(&az.data).zip(&v.data) {
            *vp = a - delta / gamma * vi - gamma / gamma_prev * *vp;
        }
        std::mem::swap(&mut v, &mut v_prev);
        let mut z_new = BlockVector::zeros(&sizes);
        precond.apply(&v, &mut z_new);
        let gamma_new = z_new.dot(&v).max(0.0).sqrt();
        let alpha0 = c * delta - c_prev * s * gamma;
        let alpha1 = (alpha0 * alpha0 + gamma_new * gamma_new).sqrt();
        let alpha2 = s * delta + c_prev * c * gamma;
        let alpha3 = s_prev * gamma;
        c_prev = c;
        c = alpha0 / alpha1;
        s_prev = s;
        s = gamma_new / alpha1;
        // w_new = (z - α3 w_prev - α2 w) / α1, stored in w_prev
        for ((wp, &zi), &wi) in w_prev.data.iter_mut().zip(&z.data).zip(&w.data) {
            *wp = (zi - alpha3 * *wp - alpha2 * wi) / alpha1;
        }
        std::mem::swap(&mut w, &mut w_prev);
        axpy(c * eta, &w.data, &mut x.data);
        eta *= -s;
        history.push(eta.abs() / b_norm);
        if eta.abs() / b_norm <= config.tol {
            return Ok(SolveStats {
                iterations: it,
                residual_history: history,
            });
        }
        gamma_prev = gamma;
        gamma = gamma_new;
        z = z_new;
        if gamma == 0.0 {
            // exact invariant subspace
            return Ok(SolveStats {
                iterations: it,
                residual_history: history,
            });
        }
    }
    Err(not_converged(config.max_iterations, history))
}

fn cg(
    op: &BlockOperator,
    b: &BlockVector,
    precond: &MeanPreconditioner,
    x: &mut BlockVector,
    config: &SolverConfig,
) -> Result<SolveStats> {
    let sizes = b.sizes();
    let mut z = BlockVector::zeros(&sizes);
    precond.apply(b, &mut z);
    let b_norm = z.dot(b).max(0.0).sqrt();
    if b_norm == 0.0 {
        x.data.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats {
            iterations: 0,
            residual_history: vec![0.0],
        });
    }
    let mut r = op.mul(x)?;
    r.data.iter_mut().zip(&b.data).for_each(|(ri, bi)| *ri = bi - *ri);
    precond.apply(&r, &mut z);
    let mut rz = z.dot(&r);
    let mut history = vec![rz.max(0.0).sqrt() / b_norm];
    if history[0] <= config.tol {
        return Ok(SolveStats {
            iterations: 0,
            residual_history: history,
        });
    }
    let mut p = z.clone();
    let mut ap = BlockVector::zeros(&sizes);
    for it in 1..=config.max_iterations {
        op.apply(&p, &mut ap)?;
        let alpha = rz / p.dot(&ap);
        axpy(alpha, &p.data, &mut x.data);
        axpy(-alpha, &ap.data, &mut r.data);
        precond.apply(&r, &mut z);
        let rz_new = z.dot(&r);
        let rel = rz_new.max(0.0).sqrt() / b_norm;
        history.push(rel);
        if rel <= config.tol {
            return Ok(SolveStats {
                iterations: it,
                residual_history: history,
            });
        }
        let beta = rz_new / rz;
        rz = rz_new;
        p.data.iter_mut().zip(&z.data).for_each(|(pi, zi)| *pi = zi + beta * *pi);
    }
    Err(not_converged(config.max_iterations, history))
}
