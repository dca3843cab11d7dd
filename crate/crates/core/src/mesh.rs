//! Conforming triangulations refined by newest-vertex bisection (NVB).
//!
//! Every element stores its vertices as `(v0, v1, v2)` where `(v0, v1)` is the
//! refinement edge and `v2` is the newest vertex. Bisecting `(v0, v1, v2)` at
//! the midpoint `m` of `(v0, v1)` yields the children `(v2, v0, m)` and
//! `(v1, v2, m)`, in that order. Because this rule is deterministic, every
//! element of every mesh in `refine(T_0)` is a node of one fixed binary tree
//! per initial element; [`Element`] records its position in that tree, which
//! is what the overlay module uses to pair up elements of different meshes.
//!
//! Vertex ids are stable under refinement: a refined mesh keeps the vertices
//! of its parent mesh and appends the new midpoints. Marked vertices are
//! therefore identified by the (sorted) pair of parent vertex ids.

use std::collections::BTreeSet;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::io::Write;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, OnceLock};

use rustc_hash::{FxHashMap, FxHasher};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Maximum number of bisections between an element and its initial ancestor.
pub const MAX_LEVEL: usize = 127;

const NONE: u32 = u32::MAX;

static NEXT_MESH_ID: AtomicU64 = AtomicU64::new(1);

/// An undirected edge given by its two vertex ids, smaller id first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge(pub u32, pub u32);

impl Edge {
    pub fn new(a: u32, b: u32) -> Self {
        if a <= b {
            Edge(a, b)
        } else {
            Edge(b, a)
        }
    }
}

/// A vertex view with its coordinates and boundary flag.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vertex {
    pub id: usize,
    pub x: f64,
    pub y: f64,
    pub on_boundary: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Element {
    /// `(v0, v1, v2)`; refinement edge `(v0, v1)`, newest vertex `v2`.
    pub vertices: [u32; 3],
    /// Number of bisections separating the element from its initial ancestor.
    pub level: u8,
    /// Index of the containing element of the initial mesh.
    pub ancestor: u32,
    /// Child choices from the ancestor down: bit `k` is the choice made at depth `k`.
    path: u128,
}

impl Element {
    pub fn refinement_edge(&self) -> Edge {
        Edge::new(self.vertices[0], self.vertices[1])
    }

    pub fn newest_vertex(&self) -> u32 {
        self.vertices[2]
    }

    /// Raw bisection path (bit `k` = child taken at depth `k`).
    pub fn path(&self) -> u128 {
        self.path
    }

    /// Depth-first position of this element inside its ancestor's bisection tree.
    ///
    /// Leaves of one mesh are totally ordered by `(ancestor, dfs_key)`; the
    /// descendants of a node form the contiguous key range [`Element::subtree_range`].
    pub fn dfs_key(&self) -> u128 {
        self.path.reverse_bits()
    }

    pub fn subtree_range(&self) -> (u128, u128) {
        let lo = self.dfs_key();
        let hi = if self.level == 0 {
            u128::MAX
        } else {
            lo | (u128::MAX >> self.level)
        };
        (lo, hi)
    }

    /// True if `self` is `other` or one of its NVB descendants.
    pub fn is_descendant_of(&self, other: &Element) -> bool {
        if self.ancestor != other.ancestor || self.level < other.level {
            return false;
        }
        let mask = if other.level == 0 {
            0
        } else {
            u128::MAX >> (128 - other.level as u32)
        };
        (self.path ^ other.path) & mask == 0
    }
}

/// Subset of the new interior vertices `N+` of a mesh, keyed by parent edge.
pub type MarkedVertexSet = BTreeSet<Edge>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RootInfo {
    pub fingerprint: u64,
    pub n_elements: usize,
}

/// Per-element affine data.
#[derive(Clone, Copy, Debug)]
pub struct ElementGeometry {
    pub area: f64,
    /// Gradients of the three barycentric hat functions, in local vertex order.
    pub grads: [Point; 3],
    pub centroid: Point,
    pub diameter: f64,
}

/// Edge connectivity of a mesh.
#[derive(Debug)]
pub struct EdgeTable {
    pub edges: Vec<Edge>,
    /// Local edges of each element: 0 = `(v0, v1)`, 1 = `(v1, v2)`, 2 = `(v2, v0)`.
    pub element_edges: Vec<[u32; 3]>,
    /// Elements adjacent to each edge; the second slot is `u32::MAX` on the boundary.
    pub edge_elements: Vec<[u32; 2]>,
    index: FxHashMap<Edge, u32>,
}

impl EdgeTable {
    fn build(elements: &[Element]) -> Self {
        let mut index: FxHashMap<Edge, u32> = FxHashMap::default();
        index.reserve(elements.len() * 3 / 2 + 8);
        let mut edges = Vec::with_capacity(elements.len() * 3 / 2 + 8);
        let mut edge_elements: Vec<[u32; 2]> = Vec::with_capacity(edges.capacity());
        let mut element_edges = Vec::with_capacity(elements.len());
        for (t, el) in elements.iter().enumerate() {
            let [a, b, c] = el.vertices;
            let mut local = [0u32; 3];
            for (k, e) in [Edge::new(a, b), Edge::new(b, c), Edge::new(c, a)]
                .into_iter()
                .enumerate()
            {
                let idx = *index.entry(e).or_insert_with(|| {
                    edges.push(e);
                    edge_elements.push([NONE, NONE]);
                    (edges.len() - 1) as u32
                });
                let slot = &mut edge_elements[idx as usize];
                if slot[0] == NONE {
                    slot[0] = t as u32;
                } else {
                    slot[1] = t as u32;
                }
                local[k] = idx;
            }
            element_edges.push(local);
        }
        EdgeTable {
            edges,
            element_edges,
            edge_elements,
            index,
        }
    }

    pub fn find(&self, e: Edge) -> Option<usize> {
        self.index.get(&e).map(|&i| i as usize)
    }

    pub fn is_interior(&self, edge: usize) -> bool {
        self.edge_elements[edge][1] != NONE
    }
}

/// Supported initial domains.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Domain {
    /// `(0,1)^2` split into `n x n` squares, two right triangles each.
    UnitSquare { n: usize },
    /// `(-1,1)^2 \ (-1,0]^2` with `n` squares per unit length.
    LShape { n: usize },
}

impl FromStr for Domain {
    type Err = Error;

    /// Accepts `square:<n>` and `lshape:<n>`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, n) = s
            .split_once(':')
            .ok_or_else(|| Error::UnsupportedDomain(s.to_string()))?;
        let n: usize = n
            .trim()
            .parse()
            .map_err(|_| Error::UnsupportedDomain(s.to_string()))?;
        match kind.trim() {
            "square" => Ok(Domain::UnitSquare { n }),
            "lshape" => Ok(Domain::LShape { n }),
            _ => Err(Error::UnsupportedDomain(s.to_string())),
        }
    }
}

impl Domain {
    pub fn area(&self) -> f64 {
        match self {
            Domain::UnitSquare { .. } => 1.0,
            Domain::LShape { .. } => 3.0,
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        match self {
            Domain::UnitSquare { .. } => (0.0..=1.0).contains(&p[0]) && (0.0..=1.0).contains(&p[1]),
            Domain::LShape { .. } => {
                (-1.0..=1.0).contains(&p[0])
                    && (-1.0..=1.0).contains(&p[1])
                    && !(p[0] < 0.0 && p[1] < 0.0)
            }
        }
    }
}

/// A conforming triangulation obtained from an initial mesh by NVB.
///
/// Meshes are immutable; refinement returns a new mesh with a fresh id.
pub struct Mesh {
    id: u64,
    root: RootInfo,
    lineage: Vec<u64>,
    coords: Vec<Point>,
    boundary: Vec<bool>,
    parents: Vec<Option<Edge>>,
    elements: Vec<Element>,
    dof_of_vertex: Vec<u32>,
    vertex_of_dof: Vec<u32>,
    geometry: OnceLock<Vec<ElementGeometry>>,
    edge_table: OnceLock<EdgeTable>,
    buckets: OnceLock<Vec<Vec<u32>>>,
}

impl fmt::Debug for Mesh {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Mesh")
            .field("id", &self.id)
            .field("n_vertices", &self.coords.len())
            .field("n_elements", &self.elements.len())
            .field("n_dofs", &self.vertex_of_dof.len())
            .finish()
    }
}

/// Builds the initial mesh for a supported domain.
pub fn initial_mesh(domain: &Domain) -> Result<Mesh> {
    type Skip = fn(f64, f64) -> bool;
    let (n, origin, cells_per_side, skip): (usize, f64, usize, Skip) = match *domain {
        Domain::UnitSquare { n } => (n, 0.0, n, |_, _| false),
        Domain::LShape { n } => (n, -1.0, 2 * n, |cx, cy| cx < 0.0 && cy < 0.0),
    };
    if n == 0 {
        return Err(Error::UnsupportedDomain(format!("{domain:?}: grid parameter must be positive")));
    }
    let h = 1.0 / n as f64;
    let side = cells_per_side + 1;
    let mut id_of = vec![NONE; side * side];
    let mut coords = Vec::new();
    let mut tris = Vec::new();
    let mut vid = |i: usize, j: usize, coords: &mut Vec<Point>| -> u32 {
        let k = j * side + i;
        if id_of[k] == NONE {
            id_of[k] = coords.len() as u32;
            coords.push([origin + i as f64 * h, origin + j as f64 * h]);
        }
        id_of[k]
    };
    for j in 0..cells_per_side {
        for i in 0..cells_per_side {
            let cx = origin + (i as f64 + 0.5) * h;
            let cy = origin + (j as f64 + 0.5) * h;
            if skip(cx, cy) {
                continue;
            }
            let a = vid(i, j, &mut coords);
            let b = vid(i + 1, j, &mut coords);
            let c = vid(i + 1, j + 1, &mut coords);
            let d = vid(i, j + 1, &mut coords);
            tris.push([a, b, c]);
            tris.push([a, c, d]);
        }
    }
    Mesh::from_triangles(coords, &tris)
}

impl Mesh {
    /// Builds an initial mesh from raw triangles.
    ///
    /// The refinement edge of each triangle is its longest edge, ties broken by
    /// the lowest opposite vertex id; vertices are then ordered counter-clockwise.
    pub fn from_triangles(coords: Vec<Point>, triangles: &[[u32; 3]]) -> Result<Mesh> {
        let mut elements = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            let len2 = |a: u32, b: u32| {
                let (p, q) = (coords[a as usize], coords[b as usize]);
                (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)
            };
            // (edge length, opposite vertex) for the three edges
            let mut best = (tri[0], tri[1], tri[2]);
            let mut best_len = len2(tri[0], tri[1]);
            for (a, b, c) in [(tri[1], tri[2], tri[0]), (tri[2], tri[0], tri[1])] {
                let l = len2(a, b);
                if l > best_len || (l == best_len && c < best.2) {
                    best = (a, b, c);
                    best_len = l;
                }
            }
            let (mut v0, mut v1, v2) = best;
            let area = signed_area(coords[v0 as usize], coords[v1 as usize], coords[v2 as usize]);
            if area == 0.0 {
                return Err(Error::DegenerateElement(t));
            }
            if area < 0.0 {
                std::mem::swap(&mut v0, &mut v1);
            }
            elements.push(Element {
                vertices: [v0, v1, v2],
                level: 0,
                ancestor: t as u32,
                path: 0,
            });
        }
        let mut hasher = FxHasher::default();
        for p in &coords {
            p[0].to_bits().hash(&mut hasher);
            p[1].to_bits().hash(&mut hasher);
        }
        for el in &elements {
            el.vertices.hash(&mut hasher);
        }
        let root = RootInfo {
            fingerprint: hasher.finish(),
            n_elements: elements.len(),
        };
        let table = EdgeTable::build(&elements);
        let mut boundary = vec![false; coords.len()];
        for (e, adj) in table.edges.iter().zip(&table.edge_elements) {
            if adj[1] == NONE {
                boundary[e.0 as usize] = true;
                boundary[e.1 as usize] = true;
            }
        }
        let parents = vec![None; coords.len()];
        let mesh = Mesh::assemble(root, Vec::new(), coords, boundary, parents, elements);
        let _ = mesh.edge_table.set(table);
        Ok(mesh)
    }

    fn assemble(
        root: RootInfo,
        lineage: Vec<u64>,
        coords: Vec<Point>,
        boundary: Vec<bool>,
        parents: Vec<Option<Edge>>,
        elements: Vec<Element>,
    ) -> Mesh {
        let mut dof_of_vertex = vec![NONE; coords.len()];
        let mut vertex_of_dof = Vec::new();
        for (v, &b) in boundary.iter().enumerate() {
            if !b {
                dof_of_vertex[v] = vertex_of_dof.len() as u32;
                vertex_of_dof.push(v as u32);
            }
        }
        Mesh {
            id: NEXT_MESH_ID.fetch_add(1, Ordering::Relaxed),
            root,
            lineage,
            coords,
            boundary,
            parents,
            elements,
            dof_of_vertex,
            vertex_of_dof,
            geometry: OnceLock::new(),
            edge_table: OnceLock::new(),
            buckets: OnceLock::new(),
        }
    }

    /// Process-unique mesh id; refined meshes always get a new one.
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn root(&self) -> RootInfo {
        self.root
    }

    pub fn n_vertices(&self) -> usize {
        self.coords.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    /// Number of interior vertices, i.e. of P1 degrees of freedom.
    pub fn n_dofs(&self) -> usize {
        self.vertex_of_dof.len()
    }

    pub fn coords(&self) -> &[Point] {
        &self.coords
    }

    pub fn point(&self, v: u32) -> Point {
        self.coords[v as usize]
    }

    pub fn is_boundary(&self, v: u32) -> bool {
        self.boundary[v as usize]
    }

    pub fn vertex(&self, v: usize) -> Vertex {
        Vertex {
            id: v,
            x: self.coords[v][0],
            y: self.coords[v][1],
            on_boundary: self.boundary[v],
        }
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn element(&self, t: usize) -> &Element {
        &self.elements[t]
    }

    /// Interior dof index of a vertex, `None` on the Dirichlet boundary.
    pub fn dof(&self, v: u32) -> Option<usize> {
        let d = self.dof_of_vertex[v as usize];
        (d != NONE).then_some(d as usize)
    }

    pub fn dof_vertex(&self, dof: usize) -> u32 {
        self.vertex_of_dof[dof]
    }

    /// Parent edge of a vertex created by bisection.
    pub fn vertex_parents(&self, v: u32) -> Option<Edge> {
        self.parents[v as usize]
    }

    /// True if `self` equals `coarse` or was obtained from it by refinement.
    pub fn refines(&self, coarse: &Mesh) -> bool {
        self.id == coarse.id || self.lineage.contains(&coarse.id)
    }

    pub fn element_points(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.elements[t].vertices;
        [self.point(a), self.point(b), self.point(c)]
    }

    pub fn geometry(&self) -> &[ElementGeometry] {
        self.geometry.get_or_init(|| {
            (0..self.elements.len())
                .map(|t| element_geometry(self.element_points(t)))
                .collect()
        })
    }

    pub fn edge_table(&self) -> &EdgeTable {
        self.edge_table.get_or_init(|| EdgeTable::build(&self.elements))
    }

    /// Element ids grouped by their initial ancestor, each bucket sorted by
    /// [`Element::dfs_key`].
    pub fn ancestor_buckets(&self) -> &[Vec<u32>] {
        self.buckets.get_or_init(|| {
            let mut buckets = vec![Vec::new(); self.root.n_elements];
            for (t, el) in self.elements.iter().enumerate() {
                buckets[el.ancestor as usize].push(t as u32);
            }
            for b in &mut buckets {
                b.sort_by_key(|&t| self.elements[t as usize].dfs_key());
            }
            buckets
        })
    }

    pub fn area(&self) -> f64 {
        self.geometry().iter().map(|g| g.area).sum()
    }

    /// `N+`: midpoints of the interior edges, i.e. the interior vertices
    /// that one uniform refinement would add.
    pub fn new_interior_vertices(&self) -> MarkedVertexSet {
        let table = self.edge_table();
        table
            .edges
            .iter()
            .enumerate()
            .filter(|&(e, _)| table.is_interior(e))
            .map(|(_, &edge)| edge)
            .collect()
    }

    /// Coarsest conforming NVB refinement whose vertex set contains `marked`.
    pub fn refine(&self, marked: &MarkedVertexSet) -> Result<Mesh> {
        let table = self.edge_table();
        let mut flags = vec![false; table.edges.len()];
        for &edge in marked {
            match table.find(edge) {
                Some(e) if table.is_interior(e) => flags[e] = true,
                _ => return Err(Error::NotANewVertex(edge.0, edge.1)),
            }
        }
        self.refine_flagged(flags)
    }

    /// `T̂`: every edge bisected once, i.e. every element split into four
    /// children two levels deeper. Cached on the mesh.
    pub fn uniform_refine(&self) -> Arc<Mesh> {
        let flags = vec![true; self.edge_table().edges.len()];
        Arc::new(
            self.refine_flagged(flags)
                .expect("uniform refinement exceeded the maximum element level"),
        )
    }

    /// NVB closure: any element with a bisected edge must bisect its refinement edge.
    fn close(&self, flags: &mut [bool]) {
        let table = self.edge_table();
        let mut stack: Vec<u32> = (0..flags.len() as u32).filter(|&e| flags[e as usize]).collect();
        while let Some(e) = stack.pop() {
            for &t in &table.edge_elements[e as usize] {
                if t == NONE {
                    continue;
                }
                let r = table.element_edges[t as usize][0];
                if !flags[r as usize] {
                    flags[r as usize] = true;
                    stack.push(r);
                }
            }
        }
    }

    /// Edges (by index) that `refine` would bisect for the given marked set,
    /// including those added by the closure.
    pub fn closure_edges(&self, marked: &MarkedVertexSet) -> Result<Vec<Edge>> {
        let table = self.edge_table();
        let mut flags = vec![false; table.edges.len()];
        for &edge in marked {
            match table.find(edge) {
                Some(e) if table.is_interior(e) => flags[e] = true,
                _ => return Err(Error::NotANewVertex(edge.0, edge.1)),
            }
        }
        self.close(&mut flags);
        Ok(table
            .edges
            .iter()
            .zip(&flags)
            .filter(|(_, &f)| f)
            .map(|(&e, _)| e)
            .collect())
    }

    fn refine_flagged(&self, mut flags: Vec<bool>) -> Result<Mesh> {
        let table = self.edge_table();
        self.close(&mut flags);

        let mut coords = self.coords.clone();
        let mut boundary = self.boundary.clone();
        let mut parents = self.parents.clone();
        let mut mid = vec![NONE; flags.len()];
        for (e, &f) in flags.iter().enumerate() {
            if f {
                let Edge(a, b) = table.edges[e];
                let (p, q) = (self.coords[a as usize], self.coords[b as usize]);
                mid[e] = coords.len() as u32;
                coords.push([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]);
                boundary.push(!table.is_interior(e));
                parents.push(Some(Edge(a, b)));
            }
        }
        if mid.iter().all(|&m| m == NONE) {
            let mut lineage = self.lineage.clone();
            lineage.push(self.id);
            return Ok(Mesh::assemble(
                self.root,
                lineage,
                coords,
                boundary,
                parents,
                self.elements.clone(),
            ));
        }

        let mut elements = Vec::with_capacity(self.elements.len() * 2);
        for (t, el) in self.elements.iter().enumerate() {
            let [e0, e1, e2] = table.element_edges[t];
            if !flags[e0 as usize] {
                elements.push(*el);
                continue;
            }
            if el.level as usize + 2 > MAX_LEVEL && (flags[e1 as usize] || flags[e2 as usize])
                || el.level as usize + 1 > MAX_LEVEL
            {
                return Err(Error::LevelOverflow(MAX_LEVEL));
            }
            let [a, b, c] = el.vertices;
            let m = mid[e0 as usize];
            let left = child(el, [c, a, m], 0);
            let right = child(el, [b, c, m], 1);
            if flags[e2 as usize] {
                let m2 = mid[e2 as usize];
                elements.push(child(&left, [m, c, m2], 0));
                elements.push(child(&left, [a, m, m2], 1));
            } else {
                elements.push(left);
            }
            if flags[e1 as usize] {
                let m1 = mid[e1 as usize];
                elements.push(child(&right, [m, b, m1], 0));
                elements.push(child(&right, [c, m, m1], 1));
            } else {
                elements.push(right);
            }
        }
        let mut lineage = self.lineage.clone();
        lineage.push(self.id);
        Ok(Mesh::assemble(self.root, lineage, coords, boundary, parents, elements))
    }

    /// Writes the plain-text dump: `nv ne`, then `x y boundary_flag` per
    /// vertex, then `v0 v1 v2 level ancestor` per element.
    pub fn write_dump<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{} {}", self.n_vertices(), self.n_elements())?;
        for (p, &b) in self.coords.iter().zip(&self.boundary) {
            writeln!(w, "{:.17e} {:.17e} {}", p[0], p[1], b as u8)?;
        }
        for el in &self.elements {
            let [a, b, c] = el.vertices;
            writeln!(w, "{a} {b} {c} {} {}", el.level, el.ancestor)?;
        }
        Ok(())
    }

    /// Smallest interior angle over all elements, in radians.
    pub fn min_angle(&self) -> f64 {
        (0..self.n_elements())
            .map(|t| {
                let p = self.element_points(t);
                (0..3)
                    .map(|k| {
                        let (o, u, v) = (p[k], p[(k + 1) % 3], p[(k + 2) % 3]);
                        let (ux, uy) = (u[0] - o[0], u[1] - o[1]);
                        let (vx, vy) = (v[0] - o[0], v[1] - o[1]);
                        let cos = (ux * vx + uy * vy) / ((ux * ux + uy * uy).sqrt() * (vx * vx + vy * vy).sqrt());
                        cos.clamp(-1.0, 1.0).acos()
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Checks conformity: every edge has one (boundary) or two (interior)
    /// neighbours and boundary edges connect boundary vertices.
    pub fn is_conforming(&self) -> bool {
        let mut count: FxHashMap<Edge, u32> = FxHashMap::default();
        for el in &self.elements {
            let [a, b, c] = el.vertices;
            for e in [Edge::new(a, b), Edge::new(b, c), Edge::new(c, a)] {
                *count.entry(e).or_default() += 1;
            }
        }
        count.iter().all(|(e, &n)| match n {
            1 => self.boundary[e.0 as usize] && self.boundary[e.1 as usize],
            2 => true,
            _ => false,
        }) && self.elements.iter().enumerate().all(|(t, _)| self.geometry()[t].area > 0.0)
    }
}

fn child(parent: &Element, vertices: [u32; 3], bit: u128) -> Element {
    Element {
        vertices,
        level: parent.level + 1,
        ancestor: parent.ancestor,
        path: parent.path | (bit << parent.level),
    }
}

pub fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

pub fn element_geometry(p: [Point; 3]) -> ElementGeometry {
    let area = signed_area(p[0], p[1], p[2]);
    let inv = 0.5 / area;
    let mut grads = [[0.0; 2]; 3];
    for k in 0..3 {
        let (u, v) = (p[(k + 1) % 3], p[(k + 2) % 3]);
        // gradient of the barycentric coordinate of vertex k: rotate opposite edge
        grads[k] = [(u[1] - v[1]) * inv, (v[0] - u[0]) * inv];
    }
    let centroid = [
        (p[0][0] + p[1][0] + p[2][0]) / 3.0,
        (p[0][1] + p[1][1] + p[2][1]) / 3.0,
    ];
    let diameter = (0..3)
        .map(|k| {
            let (u, v) = (p[k], p[(k + 1) % 3]);
            ((u[0] - v[0]).powi(2) + (u[1] - v[1]).powi(2)).sqrt()
        })
        .fold(0.0, f64::max);
    ElementGeometry {
        area,
        grads,
        centroid,
        diameter,
    }
}

/// Raw contents of a mesh dump.
#[derive(Clone, Debug, PartialEq)]
pub struct MeshDump {
    pub vertices: Vec<(Point, bool)>,
    pub elements: Vec<([u32; 3], u8, u32)>,
}

impl FromStr for MeshDump {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |what: &str| Error::Parse(format!("mesh dump: {what}"));
        let mut lines = s.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| bad("missing header"))?;
        let mut it = header.split_whitespace().map(str::parse::<usize>);
        let (nv, ne) = match (it.next(), it.next()) {
            (Some(Ok(nv)), Some(Ok(ne))) => (nv, ne),
            _ => return Err(bad("malformed header")),
        };
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let line = lines.next().ok_or_else(|| bad("truncated vertex list"))?;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(bad("vertex line"));
            }
            let x = f[0].parse().map_err(|_| bad("vertex x"))?;
            let y = f[1].parse().map_err(|_| bad("vertex y"))?;
            let b = match f[2] {
                "0" => false,
                "1" => true,
                _ => return Err(bad("boundary flag")),
            };
            vertices.push(([x, y], b));
        }
        let mut elements = Vec::with_capacity(ne);
        for _ in 0..ne {
            let line = lines.next().ok_or_else(|| bad("truncated element list"))?;
            let f: Vec<u32> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad("element line"))?;
            if f.len() != 5 || f[3] > u8::MAX as u32 {
                return Err(bad("element line"));
            }
            elements.push(([f[0], f[1], f[2]], f[3] as u8, f[4]));
        }
        Ok(MeshDump { vertices, elements })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(n: usize) -> Mesh {
        initial_mesh(&Domain::UnitSquare { n }).unwrap()
    }

    #[test]
    fn square_16_counts() {
        let m = square(16);
        assert_eq!(m.n_elements(), 512);
        assert_eq!(m.n_vertices(), 289);
        assert_eq!(m.n_dofs(), 225);
        // grid enumeration: (n+1)^2 vertices, (n-1)^2 interior
        assert_eq!(m.n_vertices(), 17 * 17);
        assert_eq!(m.n_dofs(), 15 * 15);
    }

    #[test]
    fn lshape_counts() {
        let m = initial_mesh(&Domain::LShape { n: 8 }).unwrap();
        assert_eq!(m.n_elements(), 384);
        assert!((m.area() - 3.0).abs() < 1e-14);
        assert!(m.is_conforming());
        // re-entrant corner is on the boundary
        let corner = m.coords().iter().position(|p| p == &[0.0, 0.0]).unwrap();
        assert!(m.is_boundary(corner as u32));
    }

    #[test]
    fn smallest_square() {
        let m = square(1);
        assert_eq!(m.n_elements(), 2);
        assert_eq!(m.n_dofs(), 0);
        assert_eq!(m.new_interior_vertices().len(), 1);
    }

    #[test]
    fn unsupported_domain() {
        assert!(initial_mesh(&Domain::UnitSquare { n: 0 }).is_err());
        assert!("disk:4".parse::<Domain>().is_err());
        assert_eq!("lshape:8".parse::<Domain>().unwrap(), Domain::LShape { n: 8 });
    }

    #[test]
    fn refinement_edge_is_hypotenuse() {
        let m = square(4);
        for (t, el) in m.elements().iter().enumerate() {
            let g = m.geometry()[t];
            assert!(g.area > 0.0);
            let Edge(a, b) = el.refinement_edge();
            let (p, q) = (m.point(a), m.point(b));
            let len = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
            assert!((len - g.diameter).abs() < 1e-15);
        }
    }

    #[test]
    fn n_plus_of_16_grid() {
        let m = square(16);
        let table = m.edge_table();
        assert_eq!(table.edges.len(), 800);
        let boundary = (0..table.edges.len()).filter(|&e| !table.is_interior(e)).count();
        assert_eq!(boundary, 64);
        assert_eq!(m.new_interior_vertices().len(), 736);
        // Euler: V - E + F = 1 for a disc
        assert_eq!(m.n_vertices() as i64 - 800 + 512, 1);
    }

    #[test]
    fn uniform_refine_children() {
        let m = square(16);
        let f = m.uniform_refine();
        assert_eq!(f.n_elements(), 2048);
        assert!(f.is_conforming());
        for el in f.elements() {
            assert_eq!(el.level, 2);
        }
        let g = f.geometry();
        for (t, el) in f.elements().iter().enumerate() {
            let parent_area = m.geometry()[el.ancestor as usize].area;
            assert!((g[t].area / parent_area - 0.25).abs() < 1e-12);
        }
        // every edge midpoint became a vertex
        for &Edge(a, b) in &m.edge_table().edges {
            let (p, q) = (m.point(a), m.point(b));
            let mid = [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])];
            assert!(f.coords().iter().any(|c| c == &mid));
        }
        // and the old vertices keep their ids
        assert_eq!(&f.coords()[..m.n_vertices()], m.coords());
    }

    #[test]
    fn refine_empty_is_identity() {
        let m = square(3);
        let r = m.refine(&MarkedVertexSet::new()).unwrap();
        assert_eq!(r.elements(), m.elements());
        assert_eq!(r.coords(), m.coords());
        assert!(r.refines(&m));
    }

    #[test]
    fn single_mark_on_two_triangles() {
        let m = square(1);
        let marked = m.new_interior_vertices();
        let r = m.refine(&marked).unwrap();
        assert_eq!(r.n_elements(), 4);
        assert!(r.is_conforming());
        assert_eq!(r.n_dofs(), 1);
        assert_eq!(r.point(r.dof_vertex(0)), [0.5, 0.5]);
    }

    #[test]
    fn refine_rejects_foreign_vertex() {
        let m = square(2);
        // boundary edge midpoint is not in N+
        let table = m.edge_table();
        let e = (0..table.edges.len()).find(|&e| !table.is_interior(e)).unwrap();
        let mut marked = MarkedVertexSet::new();
        marked.insert(table.edges[e]);
        assert!(matches!(m.refine(&marked), Err(Error::NotANewVertex(..))));
        marked.clear();
        marked.insert(Edge(0, 999));
        assert!(m.refine(&marked).is_err());
    }

    #[test]
    fn dump_round_trip() {
        let m = square(2).uniform_refine();
        let mut buf = Vec::new();
        m.write_dump(&mut buf).unwrap();
        let dump: MeshDump = std::str::from_utf8(&buf).unwrap().parse().unwrap();
        assert_eq!(dump.vertices.len(), m.n_vertices());
        assert_eq!(dump.elements.len(), m.n_elements());
        for (v, (p, b)) in dump.vertices.iter().enumerate() {
            assert_eq!(*p, m.point(v as u32));
            assert_eq!(*b, m.is_boundary(v as u32));
        }
        for (el, (vs, level, anc)) in m.elements().iter().zip(&dump.elements) {
            assert_eq!(el.vertices, *vs);
            assert_eq!(el.level, *level);
            assert_eq!(el.ancestor, *anc);
        }
    }

    #[test]
    fn descendant_relation() {
        let m = square(1);
        let f = m.uniform_refine();
        for el in f.elements() {
            assert!(el.is_descendant_of(m.element(el.ancestor as usize)));
            assert!(!el.is_descendant_of(m.element(1 - el.ancestor as usize)));
            let (lo, hi) = m.element(el.ancestor as usize).subtree_range();
            assert!(lo <= el.dfs_key() && el.dfs_key() <= hi);
        }
    }
}
