//! Overlay (coarsest common refinement) of two NVB meshes with the same
//! initial mesh.
//!
//! Each overlay cell is an element of one of the two meshes together with the
//! element of the other mesh that contains it. Integrals over intersections
//! `T_a ∩ T_b` therefore reduce to integrals over whole cell elements.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::{signed_area, Element, Mesh, Point};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    First,
    Second,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OverlayCell {
    /// Mesh the cell element belongs to.
    pub side: Side,
    pub element: u32,
    /// Containing element in the other mesh.
    pub container: u32,
}

impl OverlayCell {
    /// `(element of the first mesh, element of the second mesh)`.
    pub fn pair(&self) -> (u32, u32) {
        match self.side {
            Side::First => (self.element, self.container),
            Side::Second => (self.container, self.element),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overlay {
    pub cells: Vec<OverlayCell>,
}

impl Overlay {
    /// Vertices of the cell element.
    pub fn cell_points(&self, k: usize, first: &Mesh, second: &Mesh) -> [Point; 3] {
        let c = self.cells[k];
        match c.side {
            Side::First => first.element_points(c.element as usize),
            Side::Second => second.element_points(c.element as usize),
        }
    }

    pub fn area(&self, first: &Mesh, second: &Mesh) -> f64 {
        (0..self.cells.len())
            .map(|k| {
                let [a, b, c] = self.cell_points(k, first, second);
                signed_area(a, b, c)
            })
            .sum()
    }
}

/// Barycentric coordinates of `p` with respect to a triangle.
pub fn barycentric(p: Point, tri: [Point; 3]) -> Result<[f64; 3]> {
    let area = signed_area(tri[0], tri[1], tri[2]);
    if area == 0.0 {
        return Err(Error::DegenerateElement(usize::MAX));
    }
    let l0 = signed_area(p, tri[1], tri[2]) / area;
    let l1 = signed_area(tri[0], p, tri[2]) / area;
    Ok([l0, l1, 1.0 - l0 - l1])
}

fn diameter(p: &[Point; 3]) -> f64 {
    (0..3)
        .map(|k| {
            let (u, v) = (p[k], p[(k + 1) % 3]);
            ((u[0] - v[0]).powi(2) + (u[1] - v[1]).powi(2)).sqrt()
        })
        .fold(0.0, f64::max)
}

/// Strict-interior test of the centroid of `inner` in `outer`.
///
/// The tolerance scales with the diameter ratio: a descendant's centroid has
/// barycentric coordinates of that order, a disjoint element's centroid is
/// negative by at least that order.
fn centroid_strictly_inside(inner: [Point; 3], outer: [Point; 3]) -> bool {
    let s = [
        (inner[0][0] + inner[1][0] + inner[2][0]) / 3.0,
        (inner[0][1] + inner[1][1] + inner[2][1]) / 3.0,
    ];
    let eps = 1e-12 * diameter(&inner) / diameter(&outer);
    match barycentric(s, outer) {
        Ok(l) => l.iter().all(|&x| x > eps),
        Err(_) => false,
    }
}

fn check_same_root(a: &Mesh, b: &Mesh) -> Result<()> {
    if a.root() != b.root() {
        return Err(Error::MeshMismatch);
    }
    Ok(())
}

/// Overlay of two meshes, found through the bisection trees and confirmed by
/// the centroid containment test.
///
/// Cells are ordered by initial ancestor and then by position in the
/// bisection tree, so `build_overlay(b, a)` lists the same cell elements in
/// the same order as `build_overlay(a, b)` with the sides swapped.
pub fn build_overlay(a: &Mesh, b: &Mesh) -> Result<Overlay> {
    check_same_root(a, b)?;
    let (ba, bb) = (a.ancestor_buckets(), b.ancestor_buckets());
    let per_ancestor: Vec<Result<Vec<OverlayCell>>> = (0..ba.len())
        .into_par_iter()
        .map(|t0| overlay_bucket(a, b, &ba[t0], &bb[t0], t0))
        .collect();
    let mut cells = Vec::with_capacity(a.n_elements().max(b.n_elements()));
    for r in per_ancestor {
        cells.extend(r?);
    }
    Ok(Overlay { cells })
}

fn overlay_bucket(a: &Mesh, b: &Mesh, bucket_a: &[u32], bucket_b: &[u32], t0: usize) -> Result<Vec<OverlayCell>> {
    let keys_b: Vec<u128> = bucket_b.iter().map(|&t| b.element(t as usize).dfs_key()).collect();
    let mut cells = Vec::with_capacity(bucket_a.len().max(bucket_b.len()));
    for &ta in bucket_a {
        let ea: &Element = a.element(ta as usize);
        let key = ea.dfs_key();
        // last element of b at or before ea in depth-first order
        let pos = keys_b.partition_point(|&k| k <= key);
        let container = pos
            .checked_sub(1)
            .map(|p| bucket_b[p])
            .filter(|&tb| ea.is_descendant_of(b.element(tb as usize)));
        let pa = a.element_points(ta as usize);
        if let Some(tb) = container {
            if !centroid_strictly_inside(pa, b.element_points(tb as usize)) {
                return Err(Error::OverlayInconsistent { element: ta as usize });
            }
            cells.push(OverlayCell {
                side: Side::First,
                element: ta,
                container: tb,
            });
        } else {
            let (lo, hi) = ea.subtree_range();
            let start = keys_b.partition_point(|&k| k < lo);
            let end = keys_b.partition_point(|&k| k <= hi);
            if start == end {
                return Err(Error::AmbiguousContainer {
                    element: ta as usize,
                    ancestor: t0,
                    found: 0,
                });
            }
            for &tb in &bucket_b[start..end] {
                if !centroid_strictly_inside(b.element_points(tb as usize), pa) {
                    return Err(Error::OverlayInconsistent { element: ta as usize });
                }
                cells.push(OverlayCell {
                    side: Side::Second,
                    element: tb,
                    container: ta,
                });
            }
        }
    }
    Ok(cells)
}

/// Literal quadratic search over each ancestor bucket, using only levels and
/// centroid containment tests. Produces the same cells as [`build_overlay`].
pub fn build_overlay_scan(a: &Mesh, b: &Mesh) -> Result<Overlay> {
    check_same_root(a, b)?;
    let (ba, bb) = (a.ancestor_buckets(), b.ancestor_buckets());
    let mut cells = Vec::new();
    for t0 in 0..ba.len() {
        for &ta in &ba[t0] {
            let ea = a.element(ta as usize);
            let pa = a.element_points(ta as usize);
            let containers: Vec<u32> = bb[t0]
                .iter()
                .copied()
                .filter(|&tb| b.element(tb as usize).level <= ea.level)
                .filter(|&tb| centroid_strictly_inside(pa, b.element_points(tb as usize)))
                .collect();
            match containers.len() {
                1 => cells.push(OverlayCell {
                    side: Side::First,
                    element: ta,
                    container: containers[0],
                }),
                0 => {
                    let mut found = false;
                    for &tb in &bb[t0] {
                        let eb = b.element(tb as usize);
                        if eb.level > ea.level && centroid_strictly_inside(b.element_points(tb as usize), pa) {
                            found = true;
                            cells.push(OverlayCell {
                                side: Side::Second,
                                element: tb,
                                container: ta,
                            });
                        }
                    }
                    if !found {
                        return Err(Error::AmbiguousContainer {
                            element: ta as usize,
                            ancestor: t0,
                            found: 0,
                        });
                    }
                }
                n => {
                    return Err(Error::AmbiguousContainer {
                        element: ta as usize,
                        ancestor: t0,
                        found: n,
                    })
                }
            }
        }
    }
    Ok(Overlay { cells })
}
