#![allow(dead_code)]

use std::sync::Arc;

use mlsgfem::mesh::{initial_mesh, signed_area, Domain, MarkedVertexSet, Mesh, Point};
use rand::seq::IteratorRandom;
use rand::Rng;

/// Three initial meshes: a structured square, the L-shape and a criss-cross
/// square with a center vertex.
pub fn initial_meshes() -> Vec<Arc<Mesh>> {
    let criss = Mesh::from_triangles(
        vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5]],
        &[[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]],
    )
    .unwrap();
    vec![
        Arc::new(initial_mesh(&Domain::UnitSquare { n: 2 }).unwrap()),
        Arc::new(initial_mesh(&Domain::LShape { n: 1 }).unwrap()),
        Arc::new(criss),
    ]
}

/// Random NVB refinement: `steps` rounds, each marking a random fraction of
/// the interior edges, stopping before the mesh exceeds `max_elements`.
pub fn random_refinement<R: Rng>(mesh: &Arc<Mesh>, rng: &mut R, steps: usize, max_elements: usize) -> Arc<Mesh> {
    let mut m = mesh.clone();
    for _ in 0..steps {
        let edges = m.new_interior_vertices();
        if edges.is_empty() {
            break;
        }
        let k = rng.random_range(1..=edges.len().div_ceil(3));
        let marks: MarkedVertexSet = edges.into_iter().choose_multiple(rng, k).into_iter().collect();
        let next = Arc::new(m.refine(&marks).unwrap());
        if next.n_elements() > max_elements {
            break;
        }
        m = next;
    }
    m
}

/// Sutherland-Hodgman clipping of a convex polygon against a ccw triangle.
pub fn clip(subject: &[Point], tri: [Point; 3]) -> Vec<Point> {
    let mut out: Vec<Point> = subject.to_vec();
    for e in 0..3 {
        let (a, b) = (tri[e], tri[(e + 1) % 3]);
        let inside = |p: Point| signed_area(a, b, p) >= 0.0;
        let cut = |p: Point, q: Point| {
            let (sp, sq) = (signed_area(a, b, p), signed_area(a, b, q));
            let t = sp / (sp - sq);
            [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
        };
        let input = std::mem::take(&mut out);
        for i in 0..input.len() {
            let (p, q) = (input[i], input[(i + 1) % input.len()]);
            match (inside(p), inside(q)) {
                (true, true) => out.push(q),
                (true, false) => out.push(cut(p, q)),
                (false, true) => {
                    out.push(cut(p, q));
                    out.push(q);
                }
                (false, false) => {}
            }
        }
        if out.is_empty() {
            break;
        }
    }
    out
}

pub fn polygon_area(p: &[Point]) -> f64 {
    if p.len() < 3 {
        return 0.0;
    }
    (1..p.len() - 1).map(|i| signed_area(p[0], p[i], p[i + 1])).sum()
}

/// Area of the intersection of two ccw triangles.
pub fn intersection_area(a: [Point; 3], b: [Point; 3]) -> f64 {
    polygon_area(&clip(&a, b))
}
