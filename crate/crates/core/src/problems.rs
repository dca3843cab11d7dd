//! Benchmark problems: the Fourier-mode coefficient on the unit square and on
//! the L-shaped domain, and the cookie problem with nine circular inclusions.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::assembly::CoefficientField;
use crate::error::{Error, Result};
use crate::mesh::{Domain, Point};
use crate::quadrature::QuadratureRule;

/// `π²/6`.
pub const ZETA_2: f64 = PI * PI / 6.0;

/// Frequencies `(β₁(m), β₂(m))` of the m-th Fourier mode, `m ≥ 1`.
pub fn fourier_frequencies(m: usize) -> (usize, usize) {
    let k = (-0.5 + (0.5 + 2.0 * m as f64).sqrt()).floor() as usize;
    let b1 = m - k * (k + 1) / 2;
    (b1, k - b1)
}

/// `a_0 = 1`, `a_m(x) = A m^{-σ} cos(2π β₁ x₁) cos(2π β₂ x₂)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FourierCoefficient {
    pub amplitude: f64,
    pub sigma: f64,
    /// Truncation of the expansion (`None` keeps it infinite).
    pub max_m: Option<usize>,
}

impl FourierCoefficient {
    /// `σ = 2`, `A = 0.9/ζ(2)`.
    pub fn benchmark() -> Self {
        FourierCoefficient {
            amplitude: 0.9 / ZETA_2,
            sigma: 2.0,
            max_m: None,
        }
    }
}

impl CoefficientField for FourierCoefficient {
    fn eval(&self, m: usize, x: Point) -> f64 {
        if m == 0 {
            return 1.0;
        }
        if self.is_zero(m) {
            return 0.0;
        }
        let (b1, b2) = fourier_frequencies(m);
        self.sup_norm(m) * (2.0 * PI * b1 as f64 * x[0]).cos() * (2.0 * PI * b2 as f64 * x[1]).cos()
    }

    fn max_active_m(&self) -> Option<usize> {
        self.max_m
    }

    fn a0_min(&self) -> f64 {
        1.0
    }

    fn a0_max(&self) -> f64 {
        1.0
    }

    fn sup_norm(&self, m: usize) -> f64 {
        if m == 0 {
            1.0
        } else if self.is_zero(m) {
            0.0
        } else {
            self.amplitude * (m as f64).powf(-self.sigma)
        }
    }

    fn tau_bound(&self) -> Option<f64> {
        (self.sigma == 2.0).then_some(self.amplitude * ZETA_2)
    }

    fn description(&self) -> String {
        format!("Fourier modes, A = {:.6}, sigma = {}", self.amplitude, self.sigma)
    }
}

pub const COOKIE_RADIUS: f64 = 0.125;

/// Centre of disk `D_m`, `m = i + 3(j − 1)` with `i, j ∈ {1, 2, 3}`.
pub fn cookie_center(m: usize) -> Point {
    assert!((1..=9).contains(&m));
    let (i, j) = ((m - 1) % 3 + 1, (m - 1) / 3 + 1);
    [(2 * i - 1) as f64 / 6.0, (2 * j - 1) as f64 / 6.0]
}

pub fn cookie_amplitude(m: usize) -> f64 {
    match m {
        0 => 1.0,
        1 | 3 | 7 | 9 => 0.5,
        2 | 4 | 6 | 8 => 0.7,
        5 => 0.9,
        _ => 0.0,
    }
}

/// `a_0 = 1`, `a_m = c_m χ_{D_m}` for `m ≤ 9`.
///
/// Cells cut by a disk boundary are integrated with a higher-order collapsed
/// Gauss rule applied to the discontinuous indicator.
#[derive(Clone, Debug)]
pub struct CookieCoefficient {
    boundary_rule: QuadratureRule,
}

impl Default for CookieCoefficient {
    fn default() -> Self {
        CookieCoefficient {
            boundary_rule: QuadratureRule::collapsed_gauss(5),
        }
    }
}

fn inside_disk(m: usize, x: Point) -> bool {
    let c = cookie_center(m);
    (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2) < COOKIE_RADIUS * COOKIE_RADIUS
}

fn distance_to_segment(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let t = (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0);
    ((p[0] - a[0] - t * dx).powi(2) + (p[1] - a[1] - t * dy).powi(2)).sqrt()
}

/// Position of a triangle relative to disk `D_m`.
enum DiskRelation {
    Inside,
    Outside,
    Cut,
}

fn disk_relation(m: usize, tri: [Point; 3]) -> DiskRelation {
    if tri.iter().all(|&v| inside_disk(m, v)) {
        return DiskRelation::Inside;
    }
    let c = cookie_center(m);
    let inside_tri = crate::overlay::barycentric(c, tri).is_ok_and(|l| l.iter().all(|&x| x >= 0.0));
    let dist = if inside_tri {
        0.0
    } else {
        (0..3)
            .map(|k| distance_to_segment(c, tri[k], tri[(k + 1) % 3]))
            .fold(f64::INFINITY, f64::min)
    };
    if dist >= COOKIE_RADIUS {
        DiskRelation::Outside
    } else {
        DiskRelation::Cut
    }
}

impl CoefficientField for CookieCoefficient {
    fn eval(&self, m: usize, x: Point) -> f64 {
        match m {
            0 => 1.0,
            1..=9 if inside_disk(m, x) => cookie_amplitude(m),
            _ => 0.0,
        }
    }

    fn max_active_m(&self) -> Option<usize> {
        Some(9)
    }

    fn a0_min(&self) -> f64 {
        1.0
    }

    fn a0_max(&self) -> f64 {
        1.0
    }

    fn sup_norm(&self, m: usize) -> f64 {
        cookie_amplitude(m)
    }

    fn tau_bound(&self) -> Option<f64> {
        // the disks are pairwise disjoint
        Some(0.9)
    }

    fn description(&self) -> String {
        "cookie problem, nine disks of radius 1/8".into()
    }

    fn cell_integral(&self, m: usize, tri: [Point; 3], quad: &QuadratureRule) -> f64 {
        if m == 0 {
            return quad.integrate(tri, |_| 1.0);
        }
        if m > 9 {
            return 0.0;
        }
        match disk_relation(m, tri) {
            DiskRelation::Outside => 0.0,
            DiskRelation::Inside => cookie_amplitude(m) * crate::mesh::signed_area(tri[0], tri[1], tri[2]).abs(),
            DiskRelation::Cut => self.boundary_rule.integrate(tri, |x| self.eval(m, x)),
        }
    }
}

/// A benchmark problem: domain, coefficient, source and defaults.
#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub domain: Domain,
    pub coefficient: Arc<dyn CoefficientField>,
    pub source: fn(Point) -> f64,
    /// Parameter universe `ℕ_0^M` (`None` for infinitely many parameters).
    pub max_parameters: Option<usize>,
    pub default_tol: f64,
    pub default_mbar: usize,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("coefficient", &self.coefficient.description())
            .field("max_parameters", &self.max_parameters)
            .finish()
    }
}

fn unit_source(_: Point) -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProblemKind {
    BenchmarkSquare,
    BenchmarkLShape,
    Cookie,
}

impl FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "benchmark-square" => Ok(ProblemKind::BenchmarkSquare),
            "benchmark-lshape" => Ok(ProblemKind::BenchmarkLShape),
            "cookie" => Ok(ProblemKind::Cookie),
            _ => Err(Error::InvalidConfig(format!(
                "unknown problem '{s}' (expected benchmark-square, benchmark-lshape or cookie)"
            ))),
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProblemKind::BenchmarkSquare => "benchmark-square",
            ProblemKind::BenchmarkLShape => "benchmark-lshape",
            ProblemKind::Cookie => "cookie",
        })
    }
}

impl ProblemKind {
    pub fn spec(self) -> ProblemSpec {
        match self {
            ProblemKind::BenchmarkSquare => ProblemSpec {
                name: self.to_string(),
                domain: Domain::UnitSquare { n: 16 },
                coefficient: Arc::new(FourierCoefficient::benchmark()),
                source: unit_source,
                max_parameters: None,
                default_tol: 6e-4,
                default_mbar: 1,
            },
            ProblemKind::BenchmarkLShape => ProblemSpec {
                name: self.to_string(),
                domain: Domain::LShape { n: 8 },
                coefficient: Arc::new(FourierCoefficient::benchmark()),
                source: unit_source,
                max_parameters: None,
                default_tol: 2.5e-3,
                default_mbar: 1,
            },
            ProblemKind::Cookie => ProblemSpec {
                name: self.to_string(),
                domain: Domain::UnitSquare { n: 16 },
                coefficient: Arc::new(CookieCoefficient::default()),
                source: unit_source,
                max_parameters: Some(9),
                default_tol: 8e-4,
                default_mbar: 9,
            },
        }
    }
}
