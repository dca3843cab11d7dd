//! Minimal-cardinality Dörfler selection and the marking criteria A, B, C.

use std::fmt;
use std::str::FromStr;

use crate::basis::MultiIndex;
use crate::error::{Error, Result};
use crate::estimator::Indicators;
use crate::mesh::{Edge, MarkedVertexSet};
use crate::system::MultilevelSpace;

/// Shortest prefix of the indicators sorted by value (descending, ties by
/// key ascending) whose squared sum reaches `theta` times the total.
pub fn doerfler_min<K: Ord + Clone>(values: &[(K, f64)], theta: f64) -> Vec<K> {
    let mut sq: Vec<(&K, f64)> = values.iter().map(|(k, v)| (k, v * v)).collect();
    sq.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    // the total is summed in the same order as the prefix so that θ = 1 stops
    // exactly at the last nonzero value
    let total: f64 = sq.iter().map(|e| e.1).sum();
    if total <= 0.0 {
        return Vec::new();
    }
    let threshold = theta * total;
    let mut cum = 0.0;
    let mut out = Vec::new();
    for (k, v) in sq {
        if cum >= threshold {
            break;
        }
        cum += v;
        out.push(k.clone());
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Criterion {
    A,
    B,
    #[default]
    C,
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "A" => Ok(Criterion::A),
            "B" => Ok(Criterion::B),
            "C" => Ok(Criterion::C),
            _ => Err(Error::Parse(format!("unknown marking criterion '{s}'"))),
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::A => "A",
            Criterion::B => "B",
            Criterion::C => "C",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MarkingConfig {
    pub criterion: Criterion,
    pub theta_x: f64,
    pub theta_p: f64,
    pub theta: f64,
    pub vartheta: f64,
}

impl Default for MarkingConfig {
    fn default() -> Self {
        Self {
            criterion: Criterion::C,
            theta_x: 0.5,
            theta_p: 0.5,
            theta: 0.5,
            vartheta: 1.0,
        }
    }
}

impl MarkingConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, t) in [("theta_x", self.theta_x), ("theta_p", self.theta_p), ("theta", self.theta)] {
            if !(t > 0.0 && t <= 1.0) {
                return Err(Error::InvalidConfig(format!("{name} = {t} must lie in (0, 1]")));
            }
        }
        if !(self.vartheta > 0.0 && self.vartheta.is_finite()) {
            return Err(Error::InvalidConfig(format!("vartheta = {} must be positive", self.vartheta)));
        }
        Ok(())
    }
}

/// Which side of the space a marking step enriches.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    Spatial,
    Parametric,
    Both,
    None,
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Branch::Spatial => "spatial",
            Branch::Parametric => "parametric",
            Branch::Both => "both",
            Branch::None => "none",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MarkResult {
    /// Marked new vertices per active index, in index-set order. In
    /// single-level mode every entry holds the same set for the shared mesh.
    pub spatial: Vec<MarkedVertexSet>,
    /// Marked detail indices, in index order.
    pub parametric: Vec<MultiIndex>,
}

impl MarkResult {
    pub fn n_spatial(&self) -> usize {
        self.spatial.iter().map(|s| s.len()).sum()
    }

    pub fn branch(&self) -> Branch {
        match (self.spatial.iter().any(|s| !s.is_empty()), !self.parametric.is_empty()) {
            (true, true) => Branch::Both,
            (true, false) => Branch::Spatial,
            (false, true) => Branch::Parametric,
            (false, false) => Branch::None,
        }
    }
}

/// Joint key for criterion C: spatial keys order before parametric ones.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum MarkKey {
    Spatial(usize, Edge),
    Param(usize),
}

/// Spatial indicators as `((block, edge), est)`. In single-level mode all
/// blocks are merged into block 0 with `est(z)² = Σ_ν est(ν, z)²`.
fn spatial_keys(ind: &Indicators, single_level: bool) -> Vec<((usize, Edge), f64)> {
    if single_level {
        let mut all: Vec<(Edge, f64)> = ind.spatial.iter().flatten().map(|&(e, v)| (e, v * v)).collect();
        all.sort_by_key(|e| e.0);
        let mut out: Vec<((usize, Edge), f64)> = Vec::new();
        for (e, v2) in all {
            match out.last_mut() {
                Some(last) if last.0 .1 == e => last.1 += v2,
                _ => out.push(((0, e), v2)),
            }
        }
        out.iter_mut().for_each(|e| e.1 = e.1.sqrt());
        out
    } else {
        ind.spatial
            .iter()
            .enumerate()
            .flat_map(|(i, s)| s.iter().map(move |&(e, v)| ((i, e), v)))
            .collect()
    }
}

fn sum_sq<K>(values: &[(K, f64)]) -> f64 {
    values.iter().map(|e| e.1 * e.1).sum()
}

fn spatial_sets(keys: impl IntoIterator<Item = (usize, Edge)>, n: usize, single_level: bool) -> Vec<MarkedVertexSet> {
    let mut sets = vec![MarkedVertexSet::new(); n];
    for (i, e) in keys {
        sets[i].insert(e);
    }
    if single_level && n > 1 {
        let shared = sets[0].clone();
        sets.iter_mut().for_each(|s| *s = shared.clone());
    }
    sets
}

fn parametric_list(ind: &Indicators, positions: impl IntoIterator<Item = usize>) -> Vec<MultiIndex> {
    let mut out: Vec<MultiIndex> = positions.into_iter().map(|q| ind.parametric[q].0.clone()).collect();
    out.sort();
    out
}

/// Applies the configured criterion. `space` supplies the meshes needed by
/// criterion B; in single-level mode all indices share one mesh.
pub fn mark(ind: &Indicators, space: &MultilevelSpace, config: &MarkingConfig, single_level: bool) -> Result<MarkResult> {
    config.validate()?;
    if ind.spatial.len() != space.len() {
        return Err(Error::DimensionMismatch {
            expected: space.len(),
            found: ind.spatial.len(),
        });
    }
    let n = space.len();
    let spatial = spatial_keys(ind, single_level);
    let parametric: Vec<(usize, f64)> = ind.parametric.iter().enumerate().map(|(q, e)| (q, e.1)).collect();
    let (sx, sp) = (sum_sq(&spatial), sum_sq(&parametric));
    let empty = MarkResult {
        spatial: vec![MarkedVertexSet::new(); n],
        parametric: Vec::new(),
    };
    if sx == 0.0 && sp == 0.0 {
        return Ok(empty);
    }
    let spatial_only = |keys: Vec<(usize, Edge)>| MarkResult {
        spatial: spatial_sets(keys, n, single_level),
        parametric: Vec::new(),
    };
    let parametric_only = |qs: Vec<usize>| MarkResult {
        spatial: vec![MarkedVertexSet::new(); n],
        parametric: parametric_list(ind, qs),
    };
    Ok(match config.criterion {
        Criterion::A => {
            if config.vartheta * sp <= sx {
                spatial_only(doerfler_min(&spatial, config.theta_x))
            } else {
                parametric_only(doerfler_min(&parametric, config.theta_p))
            }
        }
        Criterion::B => {
            let m_x = doerfler_min(&spatial, config.theta_x);
            let m_p = doerfler_min(&parametric, config.theta_p);
            let tentative = spatial_sets(m_x.iter().cloned(), n, false);
            let mut realized = 0.0;
            for (i, marks) in tentative.iter().enumerate() {
                if marks.is_empty() {
                    continue;
                }
                let mesh = &space.meshes[i];
                let table = mesh.edge_table();
                let block: Vec<(Edge, f64)> = spatial
                    .iter()
                    .filter(|e| e.0 .0 == i)
                    .map(|e| (e.0 .1, e.1))
                    .collect();
                for edge in mesh.closure_edges(marks)? {
                    if table.find(edge).is_some_and(|k| table.is_interior(k)) {
                        if let Ok(k) = block.binary_search_by_key(&edge, |e| e.0) {
                            realized += block[k].1 * block[k].1;
                        }
                    }
                }
            }
            let marked_p: f64 = m_p.iter().map(|&q| parametric[q].1 * parametric[q].1).sum();
            if config.vartheta * marked_p <= realized {
                spatial_only(m_x)
            } else {
                parametric_only(m_p)
            }
        }
        Criterion::C => {
            let mut joint: Vec<(MarkKey, f64)> = spatial.iter().map(|&((i, e), v)| (MarkKey::Spatial(i, e), v)).collect();
            joint.extend(parametric.iter().map(|&(q, v)| (MarkKey::Param(q), v)));
            let mut xs = Vec::new();
            let mut qs = Vec::new();
            for key in doerfler_min(&joint, config.theta) {
                match key {
                    MarkKey::Spatial(i, e) => xs.push((i, e)),
                    MarkKey::Param(q) => qs.push(q),
                }
            }
            MarkResult {
                spatial: spatial_sets(xs, n, single_level),
                parametric: parametric_list(ind, qs),
            }
        }
    })
}
