//! Geometric diagnostics of transport supports.

use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::plan::{PlanEntry, TransportPlan};
use super::simplex::northwest_corner_plan;
use super::DiscreteMeasure;
use crate::cost::CostFunction;
use crate::error::{Error, Result};
use crate::geometry::{hessian_h, BasePoint};

fn sorted_order(m: &DiscreteMeasure) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..m.len()).collect();
    idx.sort_by(|a, b| m.atoms[*a][0].total_cmp(&m.atoms[*b][0]).then(a.cmp(b)));
    idx
}

/// Quantile coupling of two measures on the line: sorted atoms paired
/// greedily by cumulative mass.
pub fn monotone_rearrangement_1d(mu_plus: &DiscreteMeasure, mu_minus: &DiscreteMeasure) -> Result<TransportPlan> {
    if mu_plus.dim() != 1 || mu_minus.dim() != 1 {
        return Err(Error::DimensionMismatch("monotone rearrangement needs one-dimensional measures".into()));
    }
    northwest_corner_plan(mu_plus, mu_minus, &sorted_order(mu_plus), &sorted_order(mu_minus))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpacelikeReport {
    /// Smallest `h(V, V)`; `+∞` when no pair was in range.
    pub min_value: f64,
    /// Smallest `h(V, V)/|V|²`.
    pub min_normalized: f64,
    pub pairs_checked: usize,
    /// Base points where `h` could not be evaluated.
    pub skipped: usize,
    /// `(base, other)` support indices attaining `min_value`.
    pub witness: Option<(usize, usize)>,
}

impl SpacelikeReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.min_normalized >= -tolerance
    }
}

/// For every ordered pair of support points within `neighbor_radius` of each
/// other, `V = (x_b - x_a, y_b - y_a)` is evaluated as `h(V, V)` at `(x_a, y_a)`.
pub fn spacelike_support_check(c: &CostFunction, support: &[(Vec<f64>, Vec<f64>)], neighbor_radius: f64) -> SpacelikeReport {
    let mut report = SpacelikeReport { min_value: f64::INFINITY, min_normalized: f64::INFINITY, pairs_checked: 0, skipped: 0, witness: None };
    let stacked: Vec<Vec<f64>> = support.iter().map(|(x, y)| x.iter().chain(y).copied().collect()).collect();
    for (a, (x, y)) in support.iter().enumerate() {
        let neighbours: Vec<usize> = (0..support.len())
            .filter(|&b| b != a && dist(&stacked[a], &stacked[b]) <= neighbor_radius)
            .collect();
        if neighbours.is_empty() {
            continue;
        }
        let Ok(h) = hessian_h(c, &BasePoint::new(x, y)) else {
            report.skipped += 1;
            continue;
        };
        for b in neighbours {
            let v: Vec<f64> = stacked[b].iter().zip(&stacked[a]).map(|(p, q)| p - q).collect();
            let Ok(value) = h.quadratic(&v) else { continue };
            let norm2: f64 = v.iter().map(|t| t * t).sum();
            report.pairs_checked += 1;
            if value < report.min_value {
                report.min_value = value;
                report.witness = Some((a, b));
            }
            if norm2 > 0.0 {
                report.min_normalized = report.min_normalized.min(value / norm2);
            }
        }
    }
    report
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimensionReport {
    /// `None` where the neighbourhood was too sparse.
    pub per_point: Vec<Option<usize>>,
    pub max_dim: Option<usize>,
    pub skipped: usize,
    pub min_neighbors: usize,
}

/// Local PCA: the number of singular values of the centred neighbourhood
/// (points within `radius`, the point itself included) above
/// `threshold·σ_max`. Points with fewer than `dim + 2` neighbours are skipped.
pub fn local_dimension_estimate(points: &[Vec<f64>], radius: f64, threshold: f64) -> DimensionReport {
    let dim = points.first().map_or(0, |p| p.len());
    let min_neighbors = dim + 2;
    let mut per_point = Vec::with_capacity(points.len());
    for p in points {
        let near: Vec<&Vec<f64>> = points.iter().filter(|q| dist(p, q) <= radius).collect();
        if near.len() < min_neighbors {
            per_point.push(None);
            continue;
        }
        let k = near.len();
        let mut centre = vec![0.0; dim];
        for q in &near {
            for (c, v) in centre.iter_mut().zip(q.iter()) {
                *c += v / k as f64;
            }
        }
        let m = DMatrix::from_fn(k, dim, |r, c| near[r][c] - centre[c]);
        let sv = m.singular_values();
        let top = sv.amax();
        per_point.push(Some(if top > 0.0 { sv.iter().filter(|s| **s > threshold * top).count() } else { 0 }));
    }
    let skipped = per_point.iter().filter(|d| d.is_none()).count();
    let max_dim = per_point.iter().flatten().copied().max();
    DimensionReport { per_point, max_dim, skipped, min_neighbors }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotatedLipschitzReport {
    /// `max |Δv|/|Δu|`, `+∞` if some pair has `Δu = 0 ≠ Δv`; 0 for fewer than two distinct points.
    pub max_ratio: f64,
    pub witness: Option<(usize, usize)>,
}

/// Rotate `(x, y)` to `u = (x + y)/√2`, `v = (y - x)/√2` and measure the
/// Lipschitz constant of `v` as a function of `u`.
pub fn rotated_lipschitz_check_1d(support: &[(f64, f64)]) -> RotatedLipschitzReport {
    let uv: Vec<(f64, f64)> = support.iter().map(|(x, y)| ((x + y) * FRAC_1_SQRT_2, (y - x) * FRAC_1_SQRT_2)).collect();
    let mut report = RotatedLipschitzReport { max_ratio: 0.0, witness: None };
    for a in 0..uv.len() {
        for b in (a + 1)..uv.len() {
            let (du, dv) = ((uv[b].0 - uv[a].0).abs(), (uv[b].1 - uv[a].1).abs());
            let ratio = match (du == 0.0, dv == 0.0) {
                (true, true) => continue,
                (true, false) => f64::INFINITY,
                _ => dv / du,
            };
            if ratio > report.max_ratio || report.witness.is_none() {
                report.max_ratio = report.max_ratio.max(ratio);
                report.witness = Some((a, b));
            }
        }
    }
    report
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Part {
    Graph,
    Antigraph,
    Residual,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    /// One label per plan entry, in plan order.
    pub labels: Vec<Part>,
    pub graph_mass: f64,
    pub antigraph_mass: f64,
    pub residual_mass: f64,
    pub residual_fraction: f64,
}

impl Decomposition {
    pub fn entries<'a>(&'a self, plan: &'a TransportPlan, part: Part) -> impl Iterator<Item = &'a PlanEntry> + 'a {
        plan.entries.iter().zip(&self.labels).filter(move |(_, l)| **l == part).map(|(e, _)| e)
    }
}

/// Split a plan into a graph part (at most one entry per source), an
/// antigraph part (at most one entry per target) and a residual.
///
/// Repeatedly, each source with a single unlabelled plan entry sends it to
/// the graph, then each target with a single unlabelled entry sends it to
/// the antigraph. On a forest (any vertex plan) this labels everything;
/// leftovers on cycles take a free graph slot, else a free antigraph slot,
/// else land in the residual.
pub fn graph_antigraph_decompose(plan: &TransportPlan) -> Decomposition {
    finish(plan, peel(plan, None))
}

/// As [`graph_antigraph_decompose`], but a leaf only claims an entry whose
/// `prefer` matches its side; forced moves happen only when no preferred
/// one is left.
pub fn graph_antigraph_decompose_by(plan: &TransportPlan, prefer: impl Fn(&PlanEntry) -> Part) -> Decomposition {
    let want: Vec<Part> = plan.entries.iter().map(&prefer).collect();
    finish(plan, peel(plan, Some(&want)))
}

fn peel(plan: &TransportPlan, want: Option<&[Part]>) -> Vec<Option<Part>> {
    let mut labels: Vec<Option<Part>> = vec![None; plan.entries.len()];
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); plan.n_source];
    let mut cols: Vec<Vec<usize>> = vec![Vec::new(); plan.n_target];
    for (k, e) in plan.entries.iter().enumerate() {
        rows[e.i].push(k);
        cols[e.j].push(k);
    }
    let lone = |list: &[usize], labels: &[Option<Part>]| {
        let mut open = list.iter().filter(|k| labels[**k].is_none());
        match (open.next(), open.next()) {
            (Some(&k), None) => Some(k),
            _ => None,
        }
    };
    let wants = |k: usize, part: Part| want.is_none_or(|w| w[k] == part);
    loop {
        let mut progress = false;
        for r in &rows {
            if let Some(k) = lone(r, &labels).filter(|k| wants(*k, Part::Graph)) {
                labels[k] = Some(Part::Graph);
                progress = true;
            }
        }
        for c in &cols {
            if let Some(k) = lone(c, &labels).filter(|k| wants(*k, Part::Antigraph)) {
                labels[k] = Some(Part::Antigraph);
                progress = true;
            }
        }
        if !progress && want.is_some() {
            if let Some(k) = rows.iter().find_map(|r| lone(r, &labels)) {
                labels[k] = Some(Part::Graph);
                progress = true;
            } else if let Some(k) = cols.iter().find_map(|c| lone(c, &labels)) {
                labels[k] = Some(Part::Antigraph);
                progress = true;
            }
        }
        if !progress {
            return labels;
        }
    }
}

fn finish(plan: &TransportPlan, mut labels: Vec<Option<Part>>) -> Decomposition {
    let mut row_used = vec![false; plan.n_source];
    let mut col_used = vec![false; plan.n_target];
    for (e, l) in plan.entries.iter().zip(&labels) {
        match l {
            Some(Part::Graph) => row_used[e.i] = true,
            Some(Part::Antigraph) => col_used[e.j] = true,
            _ => {}
        }
    }
    for (e, l) in plan.entries.iter().zip(labels.iter_mut()) {
        if l.is_some() {
            continue;
        }
        *l = Some(if !row_used[e.i] {
            row_used[e.i] = true;
            Part::Graph
        } else if !col_used[e.j] {
            col_used[e.j] = true;
            Part::Antigraph
        } else {
            Part::Residual
        });
    }
    let labels: Vec<Part> = labels.into_iter().map(|l| l.unwrap_or(Part::Residual)).collect();
    let mass = |p: Part| plan.entries.iter().zip(&labels).filter(|(_, l)| **l == p).map(|(e, _)| e.mass).sum::<f64>() + 0.0;
    let (graph_mass, antigraph_mass, residual_mass) = (mass(Part::Graph), mass(Part::Antigraph), mass(Part::Residual));
    let total = graph_mass + antigraph_mass + residual_mass;
    Decomposition { labels, graph_mass, antigraph_mass, residual_mass, residual_fraction: if total > 0.0 { residual_mass / total } else { 0.0 } }
}
