use std::collections::HashMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use super::{select_witnesses, AxisGrid, ConditionReport, GridSpec, Verdict, Witness};
use crate::cost::CostFunction;
use crate::error::Result;

/// Refinement factor of the image cloud that midpoints are tested against.
pub const A4_REFINE: usize = 4;
/// Inconclusive when the refined cloud's spacing exceeds this fraction of the image diameter.
pub const A4_RESOLUTION: f64 = 0.1;
/// Fitted boundary curvature (times image diameter) must exceed this for the strong form.
pub const A4_CURVATURE_TOL: f64 = 1e-3;

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt()
}

/// Images over the refined grid, indexed like the grid; `None` outside the
/// domain or on the excluded set.
struct RefinedImage {
    grid: AxisGrid,
    values: Vec<Option<Vec<f64>>>,
}

impl RefinedImage {
    fn new(c: &CostFunction, x0: &[f64], grid: AxisGrid) -> Result<Self> {
        let values = grid
            .points()
            .into_iter()
            .map(|y| if c.domain_y.contains(&y) && !c.is_excluded(x0, &y) { c.grad_x(x0, &y).map(Some) } else { Ok(None) })
            .collect::<Result<_>>()?;
        Ok(RefinedImage { grid, values })
    }

    fn flat(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.grid.counts).fold(0, |acc, (i, n)| acc * n + i)
    }

    /// Grid neighbour along `axis` in direction `step`, wrapping on periodic axes.
    fn neighbour(&self, idx: &[usize], axis: usize, step: isize) -> Option<usize> {
        let n = self.grid.counts[axis] as isize;
        let mut k = idx[axis] as isize + step;
        if self.grid.periodic {
            k = k.rem_euclid(n);
        } else if k < 0 || k >= n {
            return None;
        }
        let mut j = idx.to_vec();
        j[axis] = k as usize;
        Some(self.flat(&j))
    }

    /// Largest image distance between grid neighbours: a covering radius for the cloud.
    fn resolution(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (k, v) in self.values.iter().enumerate() {
            let Some(v) = v else { continue };
            let idx = self.grid.multi_index(k);
            for axis in 0..self.grid.dim() {
                if let Some(w) = self.neighbour(&idx, axis, 1).and_then(|j| self.values[j].as_ref()) {
                    worst = worst.max(euclid(v, w));
                }
            }
        }
        worst
    }

    /// Images of grid points with a missing neighbour (domain boundary).
    fn boundary(&self) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        for (k, v) in self.values.iter().enumerate() {
            let Some(v) = v else { continue };
            let idx = self.grid.multi_index(k);
            let edge = (0..self.grid.dim()).any(|axis| {
                [-1, 1].iter().any(|s| self.neighbour(&idx, axis, *s).and_then(|j| self.values[j].as_ref()).is_none())
            });
            if edge {
                out.push(v.clone());
            }
        }
        out
    }

    fn cloud(&self) -> Vec<&Vec<f64>> {
        self.values.iter().flatten().collect()
    }
}

/// Uniform-cell spatial hash for nearest-point queries within one cell size.
struct CellHash<'a> {
    cell: f64,
    cells: HashMap<Vec<i64>, Vec<&'a Vec<f64>>>,
}

impl<'a> CellHash<'a> {
    fn new(points: &[&'a Vec<f64>], cell: f64) -> Self {
        let mut cells: HashMap<Vec<i64>, Vec<&'a Vec<f64>>> = HashMap::new();
        for p in points {
            cells.entry(Self::key(p, cell)).or_default().push(p);
        }
        CellHash { cell, cells }
    }

    fn key(p: &[f64], cell: f64) -> Vec<i64> {
        p.iter().map(|v| (v / cell).floor() as i64).collect()
    }

    /// Distance to the nearest stored point if it lies within one cell size.
    fn nearest_within(&self, p: &[f64]) -> Option<f64> {
        let base = Self::key(p, self.cell);
        let n = base.len();
        let mut best: Option<f64> = None;
        for code in 0..3usize.pow(n as u32) {
            let mut key = base.clone();
            let mut c = code;
            for k in key.iter_mut() {
                *k += (c % 3) as i64 - 1;
                c /= 3;
            }
            for q in self.cells.get(&key).into_iter().flatten() {
                let d = euclid(p, q);
                if d <= self.cell && best.is_none_or(|b| d < b) {
                    best = Some(d);
                }
            }
        }
        best
    }
}

enum PerBase {
    Inconclusive(String),
    Checked { max_dist: f64, tol: f64, violations: Vec<Witness>, curvature: Option<(f64, Option<Witness>)> },
}

/// Local quadric fit at a boundary sample: minimum principal curvature
/// (positive when the boundary bends away from the outward normal), times the
/// image diameter.
fn fitted_curvature(b: &[f64], neighbours: &[&Vec<f64>], centroid: &[f64]) -> Option<f64> {
    let n = b.len();
    let k = neighbours.len();
    let mut cov = DMatrix::zeros(n, n);
    for p in neighbours {
        let d = DVector::from_iterator(n, p.iter().zip(b).map(|(u, v)| u - v));
        cov += &d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|a, c| eig.eigenvalues[*a].total_cmp(&eig.eigenvalues[*c]));
    let mut normal = eig.eigenvectors.column(order[0]).into_owned();
    let outward: f64 = normal.iter().zip(b.iter().zip(centroid)).map(|(v, (p, c))| v * (p - c)).sum();
    if outward < 0.0 {
        normal = -normal;
    }
    let tangents: Vec<DVector<f64>> = order[1..].iter().map(|i| eig.eigenvectors.column(*i).into_owned()).collect();
    let t = tangents.len();
    // w = a + g·s + ½ sᵀHs
    let quad: Vec<(usize, usize)> = (0..t).flat_map(|i| (i..t).map(move |j| (i, j))).collect();
    let unknowns = 1 + t + quad.len();
    if k < unknowns {
        return None;
    }
    let mut a = DMatrix::zeros(k, unknowns);
    let mut rhs = DVector::zeros(k);
    for (r, p) in neighbours.iter().enumerate() {
        let d = DVector::from_iterator(n, p.iter().zip(b).map(|(u, v)| u - v));
        let s: Vec<f64> = tangents.iter().map(|e| e.dot(&d)).collect();
        rhs[r] = normal.dot(&d);
        a[(r, 0)] = 1.0;
        for i in 0..t {
            a[(r, 1 + i)] = s[i];
        }
        for (col, (i, j)) in quad.iter().enumerate() {
            a[(r, 1 + t + col)] = if i == j { 0.5 * s[*i] * s[*i] } else { s[*i] * s[*j] };
        }
    }
    let coef = a.svd(true, true).solve(&rhs, 1e-12).ok()?;
    let mut h = DMatrix::zeros(t, t);
    for (col, (i, j)) in quad.iter().enumerate() {
        h[(*i, *j)] = coef[1 + t + col];
        h[(*j, *i)] = coef[1 + t + col];
    }
    let kappa = SymmetricEigen::new(-h).eigenvalues;
    Some(kappa.min())
}

fn check_one(c: &CostFunction, x0: &[f64], grid: &GridSpec, strong: bool) -> Result<PerBase> {
    let coarse: Vec<(Vec<f64>, Vec<f64>)> = grid
        .y
        .points()
        .into_iter()
        .filter(|y| c.domain_y.contains(y) && !c.is_excluded(x0, y))
        .map(|y| c.grad_x(x0, &y).map(|g| (y, g)))
        .collect::<Result<_>>()?;
    let refined = RefinedImage::new(c, x0, grid.y.refined(A4_REFINE))?;
    let cloud = refined.cloud();
    let (lo, hi) = cloud.iter().fold((vec![f64::INFINITY; c.dim_x], vec![f64::NEG_INFINITY; c.dim_x]), |(mut lo, mut hi), v| {
        for k in 0..v.len() {
            lo[k] = lo[k].min(v[k]);
            hi[k] = hi[k].max(v[k]);
        }
        (lo, hi)
    });
    let diam = if cloud.is_empty() { 0.0 } else { euclid(&lo, &hi) };
    let tol = refined.resolution();
    if coarse.len() < 2 || !(diam > 0.0) || tol > A4_RESOLUTION * diam {
        return Ok(PerBase::Inconclusive(format!("image resolution {tol:.3e} too coarse for diameter {diam:.3e}")));
    }
    let hash = CellHash::new(&cloud, tol);
    let mut max_dist: f64 = 0.0;
    let mut violations = Vec::new();
    for a in 0..coarse.len() {
        for b in (a + 1)..coarse.len() {
            let mid: Vec<f64> = coarse[a].1.iter().zip(&coarse[b].1).map(|(u, v)| 0.5 * (u + v)).collect();
            let dist = match hash.nearest_within(&mid) {
                Some(d) => d,
                None => cloud.iter().map(|q| euclid(&mid, q)).fold(f64::INFINITY, f64::min),
            };
            max_dist = max_dist.max(dist);
            if dist > tol {
                violations.push(Witness {
                    x: x0.to_vec(),
                    y: coarse[a].0.clone(),
                    vectors: vec![coarse[b].0.clone(), mid],
                    slack: -dist,
                    label: "image midpoint outside the image".into(),
                });
            }
        }
    }
    violations.sort_by(|a, b| a.slack.total_cmp(&b.slack));
    violations.truncate(super::MAX_WITNESSES);

    let curvature = if strong && c.dim_x >= 2 {
        let boundary = refined.boundary();
        let k = 2 * c.dim_x + 4;
        let centroid: Vec<f64> = (0..c.dim_x).map(|i| cloud.iter().map(|v| v[i]).sum::<f64>() / cloud.len() as f64).collect();
        let mut worst: Option<(f64, Option<Witness>)> = None;
        for b in &boundary {
            let mut near: Vec<&Vec<f64>> = boundary.iter().filter(|q| *q != b).collect();
            near.sort_by(|p, q| euclid(p, b).total_cmp(&euclid(q, b)));
            near.truncate(k);
            let Some(kappa) = fitted_curvature(b, &near, &centroid) else { continue };
            let slack = kappa * diam;
            if worst.as_ref().is_none_or(|w| slack < w.0) {
                worst = Some((
                    slack,
                    Some(Witness { x: x0.to_vec(), y: vec![], vectors: vec![b.clone()], slack: slack - A4_CURVATURE_TOL, label: "boundary curvature × diameter".into() }),
                ));
            }
        }
        worst.or(Some((f64::NAN, None)))
    } else {
        None
    };
    Ok(PerBase::Checked { max_dist, tol, violations, curvature })
}

/// Convexity of the images `D_x c(x₀, M⁻)`: every midpoint of two image
/// samples must lie within the refined cloud's resolution of the image.
/// `strong` also requires positive fitted boundary curvature (n ≥ 2 only).
/// The twist condition is assumed, so images are embedded.
pub fn check_a4(c: &CostFunction, grid: &GridSpec, strong: bool) -> Result<ConditionReport> {
    grid.validate(c)?;
    let xs = grid.x_points(c);
    let results: Vec<Result<PerBase>> = xs.par_iter().map(|x0| check_one(c, x0, grid, strong)).collect();
    let mut report = ConditionReport::new(if strong { "A4s" } else { "A4" }, grid)
        .tolerance("refine", A4_REFINE as f64)
        .tolerance("resolution_rel", A4_RESOLUTION)
        .note("A4′: the sets D_x c(x₀, M⁻) are convex; midpoints tested against a refined image cloud");
    if strong {
        report = report.tolerance("curvature", A4_CURVATURE_TOL).note("A4s′: boundary curvature from quadric fits over 2n+4 nearest boundary samples");
    }
    let mut inconclusive = 0;
    let mut max_dist: f64 = 0.0;
    let mut max_tol: f64 = 0.0;
    let mut violations = Vec::new();
    let mut curvature_min = f64::INFINITY;
    let mut curvature_witnesses = Vec::new();
    let mut curvature_undefined = false;
    for (k, r) in results.into_iter().enumerate() {
        match r? {
            PerBase::Inconclusive(msg) => {
                if inconclusive == 0 {
                    report.notes.push(msg);
                }
                inconclusive += 1;
            }
            PerBase::Checked { max_dist: d, tol, violations: v, curvature } => {
                max_dist = max_dist.max(d);
                max_tol = max_tol.max(tol);
                violations.extend(v.into_iter().map(|w| (k, w)));
                if let Some((kappa, w)) = curvature {
                    if kappa.is_nan() {
                        curvature_undefined = true;
                    } else if kappa < curvature_min {
                        curvature_min = kappa;
                    }
                    if let Some(w) = w {
                        curvature_witnesses.push((k, w));
                    }
                }
            }
        }
    }
    report.tolerances.insert("midpoint_distance".into(), max_tol);
    report.skipped = inconclusive;
    report.margin = -max_dist;
    if !violations.is_empty() {
        report.verdict = Verdict::Fail;
        report.witnesses = select_witnesses(violations);
        return Ok(report);
    }
    if inconclusive == xs.len() {
        report.verdict = Verdict::Inconclusive;
        return Ok(report);
    }
    if strong {
        if c.dim_x < 2 {
            report.verdict = Verdict::Inconclusive;
            return Ok(report.note("boundary curvature is undefined for n = 1"));
        }
        report.margin = curvature_min - A4_CURVATURE_TOL;
        let bad: Vec<(usize, Witness)> = curvature_witnesses.iter().filter(|(_, w)| w.slack <= 0.0).cloned().collect();
        if !bad.is_empty() {
            report.verdict = Verdict::Fail;
            report.witnesses = select_witnesses(bad);
            return Ok(report);
        }
        if curvature_undefined || curvature_witnesses.is_empty() {
            report.verdict = Verdict::Inconclusive;
            return Ok(report.note("no boundary samples to fit"));
        }
        report.witnesses = select_witnesses(curvature_witnesses).into_iter().take(1).collect();
    }
    report.verdict = if inconclusive > 0 { Verdict::Inconclusive } else { Verdict::Pass };
    Ok(report)
}
