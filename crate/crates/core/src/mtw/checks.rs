use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tensor::MtwTensor;
use super::{select_witnesses, AxisGrid, ConditionReport, GridSpec, Verdict, Witness};
use crate::cost::{fd, CostFunction, DerivativeRequest};
use crate::error::{Error, Result};
use crate::geometry::BasePoint;

/// Relative disagreement allowed between successive Richardson estimates.
pub const A0_REL_TOL: f64 = 1e-3;
/// Images closer than `A1_COLLISION_TOL·(1 + diameter)` count as coinciding.
pub const A1_COLLISION_TOL: f64 = 1e-8;
/// `|det C|` over the largest product of row norms on the grid.
pub const A2_DET_TOL: f64 = 1e-6;
/// Lightlike constraint `|pᵀCq| <= tol·|p||q|·max|C|`.
pub const A3_ORTHO_TOL: f64 = 1e-6;
/// Tensor values above `-A3_SIGN_TOL` count as non-negative.
pub const A3_SIGN_TOL: f64 = 1e-6;

fn pairs(grid: &GridSpec, c: &CostFunction) -> Vec<(Vec<f64>, Vec<f64>)> {
    let ys = grid.y_points(c);
    grid.x_points(c)
        .into_iter()
        .flat_map(|x| ys.iter().map(move |y| (x.clone(), y.clone())))
        .collect()
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt()
}

/// Smoothness proxy: at every grid pair and for every derivative of order
/// 1–4, two Richardson estimates from nested steps must agree. Points of the
/// excluded set are not skipped, since the condition asks for smoothness on
/// the closure.
pub fn check_a0(c: &CostFunction, grid: &GridSpec) -> Result<ConditionReport> {
    grid.validate(c)?;
    let nx = c.dim_x;
    let requests: Vec<DerivativeRequest> = (1..=4).flat_map(|m| DerivativeRequest::all_of_order(m, c.dim_x, c.dim_y)).collect();
    let scheme = fd::FdScheme { richardson_levels: 3, ..c.fd.clone() };
    let f = |z: &[f64]| c.value_unchecked(&z[..nx], &z[nx..]);
    let pts = pairs(grid, c);
    let per_point: Vec<(f64, Option<Witness>)> = pts
        .par_iter()
        .map(|(x, y)| {
            let z: Vec<f64> = x.iter().chain(y).copied().collect();
            let magnitude = f(&z).abs();
            let mut worst = (f64::INFINITY, None);
            for req in &requests {
                let idx: Vec<usize> = req.x.iter().copied().chain(req.y.iter().map(|j| j + nx)).collect();
                let order = req.order();
                let steps = scheme.level_steps(order, fd::coordinate_scale(&z, &idx));
                let d: Vec<f64> = steps.iter().map(|h| fd::central(&f, &z, &idx, *h)).collect();
                let r1 = (4.0 * d[1] - d[0]) / 3.0;
                let r2 = (4.0 * d[2] - d[1]) / 3.0;
                let tol = A0_REL_TOL * r2.abs().max(1.0) + fd::noise_floor(&scheme, order, fd::coordinate_scale(&z, &idx), magnitude);
                let disc = (r1 - r2).abs();
                let slack = if disc.is_finite() { 1.0 - disc / tol } else { f64::NEG_INFINITY };
                if slack < worst.0 {
                    worst = (
                        slack,
                        Some(Witness {
                            x: x.clone(),
                            y: y.clone(),
                            vectors: vec![],
                            slack,
                            label: format!("d{:?}{:?}: {r1:.6e} vs {r2:.6e}", req.x, req.y),
                        }),
                    );
                }
            }
            worst
        })
        .collect();
    let mut report = ConditionReport::new("A0", grid)
        .tolerance("richardson_rel", A0_REL_TOL)
        .note("A0′: c is C⁴ on the closure; checked by agreement of Richardson estimates under step halving");
    let mut candidates = Vec::new();
    for (k, (slack, w)) in per_point.into_iter().enumerate() {
        report.margin = report.margin.min(slack);
        if let Some(w) = w {
            if slack < 0.0 || candidates.is_empty() || slack <= report.margin {
                candidates.push((k, w));
            }
        }
    }
    finish(&mut report, candidates, 0.0);
    Ok(report)
}

/// Keep violating witnesses (slack below `-threshold`) or, on a pass, the
/// single tightest sample.
fn finish(report: &mut ConditionReport, candidates: Vec<(usize, Witness)>, threshold: f64) {
    let failing: Vec<(usize, Witness)> = candidates.iter().filter(|(_, w)| w.slack < -threshold).cloned().collect();
    if failing.is_empty() {
        report.verdict = Verdict::Pass;
        report.witnesses = select_witnesses(candidates).into_iter().take(1).collect();
    } else {
        report.verdict = Verdict::Fail;
        report.witnesses = select_witnesses(failing);
    }
}

/// Image `{D_x c(x₀, y)}` over the grid points of `y_grid` inside the
/// domain; points of the excluded set are skipped.
pub fn image_set(c: &CostFunction, x0: &[f64], y_grid: &AxisGrid) -> Result<Vec<Vec<f64>>> {
    y_grid
        .points()
        .into_iter()
        .filter(|y| c.domain_y.contains(y) && !c.is_excluded(x0, y))
        .map(|y| c.grad_x(x0, &y))
        .collect()
}

/// Twist: `y ↦ D_x c(x₀, y)` has no coinciding images on the grid.
pub fn check_a1_plus(c: &CostFunction, grid: &GridSpec) -> Result<ConditionReport> {
    grid.validate(c)?;
    let ys = grid.y_points(c);
    let xs = grid.x_points(c);
    let per_x: Vec<Result<(f64, usize, Vec<Witness>)>> = xs
        .par_iter()
        .map(|x0| {
            let mut skipped = 0;
            let mut images = Vec::with_capacity(ys.len());
            for (j, y) in ys.iter().enumerate() {
                if c.is_excluded(x0, y) {
                    skipped += 1;
                    continue;
                }
                images.push((j, c.grad_x(x0, y)?));
            }
            let (lo, hi) = images.iter().fold((vec![f64::INFINITY; c.dim_x], vec![f64::NEG_INFINITY; c.dim_x]), |(mut lo, mut hi), (_, v)| {
                for k in 0..v.len() {
                    lo[k] = lo[k].min(v[k]);
                    hi[k] = hi[k].max(v[k]);
                }
                (lo, hi)
            });
            let diam = if images.is_empty() { 0.0 } else { euclid(&lo, &hi) };
            let tol = A1_COLLISION_TOL * (1.0 + diam);
            // closest pair by a sweep along the first image coordinate
            images.sort_by(|a, b| a.1[0].total_cmp(&b.1[0]).then(a.0.cmp(&b.0)));
            let mut best = f64::INFINITY;
            let mut collisions = Vec::new();
            for a in 0..images.len() {
                for b in (a + 1)..images.len() {
                    if images[b].1[0] - images[a].1[0] > best.max(tol) {
                        break;
                    }
                    let d = euclid(&images[a].1, &images[b].1);
                    best = best.min(d);
                    if d <= tol {
                        let (ja, jb) = (images[a].0.min(images[b].0), images[a].0.max(images[b].0));
                        collisions.push(Witness {
                            x: x0.clone(),
                            y: ys[ja].clone(),
                            vectors: vec![ys[jb].clone()],
                            slack: d - tol,
                            label: "coinciding D_x c images".into(),
                        });
                    }
                }
            }
            collisions.sort_by(|a, b| a.slack.total_cmp(&b.slack).then_with(|| a.y.partial_cmp(&b.y).unwrap_or(std::cmp::Ordering::Equal)));
            collisions.truncate(super::MAX_WITNESSES);
            Ok((best - tol, skipped, collisions))
        })
        .collect();
    let mut report = ConditionReport::new("A1+", grid)
        .tolerance("collision_rel", A1_COLLISION_TOL)
        .note("A1′₊: y ↦ D_x c(x₀, y) is injective for every x₀");
    let mut candidates = Vec::new();
    let mut tightest: Option<(usize, Witness)> = None;
    for (k, r) in per_x.into_iter().enumerate() {
        let (slack, skipped, collisions) = r?;
        report.skipped += skipped;
        if slack < report.margin {
            report.margin = slack;
            tightest = Some((k, Witness { x: xs[k].clone(), y: vec![], vectors: vec![], slack, label: "closest image pair".into() }));
        }
        candidates.extend(collisions.into_iter().map(|w| (k, w)));
    }
    if candidates.is_empty() {
        report.verdict = Verdict::Pass;
        report.witnesses = tightest.map(|t| vec![t.1]).unwrap_or_default();
    } else {
        report.verdict = Verdict::Fail;
        report.witnesses = select_witnesses(candidates);
    }
    Ok(report)
}

/// Bi-twist: A1+ for `c` and for the reflected cost.
pub fn check_a1(c: &CostFunction, grid: &GridSpec) -> Result<ConditionReport> {
    let forward = check_a1_plus(c, grid)?;
    let backward = check_a1_plus(&c.reflect(), &grid.swapped())?;
    let mut report = ConditionReport::new("A1", grid)
        .tolerance("collision_rel", A1_COLLISION_TOL)
        .note("A1′: A1′₊ holds for c and for c*(y, x) = c(x, y)");
    report.margin = forward.margin.min(backward.margin);
    report.skipped = forward.skipped + backward.skipped;
    report.verdict = if forward.verdict == Verdict::Pass && backward.verdict == Verdict::Pass { Verdict::Pass } else { Verdict::Fail };
    for (tag, part) in [("c", forward), ("c*", backward)] {
        if report.verdict == Verdict::Pass || part.verdict == Verdict::Fail {
            report.witnesses.extend(part.witnesses.into_iter().map(|mut w| {
                w.label = format!("{tag}: {}", w.label);
                w
            }));
        }
    }
    report.witnesses.truncate(super::MAX_WITNESSES);
    Ok(report)
}

/// Non-degeneracy: `|det C|`, normalised by the largest product of row norms
/// of `C` over the grid, stays above `A2_DET_TOL`.
pub fn check_a2(c: &CostFunction, grid: &GridSpec) -> Result<ConditionReport> {
    grid.validate(c)?;
    if c.dim_x != c.dim_y {
        return Err(Error::DimensionMismatch("A2 needs n⁺ = n⁻".into()));
    }
    let pts = pairs(grid, c);
    let values: Vec<Option<(f64, f64)>> = pts
        .par_iter()
        .map(|(x, y)| {
            if c.is_excluded(x, y) {
                return Ok(None);
            }
            let m = c.cross_matrix(x, y)?;
            let rows: f64 = m.row_iter().map(|r| r.norm()).product();
            Ok(Some((m.determinant().abs(), rows)))
        })
        .collect::<Result<_>>()?;
    let scale = values.iter().flatten().map(|v| v.1).fold(0.0, f64::max);
    let mut report = ConditionReport::new("A2", grid)
        .tolerance("det_rel", A2_DET_TOL)
        .note("A2′: det c_{i,j}(x₀, y₀) ≠ 0 on the grid");
    let mut candidates = Vec::new();
    for (k, v) in values.iter().enumerate() {
        let Some((det, _)) = v else {
            report.skipped += 1;
            continue;
        };
        let ratio = if scale > 0.0 { det / scale } else { 0.0 };
        report.margin = report.margin.min(ratio);
        let slack = ratio - A2_DET_TOL;
        let w = Witness { x: pts[k].0.clone(), y: pts[k].1.clone(), vectors: vec![], slack, label: format!("|det C| = {det:.3e}") };
        if slack <= 0.0 {
            candidates.push((k, Witness { slack: slack.min(-f64::MIN_POSITIVE), ..w }));
        } else if ratio <= report.margin {
            candidates.push((k, w));
        }
    }
    finish(&mut report, candidates, 0.0);
    Ok(report)
}

/// One evaluation of the MTW tensor on a lightlike pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MtwSample {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub value: f64,
}

/// Unit lightlike pairs: `p` Gaussian, `q` Gaussian projected onto the
/// orthogonal complement of `Cᵀp`.
fn lightlike_pairs(cross: &nalgebra::DMatrix<f64>, count: usize, rng: &mut ChaCha8Rng) -> Vec<(Vec<f64>, Vec<f64>)> {
    let (nx, ny) = cross.shape();
    let mut out = Vec::new();
    if ny < 2 {
        return out;
    }
    let scale = cross.amax().max(f64::MIN_POSITIVE);
    let mut attempts = 0;
    while out.len() < count && attempts < 4 * count + 8 {
        attempts += 1;
        let p = DVector::<f64>::from_fn(nx, |_, _| StandardNormal.sample(rng));
        let q = DVector::<f64>::from_fn(ny, |_, _| StandardNormal.sample(rng));
        let (pn, qn) = (p.norm(), q.norm());
        if pn < 1e-12 || qn < 1e-12 {
            continue;
        }
        let p = p / pn;
        let w = cross.transpose() * &p;
        let ww = w.norm_squared();
        let q = if ww > 0.0 { &q - &w * (q.dot(&w) / ww) } else { q };
        let qn = q.norm();
        if qn < 1e-8 {
            continue;
        }
        let q = q / qn;
        if (p.dot(&(cross * &q))).abs() <= A3_ORTHO_TOL * scale {
            out.push((p.as_slice().to_vec(), q.as_slice().to_vec()));
        }
    }
    out
}

fn base_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Tensor values on `grid.directions` lightlike pairs per grid base point.
/// Base points where `C` is singular (or excluded) are returned separately.
pub fn mtw_scan(c: &CostFunction, grid: &GridSpec) -> Result<(Vec<MtwSample>, Vec<Witness>)> {
    grid.validate(c)?;
    let pts = pairs(grid, c);
    let per_point: Vec<Result<std::result::Result<Vec<MtwSample>, Witness>>> = pts
        .par_iter()
        .enumerate()
        .map(|(k, (x, y))| {
            let degenerate = |label: String| Witness { x: x.clone(), y: y.clone(), vectors: vec![], slack: 0.0, label };
            if c.is_excluded(x, y) {
                return Ok(Err(degenerate("excluded set".into())));
            }
            let tensor = match MtwTensor::at(c, &BasePoint::new(x, y)) {
                Ok(t) => t,
                Err(Error::DegenerateMetric(m)) => return Ok(Err(degenerate(m))),
                Err(e) => return Err(e),
            };
            let mut rng = ChaCha8Rng::seed_from_u64(base_seed(grid.seed, k));
            Ok(Ok(lightlike_pairs(tensor.cross(), grid.directions, &mut rng)
                .into_iter()
                .map(|(p, q)| MtwSample { x: x.clone(), y: y.clone(), value: tensor.sectional(&p, &q), p, q })
                .collect()))
        })
        .collect();
    let mut samples = Vec::new();
    let mut degenerate = Vec::new();
    for r in per_point {
        match r? {
            Ok(s) => samples.extend(s),
            Err(w) => degenerate.push(w),
        }
    }
    Ok((samples, degenerate))
}

/// Regularity: the MTW tensor is non-negative (weak) or at least
/// `C₀|p|²|q|²` (strict) on lightlike pairs over the grid.
pub fn check_a3(c: &CostFunction, grid: &GridSpec, strict: bool, c0: f64) -> Result<ConditionReport> {
    if !(c0 >= 0.0) {
        return Err(Error::Config("C0 must be non-negative".into()));
    }
    let (samples, degenerate) = mtw_scan(c, grid)?;
    let name = if strict { "A3s" } else { "A3" };
    let mut report = ConditionReport::new(name, grid)
        .tolerance("orthogonality_rel", A3_ORTHO_TOL)
        .tolerance("sign", A3_SIGN_TOL)
        .tolerance("c0", if strict { c0 } else { 0.0 });
    report = report.note(if strict {
        "A3s′: MTW tensor ≥ C₀|p|²|q|² whenever pᵀCq = 0"
    } else {
        "A3′: MTW tensor ≥ 0 whenever pᵀCq = 0"
    });
    report.skipped = degenerate.len();
    if !degenerate.is_empty() {
        report = report.note(format!("{} base points skipped: singular C or excluded set", degenerate.len()));
    }
    if samples.is_empty() {
        report = report.note("no lightlike pairs sampled (for n⁻ = 1 the constraint pᵀCq = 0 has no unit solutions)");
    }
    let candidates: Vec<(usize, Witness)> = samples
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let slack = if strict { s.value - c0 } else { s.value };
            (k, Witness { x: s.x.clone(), y: s.y.clone(), vectors: vec![s.p.clone(), s.q.clone()], slack, label: format!("tensor {:.6e}", s.value) })
        })
        .collect();
    report.margin = candidates.iter().map(|c| c.1.slack).fold(f64::INFINITY, f64::min);
    finish(&mut report, candidates, A3_SIGN_TOL);
    Ok(report)
}
