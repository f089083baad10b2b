//! Cyclical monotonicity certificates for a finite support.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::CostFunction;
use crate::error::{Error, Result};

/// A cycle is a violation when its gap is below `-CCM_GAP_TOL`.
pub const CCM_GAP_TOL: f64 = 1e-10;
/// Maximum number of DFS nodes for exact enumeration.
pub const EXACT_NODE_BUDGET: u64 = 200_000_000;
pub const LOCAL_SEARCH_RESTARTS: usize = 64;
pub const LOCAL_SEARCH_SEED: u64 = 0x5EED_CC3;
/// `Auto` enumerates exactly up to this many support pairs and cycle length.
pub const AUTO_EXACT_MAX_PAIRS: usize = 16;
pub const AUTO_EXACT_MAX_K: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CcmMode {
    Exact,
    LocalSearch,
    Auto,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateStatus {
    CertifiedUpToK,
    Violated,
}

/// Support indices `a_0, ..., a_{L-1}`; `x_{a_t}` is re-paired with `y_{a_{t+1}}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleViolation {
    pub cycle: Vec<usize>,
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleCertificate {
    pub status: CertificateStatus,
    pub k: usize,
    pub violation: Option<CycleViolation>,
    /// `Exact` or `LocalSearch`; never `Auto`.
    pub mode: CcmMode,
    pub nodes: u64,
    pub budget: u64,
    pub restarts: usize,
    pub seed: u64,
}

impl CycleCertificate {
    pub fn is_certified(&self) -> bool {
        self.status == CertificateStatus::CertifiedUpToK
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CcmOptions {
    pub k: usize,
    pub mode: CcmMode,
    pub budget: u64,
    pub restarts: usize,
    pub seed: u64,
}

impl CcmOptions {
    pub fn new(k: usize, mode: CcmMode) -> Self {
        CcmOptions { k, mode, budget: EXACT_NODE_BUDGET, restarts: LOCAL_SEARCH_RESTARTS, seed: LOCAL_SEARCH_SEED }
    }
}

/// `M[a][b] = c(x_a, y_b)`; pairs the cost cannot evaluate count as `+∞`.
fn pair_costs(c: &CostFunction, support: &[(Vec<f64>, Vec<f64>)]) -> Result<Vec<f64>> {
    let n = support.len();
    let mut m = vec![0.0; n * n];
    for (a, (x, _)) in support.iter().enumerate() {
        for (b, (_, y)) in support.iter().enumerate() {
            m[a * n + b] = match c.evaluate(x, y) {
                Ok(v) => v,
                Err(Error::Domain(_)) if a != b => f64::INFINITY,
                Err(e) => return Err(e),
            };
        }
    }
    Ok(m)
}

fn gap_of(m: &[f64], n: usize, cycle: &[usize]) -> f64 {
    let l = cycle.len();
    (0..l).map(|t| m[cycle[t] * n + cycle[(t + 1) % l]] - m[cycle[t] * n + cycle[t]]).sum()
}

/// `Σ_t c(x_{a_t}, y_{a_{t+1}}) - c(x_{a_t}, y_{a_t})`; negative means the
/// re-pairing is cheaper.
pub fn cycle_gap(c: &CostFunction, support: &[(Vec<f64>, Vec<f64>)], cycle: &[usize]) -> Result<f64> {
    let n = support.len();
    if cycle.iter().any(|a| *a >= n) {
        return Err(Error::Index(format!("cycle {cycle:?} outside a support of {n} pairs")));
    }
    let mut total = 0.0;
    for t in 0..cycle.len() {
        let (a, b) = (cycle[t], cycle[(t + 1) % cycle.len()]);
        total += c.evaluate(&support[a].0, &support[b].1)? - c.evaluate(&support[a].0, &support[a].1)?;
    }
    Ok(total)
}

pub fn check_ccm(c: &CostFunction, support: &[(Vec<f64>, Vec<f64>)], k: usize, mode: CcmMode) -> Result<CycleCertificate> {
    check_ccm_with(c, support, &CcmOptions::new(k, mode))
}

pub fn check_ccm_with(c: &CostFunction, support: &[(Vec<f64>, Vec<f64>)], opts: &CcmOptions) -> Result<CycleCertificate> {
    if opts.k < 2 {
        return Err(Error::Config("cycle length K must be at least 2".into()));
    }
    let n = support.len();
    let mode = match opts.mode {
        CcmMode::Auto if n <= AUTO_EXACT_MAX_PAIRS && opts.k <= AUTO_EXACT_MAX_K => CcmMode::Exact,
        CcmMode::Auto => CcmMode::LocalSearch,
        m => m,
    };
    let m = pair_costs(c, support)?;
    let (best, nodes) = match mode {
        CcmMode::Exact => exact(&m, n, opts.k, opts.budget)?,
        _ => local_search(&m, n, opts.k, opts.restarts, opts.seed),
    };
    let violation = best.filter(|v| v.gap < -CCM_GAP_TOL);
    Ok(CycleCertificate {
        status: if violation.is_some() { CertificateStatus::Violated } else { CertificateStatus::CertifiedUpToK },
        k: opts.k,
        violation,
        mode,
        nodes,
        budget: opts.budget,
        restarts: if mode == CcmMode::LocalSearch { opts.restarts } else { 0 },
        seed: opts.seed,
    })
}

/// Number of DFS nodes: paths of length `1..K` starting at `s` through larger indices.
fn exact_node_count(n: usize, k: usize) -> u64 {
    let mut total: u64 = 0;
    for s in 0..n {
        let avail = (n - s - 1) as u64;
        let mut paths: u64 = 1;
        for depth in 1..k as u64 {
            if depth > avail {
                break;
            }
            paths = paths.saturating_mul(avail - depth + 1);
            total = total.saturating_add(paths);
        }
    }
    total
}

/// Most negative cycle (ties to the first found in start/DFS order).
fn exact(m: &[f64], n: usize, k: usize, budget: u64) -> Result<(Option<CycleViolation>, u64)> {
    let nodes = exact_node_count(n, k);
    if nodes > budget {
        return Err(Error::ComplexityGuard { budget });
    }
    let per_start: Vec<Option<CycleViolation>> = (0..n)
        .into_par_iter()
        .map(|s| {
            let mut best: Option<CycleViolation> = None;
            let mut path = vec![s];
            let mut used = vec![false; n];
            used[s] = true;
            dfs(m, n, k, &mut path, &mut used, 0.0, &mut best);
            best
        })
        .collect();
    Ok((reduce(per_start), nodes))
}

fn dfs(m: &[f64], n: usize, k: usize, path: &mut Vec<usize>, used: &mut [bool], partial: f64, best: &mut Option<CycleViolation>) {
    let s = path[0];
    let last = *path.last().unwrap();
    for next in (s + 1)..n {
        if used[next] {
            continue;
        }
        let step = partial + m[last * n + next] - m[last * n + last];
        let closed = step + m[next * n + s] - m[next * n + next];
        path.push(next);
        if best.as_ref().is_none_or(|b| closed < b.gap) {
            *best = Some(CycleViolation { cycle: path.clone(), gap: closed });
        }
        if path.len() < k {
            used[next] = true;
            dfs(m, n, k, path, used, step, best);
            used[next] = false;
        }
        path.pop();
    }
}

fn reduce(candidates: Vec<Option<CycleViolation>>) -> Option<CycleViolation> {
    candidates.into_iter().flatten().fold(None, |acc, v| match acc {
        Some(a) if a.gap <= v.gap => Some(a),
        _ => Some(v),
    })
}

/// Best-improvement search over cycles: replace one member by an unused
/// index, or swap two members; restart from random cycles.
fn local_search(m: &[f64], n: usize, k: usize, restarts: usize, seed: u64) -> (Option<CycleViolation>, u64) {
    if n < 2 {
        return (None, 0);
    }
    let kmax = k.min(n);
    let results: Vec<(Option<CycleViolation>, u64)> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(r as u64));
            let len = rng.random_range(2..=kmax);
            let mut cycle: Vec<usize> = sample(&mut rng, n, len).into_vec();
            let mut gap = gap_of(m, n, &cycle);
            let mut evaluated = 1u64;
            loop {
                let mut best_move: Option<(Vec<usize>, f64)> = None;
                let mut consider = |cand: Vec<usize>, evaluated: &mut u64| {
                    *evaluated += 1;
                    let g = gap_of(m, n, &cand);
                    if g < best_move.as_ref().map_or(gap, |b| b.1) {
                        best_move = Some((cand, g));
                    }
                };
                for pos in 0..cycle.len() {
                    for idx in 0..n {
                        if cycle.contains(&idx) {
                            continue;
                        }
                        let mut cand = cycle.clone();
                        cand[pos] = idx;
                        consider(cand, &mut evaluated);
                    }
                }
                for p in 0..cycle.len() {
                    for q in (p + 1)..cycle.len() {
                        let mut cand = cycle.clone();
                        cand.swap(p, q);
                        consider(cand, &mut evaluated);
                    }
                }
                match best_move {
                    Some((cand, g)) => {
                        cycle = cand;
                        gap = g;
                    }
                    None => break,
                }
            }
            (Some(CycleViolation { cycle: canonical(cycle), gap }), evaluated)
        })
        .collect();
    let nodes = results.iter().map(|r| r.1).sum();
    (reduce(results.into_iter().map(|r| r.0).collect()), nodes)
}

/// Rotate so the smallest index comes first.
fn canonical(mut cycle: Vec<usize>) -> Vec<usize> {
    let pos = (0..cycle.len()).min_by_key(|&p| cycle[p]).unwrap_or(0);
    cycle.rotate_left(pos);
    cycle
}
