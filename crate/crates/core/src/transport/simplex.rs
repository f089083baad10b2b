//! Primal network simplex on the bipartite transportation graph.
//!
//! Nodes are sources `0..m` and targets `m..m+n`; a basis is a spanning tree
//! of `m + n - 1` arcs (zero-flow arcs included), started from the
//! north-west corner rule.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::plan::{cost_matrix, DualPotentials, PlanEntry, TransportPlan};
use super::DiscreteMeasure;
use crate::cost::CostFunction;
use crate::error::{Error, Result};

/// Relative pivot tolerance on reduced costs.
pub const PIVOT_TOL: f64 = 1e-11;
/// Masses at or below this are dropped from returned plans.
pub const MASS_FLOOR: f64 = 1e-14;
/// Total masses may differ by this much (relative) before the problem is infeasible.
pub const MASS_BALANCE_TOL: f64 = 1e-9;

const NONE: usize = usize::MAX;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub pivots: usize,
    pub degenerate_pivots: usize,
    /// Set once the solver falls back to Bland's rule.
    pub bland: bool,
}

/// North-west corner basis over the given row and column orders: exactly
/// `m + n - 1` cells forming a spanning tree, zero flows included.
pub fn northwest_corner(a: &[f64], b: &[f64], rows: &[usize], cols: &[usize]) -> Vec<(usize, usize, f64)> {
    let (m, n) = (rows.len(), cols.len());
    let mut cells = Vec::with_capacity(m + n - 1);
    let (mut r, mut c) = (0, 0);
    let (mut ra, mut rb) = (a[rows[0]], b[cols[0]]);
    loop {
        let x = ra.min(rb).max(0.0);
        cells.push((rows[r], cols[c], x));
        ra -= x;
        rb -= x;
        if r == m - 1 && c == n - 1 {
            break;
        }
        if (ra <= rb && r < m - 1) || c == n - 1 {
            r += 1;
            ra = a[rows[r]];
        } else {
            c += 1;
            rb = b[cols[c]];
        }
    }
    cells
}

/// Feasible vertex from the north-west corner rule under the given orders.
pub fn northwest_corner_plan(mu_plus: &DiscreteMeasure, mu_minus: &DiscreteMeasure, rows: &[usize], cols: &[usize]) -> Result<TransportPlan> {
    if rows.len() != mu_plus.len() || cols.len() != mu_minus.len() {
        return Err(Error::Index("row/column orders must be permutations of the atoms".into()));
    }
    let cells = northwest_corner(&mu_plus.weights, &mu_minus.weights, rows, cols);
    let flows = tree_flows(&mu_plus.weights, &mu_minus.weights, &cells.iter().map(|c| (c.0, c.1)).collect::<Vec<_>>());
    plan_from_flows(mu_plus.len(), mu_minus.len(), &cells, &flows)
}

fn plan_from_flows(m: usize, n: usize, arcs: &[(usize, usize, f64)], flows: &[f64]) -> Result<TransportPlan> {
    TransportPlan::new(
        m,
        n,
        arcs.iter().zip(flows).filter(|(_, f)| **f > MASS_FLOOR).map(|(a, f)| PlanEntry { i: a.0, j: a.1, mass: *f }),
    )
}

/// Basic solution of a spanning tree, by eliminating leaves.
fn tree_flows(a: &[f64], b: &[f64], arcs: &[(usize, usize)]) -> Vec<f64> {
    let m = a.len();
    let nodes = m + b.len();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); nodes];
    for (k, &(i, j)) in arcs.iter().enumerate() {
        adj[i].push(k);
        adj[m + j].push(k);
    }
    let mut degree: Vec<usize> = adj.iter().map(|v| v.len()).collect();
    let mut supply: Vec<f64> = a.iter().copied().chain(b.iter().map(|v| -v)).collect();
    let mut used = vec![false; arcs.len()];
    let mut flows = vec![0.0; arcs.len()];
    let mut leaves: VecDeque<usize> = (0..nodes).filter(|v| degree[*v] == 1).collect();
    while let Some(v) = leaves.pop_front() {
        if degree[v] != 1 {
            continue;
        }
        let Some(&k) = adj[v].iter().find(|k| !used[**k]) else { continue };
        used[k] = true;
        let (i, j) = arcs[k];
        let flow = if v < m { supply[v] } else { -supply[v] };
        flows[k] = flow.max(0.0);
        supply[i] -= flow;
        supply[m + j] += flow;
        for w in [i, m + j] {
            degree[w] -= 1;
            if w != v && degree[w] == 1 {
                leaves.push_back(w);
            }
        }
    }
    flows
}

struct Tree {
    m: usize,
    arcs: Vec<(usize, usize)>,
    flow: Vec<f64>,
    adj: Vec<Vec<usize>>,
}

impl Tree {
    fn node_arcs(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    fn other(&self, k: usize, v: usize) -> usize {
        let (i, j) = self.arcs[k];
        if v == i {
            self.m + j
        } else {
            i
        }
    }

    fn potentials(&self, cost: &[f64], n: usize, u: &mut [f64], v: &mut [f64]) {
        let nodes = self.adj.len();
        let mut seen = vec![false; nodes];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        u[0] = 0.0;
        while let Some(x) = queue.pop_front() {
            for &k in self.node_arcs(x) {
                let y = self.other(k, x);
                if seen[y] {
                    continue;
                }
                seen[y] = true;
                let (i, j) = self.arcs[k];
                if y >= self.m {
                    v[j] = cost[i * n + j] - u[i];
                } else {
                    u[i] = cost[i * n + j] - v[j];
                }
                queue.push_back(y);
            }
        }
    }

    /// Arcs on the tree path from `from` to `to`, listed from the `to` end.
    fn path(&self, from: usize, to: usize) -> Vec<usize> {
        let nodes = self.adj.len();
        let mut parent = vec![NONE; nodes];
        let mut seen = vec![false; nodes];
        let mut queue = VecDeque::from([from]);
        seen[from] = true;
        while let Some(x) = queue.pop_front() {
            if x == to {
                break;
            }
            for &k in self.node_arcs(x) {
                let y = self.other(k, x);
                if !seen[y] {
                    seen[y] = true;
                    parent[y] = k;
                    queue.push_back(y);
                }
            }
        }
        let mut out = Vec::new();
        let mut x = to;
        while x != from {
            let k = parent[x];
            out.push(k);
            x = self.other(k, x);
        }
        out
    }

    fn replace(&mut self, leaving: usize, arc: (usize, usize), flow: f64) {
        let (i, j) = self.arcs[leaving];
        let m = self.m;
        self.adj[i].retain(|k| *k != leaving);
        self.adj[m + j].retain(|k| *k != leaving);
        self.arcs[leaving] = arc;
        self.flow[leaving] = flow;
        self.adj[arc.0].push(leaving);
        self.adj[m + arc.1].push(leaving);
    }
}

fn check_balance(mu_plus: &DiscreteMeasure, mu_minus: &DiscreteMeasure) -> Result<()> {
    let (p, q) = (mu_plus.total_mass(), mu_minus.total_mass());
    if (p - q).abs() > MASS_BALANCE_TOL * p.max(q).max(1.0) {
        return Err(Error::InfeasibleMass { plus: p, minus: q });
    }
    Ok(())
}

/// Optimal vertex of the transportation polytope.
pub fn solve_primal(c: &CostFunction, mu_plus: &DiscreteMeasure, mu_minus: &DiscreteMeasure) -> Result<TransportPlan> {
    Ok(solve_primal_with_stats(c, mu_plus, mu_minus)?.0)
}

pub fn solve_primal_with_stats(c: &CostFunction, mu_plus: &DiscreteMeasure, mu_minus: &DiscreteMeasure) -> Result<(TransportPlan, SolveStats)> {
    check_balance(mu_plus, mu_minus)?;
    let cost = cost_matrix(c, mu_plus, mu_minus)?;
    solve_cost_matrix(&cost, &mu_plus.weights, &mu_minus.weights)
}

/// Network simplex on an explicit row-major cost matrix.
pub fn solve_cost_matrix(cost: &[f64], a: &[f64], b: &[f64]) -> Result<(TransportPlan, SolveStats)> {
    let (m, n) = (a.len(), b.len());
    if m == 0 || n == 0 || cost.len() != m * n {
        return Err(Error::DimensionMismatch("cost matrix does not match the marginals".into()));
    }
    if cost.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidMeasure("all pairwise costs must be finite".into()));
    }
    let rows: Vec<usize> = (0..m).collect();
    let cols: Vec<usize> = (0..n).collect();
    let cells = northwest_corner(a, b, &rows, &cols);
    let mut tree = Tree {
        m,
        arcs: cells.iter().map(|c| (c.0, c.1)).collect(),
        flow: cells.iter().map(|c| c.2).collect(),
        adj: vec![Vec::new(); m + n],
    };
    for (k, &(i, j)) in tree.arcs.iter().enumerate() {
        tree.adj[i].push(k);
        tree.adj[m + j].push(k);
    }
    let mut basic = vec![false; m * n];
    for &(i, j) in &tree.arcs {
        basic[i * n + j] = true;
    }
    let tol = PIVOT_TOL * cost.iter().fold(1.0f64, |s, v| s.max(v.abs()));
    let (mut u, mut v) = (vec![0.0; m], vec![0.0; n]);
    let mut stats = SolveStats::default();
    let mut degenerate_run = 0usize;
    let max_pivots = 50 * (m + n) * (m + n) + 1000;
    loop {
        tree.potentials(cost, n, &mut u, &mut v);
        // entering arc: most negative reduced cost, ties to the smallest (i, j);
        // under Bland's rule the first eligible arc
        let mut entering = None;
        let mut best = -tol;
        'scan: for i in 0..m {
            let row = &cost[i * n..(i + 1) * n];
            for j in 0..n {
                if basic[i * n + j] {
                    continue;
                }
                let r = row[j] - u[i] - v[j];
                if r < best {
                    entering = Some((i, j));
                    if stats.bland {
                        break 'scan;
                    }
                    best = r;
                }
            }
        }
        let Some((ei, ej)) = entering else { break };
        if stats.pivots >= max_pivots {
            return Err(Error::NotOptimal(format!("pivot limit {max_pivots} reached")));
        }
        // cycle: entering arc (+), then the tree path from target ej back to source ei
        let path = tree.path(ei, m + ej);
        let mut leaving = NONE;
        let mut theta = f64::INFINITY;
        for (pos, &k) in path.iter().enumerate() {
            if pos % 2 == 0 {
                let f = tree.flow[k];
                let better = f < theta || (f == theta && tree.arcs[k] < tree.arcs[leaving]);
                if better {
                    theta = f;
                    leaving = k;
                }
            }
        }
        let theta = theta.max(0.0);
        for (pos, &k) in path.iter().enumerate() {
            if pos % 2 == 0 {
                tree.flow[k] = (tree.flow[k] - theta).max(0.0);
            } else {
                tree.flow[k] += theta;
            }
        }
        let (li, lj) = tree.arcs[leaving];
        basic[li * n + lj] = false;
        basic[ei * n + ej] = true;
        tree.replace(leaving, (ei, ej), theta);
        stats.pivots += 1;
        if theta <= 0.0 {
            stats.degenerate_pivots += 1;
            degenerate_run += 1;
            if degenerate_run > 2 * (m + n) {
                stats.bland = true;
            }
        } else {
            degenerate_run = 0;
        }
    }
    let flows = tree_flows(a, b, &tree.arcs);
    let arcs: Vec<(usize, usize, f64)> = tree.arcs.iter().map(|&(i, j)| (i, j, 0.0)).collect();
    Ok((plan_from_flows(m, n, &arcs, &flows)?, stats))
}

/// Potentials from an optimal plan. On each connected component of the
/// support the equalities `u⁺_i + u⁻_j = c_ij` fix the potentials up to a
/// constant, anchored by setting `u⁻ = 0` at the component's first target;
/// components are then shifted against each other (shortest paths over the
/// component graph) so that every pair is feasible.
pub fn solve_dual(c: &CostFunction, mu_plus: &DiscreteMeasure, mu_minus: &DiscreteMeasure, plan: &TransportPlan) -> Result<DualPotentials> {
    let cost = cost_matrix(c, mu_plus, mu_minus)?;
    dual_from_cost_matrix(&cost, plan)
}

pub fn dual_from_cost_matrix(cost: &[f64], plan: &TransportPlan) -> Result<DualPotentials> {
    let (m, n) = (plan.n_source, plan.n_target);
    if cost.len() != m * n {
        return Err(Error::DimensionMismatch("cost matrix does not match the plan".into()));
    }
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); m + n];
    for (k, e) in plan.entries.iter().enumerate() {
        adj[e.i].push(k);
        adj[m + e.j].push(k);
    }
    let mut comp = vec![NONE; m + n];
    let mut u = vec![0.0; m];
    let mut v = vec![0.0; n];
    let mut count = 0;
    for root in (m..m + n).chain(0..m) {
        if comp[root] != NONE {
            continue;
        }
        comp[root] = count;
        let mut queue = VecDeque::from([root]);
        while let Some(x) = queue.pop_front() {
            for &k in &adj[x] {
                let e = plan.entries[k];
                let y = if x < m { m + e.j } else { e.i };
                if comp[y] != NONE {
                    continue;
                }
                comp[y] = count;
                if y >= m {
                    v[e.j] = cost[e.i * n + e.j] - u[e.i];
                } else {
                    u[e.i] = cost[e.i * n + e.j] - v[e.j];
                }
                queue.push_back(y);
            }
        }
        count += 1;
    }
    if count > 1 {
        // s_K - s_L <= min over i in K, j in L of (c_ij - u_i - v_j)
        let mut w = vec![f64::INFINITY; count * count];
        for i in 0..m {
            for j in 0..n {
                let (ck, cl) = (comp[i], comp[m + j]);
                let r = cost[i * n + j] - u[i] - v[j];
                let slot = &mut w[ck * count + cl];
                *slot = slot.min(r);
            }
        }
        let scale = cost.iter().fold(1.0f64, |s, x| s.max(x.abs()));
        let eps = 1e-13 * scale;
        let mut shift = vec![0.0; count];
        let mut converged = false;
        for _ in 0..=count {
            let mut changed = false;
            for k in 0..count {
                for l in 0..count {
                    if k == l {
                        continue;
                    }
                    let bound = shift[l] + w[k * count + l];
                    if shift[k] > bound + eps {
                        shift[k] = bound;
                        changed = true;
                    }
                }
            }
            if !changed {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NotOptimal("no feasible dual shift: the plan is not optimal".into()));
        }
        for i in 0..m {
            u[i] += shift[comp[i]];
        }
        for j in 0..n {
            v[j] -= shift[comp[m + j]];
        }
    }
    Ok(DualPotentials { u_plus: u, u_minus: v })
}
