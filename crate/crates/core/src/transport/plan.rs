use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DiscreteMeasure;
use crate::cost::CostFunction;
use crate::error::{Error, Result};

/// Row and column sums must match the marginals to this tolerance.
pub const MARGINAL_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub i: usize,
    pub j: usize,
    pub mass: f64,
}

/// Sparse coupling between a source and a target measure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportPlan {
    pub n_source: usize,
    pub n_target: usize,
    pub entries: Vec<PlanEntry>,
}

impl TransportPlan {
    /// Entries sorted by `(i, j)`; duplicates summed, non-positive masses dropped.
    pub fn new(n_source: usize, n_target: usize, entries: impl IntoIterator<Item = PlanEntry>) -> Result<Self> {
        let mut acc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for e in entries {
            if e.i >= n_source || e.j >= n_target {
                return Err(Error::Index(format!("plan entry ({}, {}) outside {n_source}x{n_target}", e.i, e.j)));
            }
            if !e.mass.is_finite() {
                return Err(Error::InvalidMeasure("plan masses must be finite".into()));
            }
            *acc.entry((e.i, e.j)).or_default() += e.mass;
        }
        let entries = acc.into_iter().filter(|(_, m)| *m > 0.0).map(|((i, j), mass)| PlanEntry { i, j, mass }).collect();
        Ok(TransportPlan { n_source, n_target, entries })
    }

    /// Independent coupling `μ⁺ ⊗ μ⁻`.
    pub fn product(mu_plus: &DiscreteMeasure, mu_minus: &DiscreteMeasure) -> Self {
        let entries = mu_plus
            .weights
            .iter()
            .enumerate()
            .flat_map(|(i, a)| mu_minus.weights.iter().enumerate().map(move |(j, b)| PlanEntry { i, j, mass: a * b }))
            .collect();
        TransportPlan { n_source: mu_plus.len(), n_target: mu_minus.len(), entries }
    }

    /// Plan induced by a map: source `i` ships all its mass to `assignment[i]`.
    pub fn from_assignment(assignment: &[usize], mu_plus: &DiscreteMeasure, n_target: usize) -> Result<Self> {
        if assignment.len() != mu_plus.len() {
            return Err(Error::Index(format!("assignment covers {} of {} source atoms", assignment.len(), mu_plus.len())));
        }
        Self::new(mu_plus.len(), n_target, assignment.iter().zip(&mu_plus.weights).enumerate().map(|(i, (&j, &mass))| PlanEntry { i, j, mass }))
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.n_source];
        for e in &self.entries {
            s[e.i] += e.mass;
        }
        s
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.n_target];
        for e in &self.entries {
            s[e.j] += e.mass;
        }
        s
    }

    /// Largest marginal violation.
    pub fn marginal_error(&self, mu_plus: &DiscreteMeasure, mu_minus: &DiscreteMeasure) -> f64 {
        let rows = self.row_sums().iter().zip(&mu_plus.weights).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let cols = self.col_sums().iter().zip(&mu_minus.weights).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        rows.max(cols)
    }

    pub fn check_marginals(&self, mu_plus: &DiscreteMeasure, mu_minus: &DiscreteMeasure) -> Result<()> {
        if self.n_source != mu_plus.len() || self.n_target != mu_minus.len() {
            return Err(Error::DimensionMismatch("plan shape does not match the measures".into()));
        }
        if self.entries.iter().any(|e| !(e.mass > 0.0)) {
            return Err(Error::InvalidMeasure("plan masses must be positive".into()));
        }
        let err = self.marginal_error(mu_plus, mu_minus);
        if err > MARGINAL_TOL {
            return Err(Error::InvalidMeasure(format!("plan marginals off by {err:.3e}")));
        }
        Ok(())
    }

    /// Support as `(x_i, y_j)` pairs in entry order.
    pub fn support(&self, mu_plus: &DiscreteMeasure, mu_minus: &DiscreteMeasure) -> Vec<(Vec<f64>, Vec<f64>)> {
        self.entries.iter().map(|e| (mu_plus.atoms[e.i].clone(), mu_minus.atoms[e.j].clone())).collect()
    }

    /// `i,j,mass` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["i", "j", "mass"])?;
        for e in &self.entries {
            w.write_record([e.i.to_string(), e.j.to_string(), format!("{:?}", e.mass)])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path, n_source: usize, n_target: usize) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            i: usize,
            j: usize,
            mass: f64,
        }
        let mut rdr = csv::Reader::from_path(path)?;
        let rows: Vec<Row> = rdr.deserialize().collect::<std::result::Result<_, _>>()?;
        Self::new(n_source, n_target, rows.into_iter().map(|r| PlanEntry { i: r.i, j: r.j, mass: r.mass }))
    }

    /// Writes `<stem>.csv` and a `<stem>.json` header carrying the measure digests.
    pub fn write_with_header(&self, stem: &Path, mu_plus: &DiscreteMeasure, mu_minus: &DiscreteMeasure) -> Result<()> {
        self.write_csv(&stem.with_extension("csv"))?;
        let header = PlanHeader {
            version: env!("CARGO_PKG_VERSION").to_string(),
            n_source: self.n_source,
            n_target: self.n_target,
            entries: self.entries.len(),
            source_digest: mu_plus.digest(),
            target_digest: mu_minus.digest(),
        };
        let text = serde_json::to_string_pretty(&header).map_err(|e| Error::Io(e.to_string()))?;
        std::fs::write(stem.with_extension("json"), text)?;
        Ok(())
    }
}

/// JSON sidecar of a plan CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanHeader {
    pub version: String,
    pub n_source: usize,
    pub n_target: usize,
    pub entries: usize,
    pub source_digest: String,
    pub target_digest: String,
}

/// Potentials with `u⁺(x_i) + u⁻(y_j) <= c(x_i, y_j)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualPotentials {
    pub u_plus: Vec<f64>,
    pub u_minus: Vec<f64>,
}

impl DualPotentials {
    pub fn objective(&self, mu_plus: &DiscreteMeasure, mu_minus: &DiscreteMeasure) -> f64 {
        let a: f64 = self.u_plus.iter().zip(&mu_plus.weights).map(|(u, w)| u * w).sum();
        let b: f64 = self.u_minus.iter().zip(&mu_minus.weights).map(|(u, w)| u * w).sum();
        a + b
    }

    /// Most negative `c_ij - u_i - v_j` over all pairs (row-major cost matrix).
    pub fn min_slack(&self, cost: &[f64]) -> f64 {
        let n = self.u_minus.len();
        let mut worst = f64::INFINITY;
        for (i, u) in self.u_plus.iter().enumerate() {
            for (j, v) in self.u_minus.iter().enumerate() {
                worst = worst.min(cost[i * n + j] - u - v);
            }
        }
        worst
    }

    /// Largest `|c_ij - u_i - v_j|` over plan entries.
    pub fn slackness_residual(&self, cost: &[f64], plan: &TransportPlan) -> f64 {
        let n = self.u_minus.len();
        plan.entries.iter().map(|e| (cost[e.i * n + e.j] - self.u_plus[e.i] - self.u_minus[e.j]).abs()).fold(0.0, f64::max)
    }
}

/// Row-major matrix `c(x_i, y_j)`.
pub fn cost_matrix(c: &CostFunction, mu_plus: &DiscreteMeasure, mu_minus: &DiscreteMeasure) -> Result<Vec<f64>> {
    if mu_plus.dim() != c.dim_x || mu_minus.dim() != c.dim_y {
        return Err(Error::DimensionMismatch("measure dimensions do not match the cost".into()));
    }
    let mut m = Vec::with_capacity(mu_plus.len() * mu_minus.len());
    for x in &mu_plus.atoms {
        for y in &mu_minus.atoms {
            m.push(c.evaluate(x, y)?);
        }
    }
    Ok(m)
}

/// `Σ_i w_i c(x_i, y_{G(i)})`.
pub fn monge_cost(c: &CostFunction, assignment: &[usize], mu_plus: &DiscreteMeasure, mu_minus: &DiscreteMeasure) -> Result<f64> {
    if assignment.len() != mu_plus.len() {
        return Err(Error::Index(format!("assignment covers {} of {} source atoms", assignment.len(), mu_plus.len())));
    }
    let mut total = 0.0;
    for (i, &j) in assignment.iter().enumerate() {
        let y = mu_minus.atoms.get(j).ok_or_else(|| Error::Index(format!("target index {j} out of range")))?;
        total += mu_plus.weights[i] * c.evaluate(&mu_plus.atoms[i], y)?;
    }
    Ok(total)
}

/// `Σ mass·c(x_i, y_j)` over plan entries.
pub fn kantorovich_cost(c: &CostFunction, plan: &TransportPlan, mu_plus: &DiscreteMeasure, mu_minus: &DiscreteMeasure) -> Result<f64> {
    let mut total = 0.0;
    for e in &plan.entries {
        let (x, y) = match (mu_plus.atoms.get(e.i), mu_minus.atoms.get(e.j)) {
            (Some(x), Some(y)) => (x, y),
            _ => return Err(Error::Index(format!("plan entry ({}, {}) out of range", e.i, e.j))),
        };
        total += e.mass * c.evaluate(x, y)?;
    }
    Ok(total)
}

/// Outcome of [`extract_monge_map`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MongeMap {
    pub assignment: Option<Vec<usize>>,
    /// Sources that split: `(i, [(j, mass)])`.
    pub splits: Vec<(usize, Vec<(usize, f64)>)>,
}

/// Source→target map if every source ships at least `(1 - tolerance)` of
/// its mass to a single target.
pub fn extract_monge_map(plan: &TransportPlan, tolerance: f64) -> MongeMap {
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); plan.n_source];
    for e in &plan.entries {
        rows[e.i].push((e.j, e.mass));
    }
    let mut assignment = Vec::with_capacity(plan.n_source);
    let mut splits = Vec::new();
    for (i, row) in rows.into_iter().enumerate() {
        let total: f64 = row.iter().map(|r| r.1).sum();
        let best = row.iter().copied().fold(None, |acc: Option<(usize, f64)>, r| match acc {
            Some(a) if a.1 >= r.1 => Some(a),
            _ => Some(r),
        });
        match best {
            Some((j, m)) if m >= (1.0 - tolerance) * total => assignment.push(j),
            _ => splits.push((i, row)),
        }
    }
    MongeMap { assignment: if splits.is_empty() { Some(assignment) } else { None }, splits }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::{CostSpec, Domain};

    fn line(points: &[f64]) -> DiscreteMeasure {
        DiscreteMeasure::uniform(points.iter().map(|p| vec![*p]).collect()).unwrap()
    }

    #[test]
    fn monge_and_kantorovich_examples() {
        let q = CostSpec::named("quadratic", 1).build().unwrap();
        let m = line(&[0.0, 1.0]);
        assert_eq!(monge_cost(&q, &[0, 1], &m, &m).unwrap(), 0.0);
        assert_eq!(monge_cost(&q, &[1, 0], &m, &m).unwrap(), 0.5);
        assert!(matches!(monge_cost(&q, &[1], &m, &m), Err(Error::Index(_))));
        assert!(matches!(monge_cost(&q, &[0, 2], &m, &m), Err(Error::Index(_))));

        let b = CostSpec::named("bilinear", 1).build().unwrap();
        assert_eq!(kantorovich_cost(&b, &TransportPlan::product(&m, &m), &m, &m).unwrap(), -0.25);

        let c = CostSpec { domain_x: Some(Domain::cube(1, -3.0, 3.0)), domain_y: Some(Domain::cube(1, -3.0, 3.0)), ..CostSpec::named("quadratic", 1) }
            .build()
            .unwrap();
        let three = line(&[0.0, 1.0, 2.0]);
        let targets = line(&[-1.0, 0.5, 2.5]);
        let map = [2, 0, 1];
        let plan = TransportPlan::from_assignment(&map, &three, 3).unwrap();
        let a = monge_cost(&c, &map, &three, &targets).unwrap();
        let k = kantorovich_cost(&c, &plan, &three, &targets).unwrap();
        assert!((a - k).abs() < 1e-15);
    }

    #[test]
    fn monge_map_extraction() {
        let m = line(&[0.0, 1.0]);
        let id = TransportPlan::from_assignment(&[0, 1], &m, 2).unwrap();
        assert_eq!(extract_monge_map(&id, 1e-9).assignment, Some(vec![0, 1]));
        let prod = extract_monge_map(&TransportPlan::product(&m, &m), 1e-9);
        assert!(prod.assignment.is_none());
        assert_eq!(prod.splits.len(), 2);
    }

    #[test]
    fn plan_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = line(&[0.0, 1.0]);
        let plan = TransportPlan::product(&m, &m);
        let stem = dir.path().join("plan");
        plan.write_with_header(&stem, &m, &m).unwrap();
        let back = TransportPlan::read_csv(&stem.with_extension("csv"), 2, 2).unwrap();
        assert_eq!(back, plan);
        let header: PlanHeader = serde_json::from_str(&std::fs::read_to_string(stem.with_extension("json")).unwrap()).unwrap();
        assert_eq!(header.source_digest, m.digest());
        assert!(plan.check_marginals(&m, &m).is_ok());
    }
}
