//! Grid-based condition battery A0–A4 (with strict variants), the MTW
//! tensor and geodesics of the pseudo-metric `h`.
//!
//! A grid can only show that no violation was found at its resolution, so
//! every report carries the grid it was computed on.

mod checks;
mod convexity;
mod geodesic;
mod tensor;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cost::{CostFunction, Domain};
use crate::error::{Error, Result};

pub use checks::{
    check_a0, check_a1, check_a1_plus, check_a2, check_a3, image_set, mtw_scan, MtwSample, A0_REL_TOL, A1_COLLISION_TOL, A2_DET_TOL,
    A3_ORTHO_TOL, A3_SIGN_TOL,
};
pub use convexity::{check_a4, A4_CURVATURE_TOL, A4_REFINE, A4_RESOLUTION};
pub use geodesic::{christoffel, geodesic_integrate, Christoffel, GeodesicState, DEFAULT_FD_STEP, DEFAULT_GEODESIC_STEP};
pub use tensor::mtw_sectional;

/// Tensor-product sample grid over one factor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisGrid {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub counts: Vec<usize>,
    /// Periodic axes omit the upper endpoint.
    #[serde(default)]
    pub periodic: bool,
}

impl AxisGrid {
    /// `count` points per axis spanning the domain's bounding box.
    pub fn over(domain: &Domain, dim: usize, count: usize) -> Self {
        let (lo, hi) = domain.bounds(dim);
        AxisGrid { lo, hi, counts: vec![count; dim], periodic: domain.is_periodic() }
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    fn validate(&self, domain: &Domain, label: &str) -> Result<()> {
        let n = self.counts.len();
        if self.lo.len() != n || self.hi.len() != n {
            return Err(Error::Config(format!("{label} grid bounds do not match its counts")));
        }
        if self.counts.iter().any(|c| *c < 2) {
            return Err(Error::Config(format!("{label} grid needs at least 2 points per axis")));
        }
        if self.lo.iter().zip(&self.hi).any(|(a, b)| !(a <= b)) {
            return Err(Error::Config(format!("{label} grid has empty bounds")));
        }
        if !domain.is_periodic() {
            let (dlo, dhi) = domain.bounds(n);
            let slack = |v: f64| 1e-12 * (1.0 + v.abs());
            if self.lo.iter().zip(&dlo).any(|(a, b)| *a < b - slack(*b)) || self.hi.iter().zip(&dhi).any(|(a, b)| *a > b + slack(*b)) {
                return Err(Error::Config(format!("{label} grid bounds leave the cost domain")));
            }
        }
        Ok(())
    }

    fn coordinate(&self, axis: usize, k: usize) -> f64 {
        let (lo, hi, n) = (self.lo[axis], self.hi[axis], self.counts[axis]);
        if self.periodic {
            lo + (hi - lo) * k as f64 / n as f64
        } else {
            lo + (hi - lo) * k as f64 / (n - 1) as f64
        }
    }

    /// Grid points in lexicographic order (first axis slowest).
    pub fn points(&self) -> Vec<Vec<f64>> {
        let total: usize = self.counts.iter().product();
        (0..total).map(|flat| self.point(&self.multi_index(flat))).collect()
    }

    pub(crate) fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for axis in (0..self.dim()).rev() {
            idx[axis] = flat % self.counts[axis];
            flat /= self.counts[axis];
        }
        idx
    }

    pub(crate) fn point(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter().enumerate().map(|(a, k)| self.coordinate(a, *k)).collect()
    }

    /// Same box with `factor` times finer spacing; coarse points are kept.
    pub fn refined(&self, factor: usize) -> Self {
        let counts = self
            .counts
            .iter()
            .map(|n| if self.periodic { n * factor } else { (n - 1) * factor + 1 })
            .collect();
        AxisGrid { counts, ..self.clone() }
    }

    pub fn spacing(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|a| {
                let span = self.hi[a] - self.lo[a];
                if self.periodic {
                    span / self.counts[a] as f64
                } else {
                    span / (self.counts[a] - 1) as f64
                }
            })
            .collect()
    }
}

/// Sample grids for both factors plus the number of direction pairs per base point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x: AxisGrid,
    pub y: AxisGrid,
    pub directions: usize,
    #[serde(default)]
    pub seed: u64,
}

impl GridSpec {
    /// Grid over the full domains of `c` with `count` points per axis.
    pub fn uniform(c: &CostFunction, count: usize, directions: usize) -> Self {
        GridSpec {
            x: AxisGrid::over(&c.domain_x, c.dim_x, count),
            y: AxisGrid::over(&c.domain_y, c.dim_y, count),
            directions,
            seed: 0,
        }
    }

    pub fn validate(&self, c: &CostFunction) -> Result<()> {
        if self.x.dim() != c.dim_x || self.y.dim() != c.dim_y {
            return Err(Error::DimensionMismatch("grid dimensions do not match the cost".into()));
        }
        self.x.validate(&c.domain_x, "x")?;
        self.y.validate(&c.domain_y, "y")
    }

    /// Grid points inside the (possibly non-box) domains.
    pub fn x_points(&self, c: &CostFunction) -> Vec<Vec<f64>> {
        self.x.points().into_iter().filter(|p| c.domain_x.contains(p)).collect()
    }

    pub fn y_points(&self, c: &CostFunction) -> Vec<Vec<f64>> {
        self.y.points().into_iter().filter(|p| c.domain_y.contains(p)).collect()
    }

    /// Grid for the reflected cost `c*(y, x) = c(x, y)`.
    pub fn swapped(&self) -> Self {
        GridSpec { x: self.y.clone(), y: self.x.clone(), ..self.clone() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

/// A sample point achieving (or violating) the reported margin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Extra points or vectors: colliding y-values, (p, q), a midpoint, ...
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub vectors: Vec<Vec<f64>>,
    pub slack: f64,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub label: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition: String,
    pub verdict: Verdict,
    pub margin: f64,
    pub witnesses: Vec<Witness>,
    pub grid: GridSpec,
    pub tolerances: BTreeMap<String, f64>,
    /// Sample points skipped (excluded set, degenerate metric, stencil out of domain).
    #[serde(default)]
    pub skipped: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl ConditionReport {
    fn new(condition: &str, grid: &GridSpec) -> Self {
        ConditionReport {
            condition: condition.to_string(),
            verdict: Verdict::Pass,
            margin: f64::INFINITY,
            witnesses: Vec::new(),
            grid: grid.clone(),
            tolerances: BTreeMap::new(),
            skipped: 0,
            notes: Vec::new(),
        }
    }

    fn tolerance(mut self, name: &str, value: f64) -> Self {
        self.tolerances.insert(name.to_string(), value);
        self
    }

    fn note(mut self, text: impl Into<String>) -> Self {
        self.notes.push(text.into());
        self
    }
}

/// Maximum number of witnesses kept per report.
pub const MAX_WITNESSES: usize = 8;

/// Keep the `MAX_WITNESSES` smallest-slack candidates; ties broken by scan order.
fn select_witnesses(mut candidates: Vec<(usize, Witness)>) -> Vec<Witness> {
    candidates.sort_by(|a, b| a.1.slack.total_cmp(&b.1.slack).then(a.0.cmp(&b.0)));
    candidates.into_iter().take(MAX_WITNESSES).map(|(_, w)| w).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::CostSpec;

    #[test]
    fn grid_points_and_refinement() {
        let c = CostSpec::named("quadratic", 2).build().unwrap();
        let g = GridSpec::uniform(&c, 3, 4);
        let pts = g.x_points(&c);
        assert_eq!(pts.len(), 9);
        assert_eq!(pts[0], vec![-1.0, -1.0]);
        assert_eq!(pts[1], vec![-1.0, 0.0]);
        assert_eq!(pts[8], vec![1.0, 1.0]);
        let r = g.x.refined(2);
        assert_eq!(r.counts, vec![5, 5]);
        assert_eq!(r.spacing(), vec![0.5, 0.5]);
        assert!(g.validate(&c).is_ok());
    }

    #[test]
    fn periodic_grid_omits_endpoint() {
        let c = CostSpec::named("circle_chord", 1).build().unwrap();
        let g = GridSpec::uniform(&c, 4, 1);
        let pts = g.y_points(&c);
        assert_eq!(pts.len(), 4);
        assert!((pts[3][0] - 1.5 * std::f64::consts::PI).abs() < 1e-15);
        assert_eq!(g.x.refined(3).counts, vec![12]);
    }

    #[test]
    fn grid_validation() {
        let c = CostSpec::named("quadratic", 1).build().unwrap();
        let mut g = GridSpec::uniform(&c, 4, 1);
        g.x.counts = vec![1];
        assert!(g.validate(&c).is_err());
        let mut g = GridSpec::uniform(&c, 4, 1);
        g.y.hi = vec![3.0];
        assert!(g.validate(&c).is_err());
    }
}
