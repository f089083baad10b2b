//! Transport cost functions: a catalogue of analytic costs with closed-form
//! derivatives to fourth order, and a finite-difference differentiator.

mod analytic;
pub mod catalogue;
pub mod fd;
mod validate;

use std::f64::consts::{PI, TAU};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use catalogue::{catalogue, CatalogueEntry, CostSpec};
pub use fd::FdScheme;
pub use validate::{fd_validate, FdValidation, OrderDiscrepancy};

pub(crate) use analytic::wrap_angle;

/// Axis-aligned box `[lo, hi]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxRegion {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        BoxRegion { lo, hi }
    }

    pub fn cube(dim: usize, lo: f64, hi: f64) -> Self {
        BoxRegion { lo: vec![lo; dim], hi: vec![hi; dim] }
    }

    fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.lo.len()
            && p.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (lo, hi))| {
                let slack = 1e-12 * (1.0 + v.abs());
                *v >= lo - slack && *v <= hi + slack
            })
    }
}

/// Coordinate domain for one factor of the product space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Domain {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// Union of boxes (e.g. an L-shaped region).
    Union { boxes: Vec<BoxRegion> },
    /// Angular chart `[0, 2π)` in every coordinate.
    Periodic,
}

impl Domain {
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Self {
        Domain::Box { lo: vec![lo; dim], hi: vec![hi; dim] }
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self, Domain::Periodic)
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        if p.iter().any(|v| !v.is_finite()) {
            return false;
        }
        match self {
            Domain::Box { lo, hi } => BoxRegion::new(lo.clone(), hi.clone()).contains(p),
            Domain::Union { boxes } => boxes.iter().any(|b| b.contains(p)),
            Domain::Periodic => true,
        }
    }

    /// Bounding box; `[0, 2π)` for periodic charts.
    pub fn bounds(&self, dim: usize) -> (Vec<f64>, Vec<f64>) {
        match self {
            Domain::Box { lo, hi } => (lo.clone(), hi.clone()),
            Domain::Union { boxes } => {
                let mut lo = vec![f64::INFINITY; dim];
                let mut hi = vec![f64::NEG_INFINITY; dim];
                for b in boxes {
                    for k in 0..dim {
                        lo[k] = lo[k].min(b.lo[k]);
                        hi[k] = hi[k].max(b.hi[k]);
                    }
                }
                (lo, hi)
            }
            Domain::Periodic => (vec![0.0; dim], vec![TAU; dim]),
        }
    }

    /// Distance from `p` to the complement, per coordinate (minimum). Infinite for periodic charts.
    pub fn interior_margin(&self, p: &[f64]) -> f64 {
        match self {
            Domain::Periodic => f64::INFINITY,
            Domain::Box { lo, hi } => margin_in_box(p, lo, hi),
            Domain::Union { boxes } => boxes.iter().map(|b| margin_in_box(p, &b.lo, &b.hi)).fold(f64::NEG_INFINITY, f64::max),
        }
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        let ok = match self {
            Domain::Box { lo, hi } => lo.len() == dim && hi.len() == dim && lo.iter().zip(hi).all(|(a, b)| a <= b),
            Domain::Union { boxes } => {
                !boxes.is_empty()
                    && boxes.iter().all(|b| b.lo.len() == dim && b.hi.len() == dim && b.lo.iter().zip(&b.hi).all(|(a, c)| a <= c))
            }
            Domain::Periodic => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("domain does not describe a non-empty region of dimension {dim}")))
        }
    }
}

fn margin_in_box(p: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    p.iter()
        .zip(lo.iter().zip(hi))
        .map(|(v, (a, b))| (v - a).min(b - v))
        .fold(f64::INFINITY, f64::min)
}

/// Closed-form cost families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum CostKind {
    /// `-x·y`
    Bilinear,
    /// `½|x-y|²`
    Quadratic,
    /// `|x-y|`, diagonal excluded
    EuclideanNorm,
    /// `-log|x-y|`, diagonal excluded
    Log,
    /// `1 - cos(θ-φ)` on angle charts (squared chord between unit vectors)
    CircleChord,
    /// `½ d(θ,φ)²` for the arc-length distance; cut locus `|θ-φ| = π` excluded
    CircleGeodesic { cut_clearance: f64 },
    /// `|x-y|^p / p`, diagonal excluded
    Power { p: f64 },
    /// `-xᵀAy + Σ fx_i sin x_i + Σ gy_j sin y_j`
    Synthetic { a: Vec<Vec<f64>>, fx: Vec<f64>, gy: Vec<f64> },
}

impl CostKind {
    pub fn label(&self) -> &'static str {
        match self {
            CostKind::Bilinear => "bilinear",
            CostKind::Quadratic => "quadratic",
            CostKind::EuclideanNorm => "euclidean_norm",
            CostKind::Log => "log",
            CostKind::CircleChord => "circle_chord",
            CostKind::CircleGeodesic { .. } => "circle_geodesic",
            CostKind::Power { .. } => "power",
            CostKind::Synthetic { .. } => "synthetic",
        }
    }

    fn is_circle(&self) -> bool {
        matches!(self, CostKind::CircleChord | CostKind::CircleGeodesic { .. })
    }
}

/// Where derivative values come from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeSource {
    #[default]
    Analytic,
    FiniteDifference,
}

/// A partial derivative `∂^{x}_x ∂^{y}_y c`, given by coordinate index lists.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DerivativeRequest {
    pub x: Vec<usize>,
    pub y: Vec<usize>,
}

impl DerivativeRequest {
    pub fn new(x: &[usize], y: &[usize]) -> Self {
        let mut x = x.to_vec();
        let mut y = y.to_vec();
        x.sort_unstable();
        y.sort_unstable();
        DerivativeRequest { x, y }
    }

    pub fn order(&self) -> usize {
        self.x.len() + self.y.len()
    }

    /// Every request of total order `order` on `dim_x + dim_y` coordinates,
    /// one per multiset.
    pub fn all_of_order(order: usize, dim_x: usize, dim_y: usize) -> Vec<DerivativeRequest> {
        let total = dim_x + dim_y;
        let mut out = Vec::new();
        let mut current = Vec::with_capacity(order);
        fn rec(start: usize, total: usize, left: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if left == 0 {
                out.push(current.clone());
                return;
            }
            for k in start..total {
                current.push(k);
                rec(k, total, left - 1, current, out);
                current.pop();
            }
        }
        let mut combos = Vec::new();
        rec(0, total, order, &mut current, &mut combos);
        for combo in combos {
            let x: Vec<usize> = combo.iter().copied().filter(|&k| k < dim_x).collect();
            let y: Vec<usize> = combo.iter().copied().filter(|&k| k >= dim_x).map(|k| k - dim_x).collect();
            out.push(DerivativeRequest { x, y });
        }
        out
    }

    fn combined(&self, dim_x: usize) -> Vec<usize> {
        self.x.iter().copied().chain(self.y.iter().map(|j| j + dim_x)).collect()
    }
}

/// A smooth cost `c(x, y)` on `domain_x × domain_y`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostFunction {
    pub kind: CostKind,
    pub dim_x: usize,
    pub dim_y: usize,
    pub domain_x: Domain,
    pub domain_y: Domain,
    /// When set the cost is `c*(x, y) = c(y, x)` for the underlying kind.
    #[serde(default)]
    pub reflected: bool,
    #[serde(default)]
    pub derivatives: DerivativeSource,
    #[serde(default)]
    pub fd: FdScheme,
}

impl CostFunction {
    /// Build a cost on explicit domains.
    pub fn new(kind: CostKind, dim_x: usize, dim_y: usize, domain_x: Domain, domain_y: Domain) -> Result<Self> {
        let c = CostFunction {
            kind,
            dim_x,
            dim_y,
            domain_x,
            domain_y,
            reflected: false,
            derivatives: DerivativeSource::Analytic,
            fd: FdScheme::default(),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim_x == 0 || self.dim_y == 0 {
            return Err(Error::Config("cost dimensions must be positive".into()));
        }
        match &self.kind {
            CostKind::Bilinear | CostKind::Quadratic | CostKind::EuclideanNorm | CostKind::Log | CostKind::Power { .. } => {
                if self.dim_x != self.dim_y {
                    return Err(Error::Config(format!("{} cost needs equal dimensions", self.kind.label())));
                }
            }
            CostKind::CircleChord | CostKind::CircleGeodesic { .. } => {
                if self.dim_x != 1 || self.dim_y != 1 {
                    return Err(Error::Config("circle costs are defined on the angle chart (dimension 1)".into()));
                }
            }
            CostKind::Synthetic { a, fx, gy } => {
                let (nx, ny) = if self.reflected { (self.dim_y, self.dim_x) } else { (self.dim_x, self.dim_y) };
                if a.len() != nx || a.iter().any(|r| r.len() != ny) || fx.len() > nx || gy.len() > ny {
                    return Err(Error::Config("synthetic cost coefficient shapes do not match dimensions".into()));
                }
            }
        }
        if let CostKind::Power { p } = self.kind {
            if !(p > 0.0) {
                return Err(Error::Config("power cost exponent must be positive".into()));
            }
        }
        if let CostKind::CircleGeodesic { cut_clearance } = self.kind {
            if !(0.0..PI).contains(&cut_clearance) {
                return Err(Error::Config("cut-locus clearance must lie in [0, π)".into()));
            }
        }
        self.domain_x.check_dim(self.dim_x)?;
        self.domain_y.check_dim(self.dim_y)?;
        self.fd.validate()
    }

    pub fn name(&self) -> String {
        if self.reflected {
            format!("{}*", self.kind.label())
        } else {
            self.kind.label().to_string()
        }
    }

    /// Highest order with closed-form derivatives.
    pub fn smoothness_order(&self) -> usize {
        4
    }

    /// `c*(y, x) = c(x, y)`: swaps the roles of the two factors.
    pub fn reflect(&self) -> CostFunction {
        CostFunction {
            kind: self.kind.clone(),
            dim_x: self.dim_y,
            dim_y: self.dim_x,
            domain_x: self.domain_y.clone(),
            domain_y: self.domain_x.clone(),
            reflected: !self.reflected,
            derivatives: self.derivatives,
            fd: self.fd.clone(),
        }
    }

    /// Same cost with derivatives taken by finite differences.
    pub fn with_fd_derivatives(&self) -> CostFunction {
        CostFunction { derivatives: DerivativeSource::FiniteDifference, ..self.clone() }
    }

    pub fn with_domains(&self, domain_x: Domain, domain_y: Domain) -> Result<CostFunction> {
        let c = CostFunction { domain_x, domain_y, ..self.clone() };
        c.validate()?;
        Ok(c)
    }

    /// Raw formula value with no domain or excluded-set checks.
    pub fn value_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        let (a, b) = self.oriented(x, y);
        analytic::derivative(&self.kind, &[], &[], a, b).unwrap_or(f64::NAN)
    }

    fn oriented<'a>(&self, x: &'a [f64], y: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        if self.reflected {
            (y, x)
        } else {
            (x, y)
        }
    }

    /// Distance from `(x, y)` to the singular set of the formula, infinite if none.
    pub fn singular_distance(&self, x: &[f64], y: &[f64]) -> f64 {
        let (a, b) = self.oriented(x, y);
        match &self.kind {
            CostKind::EuclideanNorm | CostKind::Log => euclid(a, b),
            CostKind::Power { p } => {
                // even integer powers are polynomials
                if p.fract() == 0.0 && (*p as i64) % 2 == 0 {
                    f64::INFINITY
                } else {
                    euclid(a, b)
                }
            }
            CostKind::CircleGeodesic { .. } => PI - wrap_angle(a[0] - b[0]).abs(),
            _ => f64::INFINITY,
        }
    }

    /// Points with `singular_distance <= exclusion_radius` are excluded.
    pub fn exclusion_radius(&self) -> f64 {
        match &self.kind {
            CostKind::CircleGeodesic { cut_clearance } => *cut_clearance,
            _ => 0.0,
        }
    }

    pub fn is_excluded(&self, x: &[f64], y: &[f64]) -> bool {
        let d = self.singular_distance(x, y);
        d.is_finite() && d <= self.exclusion_radius()
    }

    fn check_point(&self, x: &[f64], y: &[f64]) -> Result<()> {
        if x.len() != self.dim_x || y.len() != self.dim_y {
            return Err(Error::DimensionMismatch(format!(
                "expected ({}, {}) coordinates, got ({}, {})",
                self.dim_x,
                self.dim_y,
                x.len(),
                y.len()
            )));
        }
        if !self.domain_x.contains(x) {
            return Err(Error::Domain(format!("x = {x:?} outside domain_x")));
        }
        if !self.domain_y.contains(y) {
            return Err(Error::Domain(format!("y = {y:?} outside domain_y")));
        }
        if self.is_excluded(x, y) {
            return Err(Error::Domain(format!("({x:?}, {y:?}) lies in the excluded set of {}", self.name())));
        }
        Ok(())
    }

    /// `c(x, y)`.
    pub fn evaluate(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check_point(x, y)?;
        let v = self.value_unchecked(x, y);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Domain(format!("{} is not finite at ({x:?}, {y:?})", self.name())))
        }
    }

    /// Partial derivative; closed form unless the cost is configured for
    /// finite differences.
    pub fn derivative(&self, req: &DerivativeRequest, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check_request(req)?;
        match self.derivatives {
            DerivativeSource::Analytic => self.derivative_analytic(req, x, y),
            DerivativeSource::FiniteDifference => self.derivative_fd(req, x, y, &self.fd),
        }
    }

    fn check_request(&self, req: &DerivativeRequest) -> Result<()> {
        if req.order() > 4 {
            return Err(Error::Order { order: req.order() });
        }
        if req.x.iter().any(|&i| i >= self.dim_x) || req.y.iter().any(|&j| j >= self.dim_y) {
            return Err(Error::Index(format!("derivative indices {req:?} out of range")));
        }
        Ok(())
    }

    /// Closed-form derivative.
    pub fn derivative_analytic(&self, req: &DerivativeRequest, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check_request(req)?;
        self.check_point(x, y)?;
        let (a, b) = self.oriented(x, y);
        let (ia, ib) = if self.reflected { (&req.y, &req.x) } else { (&req.x, &req.y) };
        match analytic::derivative(&self.kind, ia, ib, a, b) {
            Some(v) if v.is_finite() => Ok(v),
            Some(_) => Err(Error::Domain(format!("derivative {req:?} not finite at ({x:?}, {y:?})"))),
            None => self.derivative_fd(req, x, y, &self.fd),
        }
    }

    /// Richardson-extrapolated central difference.
    pub fn derivative_fd(&self, req: &DerivativeRequest, x: &[f64], y: &[f64], scheme: &FdScheme) -> Result<f64> {
        self.check_request(req)?;
        self.check_point(x, y)?;
        let order = req.order();
        if order == 0 {
            return self.evaluate(x, y);
        }
        let z: Vec<f64> = x.iter().chain(y).copied().collect();
        let idx = req.combined(self.dim_x);
        let scale = fd::coordinate_scale(&z, &idx);
        let reach = scheme.reach(order, scale);
        let needed = 4.0 * reach;
        let clearance = self.singular_distance(x, y) - self.exclusion_radius();
        if clearance < needed {
            return Err(Error::SingularStencil(format!(
                "clearance {clearance:.3e} below stencil requirement {needed:.3e} at ({x:?}, {y:?})"
            )));
        }
        let (lo_x, lo_y) = (self.domain_x.interior_margin(x), self.domain_y.interior_margin(y));
        if lo_x.min(lo_y) < reach {
            return Err(Error::Domain(format!("finite-difference stencil leaves the domain at ({x:?}, {y:?})")));
        }
        let nx = self.dim_x;
        let f = |p: &[f64]| self.value_unchecked(&p[..nx], &p[nx..]);
        let v = fd::richardson(&f, &z, &idx, &scheme.level_steps(order, scale));
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Domain(format!("finite difference not finite at ({x:?}, {y:?})")))
        }
    }

    /// `D_x c(x, y)`.
    pub fn grad_x(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        (0..self.dim_x).map(|i| self.derivative(&DerivativeRequest::new(&[i], &[]), x, y)).collect()
    }

    /// `D_y c(x, y)`.
    pub fn grad_y(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        (0..self.dim_y).map(|j| self.derivative(&DerivativeRequest::new(&[], &[j]), x, y)).collect()
    }

    /// Mixed Hessian `C[i][j] = c_{i,j}(x, y)`.
    pub fn cross_matrix(&self, x: &[f64], y: &[f64]) -> Result<DMatrix<f64>> {
        let mut m = DMatrix::zeros(self.dim_x, self.dim_y);
        for i in 0..self.dim_x {
            for j in 0..self.dim_y {
                m[(i, j)] = self.derivative(&DerivativeRequest::new(&[i], &[j]), x, y)?;
            }
        }
        Ok(m)
    }

    /// True if the kind is an angle-chart cost on the circle.
    pub fn is_circle(&self) -> bool {
        self.kind.is_circle()
    }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad1() -> CostFunction {
        CostFunction::new(CostKind::Quadratic, 1, 1, Domain::cube(1, -5.0, 5.0), Domain::cube(1, -5.0, 5.0)).unwrap()
    }

    #[test]
    fn evaluate_examples() {
        assert_eq!(quad1().evaluate(&[2.0], &[1.0]).unwrap(), 0.5);
        let bil = CostFunction::new(CostKind::Bilinear, 2, 2, Domain::cube(2, -1.0, 1.0), Domain::cube(2, -1.0, 1.0)).unwrap();
        assert_eq!(bil.evaluate(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let circ = CostFunction::new(CostKind::CircleChord, 1, 1, Domain::Periodic, Domain::Periodic).unwrap();
        // chord: ½|(1,0) - (-1,0)|² = 2
        assert!((circ.evaluate(&[0.0], &[PI]).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn derivative_examples() {
        let q = quad1();
        assert_eq!(q.derivative(&DerivativeRequest::new(&[0], &[0]), &[0.3], &[-1.2]).unwrap(), -1.0);
        let circ = CostFunction::new(CostKind::CircleChord, 1, 1, Domain::Periodic, Domain::Periodic).unwrap();
        let v = circ.derivative(&DerivativeRequest::new(&[0], &[0]), &[0.0], &[PI / 2.0]).unwrap();
        assert!(v.abs() < 1e-15);
        let bil = CostFunction::new(CostKind::Bilinear, 2, 2, Domain::cube(2, -1.0, 1.0), Domain::cube(2, -1.0, 1.0)).unwrap();
        let v = bil.derivative(&DerivativeRequest::new(&[0, 1], &[0, 1]), &[0.1, 0.2], &[0.3, 0.4]).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn order_and_domain_errors() {
        let q = quad1();
        let req = DerivativeRequest::new(&[0, 0, 0], &[0, 0]);
        assert_eq!(q.derivative(&req, &[0.0], &[0.0]), Err(Error::Order { order: 5 }));
        assert!(matches!(q.evaluate(&[6.0], &[0.0]), Err(Error::Domain(_))));
        let log = CostFunction::new(CostKind::Log, 1, 1, Domain::cube(1, -1.0, 1.0), Domain::cube(1, -1.0, 1.0)).unwrap();
        assert!(matches!(log.evaluate(&[0.5], &[0.5]), Err(Error::Domain(_))));
        // FD stencil too close to the diagonal
        let fdlog = log.with_fd_derivatives();
        let r = fdlog.derivative(&DerivativeRequest::new(&[0], &[0]), &[0.5], &[0.5 + 1e-4]);
        assert!(matches!(r, Err(Error::SingularStencil(_))));
    }

    #[test]
    fn geodesic_cut_locus_excluded() {
        let g = CostFunction::new(CostKind::CircleGeodesic { cut_clearance: 0.1 }, 1, 1, Domain::Periodic, Domain::Periodic).unwrap();
        assert!(g.evaluate(&[0.0], &[PI - 0.05]).is_err());
        assert!((g.evaluate(&[0.0], &[1.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!((g.evaluate(&[0.2], &[TAU - 0.2]).unwrap() - 0.08).abs() < 1e-12);
    }

    #[test]
    fn reflection_swaps_arguments() {
        let a = vec![vec![1.0, 2.0, 0.0], vec![0.0, 1.0, 3.0]];
        let c = CostFunction::new(
            CostKind::Synthetic { a, fx: vec![0.5, 0.0], gy: vec![0.0, 0.0, 1.0] },
            2,
            3,
            Domain::cube(2, -1.0, 1.0),
            Domain::cube(3, -1.0, 1.0),
        )
        .unwrap();
        let r = c.reflect();
        let x = [0.1, -0.4];
        let y = [0.3, 0.2, -0.6];
        assert_eq!(r.evaluate(&y, &x).unwrap(), c.evaluate(&x, &y).unwrap());
        let d = c.derivative(&DerivativeRequest::new(&[1], &[2]), &x, &y).unwrap();
        let dr = r.derivative(&DerivativeRequest::new(&[2], &[1]), &y, &x).unwrap();
        assert_eq!(d, dr);
        assert_eq!(d, -3.0);
    }

    #[test]
    fn all_of_order_counts_multisets() {
        assert_eq!(DerivativeRequest::all_of_order(2, 2, 2).len(), 10);
        assert_eq!(DerivativeRequest::all_of_order(4, 2, 2).len(), 35);
        assert_eq!(DerivativeRequest::all_of_order(1, 1, 3).len(), 4);
    }
}
