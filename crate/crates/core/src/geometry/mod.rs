//! Geometry of the cross-difference: the pseudo-metric `h` (half the Hessian
//! of the cross-difference at its base point), its signature and light cone,
//! the symplectic form `ω` and the density-weighted conformal metric.

mod signature;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cost::{fd, CostFunction, DerivativeSource};
use crate::error::{Error, Result};

pub use signature::{default_rank_tol, signature, Signature};

/// Base point `(x₀, y₀)` of a cross-difference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasePoint {
    pub x0: Vec<f64>,
    pub y0: Vec<f64>,
}

impl BasePoint {
    pub fn new(x0: &[f64], y0: &[f64]) -> Self {
        BasePoint { x0: x0.to_vec(), y0: y0.to_vec() }
    }

    /// Base point checked against the cost's domain and excluded set.
    pub fn checked(c: &CostFunction, x0: &[f64], y0: &[f64]) -> Result<Self> {
        c.evaluate(x0, y0)?;
        Ok(Self::new(x0, y0))
    }

    pub fn dim(&self) -> usize {
        self.x0.len() + self.y0.len()
    }

    /// Concatenated coordinates `(x₀, y₀)`.
    pub fn stacked(&self) -> Vec<f64> {
        self.x0.iter().chain(&self.y0).copied().collect()
    }
}

/// `h` at a base point: zero diagonal blocks, off-diagonal block `-½C`.
#[derive(Clone, Debug, PartialEq)]
pub struct PseudoMetric {
    pub base: BasePoint,
    pub matrix: DMatrix<f64>,
    /// `C[i][j] = c_{i,j}(x₀, y₀)`, scaled along with `matrix` by [`conformal_scale`].
    pub cross_block: DMatrix<f64>,
    pub source: DerivativeSource,
}

impl PseudoMetric {
    /// Assemble `h` from a mixed Hessian.
    pub fn from_cross_block(base: BasePoint, cross_block: DMatrix<f64>, source: DerivativeSource) -> Self {
        let (nx, ny) = cross_block.shape();
        let mut matrix = DMatrix::zeros(nx + ny, nx + ny);
        for i in 0..nx {
            for j in 0..ny {
                let v = -0.5 * cross_block[(i, j)];
                matrix[(i, nx + j)] = v;
                matrix[(nx + j, i)] = v;
            }
        }
        PseudoMetric { base, matrix, cross_block, source }
    }

    pub fn dim_x(&self) -> usize {
        self.cross_block.nrows()
    }

    pub fn dim_y(&self) -> usize {
        self.cross_block.ncols()
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `h(V, W)`.
    pub fn inner(&self, v: &[f64], w: &[f64]) -> Result<f64> {
        let n = self.dim();
        if v.len() != n || w.len() != n {
            return Err(Error::DimensionMismatch(format!("tangent vectors must have {n} components")));
        }
        let v = DVector::from_column_slice(v);
        let w = DVector::from_column_slice(w);
        Ok(v.dot(&(&self.matrix * w)))
    }

    /// `h(V, V)`.
    pub fn quadratic(&self, v: &[f64]) -> Result<f64> {
        self.inner(v, v)
    }
}

/// Sign class of a tangent vector with respect to `h`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConeClass {
    SpacelikeStrict,
    TimelikeStrict,
    Lightlike,
    SpacelikeBoundary,
    TimelikeBoundary,
}

/// `δ(x, y; x₀, y₀) = c(x, y₀) + c(x₀, y) - c(x, y) - c(x₀, y₀)`.
pub fn cross_difference(c: &CostFunction, x: &[f64], y: &[f64], base: &BasePoint) -> Result<f64> {
    let (x0, y0) = (&base.x0, &base.y0);
    Ok(c.evaluate(x, y0)? + c.evaluate(x0, y)? - c.evaluate(x, y)? - c.evaluate(x0, y0)?)
}

/// `h = ½ Hess δ⁰` at the base point, from the cost's mixed Hessian.
pub fn hessian_h(c: &CostFunction, base: &BasePoint) -> Result<PseudoMetric> {
    if base.x0.len() != c.dim_x || base.y0.len() != c.dim_y {
        return Err(Error::DimensionMismatch("base point does not match cost dimensions".into()));
    }
    let cross = c.cross_matrix(&base.x0, &base.y0)?;
    Ok(PseudoMetric::from_cross_block(base.clone(), cross, c.derivatives))
}

/// Direct finite-difference Hessian of `δ⁰`, halved: an independent route to `h`.
pub fn fd_hessian_h(c: &CostFunction, base: &BasePoint) -> Result<DMatrix<f64>> {
    let nx = c.dim_x;
    let z0 = base.stacked();
    let n = z0.len();
    let scheme = &c.fd;
    let scale = z0.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let reach = scheme.reach(2, scale);
    let clearance = c.singular_distance(&base.x0, &base.y0) - c.exclusion_radius();
    if clearance < 8.0 * reach {
        return Err(Error::SingularStencil(format!("base point within {clearance:.3e} of the excluded set")));
    }
    if c.domain_x.interior_margin(&base.x0) < reach || c.domain_y.interior_margin(&base.y0) < reach {
        return Err(Error::Domain("Hessian stencil leaves the domain".into()));
    }
    let delta0 = |z: &[f64]| {
        let (x, y) = z.split_at(nx);
        c.value_unchecked(x, &base.y0) + c.value_unchecked(&base.x0, y) - c.value_unchecked(x, y) - c.value_unchecked(&base.x0, &base.y0)
    };
    let mut m = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in a..n {
            let idx = [a, b];
            let steps = scheme.level_steps(2, fd::coordinate_scale(&z0, &idx));
            let v = 0.5 * fd::richardson(&delta0, &z0, &idx, &steps);
            m[(a, b)] = v;
            m[(b, a)] = v;
        }
    }
    Ok(m)
}

/// Residuals `|δ⁰(base + tV) - h(tV, tV)|` along a direction.
pub fn taylor_residual(c: &CostFunction, base: &BasePoint, direction: &[f64], steps: &[f64]) -> Result<Vec<f64>> {
    let n = base.dim();
    if direction.len() != n {
        return Err(Error::DimensionMismatch(format!("direction must have {n} components")));
    }
    let h = hessian_h(c, base)?;
    let z0 = base.stacked();
    steps
        .iter()
        .map(|&t| {
            let v: Vec<f64> = direction.iter().map(|d| t * d).collect();
            let z: Vec<f64> = z0.iter().zip(&v).map(|(a, b)| a + b).collect();
            let (x, y) = z.split_at(c.dim_x);
            let delta = cross_difference(c, x, y, base)?;
            Ok((delta - h.quadratic(&v)?).abs())
        })
        .collect()
}

/// Least-squares slope of `log r` against `log t`, ignoring exact zeros.
/// `None` when fewer than two non-zero residuals remain.
pub fn loglog_slope(steps: &[f64], residuals: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = steps
        .iter()
        .zip(residuals)
        .filter(|(t, r)| **t > 0.0 && **r > 0.0)
        .map(|(t, r)| (t.ln(), r.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Some(sxy / sxx)
}

/// Classify `V` by the sign of `h(V,V)/|V|²`; values within `tol` of zero are
/// boundary cases, and exact (rounding-level) zeros are lightlike.
pub fn cone_classify(m: &PseudoMetric, v: &[f64], tol: f64) -> Result<ConeClass> {
    let norm2: f64 = v.iter().map(|a| a * a).sum();
    if norm2 == 0.0 {
        return Err(Error::ZeroVector);
    }
    let q = m.quadratic(v)? / norm2;
    let scale = m.matrix.amax().max(f64::MIN_POSITIVE);
    let light = 64.0 * f64::EPSILON * scale;
    Ok(if q.abs() <= light {
        ConeClass::Lightlike
    } else if q > tol {
        ConeClass::SpacelikeStrict
    } else if q < -tol {
        ConeClass::TimelikeStrict
    } else if q > 0.0 {
        ConeClass::SpacelikeBoundary
    } else {
        ConeClass::TimelikeBoundary
    })
}

/// `ω(P, Q) = h(P, U Q)` with `U(Δx, Δy) = (Δx, -Δy)`.
pub fn omega(m: &PseudoMetric, p: &[f64], q: &[f64]) -> Result<f64> {
    let nx = m.dim_x();
    let uq: Vec<f64> = q.iter().enumerate().map(|(k, v)| if k < nx { *v } else { -v }).collect();
    m.inner(p, &uq)
}

/// One sample of a map `G`: a point, its image and the Jacobian `DG` (rows
/// indexed by y-coordinates).
#[derive(Clone, Debug)]
pub struct MapSample {
    pub x: Vec<f64>,
    pub gx: Vec<f64>,
    pub jacobian: DMatrix<f64>,
}

/// Largest `|ω(P, Q)|` over basis pairs of the graph tangent spaces
/// `{(e, DG·e)}`; zero exactly when the sampled graph is `ω`-Lagrangian.
pub fn lagrangian_defect(c: &CostFunction, samples: &[MapSample]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for s in samples {
        if s.x.len() != c.dim_x || s.gx.len() != c.dim_y || s.jacobian.shape() != (c.dim_y, c.dim_x) {
            return Err(Error::DimensionMismatch(format!(
                "map sample needs x in R^{}, G(x) in R^{} and a {}x{} Jacobian",
                c.dim_x, c.dim_y, c.dim_y, c.dim_x
            )));
        }
        let h = hessian_h(c, &BasePoint::new(&s.x, &s.gx))?;
        let tangent = |a: usize| -> Vec<f64> {
            let mut v = vec![0.0; c.dim_x + c.dim_y];
            v[a] = 1.0;
            for j in 0..c.dim_y {
                v[c.dim_x + j] = s.jacobian[(j, a)];
            }
            v
        };
        for a in 0..c.dim_x {
            for b in (a + 1)..c.dim_x {
                worst = worst.max(omega(&h, &tangent(a), &tangent(b))?.abs());
            }
        }
    }
    Ok(worst)
}

/// Threshold on `|det C|` below which the conformal factor is undefined.
pub const DEGENERATE_DET_TOL: f64 = 1e-12;

/// `h̃ = (f⁺ f⁻ / |det C|)^{1/n} h`.
pub fn conformal_scale(m: &PseudoMetric, f_plus: f64, f_minus: f64) -> Result<PseudoMetric> {
    let n = m.dim_x();
    if n != m.dim_y() {
        return Err(Error::DimensionMismatch("conformal metric needs n⁺ = n⁻".into()));
    }
    if !(f_plus > 0.0) || !(f_minus > 0.0) {
        return Err(Error::Config("densities must be positive".into()));
    }
    let det = m.cross_block.determinant().abs();
    let scale = m.cross_block.amax().max(1.0).powi(n as i32);
    if det <= DEGENERATE_DET_TOL * scale {
        return Err(Error::DegenerateMetric(format!("|det C| = {det:.3e} at {:?}", m.base)));
    }
    let factor = (f_plus * f_minus / det).powf(1.0 / n as f64);
    Ok(PseudoMetric {
        base: m.base.clone(),
        matrix: &m.matrix * factor,
        cross_block: &m.cross_block * factor,
        source: m.source,
    })
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::cost::CostSpec;

    fn bilinear(n: usize) -> CostFunction {
        CostSpec::named("bilinear", n).build().unwrap()
    }

    fn circle() -> CostFunction {
        CostSpec::named("circle_chord", 1).build().unwrap()
    }

    #[test]
    fn cross_difference_examples() {
        let b = bilinear(1);
        let base = BasePoint::new(&[0.0], &[0.0]);
        assert_eq!(cross_difference(&b, &[1.0], &[1.0], &base).unwrap(), 1.0);
        let q = CostSpec { domain_x: Some(crate::cost::Domain::cube(1, -3.0, 3.0)), ..CostSpec::named("quadratic", 1) }.build().unwrap();
        assert_eq!(cross_difference(&q, &[2.0], &[1.0], &base).unwrap(), 2.0);
        assert_eq!(cross_difference(&q, &[0.0], &[0.7], &base).unwrap(), 0.0);
    }

    #[test]
    fn hessian_examples() {
        let h = hessian_h(&bilinear(2), &BasePoint::new(&[0.1, 0.2], &[0.3, -0.4])).unwrap();
        assert_eq!(h.matrix[(0, 2)], 0.5);
        assert_eq!(h.matrix[(1, 3)], 0.5);
        assert_eq!(h.matrix[(0, 3)], 0.0);
        assert_eq!(h.matrix[(0, 1)], 0.0);
        let h = hessian_h(&circle(), &BasePoint::new(&[0.0], &[0.0])).unwrap();
        assert_eq!(h.matrix, DMatrix::from_row_slice(2, 2, &[0.0, 0.5, 0.5, 0.0]));
        let h = hessian_h(&circle(), &BasePoint::new(&[0.0], &[PI / 2.0])).unwrap();
        assert!(h.matrix.amax() < 1e-15);
    }

    #[test]
    fn fd_hessian_matches_analytic() {
        let c = CostSpec::named("log", 2).build().unwrap();
        let base = BasePoint::new(&[-0.5, 0.1], &[1.4, -0.3]);
        let a = hessian_h(&c, &base).unwrap();
        let f = fd_hessian_h(&c, &base).unwrap();
        assert!((&a.matrix - &f).amax() < 1e-6);
    }

    #[test]
    fn taylor_residual_exact_for_bilinear_structure() {
        let b = bilinear(2);
        let base = BasePoint::new(&[0.1, 0.2], &[-0.3, 0.4]);
        let r = taylor_residual(&b, &base, &[0.5, 0.5, 0.5, 0.5], &[0.1, 0.01]).unwrap();
        assert!(r.iter().all(|v| *v < 1e-15));
    }

    #[test]
    fn cone_examples() {
        let h = hessian_h(&bilinear(1), &BasePoint::new(&[0.0], &[0.0])).unwrap();
        assert_eq!(h.quadratic(&[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(cone_classify(&h, &[1.0, 1.0], 1e-9).unwrap(), ConeClass::SpacelikeStrict);
        assert_eq!(cone_classify(&h, &[1.0, -1.0], 1e-9).unwrap(), ConeClass::TimelikeStrict);
        assert_eq!(cone_classify(&h, &[0.3, 0.0], 1e-9).unwrap(), ConeClass::Lightlike);
        assert_eq!(cone_classify(&h, &[0.0, 0.0], 1e-9), Err(Error::ZeroVector));
        assert_eq!(cone_classify(&h, &[1.0, 1e-12], 1e-9).unwrap(), ConeClass::SpacelikeBoundary);
    }

    #[test]
    fn omega_examples() {
        let h = hessian_h(&bilinear(1), &BasePoint::new(&[0.0], &[0.0])).unwrap();
        assert_eq!(omega(&h, &[1.0, 0.0], &[0.0, 1.0]).unwrap(), -0.5);
        assert_eq!(omega(&h, &[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        let d = hessian_h(&circle(), &BasePoint::new(&[0.0], &[PI / 2.0])).unwrap();
        assert!(omega(&d, &[1.0, 2.0], &[-3.0, 0.5]).unwrap().abs() < 1e-15);
    }

    #[test]
    fn lagrangian_examples() {
        let b = bilinear(2);
        // G = ∇u, u = |x|⁴: G(x) = 4|x|²x, DG = 4(|x|² I + 2 x xᵀ)
        let grad_sample = |x: [f64; 2]| {
            let r2 = x[0] * x[0] + x[1] * x[1];
            let jac = DMatrix::from_fn(2, 2, |i, j| 4.0 * (if i == j { r2 } else { 0.0 } + 2.0 * x[i] * x[j]));
            MapSample { x: x.to_vec(), gx: vec![4.0 * r2 * x[0], 4.0 * r2 * x[1]], jacobian: jac }
        };
        let samples = vec![grad_sample([0.3, -0.2]), grad_sample([0.5, 0.4])];
        assert!(lagrangian_defect(&b, &samples).unwrap() < 1e-10);
        let rot = MapSample { x: vec![0.3, 0.1], gx: vec![-0.1, 0.3], jacobian: DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]) };
        assert!((lagrangian_defect(&b, &[rot]).unwrap() - 1.0).abs() < 1e-15);
        let one = MapSample { x: vec![0.2], gx: vec![0.5], jacobian: DMatrix::from_element(1, 1, 3.0) };
        assert_eq!(lagrangian_defect(&bilinear(1), &[one]).unwrap(), 0.0);
        let bad = MapSample { x: vec![0.2], gx: vec![0.5, 0.1], jacobian: DMatrix::from_element(1, 1, 3.0) };
        assert!(matches!(lagrangian_defect(&bilinear(1), &[bad]), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn conformal_examples() {
        let h = hessian_h(&bilinear(2), &BasePoint::new(&[0.0, 0.0], &[0.0, 0.0])).unwrap();
        assert_eq!(conformal_scale(&h, 1.0, 1.0).unwrap().matrix, h.matrix);
        let s = conformal_scale(&h, 4.0, 1.0).unwrap();
        assert!((&s.matrix - &h.matrix * 2.0).amax() < 1e-15);
        let d = hessian_h(&circle(), &BasePoint::new(&[0.0], &[PI / 2.0])).unwrap();
        assert!(matches!(conformal_scale(&d, 1.0, 1.0), Err(Error::DegenerateMetric(_))));
    }
}
