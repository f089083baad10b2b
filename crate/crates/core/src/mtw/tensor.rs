use nalgebra::{DMatrix, DVector};

use crate::cost::{CostFunction, DerivativeRequest};
use crate::error::{Error, Result};
use crate::geometry::BasePoint;

/// Relative threshold on `|det C|` (against `max(1, max|C|)^n`) below which
/// the mixed Hessian is treated as singular.
pub(crate) const INVERTIBLE_TOL: f64 = 1e-12;

pub(crate) fn invert_cross(c: &DMatrix<f64>, base: &BasePoint) -> Result<DMatrix<f64>> {
    let n = c.nrows();
    if n != c.ncols() {
        return Err(Error::DimensionMismatch("MTW tensor needs n⁺ = n⁻".into()));
    }
    let det = c.determinant();
    if !(det.abs() > INVERTIBLE_TOL * c.amax().max(1.0).powi(n as i32)) {
        return Err(Error::DegenerateMetric(format!("|det C| = {:.3e} at {:?}", det.abs(), base)));
    }
    c.clone().try_inverse().ok_or_else(|| Error::DegenerateMetric(format!("C not invertible at {base:?}")))
}

/// Derivatives entering the MTW tensor at one base point.
pub(crate) struct MtwTensor {
    nx: usize,
    ny: usize,
    cross: DMatrix<f64>,
    inv: DMatrix<f64>,
    /// `c_{ij,m}` at `(i*nx + j)*ny + m`
    xxy: Vec<f64>,
    /// `c_{n,kl}` at `(n*ny + k)*ny + l`
    xyy: Vec<f64>,
    /// `c_{ij,kl}` at `((i*nx + j)*ny + k)*ny + l`
    xxyy: Vec<f64>,
}

impl MtwTensor {
    pub(crate) fn at(c: &CostFunction, base: &BasePoint) -> Result<Self> {
        let (nx, ny) = (c.dim_x, c.dim_y);
        if base.x0.len() != nx || base.y0.len() != ny {
            return Err(Error::DimensionMismatch("base point does not match the cost dimensions".into()));
        }
        let (x0, y0) = (&base.x0, &base.y0);
        let cross = c.cross_matrix(x0, y0)?;
        let inv = invert_cross(&cross, base)?;
        let d = |ix: &[usize], iy: &[usize]| c.derivative(&DerivativeRequest::new(ix, iy), x0, y0);
        let mut xxy = vec![0.0; nx * nx * ny];
        let mut xyy = vec![0.0; nx * ny * ny];
        let mut xxyy = vec![0.0; nx * nx * ny * ny];
        for i in 0..nx {
            for j in i..nx {
                for m in 0..ny {
                    let v = d(&[i, j], &[m])?;
                    xxy[(i * nx + j) * ny + m] = v;
                    xxy[(j * nx + i) * ny + m] = v;
                }
                for k in 0..ny {
                    for l in k..ny {
                        let v = d(&[i, j], &[k, l])?;
                        for (a, b) in [(i, j), (j, i)] {
                            xxyy[((a * nx + b) * ny + k) * ny + l] = v;
                            xxyy[((a * nx + b) * ny + l) * ny + k] = v;
                        }
                    }
                }
            }
        }
        for n in 0..nx {
            for k in 0..ny {
                for l in k..ny {
                    let v = d(&[n], &[k, l])?;
                    xyy[(n * ny + k) * ny + l] = v;
                    xyy[(n * ny + l) * ny + k] = v;
                }
            }
        }
        Ok(MtwTensor { nx, ny, cross, inv, xxy, xyy, xxyy })
    }

    pub(crate) fn cross(&self) -> &DMatrix<f64> {
        &self.cross
    }

    pub(crate) fn sectional(&self, p: &[f64], q: &[f64]) -> f64 {
        let (nx, ny) = (self.nx, self.ny);
        let mut a = DVector::zeros(ny);
        let mut b = DVector::zeros(nx);
        let mut d = 0.0;
        for i in 0..nx {
            for j in 0..nx {
                let pp = p[i] * p[j];
                for m in 0..ny {
                    a[m] += self.xxy[(i * nx + j) * ny + m] * pp;
                }
                for k in 0..ny {
                    for l in 0..ny {
                        d += self.xxyy[((i * nx + j) * ny + k) * ny + l] * pp * q[k] * q[l];
                    }
                }
            }
        }
        for (n, bn) in b.iter_mut().enumerate() {
            for k in 0..ny {
                for l in 0..ny {
                    *bn += self.xyy[(n * ny + k) * ny + l] * q[k] * q[l];
                }
            }
        }
        -d + a.dot(&(&self.inv * b))
    }
}

/// `Σ (-c_{ij,kl} + c_{ij,m} c^{m,n} c_{n,kl}) pⁱ pʲ qᵏ qˡ`, with `i, j, n`
/// indexing x-derivatives, `k, l, m` indexing y-derivatives and `c^{m,n}`
/// the inverse of `C[n][m] = c_{n,m}`.
pub fn mtw_sectional(c: &CostFunction, base: &BasePoint, p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != c.dim_x || q.len() != c.dim_y {
        return Err(Error::DimensionMismatch("p and q must match the cost dimensions".into()));
    }
    Ok(MtwTensor::at(c, base)?.sectional(p, q))
}
