use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::tensor::invert_cross;
use crate::cost::CostFunction;
use crate::error::{Error, Result};
use crate::geometry::{hessian_h, BasePoint};

/// Central-difference step for derivatives of the metric field.
pub const DEFAULT_FD_STEP: f64 = 1e-4;
/// Fixed integrator step.
pub const DEFAULT_GEODESIC_STEP: f64 = 1e-3;

/// Levi-Civita connection of `h`; `get(a, b, c)` is `Γᵃ_{bc}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Christoffel {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl Christoffel {
    pub fn get(&self, a: usize, b: usize, c: usize) -> f64 {
        self.data[(a * self.dim + b) * self.dim + c]
    }

    /// `Γᵃ_{bc} vᵇ vᶜ`.
    pub fn contract(&self, v: &[f64]) -> Vec<f64> {
        let n = self.dim;
        (0..n)
            .map(|a| {
                let mut s = 0.0;
                for b in 0..n {
                    for c in 0..n {
                        s += self.data[(a * n + b) * n + c] * v[b] * v[c];
                    }
                }
                s
            })
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn metric_at(c: &CostFunction, z: &[f64]) -> Result<DMatrix<f64>> {
    let (x, y) = z.split_at(c.dim_x);
    Ok(hessian_h(c, &BasePoint::new(x, y))?.matrix)
}

/// `Γᵃ_{bc} = ½ hᵃᵈ (∂_b h_{dc} + ∂_c h_{bd} - ∂_d h_{bc})`, metric derivatives
/// by central differences of step `fd_step`.
pub fn christoffel(c: &CostFunction, base: &BasePoint, fd_step: f64) -> Result<Christoffel> {
    if !(fd_step > 0.0) {
        return Err(Error::Config("fd_step must be positive".into()));
    }
    let z = base.stacked();
    let n = z.len();
    let nx = c.dim_x;
    let h = hessian_h(c, base)?;
    // h⁻¹ = [[0, -2C⁻ᵀ], [-2C⁻¹, 0]]
    let inv_c = invert_cross(&h.cross_block, base)?;
    let mut hinv = DMatrix::zeros(n, n);
    for i in 0..nx {
        for j in 0..(n - nx) {
            hinv[(i, nx + j)] = -2.0 * inv_c[(j, i)];
            hinv[(nx + j, i)] = -2.0 * inv_c[(j, i)];
        }
    }
    let mut dh = Vec::with_capacity(n);
    for d in 0..n {
        let mut zp = z.clone();
        let mut zm = z.clone();
        zp[d] += fd_step;
        zm[d] -= fd_step;
        dh.push((metric_at(c, &zp)? - metric_at(c, &zm)?) / (2.0 * fd_step));
    }
    let mut data = vec![0.0; n * n * n];
    for a in 0..n {
        for b in 0..n {
            for cc in b..n {
                let mut s = 0.0;
                for d in 0..n {
                    let w = hinv[(a, d)];
                    if w != 0.0 {
                        s += w * (dh[b][(d, cc)] + dh[cc][(b, d)] - dh[d][(b, cc)]);
                    }
                }
                data[(a * n + b) * n + cc] = 0.5 * s;
                data[(a * n + cc) * n + b] = 0.5 * s;
            }
        }
    }
    Ok(Christoffel { dim: n, data })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeodesicState {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    pub time: f64,
}

impl GeodesicState {
    /// `h(z)(z', z')`.
    pub fn energy(&self, c: &CostFunction) -> Result<f64> {
        let (x, y) = self.position.split_at(c.dim_x);
        hessian_h(c, &BasePoint::new(x, y))?.quadratic(&self.velocity)
    }
}

fn inside(c: &CostFunction, z: &[f64]) -> bool {
    let (x, y) = z.split_at(c.dim_x);
    c.domain_x.contains(x) && c.domain_y.contains(y) && !c.is_excluded(x, y)
}

fn acceleration(c: &CostFunction, z: &[f64], v: &[f64], time: f64) -> Result<Vec<f64>> {
    let (x, y) = z.split_at(c.dim_x);
    match christoffel(c, &BasePoint::new(x, y), DEFAULT_FD_STEP) {
        Ok(g) => Ok(g.contract(v).into_iter().map(|a| -a).collect()),
        Err(Error::Domain(_)) | Err(Error::SingularStencil(_)) => Err(Error::DomainExit { time }),
        Err(e) => Err(e),
    }
}

fn axpy(z: &[f64], a: f64, d: &[f64]) -> Vec<f64> {
    z.iter().zip(d).map(|(u, v)| u + a * v).collect()
}

/// Classical fourth-order Runge–Kutta for `z'' = -Γ(z)(z', z')` with
/// `step_count` fixed steps over `duration` (negative durations run
/// backwards). Returns every state including the start.
pub fn geodesic_integrate(c: &CostFunction, start: &GeodesicState, duration: f64, step_count: usize) -> Result<Vec<GeodesicState>> {
    let n = c.dim_x + c.dim_y;
    if start.position.len() != n || start.velocity.len() != n {
        return Err(Error::DimensionMismatch(format!("geodesic state must have {n} components")));
    }
    if step_count == 0 {
        return Err(Error::Config("step_count must be positive".into()));
    }
    if !inside(c, &start.position) {
        return Err(Error::DomainExit { time: start.time });
    }
    let dt = duration / step_count as f64;
    let mut out = Vec::with_capacity(step_count + 1);
    out.push(start.clone());
    let (mut z, mut v, mut t) = (start.position.clone(), start.velocity.clone(), start.time);
    for step in 1..=step_count {
        let k1z = v.clone();
        let k1v = acceleration(c, &z, &v, t)?;
        let z2 = axpy(&z, 0.5 * dt, &k1z);
        let k2z = axpy(&v, 0.5 * dt, &k1v);
        let k2v = acceleration(c, &z2, &k2z, t)?;
        let z3 = axpy(&z, 0.5 * dt, &k2z);
        let k3z = axpy(&v, 0.5 * dt, &k2v);
        let k3v = acceleration(c, &z3, &k3z, t)?;
        let z4 = axpy(&z, dt, &k3z);
        let k4z = axpy(&v, dt, &k3v);
        let k4v = acceleration(c, &z4, &k4z, t)?;
        for i in 0..n {
            z[i] += dt / 6.0 * (k1z[i] + 2.0 * k2z[i] + 2.0 * k3z[i] + k4z[i]);
            v[i] += dt / 6.0 * (k1v[i] + 2.0 * k2v[i] + 2.0 * k3v[i] + k4v[i]);
        }
        t = start.time + dt * step as f64;
        if !inside(c, &z) {
            return Err(Error::DomainExit { time: t });
        }
        out.push(GeodesicState { position: z.clone(), velocity: v.clone(), time: t });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::CostSpec;

    fn state(z: &[f64], v: &[f64]) -> GeodesicState {
        GeodesicState { position: z.to_vec(), velocity: v.to_vec(), time: 0.0 }
    }

    #[test]
    fn christoffel_examples() {
        let b = CostSpec::named("bilinear", 2).build().unwrap();
        let g = christoffel(&b, &BasePoint::new(&[0.1, 0.2], &[0.3, 0.4]), DEFAULT_FD_STEP).unwrap();
        assert_eq!(g.max_abs(), 0.0);
        let q = CostSpec::named("quadratic", 2).build().unwrap();
        assert!(christoffel(&q, &BasePoint::new(&[0.1, 0.2], &[0.3, 0.4]), DEFAULT_FD_STEP).unwrap().max_abs() < 1e-6);
        let l = CostSpec::named("log", 2).build().unwrap();
        let g = christoffel(&l, &BasePoint::new(&[-0.5, 0.1], &[1.5, -0.2]), DEFAULT_FD_STEP).unwrap();
        assert!(g.max_abs().is_finite() && g.max_abs() > 0.0);
        for a in 0..4 {
            for bb in 0..4 {
                for cc in 0..4 {
                    assert!((g.get(a, bb, cc) - g.get(a, cc, bb)).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn bilinear_geodesics_are_lines() {
        let b = CostSpec::named("bilinear", 1).build().unwrap();
        let s = state(&[0.1, -0.2], &[0.3, 0.4]);
        let path = geodesic_integrate(&b, &s, 1.0, 1000).unwrap();
        let end = path.last().unwrap();
        assert!((end.position[0] - 0.4).abs() < 1e-12 && (end.position[1] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn reversal_returns_to_start() {
        let l = CostSpec::named("log", 2).build().unwrap();
        let s = state(&[-0.5, 0.1, 1.5, -0.2], &[0.1, 0.2, -0.1, 0.15]);
        let fwd = geodesic_integrate(&l, &s, 0.5, 500).unwrap();
        let end = fwd.last().unwrap();
        let back = GeodesicState { velocity: end.velocity.iter().map(|v| -v).collect(), ..end.clone() };
        let ret = geodesic_integrate(&l, &back, 0.5, 500).unwrap();
        let fin = ret.last().unwrap();
        for (a, b) in fin.position.iter().zip(&s.position) {
            assert!((a - b).abs() < 1e-8);
        }
        let e0 = s.energy(&l).unwrap();
        let e1 = end.energy(&l).unwrap();
        assert!((e1 - e0).abs() <= 1e-6 * 0.5 * e0.abs().max(1e-12) + 1e-12, "{e0} {e1}");
    }

    #[test]
    fn leaving_the_domain_reports_time() {
        let b = CostSpec::named("bilinear", 1).build().unwrap();
        let s = state(&[0.0, 0.0], &[2.0, 0.0]);
        match geodesic_integrate(&b, &s, 1.0, 100) {
            Err(Error::DomainExit { time }) => assert!((0.49..=0.51).contains(&time), "{time}"),
            other => panic!("{other:?}"),
        }
    }
}
