//! Closed-form partial derivatives (up to fourth order) for the catalogue.
//!
//! Derivatives are requested as a list of x-coordinate indices and a list of
//! y-coordinate indices. Costs of the form `φ(x - y)` reduce to derivatives of
//! `φ` with a sign `(-1)^{|J|}`; radial profiles are written as `F(s)` with
//! `s = |d|²/2`, for which every partial derivative is a sum over partial
//! matchings of the index list.

use super::CostKind;

/// Radial profile `F(s)`, `s = |d|²/2`, and its first four derivatives.
fn radial_profile(kind: &CostKind, s: f64) -> Option<[f64; 5]> {
    match kind {
        CostKind::Quadratic => Some([s, 1.0, 0.0, 0.0, 0.0]),
        CostKind::EuclideanNorm => Some(power_profile(1.0, s)),
        CostKind::Power { p } => Some(power_profile(*p, s)),
        CostKind::Log => {
            // -log|d| = -½ ln(2s)
            Some([
                -0.5 * (2.0 * s).ln(),
                -0.5 / s,
                0.5 / (s * s),
                -1.0 / (s * s * s),
                3.0 / (s * s * s * s),
            ])
        }
        _ => None,
    }
}

/// `F(s) = (2s)^{p/2} / p` and derivatives.
fn power_profile(p: f64, s: f64) -> [f64; 5] {
    let q = 0.5 * p;
    let base = 2.0 * s;
    let mut out = [0.0; 5];
    let mut falling = 1.0;
    for (k, slot) in out.iter_mut().enumerate() {
        if k > 0 {
            falling *= q - (k as f64 - 1.0);
        }
        *slot = 2f64.powi(k as i32) * falling * base.powf(q - k as f64) / p;
    }
    out
}

/// Sum over partial matchings of `idx` into singletons and pairs.
///
/// Each singleton contributes `d[i]`, each pair `δ_ij`, and the term is
/// weighted by `F^{(#blocks)}`.
fn matching_sum(idx: &[usize], d: &[f64], profile: &[f64; 5]) -> f64 {
    fn rec(rest: &[usize], d: &[f64], profile: &[f64; 5], blocks: usize, acc: f64) -> f64 {
        if acc == 0.0 {
            return 0.0;
        }
        match rest.split_first() {
            None => acc * profile[blocks],
            Some((&first, tail)) => {
                let mut total = rec(tail, d, profile, blocks + 1, acc * d[first]);
                for k in 0..tail.len() {
                    if tail[k] == first {
                        let mut remaining = tail.to_vec();
                        remaining.remove(k);
                        total += rec(&remaining, d, profile, blocks + 1, acc);
                    }
                }
                total
            }
        }
    }
    rec(idx, d, profile, 0, 1.0)
}

fn sign_for(iy: &[usize]) -> f64 {
    if iy.len() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Wrap an angle difference into `(-π, π]`.
pub(crate) fn wrap_angle(t: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let mut w = t.rem_euclid(tau);
    if w > std::f64::consts::PI {
        w -= tau;
    }
    w
}

fn sin_derivative(order: usize, t: f64) -> f64 {
    match order % 4 {
        0 => t.sin(),
        1 => t.cos(),
        2 => -t.sin(),
        _ => -t.cos(),
    }
}

/// Closed-form value of the derivative `∂^{ix}_x ∂^{iy}_y c(x, y)`.
///
/// Returns `None` when the kind has no closed form for the request.
pub(crate) fn derivative(kind: &CostKind, ix: &[usize], iy: &[usize], x: &[f64], y: &[f64]) -> Option<f64> {
    let order = ix.len() + iy.len();
    if order > 4 {
        return None;
    }
    match kind {
        CostKind::Bilinear => Some(match (ix.len(), iy.len()) {
            (0, 0) => -x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>(),
            (1, 0) => -y[ix[0]],
            (0, 1) => -x[iy[0]],
            (1, 1) => {
                if ix[0] == iy[0] {
                    -1.0
                } else {
                    0.0
                }
            }
            _ => 0.0,
        }),
        CostKind::Quadratic | CostKind::EuclideanNorm | CostKind::Log | CostKind::Power { .. } => {
            let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
            let s = 0.5 * d.iter().map(|v| v * v).sum::<f64>();
            let profile = radial_profile(kind, s)?;
            let mut all = ix.to_vec();
            all.extend_from_slice(iy);
            Some(sign_for(iy) * matching_sum(&all, &d, &profile))
        }
        CostKind::CircleChord => {
            // 1 - cos t, t = θ - φ
            let t = x[0] - y[0];
            let value = if order == 0 {
                1.0 - t.cos()
            } else {
                // d^m/dt^m (1 - cos t) = d^{m-1}/dt^{m-1} sin t
                sin_derivative(order - 1, t)
            };
            Some(sign_for(iy) * value)
        }
        CostKind::CircleGeodesic { .. } => {
            let w = wrap_angle(x[0] - y[0]);
            let value = match order {
                0 => 0.5 * w * w,
                1 => w,
                2 => 1.0,
                _ => 0.0,
            };
            Some(sign_for(iy) * value)
        }
        CostKind::Synthetic { a, fx, gy } => Some(synthetic(a, fx, gy, ix, iy, x, y)),
    }
}

fn synthetic(a: &[Vec<f64>], fx: &[f64], gy: &[f64], ix: &[usize], iy: &[usize], x: &[f64], y: &[f64]) -> f64 {
    let bilinear = |i: usize, j: usize| a.get(i).and_then(|row| row.get(j)).copied().unwrap_or(0.0);
    let coef = |v: &[f64], k: usize| v.get(k).copied().unwrap_or(0.0);
    let all_same = |idx: &[usize]| idx.windows(2).all(|w| w[0] == w[1]);
    match (ix.len(), iy.len()) {
        (0, 0) => {
            let mut v = 0.0;
            for (i, xi) in x.iter().enumerate() {
                for (j, yj) in y.iter().enumerate() {
                    v -= xi * bilinear(i, j) * yj;
                }
                v += coef(fx, i) * xi.sin();
            }
            for (j, yj) in y.iter().enumerate() {
                v += coef(gy, j) * yj.sin();
            }
            v
        }
        (1, 0) => {
            let i = ix[0];
            let ay: f64 = y.iter().enumerate().map(|(j, yj)| bilinear(i, j) * yj).sum();
            -ay + coef(fx, i) * x[i].cos()
        }
        (0, 1) => {
            let j = iy[0];
            let ax: f64 = x.iter().enumerate().map(|(i, xi)| xi * bilinear(i, j)).sum();
            -ax + coef(gy, j) * y[j].cos()
        }
        (1, 1) => -bilinear(ix[0], iy[0]),
        (m, 0) if all_same(ix) => coef(fx, ix[0]) * sin_derivative(m, x[ix[0]]),
        (0, m) if all_same(iy) => coef(gy, iy[0]) * sin_derivative(m, y[iy[0]]),
        _ => 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matching_sum_reproduces_quadratic_hessian() {
        let profile = [0.0, 1.0, 0.0, 0.0, 0.0];
        let d = [0.3, -0.7];
        assert_eq!(matching_sum(&[0, 0], &d, &profile), 1.0);
        assert_eq!(matching_sum(&[0, 1], &d, &profile), 0.0);
        assert_eq!(matching_sum(&[1], &d, &profile), -0.7);
    }

    #[test]
    fn power_profile_two_is_quadratic() {
        let p = power_profile(2.0, 0.8);
        assert!((p[0] - 0.8).abs() < 1e-15);
        assert!((p[1] - 1.0).abs() < 1e-15);
        assert!(p[2].abs() < 1e-15);
    }

    #[test]
    fn log_fourth_derivative_one_dimensional() {
        // d^4/dd^4 (-log|d|) = 6 / d^4
        let v = derivative(&CostKind::Log, &[0, 0, 0, 0], &[], &[0.0], &[2.0]).unwrap();
        assert!((v - 6.0 / 16.0).abs() < 1e-14);
    }

    #[test]
    fn wrap_angle_range() {
        assert!((wrap_angle(3.0 * std::f64::consts::PI) - std::f64::consts::PI).abs() < 1e-12);
        assert!((wrap_angle(-0.5) + 0.5).abs() < 1e-15);
    }
}
