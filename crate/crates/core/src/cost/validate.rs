use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{fd, CostFunction, DerivativeRequest, FdScheme};

/// Relative agreement required between closed-form and FD derivatives.
pub const FD_REL_TOL: f64 = 1e-5;
/// Absolute floor below which discrepancies are ignored (raised to the
/// stencil's rounding-noise floor at high orders).
pub const FD_ABS_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, Default, Serialize)]
pub struct OrderDiscrepancy {
    pub order: usize,
    pub comparisons: usize,
    /// max |analytic - fd|
    pub max_abs: f64,
    /// max |analytic - fd| / max(|analytic|, 1)
    pub max_rel: f64,
    /// max |analytic - fd| / tolerance; at most 1 when every comparison is within tolerance
    pub tolerance_ratio: f64,
}

impl OrderDiscrepancy {
    pub fn within_tolerance(&self) -> bool {
        self.tolerance_ratio <= 1.0
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct FdValidation {
    pub cost: String,
    pub samples: usize,
    pub rejected_points: usize,
    pub orders: Vec<OrderDiscrepancy>,
}

/// Tolerance for one comparison: `1e-5·|a| + max(1e-8, noise floor)`.
pub fn fd_tolerance(scheme: &FdScheme, order: usize, scale: f64, magnitude: f64, analytic: f64) -> f64 {
    FD_REL_TOL * analytic.abs() + FD_ABS_FLOOR.max(fd::noise_floor(scheme, order, scale, magnitude))
}

/// Compare closed-form and finite-difference derivatives of orders 1–4 at
/// random interior points whose stencils clear the excluded set.
pub fn fd_validate(c: &CostFunction, scheme: &FdScheme, sample_count: usize, seed: u64) -> FdValidation {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo_x, hi_x) = c.domain_x.bounds(c.dim_x);
    let (lo_y, hi_y) = c.domain_y.bounds(c.dim_y);
    let mut report = FdValidation {
        cost: c.name(),
        orders: (1..=4).map(|order| OrderDiscrepancy { order, ..Default::default() }).collect(),
        ..Default::default()
    };
    let requests: Vec<Vec<DerivativeRequest>> = (1..=4).map(|m| DerivativeRequest::all_of_order(m, c.dim_x, c.dim_y)).collect();
    let attempts = 50 * sample_count.max(1);
    let mut tries = 0;
    while report.samples < sample_count && tries < attempts {
        tries += 1;
        let x: Vec<f64> = lo_x.iter().zip(&hi_x).map(|(a, b)| sample(&mut rng, *a, *b)).collect();
        let y: Vec<f64> = lo_y.iter().zip(&hi_y).map(|(a, b)| sample(&mut rng, *a, *b)).collect();
        let z: Vec<f64> = x.iter().chain(&y).copied().collect();
        let scale = z.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let reach = (1..=4).map(|m| scheme.reach(m, scale)).fold(0.0, f64::max);
        let clearance = c.singular_distance(&x, &y) - c.exclusion_radius();
        if !c.domain_x.contains(&x)
            || !c.domain_y.contains(&y)
            || c.domain_x.interior_margin(&x) < reach
            || c.domain_y.interior_margin(&y) < reach
            || clearance < 4.0 * reach
        {
            report.rejected_points += 1;
            continue;
        }
        let magnitude = c.value_unchecked(&x, &y).abs();
        let mut usable = true;
        let mut rows = Vec::new();
        for (k, reqs) in requests.iter().enumerate() {
            for req in reqs {
                let (Ok(a), Ok(f)) = (c.derivative_analytic(req, &x, &y), c.derivative_fd(req, &x, &y, scheme)) else {
                    usable = false;
                    break;
                };
                let idx_scale = req.x.iter().map(|&i| x[i].abs()).chain(req.y.iter().map(|&j| y[j].abs())).fold(1.0, f64::max);
                let tol = fd_tolerance(scheme, k + 1, idx_scale, magnitude, a);
                rows.push((k, (a - f).abs(), a, tol));
            }
        }
        if !usable {
            report.rejected_points += 1;
            continue;
        }
        for (k, err, a, tol) in rows {
            let o = &mut report.orders[k];
            o.comparisons += 1;
            o.max_abs = o.max_abs.max(err);
            o.max_rel = o.max_rel.max(err / a.abs().max(1.0));
            o.tolerance_ratio = o.tolerance_ratio.max(err / tol);
        }
        report.samples += 1;
    }
    report
}

fn sample(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}
