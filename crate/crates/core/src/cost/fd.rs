//! Central finite differences for mixed partials up to fourth order, with
//! Richardson extrapolation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Step model for finite-difference derivatives.
///
/// The order-`m` step is `order_steps[m]` (falling back to `base_step`),
/// scaled by `max(1, |z|)` over the differenced coordinates. Each Richardson
/// level halves the step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdScheme {
    pub base_step: f64,
    pub order_steps: BTreeMap<usize, f64>,
    pub richardson_levels: usize,
}

impl Default for FdScheme {
    fn default() -> Self {
        let eps = f64::EPSILON;
        let order_steps = (1..=4).map(|m| (m, eps.powf(1.0 / (m as f64 + 4.0)))).collect();
        FdScheme {
            base_step: eps.powf(1.0 / 6.0),
            order_steps,
            richardson_levels: 2,
        }
    }
}

impl FdScheme {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_step > 0.0) || self.order_steps.values().any(|h| !(*h > 0.0)) {
            return Err(Error::Config("finite-difference steps must be strictly positive".into()));
        }
        if self.richardson_levels == 0 {
            return Err(Error::Config("richardson_levels must be at least 1".into()));
        }
        Ok(())
    }

    /// Unscaled step for a derivative of the given order.
    pub fn step(&self, order: usize) -> f64 {
        self.order_steps.get(&order).copied().unwrap_or(self.base_step)
    }

    /// Steps used by the Richardson levels, strictly decreasing.
    pub fn level_steps(&self, order: usize, scale: f64) -> Vec<f64> {
        let h0 = self.step(order) * scale.abs().max(1.0);
        (0..self.richardson_levels).map(|l| h0 / 2f64.powi(l as i32)).collect()
    }

    /// Furthest distance a stencil point moves from the base point, per coordinate.
    pub fn reach(&self, order: usize, scale: f64) -> f64 {
        2.0 * self.level_steps(order, scale)[0]
    }
}

/// 1-D central stencil for a derivative of the given multiplicity:
/// (offset in units of h, weight), to be divided by h^mult.
fn stencil(mult: usize) -> &'static [(f64, f64)] {
    match mult {
        1 => &[(-1.0, -0.5), (1.0, 0.5)],
        2 => &[(-1.0, 1.0), (0.0, -2.0), (1.0, 1.0)],
        3 => &[(-2.0, -0.5), (-1.0, 1.0), (1.0, -1.0), (2.0, 0.5)],
        4 => &[(-2.0, 1.0), (-1.0, -4.0), (0.0, 6.0), (1.0, -4.0), (2.0, 1.0)],
        _ => &[],
    }
}

/// Group an index list into (coordinate, multiplicity) pairs in coordinate order.
pub fn multiplicities(idx: &[usize]) -> Vec<(usize, usize)> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &i in idx {
        *counts.entry(i).or_default() += 1;
    }
    counts.into_iter().collect()
}

/// Plain (second-order accurate) tensor-product central difference.
pub fn central<F: Fn(&[f64]) -> f64>(f: &F, z: &[f64], idx: &[usize], h: f64) -> f64 {
    let mults = multiplicities(idx);
    if mults.is_empty() {
        return f(z);
    }
    let stencils: Vec<&[(f64, f64)]> = mults.iter().map(|&(_, m)| stencil(m)).collect();
    let mut counters = vec![0usize; mults.len()];
    let mut point = z.to_vec();
    let mut total = 0.0;
    loop {
        let mut weight = 1.0;
        for (k, &(coord, _)) in mults.iter().enumerate() {
            let (offset, w) = stencils[k][counters[k]];
            point[coord] = z[coord] + offset * h;
            weight *= w;
        }
        total += weight * f(&point);
        let mut k = 0;
        loop {
            if k == mults.len() {
                return total / h.powi(idx.len() as i32);
            }
            counters[k] += 1;
            if counters[k] < stencils[k].len() {
                break;
            }
            counters[k] = 0;
            k += 1;
        }
    }
}

/// Richardson-extrapolated central difference over the given level steps.
pub fn richardson<F: Fn(&[f64]) -> f64>(f: &F, z: &[f64], idx: &[usize], steps: &[f64]) -> f64 {
    let mut table: Vec<f64> = steps.iter().map(|&h| central(f, z, idx, h)).collect();
    let mut factor = 4.0;
    while table.len() > 1 {
        table = table.windows(2).map(|w| (factor * w[1] - w[0]) / (factor - 1.0)).collect();
        factor *= 4.0;
    }
    table[0]
}

/// Coordinate magnitude used to scale steps.
pub fn coordinate_scale(z: &[f64], idx: &[usize]) -> f64 {
    idx.iter().map(|&i| z[i].abs()).fold(1.0, f64::max)
}

/// Rounding-noise floor of the Richardson stencil: a conservative bound on
/// the error contributed by evaluating `f` (of magnitude `magnitude`) to
/// machine precision.
pub fn noise_floor(scheme: &FdScheme, order: usize, scale: f64, magnitude: f64) -> f64 {
    if order == 0 {
        return f64::EPSILON * magnitude;
    }
    let steps = scheme.level_steps(order, scale);
    let finest = *steps.last().unwrap_or(&1.0);
    let amplification = 4f64.powi(steps.len() as i32 - 1);
    64.0 * f64::EPSILON * magnitude.max(1.0) * amplification / finest.powi(order as i32)
}
