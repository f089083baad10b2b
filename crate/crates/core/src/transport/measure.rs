use std::f64::consts::{PI, TAU};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::mtw::AxisGrid;

/// Atoms closer than this in every coordinate are merged.
pub const DUPLICATE_TOL: f64 = 1e-12;
/// CSV weights are normalised; a warning is logged past this deviation.
pub const WEIGHT_SUM_WARN: f64 = 1e-6;

/// Finitely supported measure: distinct atoms with positive weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    pub atoms: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl DiscreteMeasure {
    /// Merge duplicate atoms and normalise the weights to sum to 1.
    pub fn new(atoms: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        let mut m = Self::unnormalized(atoms, weights)?;
        let total = m.total_mass();
        for w in &mut m.weights {
            *w /= total;
        }
        Ok(m)
    }

    /// Merge duplicate atoms but keep the raw weights.
    pub fn unnormalized(atoms: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidMeasure("measure has no atoms".into()));
        }
        if atoms.len() != weights.len() {
            return Err(Error::InvalidMeasure(format!("{} atoms but {} weights", atoms.len(), weights.len())));
        }
        let dim = atoms[0].len();
        if dim == 0 || atoms.iter().any(|a| a.len() != dim) {
            return Err(Error::InvalidMeasure("atoms must share a positive dimension".into()));
        }
        if atoms.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidMeasure("atom coordinates must be finite".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidMeasure("weights must be positive and finite".into()));
        }
        let mut merged_atoms: Vec<Vec<f64>> = Vec::with_capacity(atoms.len());
        let mut merged_weights: Vec<f64> = Vec::with_capacity(atoms.len());
        for (a, w) in atoms.into_iter().zip(weights) {
            match merged_atoms.iter().position(|b| a.iter().zip(b).all(|(u, v)| (u - v).abs() <= DUPLICATE_TOL)) {
                Some(k) => merged_weights[k] += w,
                None => {
                    merged_atoms.push(a);
                    merged_weights.push(w);
                }
            }
        }
        Ok(DiscreteMeasure { atoms: merged_atoms, weights: merged_weights })
    }

    /// Equal weights on the given atoms.
    pub fn uniform(atoms: Vec<Vec<f64>>) -> Result<Self> {
        let n = atoms.len();
        Self::new(atoms, vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.atoms.first().map_or(0, |a| a.len())
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// SHA-256 over dimension, weights and coordinates (little-endian bytes).
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.dim() as u64).to_le_bytes());
        for (a, w) in self.atoms.iter().zip(&self.weights) {
            h.update(w.to_le_bytes());
            for v in a {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    /// Read `w,x1,...,xn` rows.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let header = rdr.headers()?.clone();
        let dim = header.len().saturating_sub(1);
        let expected: Vec<String> = std::iter::once("w".to_string()).chain((1..=dim).map(|k| format!("x{k}"))).collect();
        if dim == 0 || header.iter().map(str::trim).ne(expected.iter().map(String::as_str)) {
            return Err(Error::InvalidMeasure(format!("{}: header must be `w,x1,...,xn`", path.display())));
        }
        let mut atoms = Vec::new();
        let mut weights = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let vals: Vec<f64> = rec
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::InvalidMeasure(format!("{}: row {}: {e}", path.display(), line + 2)))?;
            weights.push(vals[0]);
            atoms.push(vals[1..].to_vec());
        }
        let raw: f64 = weights.iter().sum();
        if (raw - 1.0).abs() > WEIGHT_SUM_WARN {
            log::warn!("{}: weights sum to {raw}, normalising", path.display());
        }
        Self::new(atoms, weights)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let header: Vec<String> = std::iter::once("w".to_string()).chain((1..=self.dim()).map(|k| format!("x{k}"))).collect();
        w.write_record(&header)?;
        for (a, wt) in self.atoms.iter().zip(&self.weights) {
            let row: Vec<String> = std::iter::once(wt).chain(a).map(|v| format!("{v:?}")).collect();
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Equal weights on every point of a grid.
    pub fn uniform_grid(grid: &AxisGrid) -> Result<Self> {
        Self::uniform(grid.points())
    }

    /// `count` equal-weight angles at the quantiles `(k + phase)/count` of the
    /// density `∝ exp(sharpness·cos(θ - center))` on the circle.
    pub fn circle_bump(center: f64, sharpness: f64, count: usize, phase: f64) -> Result<Self> {
        if count == 0 || !(sharpness >= 0.0) || !(0.0..1.0).contains(&phase) || !center.is_finite() {
            return Err(Error::Config("circle bump needs count > 0, sharpness >= 0, phase in [0, 1)".into()));
        }
        const TABLE: usize = 1 << 16;
        // cumulative distribution over [center - π, center + π]
        let density = |t: f64| (sharpness * (t.cos() - 1.0)).exp();
        let dt = TAU / TABLE as f64;
        let mut cdf = Vec::with_capacity(TABLE + 1);
        cdf.push(0.0);
        for k in 0..TABLE {
            let (a, b) = (-PI + k as f64 * dt, -PI + (k + 1) as f64 * dt);
            cdf.push(cdf[k] + 0.5 * dt * (density(a) + density(b)));
        }
        let total = cdf[TABLE];
        let atoms = (0..count)
            .map(|k| {
                let target = total * (k as f64 + phase) / count as f64;
                let i = cdf.partition_point(|v| *v <= target).clamp(1, TABLE);
                let frac = (target - cdf[i - 1]) / (cdf[i] - cdf[i - 1]);
                let t = -PI + (i as f64 - 1.0 + frac) * dt;
                vec![(center + t).rem_euclid(TAU)]
            })
            .collect();
        Self::uniform(atoms)
    }

    /// Grid atoms weighted by `exp(-sharpness·|x - center|²/2)`.
    pub fn grid_bump(grid: &AxisGrid, center: &[f64], sharpness: f64) -> Result<Self> {
        if center.len() != grid.dim() || !(sharpness >= 0.0) {
            return Err(Error::Config("grid bump needs a centre of the grid's dimension and sharpness >= 0".into()));
        }
        let atoms = grid.points();
        let weights = atoms
            .iter()
            .map(|a| (-0.5 * sharpness * a.iter().zip(center).map(|(u, v)| (u - v) * (u - v)).sum::<f64>()).exp())
            .collect();
        Self::new(atoms, weights)
    }
}
