use serde::{Deserialize, Serialize};

use super::{CostFunction, CostKind, DerivativeSource, Domain, FdScheme};
use crate::error::{Error, Result};

/// One row of `zoo list`.
#[derive(Clone, Debug, Serialize)]
pub struct CatalogueEntry {
    pub name: &'static str,
    pub formula: &'static str,
    pub parameters: &'static str,
    pub excluded_set: &'static str,
    pub default_domains: &'static str,
}

pub fn catalogue() -> Vec<CatalogueEntry> {
    vec![
        CatalogueEntry {
            name: "bilinear",
            formula: "-x·y",
            parameters: "dim",
            excluded_set: "none",
            default_domains: "x, y in [-1,1]^n",
        },
        CatalogueEntry {
            name: "quadratic",
            formula: "½|x-y|²",
            parameters: "dim",
            excluded_set: "none",
            default_domains: "x, y in [-1,1]^n",
        },
        CatalogueEntry {
            name: "euclidean_norm",
            formula: "|x-y|",
            parameters: "dim",
            excluded_set: "diagonal x = y",
            default_domains: "x in [0,1]^n, y in [2,3]^n",
        },
        CatalogueEntry {
            name: "log",
            formula: "-log|x-y|",
            parameters: "dim",
            excluded_set: "diagonal x = y",
            default_domains: "x in [-1,0]×[-1,1]^(n-1), y in [1,2]×[-1,1]^(n-1)",
        },
        CatalogueEntry {
            name: "circle_chord",
            formula: "1 - cos(θ-φ)",
            parameters: "none (angle chart, n = 1)",
            excluded_set: "none",
            default_domains: "θ, φ periodic in [0,2π)",
        },
        CatalogueEntry {
            name: "circle_geodesic",
            formula: "½ d(θ,φ)²",
            parameters: "cut_clearance (default 0.1 rad)",
            excluded_set: "cut locus |θ-φ| = π, within cut_clearance",
            default_domains: "θ, φ periodic in [0,2π)",
        },
        CatalogueEntry {
            name: "power",
            formula: "|x-y|^p / p",
            parameters: "dim, p > 0",
            excluded_set: "diagonal x = y (unless p is an even integer)",
            default_domains: "x in [0,1]^n, y in [2,3]^n",
        },
        CatalogueEntry {
            name: "synthetic",
            formula: "-xᵀAy + Σ fx_i sin x_i + Σ gy_j sin y_j",
            parameters: "a (n⁺×n⁻), fx, gy",
            excluded_set: "none",
            default_domains: "x in [-1,1]^n⁺, y in [-1,1]^n⁻",
        },
    ]
}

/// Named, parameterised cost as it appears in scenario files.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSpec {
    pub name: String,
    #[serde(default)]
    pub dim: Option<usize>,
    #[serde(default)]
    pub dim_y: Option<usize>,
    #[serde(default)]
    pub p: Option<f64>,
    #[serde(default)]
    pub cut_clearance: Option<f64>,
    #[serde(default)]
    pub a: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub fx: Option<Vec<f64>>,
    #[serde(default)]
    pub gy: Option<Vec<f64>>,
    #[serde(default)]
    pub domain_x: Option<Domain>,
    #[serde(default)]
    pub domain_y: Option<Domain>,
    #[serde(default)]
    pub derivatives: DerivativeSource,
    #[serde(default)]
    pub fd: Option<FdScheme>,
    #[serde(default)]
    pub reflected: bool,
}

impl CostSpec {
    pub fn named(name: &str, dim: usize) -> Self {
        CostSpec { name: name.to_string(), dim: Some(dim), ..Default::default() }
    }

    pub fn build(&self) -> Result<CostFunction> {
        let n = self.dim.unwrap_or(1);
        let (kind, dim_x, dim_y, dx, dy) = match self.name.as_str() {
            "bilinear" => (CostKind::Bilinear, n, n, Domain::cube(n, -1.0, 1.0), Domain::cube(n, -1.0, 1.0)),
            "quadratic" => (CostKind::Quadratic, n, n, Domain::cube(n, -1.0, 1.0), Domain::cube(n, -1.0, 1.0)),
            "euclidean_norm" => (CostKind::EuclideanNorm, n, n, Domain::cube(n, 0.0, 1.0), Domain::cube(n, 2.0, 3.0)),
            "log" => {
                let mut lo_x = vec![-1.0; n];
                let mut hi_x = vec![1.0; n];
                let mut lo_y = vec![-1.0; n];
                let mut hi_y = vec![1.0; n];
                lo_x[0] = -1.0;
                hi_x[0] = 0.0;
                lo_y[0] = 1.0;
                hi_y[0] = 2.0;
                (CostKind::Log, n, n, Domain::Box { lo: lo_x, hi: hi_x }, Domain::Box { lo: lo_y, hi: hi_y })
            }
            "circle_chord" => (CostKind::CircleChord, 1, 1, Domain::Periodic, Domain::Periodic),
            "circle_geodesic" => (
                CostKind::CircleGeodesic { cut_clearance: self.cut_clearance.unwrap_or(0.1) },
                1,
                1,
                Domain::Periodic,
                Domain::Periodic,
            ),
            "power" => {
                let p = self.p.ok_or_else(|| Error::Config("power cost requires parameter `p`".into()))?;
                (CostKind::Power { p }, n, n, Domain::cube(n, 0.0, 1.0), Domain::cube(n, 2.0, 3.0))
            }
            "synthetic" => {
                let a = self.a.clone().ok_or_else(|| Error::Config("synthetic cost requires matrix `a`".into()))?;
                let nx = a.len();
                let ny = a.first().map(|r| r.len()).unwrap_or(0);
                let fx = self.fx.clone().unwrap_or_else(|| vec![0.0; nx]);
                let gy = self.gy.clone().unwrap_or_else(|| vec![0.0; ny]);
                (CostKind::Synthetic { a, fx, gy }, nx, ny, Domain::cube(nx, -1.0, 1.0), Domain::cube(ny, -1.0, 1.0))
            }
            other => return Err(Error::Config(format!("unknown cost `{other}`"))),
        };
        if let Some(ny) = self.dim_y {
            if ny != dim_y {
                return Err(Error::Config(format!("cost `{}` has dim_y = {dim_y}, not {ny}", self.name)));
            }
        }
        let mut c = CostFunction::new(
            kind,
            dim_x,
            dim_y,
            self.domain_x.clone().unwrap_or(dx),
            self.domain_y.clone().unwrap_or(dy),
        )?;
        c.derivatives = self.derivatives;
        if let Some(fd) = &self.fd {
            fd.validate()?;
            c.fd = fd.clone();
        }
        Ok(if self.reflected { c.reflect() } else { c })
    }
}
