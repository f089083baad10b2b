//! Scenario files: a cost, grids, measures and a list of checks to run.

mod run;
mod tables;

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cost::{CostFunction, CostSpec, Domain};
use crate::error::{Error, Result};
use crate::mtw::{AxisGrid, GridSpec, Verdict};
use crate::transport::{CcmMode, DiscreteMeasure};

pub use run::{run_scenario, run_scenario_with, CheckResult, RunOptions, RunReport, REPORT_VERSION};
pub use tables::{emit_tables, Table};

/// Grid resolution; explicit axis grids override `count`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(default = "default_directions")]
    pub directions: usize,
    #[serde(default)]
    pub x: Option<AxisGrid>,
    #[serde(default)]
    pub y: Option<AxisGrid>,
}

fn default_count() -> usize {
    12
}

fn default_directions() -> usize {
    8
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { count: default_count(), directions: default_directions(), x: None, y: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureSource {
    /// CSV `w,x1,...,xn`, relative to the scenario file.
    File { path: PathBuf },
    /// Equal weights on a `count`-per-axis grid over the domain.
    UniformGrid { count: usize },
    /// Concentrated bump; quantile atoms on the circle, weighted grid atoms on boxes.
    Bump { center: Vec<f64>, sharpness: f64, count: usize },
    /// `count` uniform random atoms in the domain, drawn from the scenario seed.
    Random { count: usize },
    Atoms { atoms: Vec<Vec<f64>>, weights: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurePair {
    pub source: MeasureSource,
    pub target: MeasureSource,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckOp {
    Signature,
    SignatureMap,
    Taylor,
    A0,
    A1,
    A1Plus,
    A2,
    A3,
    A4,
    MtwScan,
    Solve,
    Certify,
    Decompose,
    Spacelike,
    MongeMap,
    Monotone,
}

impl CheckOp {
    pub fn name(self) -> &'static str {
        match self {
            CheckOp::Signature => "signature",
            CheckOp::SignatureMap => "signature_map",
            CheckOp::Taylor => "taylor",
            CheckOp::A0 => "a0",
            CheckOp::A1 => "a1",
            CheckOp::A1Plus => "a1_plus",
            CheckOp::A2 => "a2",
            CheckOp::A3 => "a3",
            CheckOp::A4 => "a4",
            CheckOp::MtwScan => "mtw_scan",
            CheckOp::Solve => "solve",
            CheckOp::Certify => "certify",
            CheckOp::Decompose => "decompose",
            CheckOp::Spacelike => "spacelike",
            CheckOp::MongeMap => "monge_map",
            CheckOp::Monotone => "monotone",
        }
    }

    pub fn needs_measures(self) -> bool {
        matches!(self, CheckOp::Solve | CheckOp::Certify | CheckOp::Decompose | CheckOp::Spacelike | CheckOp::MongeMap | CheckOp::Monotone)
    }
}

/// Optional per-check parameters; each op reads the ones it understands.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_x: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_y: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strict: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strong: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<CcmMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    /// Decomposition: entries with `c < prefer_graph_below` try the graph slot first.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prefer_graph_below: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSpec {
    pub op: CheckOp,
    #[serde(default)]
    pub params: CheckParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect: Option<Verdict>,
}

impl CheckSpec {
    pub fn new(op: CheckOp) -> Self {
        CheckSpec { op, params: CheckParams::default(), expect: None }
    }

    pub fn expecting(op: CheckOp, expect: Verdict) -> Self {
        CheckSpec { expect: Some(expect), ..Self::new(op) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub cost: CostSpec,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measures: Option<MeasurePair>,
    #[serde(default)]
    pub checks: Vec<CheckSpec>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Directory that relative measure paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Scenario {
    pub fn new(cost: CostSpec) -> Self {
        Scenario { cost, grid: GridConfig::default(), measures: None, checks: Vec::new(), seed: 0, output_dir: None, base_dir: PathBuf::from(".") }
    }

    /// Parse and validate; schema errors carry the line and column.
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self> {
        let mut s: Scenario = serde_json::from_str(text).map_err(|e| Error::Config(format!("scenario: {e}")))?;
        s.base_dir = base_dir.to_path_buf();
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, &base)
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.cost.build()?;
        self.grid_spec(&c)?.validate(&c)?;
        if self.grid.directions == 0 {
            return Err(Error::Config("grid.directions must be positive".into()));
        }
        match &self.measures {
            Some(m) => {
                for (label, src) in [("source", &m.source), ("target", &m.target)] {
                    if let MeasureSource::File { path } = src {
                        let full = self.base_dir.join(path);
                        if !full.is_file() {
                            return Err(Error::Config(format!("measures.{label}: file {} does not exist", full.display())));
                        }
                    }
                }
            }
            None => {
                if let Some(k) = self.checks.iter().find(|k| k.op.needs_measures()) {
                    return Err(Error::Config(format!("check `{}` needs a `measures` section", k.op.name())));
                }
            }
        }
        for (n, k) in self.checks.iter().enumerate() {
            if k.params.k.is_some_and(|k| k < 2) {
                return Err(Error::Config(format!("checks[{n}].params.k must be at least 2")));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("scenario serialises");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn grid_spec(&self, c: &CostFunction) -> Result<GridSpec> {
        let mut g = GridSpec::uniform(c, self.grid.count, self.grid.directions);
        if let Some(x) = &self.grid.x {
            g.x = x.clone();
        }
        if let Some(y) = &self.grid.y {
            g.y = y.clone();
        }
        g.seed = self.seed;
        Ok(g)
    }

    pub fn build_measures(&self, c: &CostFunction) -> Result<(DiscreteMeasure, DiscreteMeasure)> {
        let m = self.measures.as_ref().ok_or_else(|| Error::Config("scenario has no measures".into()))?;
        let a = self.build_measure(&m.source, &c.domain_x, c.dim_x, 0x51)?;
        let b = self.build_measure(&m.target, &c.domain_y, c.dim_y, 0x52)?;
        Ok((a, b))
    }

    fn build_measure(&self, src: &MeasureSource, domain: &Domain, dim: usize, salt: u64) -> Result<DiscreteMeasure> {
        match src {
            MeasureSource::File { path } => DiscreteMeasure::read_csv(&self.base_dir.join(path)),
            MeasureSource::UniformGrid { count } => {
                let pts: Vec<Vec<f64>> = AxisGrid::over(domain, dim, *count).points().into_iter().filter(|p| domain.contains(p)).collect();
                DiscreteMeasure::uniform(pts)
            }
            MeasureSource::Bump { center, sharpness, count } => {
                if center.len() != dim {
                    return Err(Error::Config(format!("bump centre has {} coordinates, expected {dim}", center.len())));
                }
                if domain.is_periodic() && dim == 1 {
                    DiscreteMeasure::circle_bump(center[0], *sharpness, *count, 0.5)
                } else {
                    DiscreteMeasure::grid_bump(&AxisGrid::over(domain, dim, *count), center, *sharpness)
                }
            }
            MeasureSource::Random { count } => {
                let (lo, hi) = domain.bounds(dim);
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15));
                let mut pts = Vec::with_capacity(*count);
                let mut tries = 0usize;
                while pts.len() < *count {
                    tries += 1;
                    if tries > 1000 * count.max(&1) {
                        return Err(Error::Config("could not sample random atoms inside the domain".into()));
                    }
                    let p: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| if a < b { rng.random_range(*a..*b) } else { *a }).collect();
                    if domain.contains(&p) {
                        pts.push(p);
                    }
                }
                DiscreteMeasure::uniform(pts)
            }
            MeasureSource::Atoms { atoms, weights } => DiscreteMeasure::new(atoms.clone(), weights.clone()),
        }
    }
}

/// Base point used by single-point checks when none is given.
pub(crate) fn default_base(c: &CostFunction) -> (Vec<f64>, Vec<f64>) {
    let centre = |d: &Domain, dim: usize, periodic_at: f64| match d {
        Domain::Periodic => vec![periodic_at; dim],
        Domain::Union { boxes } => boxes[0].lo.iter().zip(&boxes[0].hi).map(|(a, b)| 0.5 * (a + b)).collect(),
        _ => {
            let (lo, hi) = d.bounds(dim);
            lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect()
        }
    };
    (centre(&c.domain_x, c.dim_x, 0.5), centre(&c.domain_y, c.dim_y, 1.0))
}
