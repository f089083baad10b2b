use std::path::Path;
use std::sync::OnceLock;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::tables::Table;
use super::{default_base, CheckOp, CheckSpec, Scenario};
use crate::cost::CostFunction;
use crate::error::{Error, Result};
use crate::geometry::{default_rank_tol, hessian_h, loglog_slope, signature, taylor_residual, BasePoint};
use crate::mtw::{check_a0, check_a1, check_a1_plus, check_a2, check_a3, check_a4, mtw_scan, GridSpec, Verdict, A3_SIGN_TOL};
use crate::transport::{
    check_ccm_with, dual_from_cost_matrix, extract_monge_map, graph_antigraph_decompose, graph_antigraph_decompose_by,
    monotone_rearrangement_1d, solve_cost_matrix, spacelike_support_check, CcmMode, CcmOptions, Decomposition, DiscreteMeasure, DualPotentials,
    Part, SolveStats, TransportPlan, MASS_BALANCE_TOL,
};

/// Bumped whenever the report layout changes.
pub const REPORT_VERSION: u32 = 1;

const TAYLOR_STEPS: [f64; 7] = [1e-1, 5e-2, 2e-2, 1e-2, 5e-3, 2e-3, 1e-3];
const TAYLOR_MIN_SLOPE: f64 = 2.5;
/// Residuals at or below this count as rounding noise.
const TAYLOR_EXACT_FLOOR: f64 = 1e-13;
const DUALITY_TOL: f64 = 1e-9;
const SPACELIKE_TOL: f64 = 1e-8;
const RESIDUAL_TOL: f64 = 1e-9;
const MONGE_TOL: f64 = 1e-9;
const MONOTONE_TOL: f64 = 1e-10;
const DEFAULT_CCM_K: usize = 4;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Worker threads for independent checks; `None` uses the global pool.
    pub jobs: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub index: usize,
    pub op: CheckOp,
    pub verdict: Option<Verdict>,
    pub expect: Option<Verdict>,
    pub met: bool,
    pub result: Value,
    pub error: Option<String>,
    pub wall_clock_ms: f64,
    #[serde(skip)]
    pub tables: Vec<Table>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub report_version: u32,
    pub tool_version: String,
    pub scenario_digest: String,
    pub cost: String,
    pub seed: u64,
    pub checks: Vec<CheckResult>,
    pub all_met: bool,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        if self.all_met {
            0
        } else {
            1
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    /// The report with wall-clock fields zeroed, for comparing runs.
    pub fn numeric_json(&self) -> String {
        let mut r = self.clone();
        for c in &mut r.checks {
            c.wall_clock_ms = 0.0;
        }
        r.to_json()
    }

    pub fn write_json(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), self.to_json() + "\n")?;
        Ok(())
    }
}

struct Solved {
    mu_plus: DiscreteMeasure,
    mu_minus: DiscreteMeasure,
    cost: Vec<f64>,
    plan: TransportPlan,
    dual: DualPotentials,
    stats: SolveStats,
}

impl Solved {
    fn support(&self) -> Vec<(Vec<f64>, Vec<f64>)> {
        self.plan.support(&self.mu_plus, &self.mu_minus)
    }

    fn c_at(&self, i: usize, j: usize) -> f64 {
        self.cost[i * self.mu_minus.len() + j]
    }

    fn primal(&self) -> f64 {
        self.plan.entries.iter().map(|e| e.mass * self.c_at(e.i, e.j)).sum()
    }
}

struct Ctx<'a> {
    scenario: &'a Scenario,
    cost: CostFunction,
    grid: GridSpec,
    solved: OnceLock<std::result::Result<Solved, Error>>,
}

impl Ctx<'_> {
    fn solved(&self) -> Result<&Solved> {
        self.solved
            .get_or_init(|| {
                let (a, b) = self.scenario.build_measures(&self.cost)?;
                let (p, q) = (a.total_mass(), b.total_mass());
                if (p - q).abs() > MASS_BALANCE_TOL * p.max(q).max(1.0) {
                    return Err(Error::InfeasibleMass { plus: p, minus: q });
                }
                let cost = crate::transport::cost_matrix(&self.cost, &a, &b)?;
                let (plan, stats) = solve_cost_matrix(&cost, &a.weights, &b.weights)?;
                plan.check_marginals(&a, &b)?;
                let dual = dual_from_cost_matrix(&cost, &plan)?;
                Ok(Solved { mu_plus: a, mu_minus: b, cost, plan, dual, stats })
            })
            .as_ref()
            .map_err(Clone::clone)
    }
}

pub fn run_scenario(path: &Path) -> Result<RunReport> {
    let s = Scenario::load(path)?;
    run_scenario_with(&s, &RunOptions::default())
}

/// Run every check in declaration order. Configuration problems are
/// returned as errors; failures inside a check are recorded in its result.
pub fn run_scenario_with(s: &Scenario, opts: &RunOptions) -> Result<RunReport> {
    s.validate()?;
    let cost = s.cost.build()?;
    let grid = s.grid_spec(&cost)?;
    let ctx = Ctx { scenario: s, cost, grid, solved: OnceLock::new() };
    let run_all = || s.checks.par_iter().enumerate().map(|(n, k)| run_check(&ctx, n, k)).collect::<Vec<_>>();
    let checks = match opts.jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(run_all),
        None => run_all(),
    };
    let all_met = checks.iter().all(|c| c.met);
    Ok(RunReport {
        report_version: REPORT_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        scenario_digest: s.digest(),
        cost: ctx.cost.name(),
        seed: s.seed,
        checks,
        all_met,
    })
}

fn run_check(ctx: &Ctx, index: usize, spec: &CheckSpec) -> CheckResult {
    let start = Instant::now();
    let outcome = execute(ctx, spec);
    let wall_clock_ms = start.elapsed().as_secs_f64() * 1e3;
    match outcome {
        Ok((verdict, result, tables)) => CheckResult {
            index,
            op: spec.op,
            verdict: Some(verdict),
            expect: spec.expect,
            met: spec.expect.is_none_or(|e| e == verdict),
            result,
            error: None,
            wall_clock_ms,
            tables,
        },
        Err(e) => CheckResult {
            index,
            op: spec.op,
            verdict: None,
            expect: spec.expect,
            met: spec.expect.is_none(),
            result: Value::Null,
            error: Some(e.to_string()),
            wall_clock_ms,
            tables: Vec::new(),
        },
    }
}

fn pass_if(ok: bool) -> Verdict {
    if ok {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("result serialises")
}

type Outcome = Result<(Verdict, Value, Vec<Table>)>;

fn execute(ctx: &Ctx, spec: &CheckSpec) -> Outcome {
    let c = &ctx.cost;
    let p = &spec.params;
    let condition = |r: crate::mtw::ConditionReport| -> Outcome { Ok((r.verdict, to_value(&r), Vec::new())) };
    match spec.op {
        CheckOp::Signature => {
            let base = base_point(c, spec)?;
            let h = hessian_h(c, &base)?;
            let tol = p.tol.unwrap_or_else(|| default_rank_tol(c.derivatives));
            let sig = signature(&h, tol);
            let ok = sig.is_consistent(c.dim_x, c.dim_y);
            Ok((pass_if(ok), json!({ "base_x": base.x0, "base_y": base.y0, "tol": tol, "signature": sig, "consistent": ok }), Vec::new()))
        }
        CheckOp::SignatureMap => signature_map(ctx, spec),
        CheckOp::Taylor => {
            let base = base_point(c, spec)?;
            let n = c.dim_x + c.dim_y;
            let direction = p.direction.clone().unwrap_or_else(|| vec![1.0 / (n as f64).sqrt(); n]);
            let steps = p.steps.clone().unwrap_or_else(|| TAYLOR_STEPS.to_vec());
            let residuals = taylor_residual(c, &base, &direction, &steps)?;
            let slope = loglog_slope(&steps, &residuals);
            let min_slope = p.tol.unwrap_or(TAYLOR_MIN_SLOPE);
            // a remainder at rounding level means the expansion is exact
            let exact = residuals.iter().all(|r| *r <= TAYLOR_EXACT_FLOOR);
            let verdict = match slope {
                _ if exact => Verdict::Pass,
                Some(s) => pass_if(s >= min_slope),
                None => Verdict::Inconclusive,
            };
            Ok((verdict, json!({ "steps": steps, "residuals": residuals, "slope": slope, "min_slope": min_slope, "exact": exact }), Vec::new()))
        }
        CheckOp::A0 => condition(check_a0(c, &ctx.grid)?),
        CheckOp::A1 => condition(check_a1(c, &ctx.grid)?),
        CheckOp::A1Plus => condition(check_a1_plus(c, &ctx.grid)?),
        CheckOp::A2 => condition(check_a2(c, &ctx.grid)?),
        CheckOp::A3 => condition(check_a3(c, &ctx.grid, p.strict.unwrap_or(false), p.c0.unwrap_or(0.0))?),
        CheckOp::A4 => condition(check_a4(c, &ctx.grid, p.strong.unwrap_or(false))?),
        CheckOp::MtwScan => {
            let (samples, degenerate) = mtw_scan(c, &ctx.grid)?;
            let (dx, dy) = (c.dim_x, c.dim_y);
            let mut header = coord_header(dx, dy);
            header.extend((1..=dx).map(|k| format!("p{k}")));
            header.extend((1..=dy).map(|k| format!("q{k}")));
            header.push("value".into());
            let mut table = Table::new("mtw_scan", header);
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for s in &samples {
                lo = lo.min(s.value);
                hi = hi.max(s.value);
                table.push_numbers(s.x.iter().chain(&s.y).chain(&s.p).chain(&s.q).chain([&s.value]).copied());
            }
            let tol = p.tol.unwrap_or(A3_SIGN_TOL);
            let verdict = if samples.is_empty() { Verdict::Inconclusive } else { pass_if(lo >= -tol) };
            let result = json!({ "samples": samples.len(), "min": lo, "max": hi, "degenerate": degenerate.len(), "tol": tol });
            Ok((verdict, result, vec![table]))
        }
        CheckOp::Solve => {
            let s = ctx.solved()?;
            let primal = s.primal();
            let dual = s.dual.objective(&s.mu_plus, &s.mu_minus);
            let gap = (primal - dual).abs();
            let slackness = s.dual.slackness_residual(&s.cost, &s.plan);
            let min_slack = s.dual.min_slack(&s.cost);
            let marginal_error = s.plan.marginal_error(&s.mu_plus, &s.mu_minus);
            let tol = p.tol.unwrap_or(DUALITY_TOL);
            let ok = gap <= tol * (1.0 + primal.abs()) && slackness <= tol && min_slack >= -tol;
            let decomposition = decompose(s, p.prefer_graph_below);
            let result = json!({
                "n_source": s.mu_plus.len(),
                "n_target": s.mu_minus.len(),
                "source_digest": s.mu_plus.digest(),
                "target_digest": s.mu_minus.digest(),
                "primal": primal,
                "dual": dual,
                "duality_gap": gap,
                "slackness_residual": slackness,
                "min_slack": min_slack,
                "marginal_error": marginal_error,
                "entries": s.plan.entries.len(),
                "stats": s.stats,
            });
            Ok((pass_if(ok), result, vec![plan_table(s, &decomposition)]))
        }
        CheckOp::Certify => {
            let s = ctx.solved()?;
            let k = p.k.unwrap_or(DEFAULT_CCM_K);
            let mut opts = CcmOptions::new(k, p.mode.unwrap_or(CcmMode::Auto));
            opts.seed = ctx.scenario.seed;
            let cert = check_ccm_with(c, &s.support(), &opts)?;
            Ok((pass_if(cert.is_certified()), to_value(&cert), Vec::new()))
        }
        CheckOp::Decompose => {
            let s = ctx.solved()?;
            let d = decompose(s, p.prefer_graph_below);
            let extreme = |part: Part, pick: fn(f64, f64) -> f64, init: f64| {
                d.entries(&s.plan, part).map(|e| s.c_at(e.i, e.j)).fold(init, pick)
            };
            let result = json!({
                "prefer_graph_below": p.prefer_graph_below,
                "graph_mass": d.graph_mass,
                "antigraph_mass": d.antigraph_mass,
                "residual_mass": d.residual_mass,
                "residual_fraction": d.residual_fraction,
                "graph_entries": d.entries(&s.plan, Part::Graph).count(),
                "antigraph_entries": d.entries(&s.plan, Part::Antigraph).count(),
                "graph_max_cost": extreme(Part::Graph, f64::max, f64::NEG_INFINITY),
                "antigraph_min_cost": extreme(Part::Antigraph, f64::min, f64::INFINITY),
            });
            Ok((pass_if(d.residual_fraction < p.tol.unwrap_or(RESIDUAL_TOL)), result, vec![plan_table(s, &d)]))
        }
        CheckOp::Spacelike => {
            let s = ctx.solved()?;
            let r = spacelike_support_check(c, &s.support(), p.radius.unwrap_or(f64::INFINITY));
            Ok((pass_if(r.passes(p.tol.unwrap_or(SPACELIKE_TOL))), to_value(&r), Vec::new()))
        }
        CheckOp::MongeMap => {
            let s = ctx.solved()?;
            let m = extract_monge_map(&s.plan, p.tol.unwrap_or(MONGE_TOL));
            Ok((pass_if(m.assignment.is_some()), to_value(&m), Vec::new()))
        }
        CheckOp::Monotone => {
            let s = ctx.solved()?;
            let q = monotone_rearrangement_1d(&s.mu_plus, &s.mu_minus)?;
            let diff = plan_difference(&s.plan, &q);
            Ok((pass_if(diff <= p.tol.unwrap_or(MONOTONE_TOL)), json!({ "max_entry_difference": diff, "quantile_entries": q.entries.len() }), Vec::new()))
        }
    }
}

fn base_point(c: &CostFunction, spec: &CheckSpec) -> Result<BasePoint> {
    let (dx, dy) = default_base(c);
    let x = spec.params.base_x.clone().unwrap_or(dx);
    let y = spec.params.base_y.clone().unwrap_or(dy);
    BasePoint::checked(c, &x, &y)
}

fn coord_header(dx: usize, dy: usize) -> Vec<String> {
    (1..=dx).map(|k| format!("x{k}")).chain((1..=dy).map(|k| format!("y{k}"))).collect()
}

fn signature_map(ctx: &Ctx, spec: &CheckSpec) -> Outcome {
    let c = &ctx.cost;
    let tol = spec.params.tol.unwrap_or_else(|| default_rank_tol(c.derivatives));
    let xs = ctx.grid.x_points(c);
    let ys = ctx.grid.y_points(c);
    let pairs: Vec<(&Vec<f64>, &Vec<f64>)> = xs.iter().flat_map(|x| ys.iter().map(move |y| (x, y))).collect();
    let sigs: Vec<Option<crate::geometry::Signature>> = pairs
        .par_iter()
        .map(|(x, y)| {
            if c.is_excluded(x, y) {
                return None;
            }
            hessian_h(c, &BasePoint::new(x, y)).ok().map(|h| signature(&h, tol))
        })
        .collect();
    let mut header = coord_header(c.dim_x, c.dim_y);
    header.extend(["k_plus", "k_zero", "k_minus", "rank"].map(String::from));
    let mut table = Table::new("signature_map", header);
    let mut inconsistent = 0usize;
    let mut skipped = 0usize;
    let mut ranks = std::collections::BTreeMap::<usize, usize>::new();
    for ((x, y), sig) in pairs.iter().zip(&sigs) {
        let Some(sig) = sig else {
            skipped += 1;
            continue;
        };
        if !sig.is_consistent(c.dim_x, c.dim_y) {
            inconsistent += 1;
        }
        *ranks.entry(sig.rank).or_default() += 1;
        let mut row: Vec<String> = x.iter().chain(y.iter()).map(|v| format!("{v:?}")).collect();
        row.extend([sig.k_plus, sig.k_zero, sig.k_minus, sig.rank].map(|v| v.to_string()));
        table.rows.push(row);
    }
    let result = json!({ "points": pairs.len(), "skipped": skipped, "inconsistent": inconsistent, "rank_counts": ranks, "tol": tol });
    Ok((pass_if(inconsistent == 0), result, vec![table]))
}

fn decompose(s: &Solved, prefer_graph_below: Option<f64>) -> Decomposition {
    match prefer_graph_below {
        Some(t) => graph_antigraph_decompose_by(&s.plan, |e| if s.c_at(e.i, e.j) < t { Part::Graph } else { Part::Antigraph }),
        None => graph_antigraph_decompose(&s.plan),
    }
}

fn plan_table(s: &Solved, d: &Decomposition) -> Table {
    let mut t = Table::new("plan", ["i", "j", "mass", "c_value", "graph_or_antigraph"].map(String::from).to_vec());
    for (e, part) in s.plan.entries.iter().zip(&d.labels) {
        let label = match part {
            Part::Graph => "graph",
            Part::Antigraph => "antigraph",
            Part::Residual => "residual",
        };
        t.rows.push(vec![e.i.to_string(), e.j.to_string(), format!("{:?}", e.mass), format!("{:?}", s.c_at(e.i, e.j)), label.to_string()]);
    }
    t
}

/// Largest per-entry mass difference between two plans on the same atoms.
pub(crate) fn plan_difference(a: &TransportPlan, b: &TransportPlan) -> f64 {
    let mut m = std::collections::BTreeMap::<(usize, usize), f64>::new();
    for e in &a.entries {
        *m.entry((e.i, e.j)).or_default() += e.mass;
    }
    for e in &b.entries {
        *m.entry((e.i, e.j)).or_default() -= e.mass;
    }
    m.values().fold(0.0, |acc, v| acc.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::CostSpec;
    use crate::scenario::{MeasurePair, MeasureSource};

    #[test]
    fn quadratic_conditions_pass() {
        let mut s = Scenario::new(CostSpec::named("quadratic", 1));
        s.grid.count = 9;
        s.checks = [CheckOp::A1, CheckOp::A2, CheckOp::A3, CheckOp::A4].map(|op| CheckSpec::expecting(op, Verdict::Pass)).to_vec();
        let r = run_scenario_with(&s, &RunOptions::default()).unwrap();
        assert!(r.all_met, "{}", r.to_json());
        assert_eq!(r.exit_code(), 0);
    }

    #[test]
    fn failures_and_errors_are_recorded() {
        let mut s = Scenario::new(CostSpec::named("circle_chord", 1));
        s.grid.count = 24;
        s.checks = vec![CheckSpec::expecting(CheckOp::A2, Verdict::Pass), CheckSpec::new(CheckOp::A2)];
        let r = run_scenario_with(&s, &RunOptions::default()).unwrap();
        assert_eq!(r.checks[0].verdict, Some(Verdict::Fail));
        assert!(!r.checks[0].met && r.checks[1].met);
        assert_eq!(r.exit_code(), 1);

        // an operation error is captured without aborting later checks
        let mut s = Scenario::new(CostSpec::named("quadratic", 1));
        s.checks = vec![
            CheckSpec { params: crate::scenario::CheckParams { base_x: Some(vec![5.0]), ..Default::default() }, ..CheckSpec::new(CheckOp::Signature) },
            CheckSpec::expecting(CheckOp::Signature, Verdict::Pass),
        ];
        let r = run_scenario_with(&s, &RunOptions::default()).unwrap();
        assert!(r.checks[0].error.is_some() && r.checks[1].met);
    }

    #[test]
    fn transport_checks_and_determinism() {
        let mut s = Scenario::new(CostSpec::named("quadratic", 1));
        s.seed = 11;
        s.measures = Some(MeasurePair { source: MeasureSource::Random { count: 12 }, target: MeasureSource::Random { count: 9 } });
        s.checks = [CheckOp::Solve, CheckOp::Certify, CheckOp::Spacelike, CheckOp::Monotone, CheckOp::Decompose]
            .map(|op| CheckSpec::expecting(op, Verdict::Pass))
            .to_vec();
        let a = run_scenario_with(&s, &RunOptions { jobs: Some(1) }).unwrap();
        let b = run_scenario_with(&s, &RunOptions { jobs: Some(4) }).unwrap();
        assert!(a.all_met, "{}", a.to_json());
        assert_eq!(a.numeric_json(), b.numeric_json());
    }
}
