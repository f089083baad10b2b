//! Acceptance suite: one line per criterion, non-zero exit if any fails.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crossdiff::cost::{CostFunction, CostSpec, Domain};
use crossdiff::geometry::{default_rank_tol, hessian_h, loglog_slope, signature, taylor_residual, BasePoint};
use crossdiff::mtw::{check_a1, geodesic_integrate, mtw_sectional, GeodesicState, GridSpec, Verdict};
use crossdiff::scenario::{run_scenario_with, CheckOp, CheckParams, CheckSpec, MeasurePair, MeasureSource, RunOptions, Scenario};
use crossdiff::transport::{
    check_ccm, cost_matrix, graph_antigraph_decompose_by, kantorovich_cost, monotone_rearrangement_1d, northwest_corner_plan, solve_dual,
    solve_primal, spacelike_support_check, CcmMode, DiscreteMeasure, Part, TransportPlan,
};

const DUALITY_TOL: f64 = 1e-9;
const SLACKNESS_TOL: f64 = 1e-9;
const MONOTONE_TOL: f64 = 1e-10;
const ASSIGNMENT_TOL: f64 = 1e-12;
const VERTEX_SPREAD_TOL: f64 = 1e-10;
const SPACELIKE_TOL: f64 = 1e-8;
const RESIDUAL_TOL: f64 = 1e-9;
const MTW_NULL_TOL: f64 = 1e-6;
const GEODESIC_TOL: f64 = 1e-6;
const TAYLOR_MIN_SLOPE: f64 = 2.5;
const TAYLOR_STEPS: [f64; 7] = [1e-1, 5e-2, 2e-2, 1e-2, 5e-3, 2e-3, 1e-3];

struct Outcome {
    ok: bool,
    detail: String,
}

fn outcome(ok: bool, detail: impl Into<String>) -> Outcome {
    Outcome { ok, detail: detail.into() }
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal(r: &mut ChaCha8Rng) -> f64 {
    r.sample(StandardNormal)
}

fn cost(name: &str, dim: usize) -> CostFunction {
    CostSpec::named(name, dim).build().unwrap()
}

fn uniform_in(r: &mut ChaCha8Rng, lo: f64, hi: f64, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| r.random_range(lo..hi)).collect()
}

fn random_measure(r: &mut ChaCha8Rng, count: usize, lo: f64, hi: f64, dim: usize, uniform: bool) -> DiscreteMeasure {
    let atoms = (0..count).map(|_| uniform_in(r, lo, hi, dim)).collect();
    let weights = (0..count).map(|_| if uniform { 1.0 } else { r.random_range(0.1..1.0) }).collect();
    DiscreteMeasure::new(atoms, weights).unwrap()
}

/// Costs whose optimal supports are spacelike for every pair of support
/// points: quadratic/bilinear in any dimension, and 1-D costs with
/// `c_xy <= 0` between the sampled supports.
fn spacelike_instance(r: &mut ChaCha8Rng, kind: usize, m: usize, n: usize, uniform: bool) -> (CostFunction, DiscreteMeasure, DiscreteMeasure) {
    match kind % 8 {
        0 | 1 => {
            let dim = r.random_range(1..=3);
            let c = cost(if kind % 8 == 0 { "quadratic" } else { "bilinear" }, dim);
            (c, random_measure(r, m, -1.0, 1.0, dim, uniform), random_measure(r, n, -1.0, 1.0, dim, uniform))
        }
        2 => (cost("euclidean_norm", 1), random_measure(r, m, 0.0, 1.0, 1, uniform), random_measure(r, n, 2.0, 3.0, 1, uniform)),
        3 | 4 => {
            let mut spec = CostSpec::named("power", 1);
            spec.p = Some(if kind % 8 == 3 { 1.5 } else { 3.0 });
            (spec.build().unwrap(), random_measure(r, m, 0.0, 1.0, 1, uniform), random_measure(r, n, 2.0, 3.0, 1, uniform))
        }
        5 => (cost("log", 1), random_measure(r, m, -1.0, 0.0, 1, uniform), random_measure(r, n, 1.0, 2.0, 1, uniform)),
        6 => (cost("circle_chord", 1), random_measure(r, m, 0.0, 1.2, 1, uniform), random_measure(r, n, 0.0, 1.2, 1, uniform)),
        _ => (cost("circle_geodesic", 1), random_measure(r, m, 0.0, 1.2, 1, uniform), random_measure(r, n, 0.0, 1.2, 1, uniform)),
    }
}

type Support = (CostFunction, Vec<(Vec<f64>, Vec<f64>)>);

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut r = rng(1);
    let mut failures = 0;
    for _ in 0..200 {
        let nx = r.random_range(1..=5);
        let ny = r.random_range(1..=5);
        let rank = r.random_range(0..=nx.min(ny));
        let qx = DMatrix::from_fn(nx, nx, |_, _| normal(&mut r)).qr().q();
        let qy = DMatrix::from_fn(ny, ny, |_, _| normal(&mut r)).qr().q();
        let s = DMatrix::from_fn(nx, ny, |i, j| if i == j && i < rank { r.random_range(0.5..2.0) } else { 0.0 });
        let a = &qx * s * qy.transpose();
        let mut spec = CostSpec::named("synthetic", nx);
        spec.a = Some((0..nx).map(|i| (0..ny).map(|j| a[(i, j)]).collect()).collect());
        spec.fx = Some((0..nx).map(|_| normal(&mut r)).collect());
        spec.gy = Some((0..ny).map(|_| normal(&mut r)).collect());
        let c = spec.build().unwrap();
        let base = BasePoint::new(&uniform_in(&mut r, -0.9, 0.9, nx), &uniform_in(&mut r, -0.9, 0.9, ny));
        let sig = signature(&hessian_h(&c, &base).unwrap(), default_rank_tol(c.derivatives));
        if (sig.k_plus, sig.k_zero, sig.k_minus) != (rank, nx + ny - 2 * rank, rank) {
            failures += 1;
        }
    }
    let t = start.elapsed();
    outcome(failures == 0 && within(t, 10.0), format!("200 synthetic costs, {failures} wrong signatures, {:.2}s", t.as_secs_f64()))
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let c = cost("circle_chord", 1);
    let tol = default_rank_tol(c.derivatives);
    let mut r = rng(2);
    let (mut generic, mut generic_bad, mut probes, mut probe_bad) = (0, 0, 0, 0);
    for k in 0..10_000 {
        let theta = r.random_range(0.0..TAU);
        let phi = if k % 10 == 0 {
            // degenerate probe: θ - φ = ±π/2
            let sign = if k % 20 == 0 { 1.0 } else { -1.0 };
            (theta - sign * FRAC_PI_2).rem_euclid(TAU)
        } else {
            r.random_range(0.0..TAU)
        };
        let value = c.evaluate(&[theta], &[phi]).unwrap();
        let rank = signature(&hessian_h(&c, &BasePoint::new(&[theta], &[phi])).unwrap(), tol).rank;
        if (value - 1.0).abs() > 1e-3 {
            generic += 1;
            generic_bad += usize::from(rank != 2);
        } else if (value - 1.0).abs() <= 1e-8 {
            probes += 1;
            probe_bad += usize::from(rank != 0);
        }
    }
    let t = start.elapsed();
    outcome(
        generic_bad == 0 && probe_bad == 0 && probes > 0 && within(t, 5.0),
        format!("{generic} generic pairs ({generic_bad} not rank 2), {probes} probes ({probe_bad} not rank 0), {:.2}s", t.as_secs_f64()),
    )
}

fn criterion_3() -> Outcome {
    let mut r = rng(3);
    let mut worst = f64::INFINITY;
    for k in 0..20 {
        let n = 1 + k % 3;
        let c = cost("log", n);
        let mut x0 = uniform_in(&mut r, -0.5, 0.5, n);
        let mut y0 = uniform_in(&mut r, -0.5, 0.5, n);
        x0[0] = r.random_range(-0.8..-0.2);
        y0[0] = r.random_range(1.2..1.8);
        let mut dir: Vec<f64> = (0..2 * n).map(|_| normal(&mut r)).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        dir.iter_mut().for_each(|v| *v /= norm);
        let res = taylor_residual(&c, &BasePoint::new(&x0, &y0), &dir, &TAYLOR_STEPS).unwrap();
        worst = worst.min(loglog_slope(&TAYLOR_STEPS, &res).unwrap_or(f64::NEG_INFINITY));
    }
    outcome(worst >= TAYLOR_MIN_SLOPE, format!("20 log-cost directions, smallest slope {worst:.3}"))
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut r = rng(4);
    let mut worst: f64 = 0.0;
    for k in 0..1000 {
        let n = r.random_range(1..=4);
        let c = cost(if k % 2 == 0 { "quadratic" } else { "bilinear" }, n);
        let base = BasePoint::new(&uniform_in(&mut r, -0.9, 0.9, n), &uniform_in(&mut r, -0.9, 0.9, n));
        let p: Vec<f64> = (0..n).map(|_| normal(&mut r)).collect();
        let q: Vec<f64> = (0..n).map(|_| normal(&mut r)).collect();
        worst = worst.max(mtw_sectional(&c, &base, &p, &q).unwrap().abs());
    }
    let t = start.elapsed();
    outcome(worst < MTW_NULL_TOL && within(t, 5.0), format!("1000 samples, max |T| = {worst:e}, {:.2}s", t.as_secs_f64()))
}

fn criterion_5(supports: &mut Vec<Support>) -> Outcome {
    let start = Instant::now();
    let mut r = rng(5);
    let (mut gap_worst, mut slack_worst, mut infeasible_worst): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let mut largest = 0;
    for k in 0..200 {
        let m = r.random_range(2..=200);
        let n = r.random_range(2..=200);
        let (c, a, b) = spacelike_instance(&mut r, k, m, n, false);
        let plan = solve_primal(&c, &a, &b).unwrap();
        let primal = kantorovich_cost(&c, &plan, &a, &b).unwrap();
        let dual = solve_dual(&c, &a, &b, &plan).unwrap();
        let cm = cost_matrix(&c, &a, &b).unwrap();
        gap_worst = gap_worst.max((primal - dual.objective(&a, &b)).abs() / (1.0 + primal.abs()));
        slack_worst = slack_worst.max(dual.slackness_residual(&cm, &plan));
        infeasible_worst = infeasible_worst.max(-dual.min_slack(&cm));
        largest = largest.max(a.len() * b.len());
        supports.push((c.clone(), plan.support(&a, &b)));
    }
    let t = start.elapsed();
    outcome(
        gap_worst <= DUALITY_TOL && slack_worst < SLACKNESS_TOL && infeasible_worst <= SLACKNESS_TOL && within(t, 60.0),
        format!(
            "200 instances (largest {largest} cells): rel gap {gap_worst:e}, slackness {slack_worst:e}, dual infeasibility {infeasible_worst:e}, {:.2}s",
            t.as_secs_f64()
        ),
    )
}

/// Sorted-order quantile coupling computed directly from cumulative sums.
fn quantile_coupling(a: &DiscreteMeasure, b: &DiscreteMeasure) -> BTreeMap<(usize, usize), f64> {
    let order = |m: &DiscreteMeasure| {
        let mut idx: Vec<usize> = (0..m.len()).collect();
        idx.sort_by(|&i, &j| m.atoms[i][0].total_cmp(&m.atoms[j][0]));
        idx
    };
    let (oa, ob) = (order(a), order(b));
    let (mut i, mut j) = (0, 0);
    let (mut ca, mut cb) = (a.weights[oa[0]], b.weights[ob[0]]);
    let mut lo = 0.0;
    let mut out = BTreeMap::new();
    loop {
        let hi = ca.min(cb);
        if hi > lo {
            *out.entry((oa[i], ob[j])).or_insert(0.0) += hi - lo;
        }
        lo = hi;
        if ca <= cb {
            i += 1;
            if i == oa.len() {
                break;
            }
            ca += a.weights[oa[i]];
        } else {
            j += 1;
            if j == ob.len() {
                break;
            }
            cb += b.weights[ob[j]];
        }
    }
    out
}

fn dense(plan: &TransportPlan) -> BTreeMap<(usize, usize), f64> {
    plan.entries.iter().map(|e| ((e.i, e.j), e.mass)).collect()
}

fn discrepancy(p: &BTreeMap<(usize, usize), f64>, q: &BTreeMap<(usize, usize), f64>) -> f64 {
    p.keys()
        .chain(q.keys())
        .map(|k| (p.get(k).copied().unwrap_or(0.0) - q.get(k).copied().unwrap_or(0.0)).abs())
        .fold(0.0, f64::max)
}

fn criterion_6(supports: &mut Vec<Support>) -> Outcome {
    let mut r = rng(6);
    let c = cost("quadratic", 1);
    let (mut worst, mut worst_library): (f64, f64) = (0.0, 0.0);
    for _ in 0..100 {
        let m = r.random_range(1..=100);
        let n = r.random_range(1..=100);
        let a = random_measure(&mut r, m, -1.0, 1.0, 1, false);
        let b = random_measure(&mut r, n, -1.0, 1.0, 1, false);
        let plan = solve_primal(&c, &a, &b).unwrap();
        let solved = dense(&plan);
        worst = worst.max(discrepancy(&solved, &quantile_coupling(&a, &b)));
        worst_library = worst_library.max(discrepancy(&solved, &dense(&monotone_rearrangement_1d(&a, &b).unwrap())));
        supports.push((c.clone(), plan.support(&a, &b)));
    }
    outcome(
        worst < MONOTONE_TOL && worst_library < MONOTONE_TOL,
        format!("100 instances, max mass discrepancy {worst:e} (library rearrangement {worst_library:e})"),
    )
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for k in 0..=p.len() {
            let mut q = p.clone();
            q.insert(k, n - 1);
            out.push(q);
        }
    }
    out
}

fn criterion_7(supports: &mut Vec<Support>) -> Outcome {
    let mut r = rng(7);
    let perms = permutations(8);
    let mut worst: f64 = 0.0;
    for k in 0..50 {
        let (c, a, b) = spacelike_instance(&mut r, k, 8, 8, true);
        assert_eq!((a.len(), b.len()), (8, 8));
        let plan = solve_primal(&c, &a, &b).unwrap();
        let solved = kantorovich_cost(&c, &plan, &a, &b).unwrap();
        let brute = perms
            .iter()
            .map(|p| p.iter().enumerate().map(|(i, &j)| c.evaluate(&a.atoms[i], &b.atoms[j]).unwrap()).sum::<f64>() / 8.0)
            .fold(f64::INFINITY, f64::min);
        worst = worst.max((solved - brute).abs());
        supports.push((c, plan.support(&a, &b)));
    }
    outcome(worst <= ASSIGNMENT_TOL, format!("50 8x8 assignments, max |solver - brute force| = {worst:e}"))
}

fn shuffled(r: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let mut v: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        v.swap(i, r.random_range(0..=i));
    }
    v
}

fn criterion_8() -> Outcome {
    let mut r = rng(8);
    let c = cost("euclidean_norm", 1);
    let a = random_measure(&mut r, 12, 0.0, 1.0, 1, false);
    let b = random_measure(&mut r, 9, 2.0, 3.0, 1, false);
    let costs: Vec<f64> = (0..20)
        .map(|_| {
            let plan = northwest_corner_plan(&a, &b, &shuffled(&mut r, a.len()), &shuffled(&mut r, b.len())).unwrap();
            kantorovich_cost(&c, &plan, &a, &b).unwrap()
        })
        .collect();
    let spread = costs.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v)) - costs.iter().fold(f64::INFINITY, |m, v| m.min(*v));
    outcome(spread < VERTEX_SPREAD_TOL, format!("20 vertices, cost spread {spread:e}"))
}

fn oracle_gap(c: &CostFunction, support: &[(Vec<f64>, Vec<f64>)], cycle: &[usize]) -> f64 {
    (0..cycle.len())
        .map(|t| {
            let (a, b) = (cycle[t], cycle[(t + 1) % cycle.len()]);
            c.evaluate(&support[a].0, &support[b].1).unwrap() - c.evaluate(&support[a].0, &support[a].1).unwrap()
        })
        .sum()
}

fn criterion_9() -> Outcome {
    let mut r = rng(9);
    let names = ["quadratic", "bilinear", "euclidean_norm", "log", "circle_chord"];
    let mut uncertified = 0;
    for k in 0..50 {
        let m = r.random_range(2..=12);
        let n = r.random_range(2..=12);
        let (c, a, b) = instance_any(&mut r, names[k % names.len()], m, n, false);
        let plan = solve_primal(&c, &a, &b).unwrap();
        let cert = check_ccm(&c, &plan.support(&a, &b), 5, CcmMode::Exact).unwrap();
        uncertified += usize::from(!cert.is_certified());
    }
    let (mut missed, mut bad_cycle, mut redrawn) = (0, 0, 0);
    for k in 0..50 {
        // redraw until the perturbation is strictly costlier than the optimum
        let (c, a, b, perturbed) = loop {
            let n = r.random_range(3..=12);
            let (c, a, b) = instance_any(&mut r, names[k % names.len()], n, n, true);
            let plan = solve_primal(&c, &a, &b).unwrap();
            let optimum = kantorovich_cost(&c, &plan, &a, &b).unwrap();
            let mut assignment = vec![0; n];
            for e in &plan.entries {
                assignment[e.i] = e.j;
            }
            let rot = shuffled(&mut r, n);
            if k % 2 == 0 {
                assignment.swap(rot[0], rot[1]);
            } else {
                let t = assignment[rot[0]];
                assignment[rot[0]] = assignment[rot[1]];
                assignment[rot[1]] = assignment[rot[2]];
                assignment[rot[2]] = t;
            }
            let perturbed = TransportPlan::from_assignment(&assignment, &a, n).unwrap();
            if kantorovich_cost(&c, &perturbed, &a, &b).unwrap() > optimum + 1e-9 {
                break (c, a, b, perturbed);
            }
            redrawn += 1;
        };
        let support = perturbed.support(&a, &b);
        let cert = check_ccm(&c, &support, 5, CcmMode::Exact).unwrap();
        match &cert.violation {
            Some(v) if !cert.is_certified() => {
                let g = oracle_gap(&c, &support, &v.cycle);
                if !(g < 0.0 && (g - v.gap).abs() <= 1e-12 * (1.0 + g.abs())) {
                    bad_cycle += 1;
                }
            }
            _ => missed += 1,
        }
    }
    outcome(
        uncertified == 0 && missed == 0 && bad_cycle == 0,
        format!("50 optimal plans ({uncertified} not certified), 50 perturbed ({missed} missed, {bad_cycle} wrong cycles, {redrawn} cost-neutral redrawn)"),
    )
}

fn instance_any(r: &mut ChaCha8Rng, name: &str, m: usize, n: usize, uniform: bool) -> (CostFunction, DiscreteMeasure, DiscreteMeasure) {
    let dim = if matches!(name, "circle_chord") { 1 } else { r.random_range(1..=2) };
    let c = cost(name, dim);
    let draw = |r: &mut ChaCha8Rng, count: usize, domain: &Domain| {
        let (lo, hi) = domain.bounds(dim);
        let atoms = (0..count).map(|_| lo.iter().zip(&hi).map(|(l, h)| r.random_range(*l..*h)).collect()).collect();
        let weights = (0..count).map(|_| if uniform { 1.0 } else { r.random_range(0.1..1.0) }).collect();
        DiscreteMeasure::new(atoms, weights).unwrap()
    };
    let a = draw(r, m, &c.domain_x);
    let b = draw(r, n, &c.domain_y);
    (c, a, b)
}

fn criterion_10(supports: &[Support]) -> Outcome {
    let mut worst = f64::INFINITY;
    let mut failing = 0;
    for (c, s) in supports {
        let rep = spacelike_support_check(c, s, f64::INFINITY);
        worst = worst.min(rep.min_normalized);
        failing += usize::from(!rep.passes(SPACELIKE_TOL) || rep.skipped > 0);
    }
    outcome(failing == 0, format!("{} supports, {failing} failing, min normalised h(V,V) {worst:e}", supports.len()))
}

fn criterion_11() -> Outcome {
    let start = Instant::now();
    let c = cost("circle_chord", 1);
    let a = DiscreteMeasure::circle_bump(0.0, 8.0, 40, 0.5).unwrap();
    let b = DiscreteMeasure::circle_bump(PI, 8.0, 40, 0.5).unwrap();
    let plan = solve_primal(&c, &a, &b).unwrap();
    let value = |i: usize, j: usize| c.evaluate(&a.atoms[i], &b.atoms[j]).unwrap();
    let d = graph_antigraph_decompose_by(&plan, |e| if value(e.i, e.j) < 1.0 { Part::Graph } else { Part::Antigraph });
    let graph_ok = d.entries(&plan, Part::Graph).all(|e| value(e.i, e.j) < 1.0);
    let anti_ok = d.entries(&plan, Part::Antigraph).all(|e| value(e.i, e.j) > 1.0);
    let t = start.elapsed();
    outcome(
        d.residual_mass < RESIDUAL_TOL && graph_ok && anti_ok && within(t, 5.0),
        format!(
            "residual {:e}, graph mass {:.4} (c < 1: {graph_ok}), antigraph mass {:.4} (c > 1: {anti_ok}), {:.2}s",
            d.residual_mass,
            d.graph_mass,
            d.antigraph_mass,
            t.as_secs_f64()
        ),
    )
}

fn criterion_12() -> Outcome {
    let mut r = rng(12);
    let (mut chord, mut energy, mut fiber): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for k in 0..20 {
        let n = 1 + k % 3;
        let c = cost(if k % 2 == 0 { "quadratic" } else { "bilinear" }, n);
        let z = uniform_in(&mut r, -0.4, 0.4, 2 * n);
        let v = uniform_in(&mut r, -0.5, 0.5, 2 * n);
        let start = GeodesicState { position: z.clone(), velocity: v.clone(), time: 0.0 };
        let path = geodesic_integrate(&c, &start, 1.0, 100).unwrap();
        for s in &path {
            for d in 0..2 * n {
                chord = chord.max((s.position[d] - (z[d] + s.time * v[d])).abs());
            }
        }
        let e0 = start.energy(&c).unwrap();
        let e1 = path.last().unwrap().energy(&c).unwrap();
        energy = energy.max((e1 - e0).abs() / e0.abs());
        let mut w = v.clone();
        w[..n].iter_mut().for_each(|t| *t = 0.0);
        let path = geodesic_integrate(&c, &GeodesicState { position: z.clone(), velocity: w, time: 0.0 }, 1.0, 100).unwrap();
        for s in &path {
            for d in 0..n {
                fiber = fiber.max((s.position[d] - z[d]).abs());
            }
        }
    }
    outcome(
        chord < GEODESIC_TOL && energy < GEODESIC_TOL && fiber < GEODESIC_TOL,
        format!("20 geodesics: chord deviation {chord:e}, relative energy drift {energy:e}, fiber drift {fiber:e}"),
    )
}

fn criterion_13() -> Outcome {
    let start = Instant::now();
    let mut passed = Vec::new();
    for n in 1..=2 {
        let c = cost("quadratic", n);
        passed.push(check_a1(&c, &GridSpec::uniform(&c, 20, 8)).unwrap().verdict == Verdict::Pass);
    }
    let circle = cost("circle_chord", 1);
    let rep = check_a1(&circle, &GridSpec::uniform(&circle, 20, 8)).unwrap();
    let symmetric = |w: &crossdiff::mtw::Witness| {
        let (x, y1, y2) = (w.x[0], w.y[0], w.vectors[0][0]);
        let distinct = (y1 - y2).rem_euclid(TAU).min((y2 - y1).rem_euclid(TAU)) > 1e-9;
        let reflected = (2.0 * x - y1 - y2 - PI).rem_euclid(TAU);
        distinct && reflected.min(TAU - reflected) < 1e-9 && ((x - y1).sin() - (x - y2).sin()).abs() < 1e-8
    };
    let circle_ok = rep.verdict == Verdict::Fail && !rep.witnesses.is_empty() && rep.witnesses.iter().all(symmetric);
    let t = start.elapsed();
    outcome(
        passed.iter().all(|p| *p) && circle_ok && within(t, 5.0),
        format!(
            "quadratic 20^n for n = 1, 2: {passed:?}; circle {:?} with {} sine-symmetric witnesses; {:.2}s",
            rep.verdict,
            rep.witnesses.len(),
            t.as_secs_f64()
        ),
    )
}

fn criterion_14() -> Outcome {
    let mut scenarios = Vec::new();
    let mut s = Scenario::new(CostSpec::named("quadratic", 1));
    s.seed = 14;
    s.measures = Some(MeasurePair { source: MeasureSource::Random { count: 30 }, target: MeasureSource::Random { count: 25 } });
    s.checks = [
        CheckOp::Signature,
        CheckOp::Taylor,
        CheckOp::SignatureMap,
        CheckOp::A0,
        CheckOp::A1,
        CheckOp::A2,
        CheckOp::A3,
        CheckOp::A4,
        CheckOp::MtwScan,
        CheckOp::Solve,
        CheckOp::Certify,
        CheckOp::Decompose,
        CheckOp::Spacelike,
        CheckOp::MongeMap,
        CheckOp::Monotone,
    ]
    .into_iter()
    .map(CheckSpec::new)
    .collect();
    scenarios.push(s);
    let mut s = Scenario::new(CostSpec::named("circle_chord", 1));
    s.measures = Some(MeasurePair {
        source: MeasureSource::Bump { center: vec![0.0], sharpness: 8.0, count: 40 },
        target: MeasureSource::Bump { center: vec![PI], sharpness: 8.0, count: 40 },
    });
    s.checks = vec![
        CheckSpec::new(CheckOp::A1),
        CheckSpec::new(CheckOp::Solve),
        CheckSpec { params: CheckParams { prefer_graph_below: Some(1.0), ..Default::default() }, ..CheckSpec::new(CheckOp::Decompose) },
        CheckSpec::new(CheckOp::Certify),
    ];
    scenarios.push(s);
    let mut identical = true;
    for s in &scenarios {
        let runs: Vec<String> = [None, Some(1), Some(4), Some(4)]
            .into_iter()
            .map(|jobs| run_scenario_with(s, &RunOptions { jobs }).unwrap().numeric_json())
            .collect();
        identical &= runs.windows(2).all(|w| w[0] == w[1]);
    }
    outcome(identical, format!("{} scenarios, 4 runs each (default, --jobs 1, --jobs 4 twice): identical = {identical}", scenarios.len()))
}

fn main() {
    let mut supports = Vec::new();
    let results = vec![
        ("signature law", criterion_1()),
        ("degenerate-rank locus", criterion_2()),
        ("taylor order", criterion_3()),
        ("mtw null tensor", criterion_4()),
        ("strong duality", criterion_5(&mut supports)),
        ("monotone coupling", criterion_6(&mut supports)),
        ("assignment equality", criterion_7(&mut supports)),
        ("constant-cost degeneracy", criterion_8()),
        ("optimality certification", criterion_9()),
        ("spacelike supports", criterion_10(&supports)),
        ("graph/antigraph split", criterion_11()),
        ("geodesic sanity", criterion_12()),
        ("twist detection", criterion_13()),
        ("determinism", criterion_14()),
    ];
    let mut failed = 0;
    for (k, (name, o)) in results.iter().enumerate() {
        println!("criterion {:>2} {:<26} {}  {}", k + 1, name, if o.ok { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.ok);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
