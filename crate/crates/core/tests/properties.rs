use proptest::prelude::*;

use crossdiff::cost::{fd_validate, CostFunction, CostSpec, FdScheme};
use crossdiff::geometry::{cross_difference, default_rank_tol, hessian_h, signature, BasePoint};
use crossdiff::mtw::mtw_sectional;
use crossdiff::transport::{check_ccm, solve_cost_matrix, solve_dual, solve_primal, CcmMode, DiscreteMeasure};

fn synthetic(a: Vec<Vec<f64>>, fx: Vec<f64>, gy: Vec<f64>) -> CostFunction {
    let mut spec = CostSpec::named("synthetic", a.len());
    spec.a = Some(a);
    spec.fx = Some(fx);
    spec.gy = Some(gy);
    spec.build().unwrap()
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-2.0..2.0f64, cols), rows)
}

fn atoms(dim: usize, lo: f64, hi: f64, len: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<(Vec<f64>, f64)>> {
    prop::collection::vec((prop::collection::vec(lo..hi, dim), 0.1..1.0f64), len)
}

fn measure(pts: Vec<(Vec<f64>, f64)>) -> DiscreteMeasure {
    let (a, w): (Vec<_>, Vec<_>) = pts.into_iter().unzip();
    DiscreteMeasure::new(a, w).unwrap()
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

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn signature_is_balanced(nx in 1usize..5, ny in 1usize..5, seed in any::<u64>()) {
        let mut s = seed;
        let mut next = || { s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407); ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0 };
        let a: Vec<Vec<f64>> = (0..nx).map(|_| (0..ny).map(|_| next()).collect()).collect();
        let c = synthetic(a, vec![0.3; nx], vec![-0.2; ny]);
        let base = BasePoint::new(&vec![0.1; nx], &vec![-0.1; ny]);
        let sig = signature(&hessian_h(&c, &base).unwrap(), default_rank_tol(c.derivatives));
        prop_assert!(sig.is_consistent(nx, ny));
        prop_assert_eq!(sig.k_plus + sig.k_zero + sig.k_minus, nx + ny);
    }

    #[test]
    fn cross_difference_flips_sign_when_targets_swap(x in prop::collection::vec(-0.9..0.9f64, 2), y in prop::collection::vec(-0.9..0.9f64, 2),
                                                    x0 in prop::collection::vec(-0.9..0.9f64, 2), y0 in prop::collection::vec(-0.9..0.9f64, 2),
                                                    a in matrix(2, 2)) {
        let c = synthetic(a, vec![0.5, -0.4], vec![0.2, 0.7]);
        let d = cross_difference(&c, &x, &y, &BasePoint::new(&x0, &y0)).unwrap();
        let swapped = cross_difference(&c, &x, &y0, &BasePoint::new(&x0, &y)).unwrap();
        prop_assert!((d + swapped).abs() <= 1e-12 * (1.0 + d.abs()));
        prop_assert_eq!(cross_difference(&c, &x0, &y0, &BasePoint::new(&x0, &y0)).unwrap(), 0.0);
    }

    #[test]
    fn pseudo_metric_of_synthetic_cost_is_half_a(a in matrix(2, 3), x0 in prop::collection::vec(-0.9..0.9f64, 2), y0 in prop::collection::vec(-0.9..0.9f64, 3)) {
        let c = synthetic(a.clone(), vec![1.0, -1.0], vec![0.5, 0.5, 0.5]);
        let h = hessian_h(&c, &BasePoint::new(&x0, &y0)).unwrap();
        for i in 0..2 {
            for j in 0..3 {
                // c = -xᵀAy + ..., so the mixed block is -A and h carries +A/2
                prop_assert!((h.matrix[(i, 2 + j)] - 0.5 * a[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mtw_tensor_is_biquadratic(p in prop::collection::vec(-1.0..1.0f64, 2), q in prop::collection::vec(-1.0..1.0f64, 2),
                                 l in 0.2..3.0f64, m in 0.2..3.0f64) {
        let c = CostSpec::named("log", 2).build().unwrap();
        let base = BasePoint::new(&[-0.5, 0.1], &[1.4, -0.3]);
        let t = mtw_sectional(&c, &base, &p, &q).unwrap();
        let ps: Vec<f64> = p.iter().map(|v| l * v).collect();
        let qs: Vec<f64> = q.iter().map(|v| m * v).collect();
        let scaled = mtw_sectional(&c, &base, &ps, &qs).unwrap();
        prop_assert!((scaled - l * l * m * m * t).abs() <= 1e-9 * (1.0 + scaled.abs()));
    }

    #[test]
    fn solver_plans_are_optimal_by_duality(a in atoms(2, -1.0, 1.0, 1..=7), b in atoms(2, -1.0, 1.0, 1..=7)) {
        let c = CostSpec::named("quadratic", 2).build().unwrap();
        let (a, b) = (measure(a), measure(b));
        let plan = solve_primal(&c, &a, &b).unwrap();
        plan.check_marginals(&a, &b).unwrap();
        prop_assert!(plan.entries.len() < a.len() + b.len());
        let dual = solve_dual(&c, &a, &b, &plan).unwrap();
        let value = |i: usize, j: usize| c.evaluate(&a.atoms[i], &b.atoms[j]).unwrap();
        let primal: f64 = plan.entries.iter().map(|e| e.mass * value(e.i, e.j)).sum();
        let dual_obj: f64 = dual.u_plus.iter().zip(&a.weights).map(|(u, w)| u * w).sum::<f64>()
            + dual.u_minus.iter().zip(&b.weights).map(|(v, w)| v * w).sum::<f64>();
        prop_assert!((primal - dual_obj).abs() <= 1e-9 * (1.0 + primal.abs()));
        for i in 0..a.len() {
            for j in 0..b.len() {
                prop_assert!(dual.u_plus[i] + dual.u_minus[j] <= value(i, j) + 1e-9);
            }
        }
    }

    #[test]
    fn assignment_matches_brute_force(cost in prop::collection::vec(-5i32..=5, 25), n in 1usize..=5) {
        let cm: Vec<f64> = (0..n * n).map(|k| f64::from(cost[k])).collect();
        let w = vec![1.0 / n as f64; n];
        let (plan, _) = solve_cost_matrix(&cm, &w, &w).unwrap();
        let solved: f64 = plan.entries.iter().map(|e| e.mass * cm[e.i * n + e.j]).sum();
        let best = permutations(n).iter().map(|p| p.iter().enumerate().map(|(i, &j)| cm[i * n + j]).sum::<f64>()).fold(f64::INFINITY, f64::min) / n as f64;
        prop_assert!((solved - best).abs() < 1e-12);
    }

    #[test]
    fn optimal_supports_are_cyclically_monotone(a in atoms(1, 0.0, 1.0, 2..=6), b in atoms(1, 2.0, 3.0, 2..=6)) {
        let mut spec = CostSpec::named("power", 1);
        spec.p = Some(1.5);
        let c = spec.build().unwrap();
        let (a, b) = (measure(a), measure(b));
        let plan = solve_primal(&c, &a, &b).unwrap();
        prop_assert!(check_ccm(&c, &plan.support(&a, &b), 4, CcmMode::Exact).unwrap().is_certified());
    }
}

#[test]
fn closed_form_derivatives_agree_with_finite_differences() {
    let mut specs: Vec<CostSpec> = ["bilinear", "quadratic", "euclidean_norm", "log", "circle_chord", "circle_geodesic"]
        .iter()
        .flat_map(|n| [1, 2].map(|d| CostSpec::named(n, d)))
        .filter(|s| !s.name.starts_with("circle") || s.dim == Some(1))
        .collect();
    for p in [1.5, 3.0, 4.0] {
        let mut s = CostSpec::named("power", 2);
        s.p = Some(p);
        specs.push(s);
    }
    for spec in specs {
        let c = spec.build().unwrap();
        let v = fd_validate(&c, &FdScheme::default(), 6, 11);
        assert!(v.samples > 0, "{}: no usable samples", v.cost);
        for o in &v.orders {
            assert!(o.within_tolerance(), "{} order {}: {:?}", v.cost, o.order, o);
        }
    }
}
