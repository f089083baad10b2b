//! Discrete optimal transport: measures, plans, an exact solver, duals,
//! cycle certificates and support diagnostics.

mod ccm;
mod diagnostics;
mod measure;
mod plan;
mod simplex;

pub use ccm::{
    check_ccm, check_ccm_with, cycle_gap, CcmMode, CcmOptions, CertificateStatus, CycleCertificate, CycleViolation, CCM_GAP_TOL,
    EXACT_NODE_BUDGET, LOCAL_SEARCH_RESTARTS, LOCAL_SEARCH_SEED,
};
pub use diagnostics::{
    graph_antigraph_decompose, graph_antigraph_decompose_by, local_dimension_estimate, monotone_rearrangement_1d,
    rotated_lipschitz_check_1d, spacelike_support_check, Decomposition, DimensionReport, Part, RotatedLipschitzReport,
    SpacelikeReport,
};
pub use measure::{DiscreteMeasure, DUPLICATE_TOL, WEIGHT_SUM_WARN};
pub use plan::{
    cost_matrix, extract_monge_map, kantorovich_cost, monge_cost, DualPotentials, MongeMap, PlanEntry, PlanHeader, TransportPlan,
    MARGINAL_TOL,
};
pub use simplex::{
    dual_from_cost_matrix, northwest_corner, northwest_corner_plan, solve_cost_matrix, solve_dual, solve_primal,
    solve_primal_with_stats, SolveStats, MASS_BALANCE_TOL, MASS_FLOOR, PIVOT_TOL,
};
