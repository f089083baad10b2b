//! C ABI over `crossdiff`.
//!
//! Objects are opaque handles created by `cd_*_new`/`cd_solve` and released
//! with the matching `cd_*_free`. Every fallible call returns a `CdStatus`;
//! on failure `cd_last_error_message` holds a description for the calling
//! thread. Arrays are passed as pointer + length, points row-major.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use crossdiff::cost::{CostFunction, CostSpec};
use crossdiff::geometry::{default_rank_tol, hessian_h, signature, BasePoint};
use crossdiff::mtw::mtw_sectional;
use crossdiff::scenario::{run_scenario_with, RunOptions, Scenario};
use crossdiff::transport::{
    check_ccm, kantorovich_cost, solve_dual, solve_primal, CcmMode, DiscreteMeasure, DualPotentials, TransportPlan,
};
use crossdiff::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    Order = 4,
    SingularStencil = 5,
    DimensionMismatch = 6,
    DegenerateMetric = 7,
    ZeroVector = 8,
    DomainExit = 9,
    Index = 10,
    InfeasibleMass = 11,
    InvalidMeasure = 12,
    NotOptimal = 13,
    ComplexityGuard = 14,
    Config = 15,
    Io = 16,
    BufferTooSmall = 17,
    Panic = 18,
}

/// Cost function handle.
pub struct CdCost {
    inner: CostFunction,
}

/// Discrete measure handle.
pub struct CdMeasure {
    inner: DiscreteMeasure,
}

/// Solved plan with its dual potentials and support points.
pub struct CdPlan {
    plan: TransportPlan,
    dual: DualPotentials,
    cost: f64,
    support: Vec<(Vec<f64>, Vec<f64>)>,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

struct Failure(CdStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Domain(_) => CdStatus::Domain,
            Error::Order { .. } => CdStatus::Order,
            Error::SingularStencil(_) => CdStatus::SingularStencil,
            Error::DimensionMismatch(_) => CdStatus::DimensionMismatch,
            Error::DegenerateMetric(_) => CdStatus::DegenerateMetric,
            Error::ZeroVector => CdStatus::ZeroVector,
            Error::DomainExit { .. } => CdStatus::DomainExit,
            Error::Index(_) => CdStatus::Index,
            Error::InfeasibleMass { .. } => CdStatus::InfeasibleMass,
            Error::InvalidMeasure(_) => CdStatus::InvalidMeasure,
            Error::NotOptimal(_) => CdStatus::NotOptimal,
            Error::ComplexityGuard { .. } => CdStatus::ComplexityGuard,
            Error::Config(_) => CdStatus::Config,
            Error::Io(_) => CdStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(CdStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CdStatus {
    let (status, message) = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => (CdStatus::Ok, String::new()),
        Ok(Err(Failure(s, m))) => (s, m),
        Err(_) => (CdStatus::Panic, "internal panic".to_string()),
    };
    LAST_ERROR.with(|e| *e.borrow_mut() = message);
    status
}

unsafe fn slice<'a>(p: *const f64, n: usize, what: &str) -> Result<&'a [f64], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure(CdStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut T, v: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(v);
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copy the calling thread's last error message into `buf` (truncated,
/// always NUL-terminated when `len > 0`). Returns the length needed
/// including the terminator.
///
/// # Safety
/// `buf` must be valid for `len` bytes or null.
#[no_mangle]
pub unsafe extern "C" fn cd_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        bytes.len() + 1
    })
}

/// Catalogue cost by name with default domains.
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cd_cost_new(name: *const c_char, dim: usize, out: *mut *mut CdCost) -> CdStatus {
    guard(|| {
        let inner = CostSpec::named(text(name, "name")?, dim).build()?;
        put(out, Box::into_raw(Box::new(CdCost { inner })), "out")
    })
}

/// Cost from its JSON description (`{"name": "power", "dim": 1, "p": 1.5, ...}`).
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cd_cost_from_json(json: *const c_char, out: *mut *mut CdCost) -> CdStatus {
    guard(|| {
        let spec: CostSpec = serde_json::from_str(text(json, "json")?).map_err(|e| Failure(CdStatus::Config, e.to_string()))?;
        let inner = spec.build()?;
        put(out, Box::into_raw(Box::new(CdCost { inner })), "out")
    })
}

/// # Safety
/// `cost` must come from `cd_cost_new`/`cd_cost_from_json` (or be null) and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cd_cost_free(cost: *mut CdCost) {
    if !cost.is_null() {
        drop(Box::from_raw(cost));
    }
}

/// # Safety
/// `cost` must be a live handle; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn cd_cost_dims(cost: *const CdCost, dim_x: *mut usize, dim_y: *mut usize) -> CdStatus {
    guard(|| {
        let c = &handle(cost, "cost")?.inner;
        put(dim_x, c.dim_x, "dim_x")?;
        put(dim_y, c.dim_y, "dim_y")
    })
}

/// `c(x, y)`.
///
/// # Safety
/// `x` and `y` must hold `dim_x` and `dim_y` doubles.
#[no_mangle]
pub unsafe extern "C" fn cd_cost_value(cost: *const CdCost, x: *const f64, y: *const f64, out: *mut f64) -> CdStatus {
    guard(|| {
        let c = &handle(cost, "cost")?.inner;
        let v = c.evaluate(slice(x, c.dim_x, "x")?, slice(y, c.dim_y, "y")?)?;
        put(out, v, "out")
    })
}

/// Signature `(k_plus, k_zero, k_minus, rank)` of the pseudo-metric at
/// `(x, y)`; `tol <= 0` selects the default rank tolerance.
///
/// # Safety
/// `x`, `y` sized as for `cd_cost_value`; `out` must hold 4 values.
#[no_mangle]
pub unsafe extern "C" fn cd_signature(cost: *const CdCost, x: *const f64, y: *const f64, tol: f64, out: *mut usize) -> CdStatus {
    guard(|| {
        let c = &handle(cost, "cost")?.inner;
        if out.is_null() {
            return Err(null("out"));
        }
        let base = BasePoint::checked(c, slice(x, c.dim_x, "x")?, slice(y, c.dim_y, "y")?)?;
        let tol = if tol > 0.0 { tol } else { default_rank_tol(c.derivatives) };
        let s = signature(&hessian_h(c, &base)?, tol);
        std::slice::from_raw_parts_mut(out, 4).copy_from_slice(&[s.k_plus, s.k_zero, s.k_minus, s.rank]);
        Ok(())
    })
}

/// Sectional MTW value at `(x, y)` for `p` (length `dim_x`) and `q` (length `dim_y`).
///
/// # Safety
/// All arrays sized as described.
#[no_mangle]
pub unsafe extern "C" fn cd_mtw_sectional(
    cost: *const CdCost,
    x: *const f64,
    y: *const f64,
    p: *const f64,
    q: *const f64,
    out: *mut f64,
) -> CdStatus {
    guard(|| {
        let c = &handle(cost, "cost")?.inner;
        let base = BasePoint::checked(c, slice(x, c.dim_x, "x")?, slice(y, c.dim_y, "y")?)?;
        let v = mtw_sectional(c, &base, slice(p, c.dim_x, "p")?, slice(q, c.dim_y, "q")?)?;
        put(out, v, "out")
    })
}

/// Measure on `count` atoms of dimension `dim` (row-major `atoms`), weights
/// normalised; duplicate atoms are merged.
///
/// # Safety
/// `atoms` must hold `count * dim` doubles and `weights` `count` doubles.
#[no_mangle]
pub unsafe extern "C" fn cd_measure_new(
    atoms: *const f64,
    count: usize,
    dim: usize,
    weights: *const f64,
    out: *mut *mut CdMeasure,
) -> CdStatus {
    guard(|| {
        let flat = slice(atoms, count * dim, "atoms")?;
        let w = slice(weights, count, "weights")?;
        let pts = if dim == 0 { vec![Vec::new(); count] } else { flat.chunks(dim).map(<[f64]>::to_vec).collect() };
        let inner = DiscreteMeasure::new(pts, w.to_vec())?;
        put(out, Box::into_raw(Box::new(CdMeasure { inner })), "out")
    })
}

/// # Safety
/// `m` must come from `cd_measure_new` (or be null) and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cd_measure_free(m: *mut CdMeasure) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Number of atoms after merging duplicates.
///
/// # Safety
/// `m` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cd_measure_len(m: *const CdMeasure, out: *mut usize) -> CdStatus {
    guard(|| put(out, handle(m, "measure")?.inner.len(), "out"))
}

/// Optimal plan and dual potentials.
///
/// # Safety
/// Handles must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cd_solve(cost: *const CdCost, mu_plus: *const CdMeasure, mu_minus: *const CdMeasure, out: *mut *mut CdPlan) -> CdStatus {
    guard(|| {
        let c = &handle(cost, "cost")?.inner;
        let a = &handle(mu_plus, "mu_plus")?.inner;
        let b = &handle(mu_minus, "mu_minus")?.inner;
        let plan = solve_primal(c, a, b)?;
        let dual = solve_dual(c, a, b, &plan)?;
        let total = kantorovich_cost(c, &plan, a, b)?;
        let support = plan.support(a, b);
        put(out, Box::into_raw(Box::new(CdPlan { plan, dual, cost: total, support })), "out")
    })
}

/// # Safety
/// `plan` must come from `cd_solve` (or be null) and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cd_plan_free(plan: *mut CdPlan) {
    if !plan.is_null() {
        drop(Box::from_raw(plan));
    }
}

/// Number of plan entries.
///
/// # Safety
/// `plan` must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cd_plan_len(plan: *const CdPlan, out: *mut usize) -> CdStatus {
    guard(|| put(out, handle(plan, "plan")?.plan.entries.len(), "out"))
}

/// Total transport cost of the plan.
///
/// # Safety
/// `plan` must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cd_plan_cost(plan: *const CdPlan, out: *mut f64) -> CdStatus {
    guard(|| put(out, handle(plan, "plan")?.cost, "out"))
}

/// Copy the entries into `i`, `j`, `mass` (each of capacity `cap`).
/// Fails with `BUFFER_TOO_SMALL` if `cap` is below `cd_plan_len`.
///
/// # Safety
/// Output arrays must hold `cap` elements.
#[no_mangle]
pub unsafe extern "C" fn cd_plan_entries(plan: *const CdPlan, i: *mut usize, j: *mut usize, mass: *mut f64, cap: usize) -> CdStatus {
    guard(|| {
        let p = &handle(plan, "plan")?.plan;
        let n = p.entries.len();
        if cap < n {
            return Err(Failure(CdStatus::BufferTooSmall, format!("plan has {n} entries, buffer holds {cap}")));
        }
        if n > 0 && (i.is_null() || j.is_null() || mass.is_null()) {
            return Err(null("entry buffer"));
        }
        for (k, e) in p.entries.iter().enumerate() {
            *i.add(k) = e.i;
            *j.add(k) = e.j;
            *mass.add(k) = e.mass;
        }
        Ok(())
    })
}

/// Copy the dual potentials; `n_plus`/`n_minus` must equal the atom counts.
///
/// # Safety
/// Output arrays must hold `n_plus` and `n_minus` doubles.
#[no_mangle]
pub unsafe extern "C" fn cd_plan_dual(plan: *const CdPlan, u_plus: *mut f64, n_plus: usize, u_minus: *mut f64, n_minus: usize) -> CdStatus {
    guard(|| {
        let d = &handle(plan, "plan")?.dual;
        if n_plus != d.u_plus.len() || n_minus != d.u_minus.len() {
            return Err(Failure(CdStatus::BufferTooSmall, format!("need {} and {} potentials", d.u_plus.len(), d.u_minus.len())));
        }
        if u_plus.is_null() || u_minus.is_null() {
            return Err(null("potential buffer"));
        }
        std::slice::from_raw_parts_mut(u_plus, n_plus).copy_from_slice(&d.u_plus);
        std::slice::from_raw_parts_mut(u_minus, n_minus).copy_from_slice(&d.u_minus);
        Ok(())
    })
}

/// Cyclical monotonicity of the plan's support up to cycle length `k`
/// (`exact != 0` forces enumeration). `certified` is 1 or 0; on a violation
/// `gap` receives the (negative) cycle gap, otherwise 0.
///
/// # Safety
/// Handles must be live; outputs writable.
#[no_mangle]
pub unsafe extern "C" fn cd_plan_certify(
    cost: *const CdCost,
    plan: *const CdPlan,
    k: usize,
    exact: i32,
    certified: *mut i32,
    gap: *mut f64,
) -> CdStatus {
    guard(|| {
        let c = &handle(cost, "cost")?.inner;
        let p = handle(plan, "plan")?;
        let mode = if exact != 0 { CcmMode::Exact } else { CcmMode::Auto };
        let cert = check_ccm(c, &p.support, k, mode)?;
        put(certified, i32::from(cert.is_certified()), "certified")?;
        put(gap, cert.violation.map_or(0.0, |v| v.gap), "gap")
    })
}

/// Run a scenario given as JSON text; relative paths resolve against
/// `base_dir` (may be null for the working directory). `report` receives a
/// JSON string to release with `cd_string_free`; `all_met` is 1 when every
/// declared expectation was met.
///
/// # Safety
/// Strings NUL-terminated; outputs writable.
#[no_mangle]
pub unsafe extern "C" fn cd_run_scenario_json(
    json: *const c_char,
    base_dir: *const c_char,
    jobs: usize,
    report: *mut *mut c_char,
    all_met: *mut i32,
) -> CdStatus {
    guard(|| {
        let dir = if base_dir.is_null() { "." } else { text(base_dir, "base_dir")? };
        let s = Scenario::from_json(text(json, "json")?, Path::new(dir))?;
        let r = run_scenario_with(&s, &RunOptions { jobs: (jobs > 0).then_some(jobs) })?;
        let out = CString::new(r.to_json()).map_err(|e| Failure(CdStatus::InvalidArgument, e.to_string()))?;
        put(all_met, i32::from(r.all_met), "all_met")?;
        put(report, out.into_raw(), "report")
    })
}

/// # Safety
/// `s` must come from this library (or be null) and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
