//! C ABI over `vtransfer`.
//!
//! Every fallible function returns a [`VtStatus`]; on failure the message is
//! kept per thread and read with [`vt_last_error`]. Objects cross the
//! boundary as opaque handles that the caller frees with the matching
//! `*_free` function. Output pointers are written only on success.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use vtransfer::dispatch::{km_match, MatchProblem};
use vtransfer::gpi::{prepare_source, run_seed, PolicyKind};
use vtransfer::harness;
use vtransfer::scenario::Scenario;
use vtransfer::transfer::{concordance_rate_report, ConcordanceSpec};
use vtransfer::valuation::{discounted_reward, ValueTable};
use vtransfer::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VtStatus {
    Ok = 0,
    NullPointer = 1,
    Domain = 2,
    ShapeMismatch = 3,
    ConstraintViolation = 4,
    Numerical = 5,
    MissingInput = 6,
    Config = 7,
    Parse = 8,
    Io = 9,
    /// A Rust panic was caught at the boundary.
    Internal = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VtPolicy {
    Greedy = 0,
    SourceOnly = 1,
    TargetOnly = 2,
    NaivelyCombine = 3,
    PatternTransfer = 4,
}

impl From<VtPolicy> for PolicyKind {
    fn from(p: VtPolicy) -> Self {
        match p {
            VtPolicy::Greedy => PolicyKind::Greedy,
            VtPolicy::SourceOnly => PolicyKind::SourceOnly,
            VtPolicy::TargetOnly => PolicyKind::TargetOnly,
            VtPolicy::NaivelyCombine => PolicyKind::NaivelyCombine,
            VtPolicy::PatternTransfer => PolicyKind::PatternTransfer,
        }
    }
}

/// A `(horizon + 1) x n_cells` value table.
pub struct VtValueTable(ValueTable);

/// A validated scenario.
pub struct VtScenario(Scenario);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> VtStatus {
    match err {
        Error::Domain(_) => VtStatus::Domain,
        Error::ConstraintViolation(_) => VtStatus::ConstraintViolation,
        Error::ShapeMismatch { .. } => VtStatus::ShapeMismatch,
        Error::Numerical { .. } => VtStatus::Numerical,
        Error::MissingInput { .. } => VtStatus::MissingInput,
        Error::Config { .. } => VtStatus::Config,
        Error::Parse { .. } => VtStatus::Parse,
        Error::Io(_) => VtStatus::Io,
    }
}

enum Fail {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(body: impl FnOnce() -> Result<(), Fail>) -> VtStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => VtStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            VtStatus::NullPointer
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal error: {msg}"));
            VtStatus::Internal
        }
    }
}

fn non_null<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    // SAFETY: the caller passes a valid pointer or null
    unsafe { p.as_ref() }.ok_or(Fail::Null(what))
}

fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    // SAFETY: the caller passes a valid writable pointer or null
    unsafe { p.as_mut() }.ok_or(Fail::Null(what))
}

fn slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    // SAFETY: the caller guarantees `len` readable elements
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

fn slice_mut<'a, T>(p: *mut T, len: usize, what: &'static str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    // SAFETY: the caller guarantees `len` writable elements
    Ok(unsafe { std::slice::from_raw_parts_mut(p, len) })
}

fn path(p: *const c_char, what: &'static str) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    // SAFETY: the caller passes a nul-terminated string
    let s = unsafe { CStr::from_ptr(p) };
    let s = s
        .to_str()
        .map_err(|_| Error::domain(format!("{what} is not valid UTF-8")))?;
    Ok(PathBuf::from(s))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn vt_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Discounted value of `revenue` paid in `duration` equal per-step installments.
#[no_mangle]
pub extern "C" fn vt_discounted_reward(
    revenue: f64,
    duration: u32,
    gamma: f64,
    result: *mut f64,
) -> VtStatus {
    guard(|| {
        let result = out(result, "result")?;
        *result = discounted_reward(revenue, duration, gamma)?;
        Ok(())
    })
}

/// All-zero table with `horizon + 1` rows.
#[no_mangle]
pub extern "C" fn vt_table_new(
    horizon: usize,
    n_cells: usize,
    gamma: f64,
    table: *mut *mut VtValueTable,
) -> VtStatus {
    guard(|| {
        let table = out(table, "table")?;
        if n_cells == 0 {
            return Err(Error::domain("a table needs at least one cell").into());
        }
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::domain(format!("gamma must be in (0, 1], got {gamma}")).into());
        }
        *table = Box::into_raw(Box::new(VtValueTable(ValueTable::zeros(
            horizon, n_cells, gamma,
        ))));
        Ok(())
    })
}

/// Frees a table. Null is ignored.
///
/// # Safety
/// `table` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn vt_table_free(table: *mut VtValueTable) {
    if !table.is_null() {
        drop(unsafe { Box::from_raw(table) });
    }
}

#[no_mangle]
pub extern "C" fn vt_table_shape(
    table: *const VtValueTable,
    horizon: *mut usize,
    n_cells: *mut usize,
) -> VtStatus {
    guard(|| {
        let t = &non_null(table, "table")?.0;
        let (h, n) = (out(horizon, "horizon")?, out(n_cells, "n_cells")?);
        *h = t.horizon();
        *n = t.n_cells();
        Ok(())
    })
}

fn check_index(t: &ValueTable, row: usize, cell: usize) -> Result<(), Fail> {
    if row > t.horizon() || cell >= t.n_cells() {
        return Err(Error::domain(format!(
            "({row}, {cell}) outside a table of {} rows and {} cells",
            t.horizon() + 1,
            t.n_cells()
        ))
        .into());
    }
    Ok(())
}

#[no_mangle]
pub extern "C" fn vt_table_get(
    table: *const VtValueTable,
    t: usize,
    cell: usize,
    value: *mut f64,
) -> VtStatus {
    guard(|| {
        let tab = &non_null(table, "table")?.0;
        let value = out(value, "value")?;
        check_index(tab, t, cell)?;
        *value = tab.get(t, cell);
        Ok(())
    })
}

/// Sets one entry. The terminal row `t == horizon` stays zero.
#[no_mangle]
pub extern "C" fn vt_table_set(
    table: *mut VtValueTable,
    t: usize,
    cell: usize,
    value: f64,
) -> VtStatus {
    guard(|| {
        let tab = &mut out(table, "table")?.0;
        check_index(tab, t, cell)?;
        if t == tab.horizon() {
            return Err(Error::domain("the terminal row is fixed at zero").into());
        }
        if !value.is_finite() {
            return Err(Error::domain("values must be finite").into());
        }
        tab.set(t, cell, value);
        Ok(())
    })
}

/// Reads a table: CSV when the path ends in `.csv`, binary otherwise.
/// `gamma` is recorded with CSV tables; binary files carry their own.
#[no_mangle]
pub extern "C" fn vt_table_read(
    file: *const c_char,
    gamma: f64,
    table: *mut *mut VtValueTable,
) -> VtStatus {
    guard(|| {
        let table = out(table, "table")?;
        let loaded = harness::read_table(&path(file, "path")?, gamma)?;
        *table = Box::into_raw(Box::new(VtValueTable(loaded)));
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn vt_table_write(table: *const VtValueTable, file: *const c_char) -> VtStatus {
    guard(|| {
        let tab = &non_null(table, "table")?.0;
        harness::write_table(tab, &path(file, "path")?)?;
        Ok(())
    })
}

/// Share of `(t, pair)` combinations, `t < horizon`, that the two tables
/// order the same way. `pairs` holds `n_pairs` cell index pairs, flattened.
#[no_mangle]
pub extern "C" fn vt_concordance_rate(
    source: *const VtValueTable,
    target: *const VtValueTable,
    pairs: *const usize,
    n_pairs: usize,
    rate: *mut f64,
) -> VtStatus {
    guard(|| {
        let (s, t) = (
            &non_null(source, "source")?.0,
            &non_null(target, "target")?.0,
        );
        let rate = out(rate, "rate")?;
        let flat = slice(pairs, n_pairs * 2, "pairs")?;
        let spec = ConcordanceSpec::new(flat.chunks_exact(2).map(|p| (p[0], p[1])), 0.0, 1.0)?;
        *rate = concordance_rate_report(s, t, &spec)?.aggregate;
        Ok(())
    })
}

/// Maximum-score matching. `scores` is `n_drivers x (n_orders + 1)` row
/// major with column 0 the unmatched option; `feasible` has the same layout
/// (non-zero means allowed) or is null. `assignment[l]` receives the order
/// index of driver `l`, or -1.
#[no_mangle]
pub extern "C" fn vt_km_match(
    n_drivers: usize,
    n_orders: usize,
    scores: *const f64,
    feasible: *const u8,
    assignment: *mut i64,
    objective: *mut f64,
) -> VtStatus {
    guard(|| {
        let width = n_orders + 1;
        let scores = slice(scores, n_drivers * width, "scores")?;
        let assignment = slice_mut(assignment, n_drivers, "assignment")?;
        let objective = out(objective, "objective")?;
        let rows: Vec<Vec<f64>> = scores.chunks_exact(width).map(<[f64]>::to_vec).collect();
        let mask: Option<Vec<Vec<bool>>> = if feasible.is_null() {
            None
        } else {
            let f = slice(feasible, n_drivers * width, "feasible")?;
            Some(
                f.chunks_exact(width)
                    .map(|r| r.iter().map(|&x| x != 0).collect())
                    .collect(),
            )
        };
        let problem = MatchProblem::from_rows(&rows, mask.as_deref())?;
        let result = km_match(&problem);
        for (slot, a) in assignment.iter_mut().zip(&result.assignment) {
            *slot = a.map_or(-1, |k| k as i64);
        }
        *objective = result.objective;
        Ok(())
    })
}

/// Loads and validates a scenario file.
#[no_mangle]
pub extern "C" fn vt_scenario_load(
    file: *const c_char,
    scenario: *mut *mut VtScenario,
) -> VtStatus {
    guard(|| {
        let scenario = out(scenario, "scenario")?;
        let loaded = Scenario::load(&path(file, "path")?)?;
        *scenario = Box::into_raw(Box::new(VtScenario(loaded)));
        Ok(())
    })
}

/// Frees a scenario. Null is ignored.
///
/// # Safety
/// `scenario` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn vt_scenario_free(scenario: *mut VtScenario) {
    if !scenario.is_null() {
        drop(unsafe { Box::from_raw(scenario) });
    }
}

/// Runs `policy` for `days` target days on each seed. `rewards` receives
/// `n_seeds x days` values, seed-major.
#[no_mangle]
pub extern "C" fn vt_run_experiment(
    scenario: *const VtScenario,
    policy: VtPolicy,
    gamma: f64,
    lambda: f64,
    days: usize,
    seeds: *const u64,
    n_seeds: usize,
    rewards: *mut f64,
) -> VtStatus {
    guard(|| {
        let sc = &non_null(scenario, "scenario")?.0;
        let seeds = slice(seeds, n_seeds, "seeds")?;
        let rewards = slice_mut(rewards, n_seeds * days, "rewards")?;
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::domain(format!("gamma must be in (0, 1], got {gamma}")).into());
        }
        if days == 0 || seeds.is_empty() {
            return Ok(());
        }
        let source = prepare_source(sc, gamma)?;
        for (&seed, chunk) in seeds.iter().zip(rewards.chunks_exact_mut(days)) {
            let series = run_seed(sc, &source, policy.into(), days, gamma, lambda, seed)?;
            for (slot, m) in chunk.iter_mut().zip(series) {
                *slot = m.reward;
            }
        }
        Ok(())
    })
}

/// Reference value tables of the scenario's source and target environments
/// under myopic dispatch, each estimated from `days` logged days.
#[no_mangle]
pub extern "C" fn vt_oracle_tables(
    scenario: *const VtScenario,
    gamma: f64,
    days: usize,
    seed: u64,
    source: *mut *mut VtValueTable,
    target: *mut *mut VtValueTable,
) -> VtStatus {
    guard(|| {
        let sc = &non_null(scenario, "scenario")?.0;
        let (s_out, t_out) = (out(source, "source")?, out(target, "target")?);
        let (s, t) = harness::oracle_tables(sc, gamma, days, seed)?;
        *s_out = Box::into_raw(Box::new(VtValueTable(s)));
        *t_out = Box::into_raw(Box::new(VtValueTable(t)));
        Ok(())
    })
}
