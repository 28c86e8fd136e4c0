//! C ABI for the soficrank estimators.
//!
//! Objects cross the boundary as opaque handles that the caller frees with
//! the matching `*_destroy` function. Every fallible call returns an
//! [`SrStatus`]; on failure [`sr_last_error`] returns a message describing
//! the most recent error on the calling thread. Strings returned through
//! out-parameters are owned by the caller and released with
//! [`sr_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use soficrank::group::{quotient_chain, CatalogKind, QuotientSchedule};
use soficrank::job::{run_job, Command, JobSpec};
use soficrank::rank::{sandwich_bounds, vnd_estimate, vr_estimate, EstimatorOptions, EtaSchedule};
use soficrank::ring::{parse_element, trace_moment};
use soficrank::sofic::represent;
use soficrank::spectral::{counting_function, singular_profile, ProfileOptions};
use soficrank::{Error, GroupRingMatrix, GroupSpec, ModulePresentation, SoficLevel};

/// Result codes of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Invalid input: parse errors, bad parameters, mismatched groups.
    Invalid = 3,
    /// A memory budget or size guard was exceeded.
    Budget = 4,
    /// Numerical or I/O failure.
    Internal = 5,
    Panic = 6,
}

/// A finitely generated group.
pub struct SrGroup {
    inner: Arc<GroupSpec>,
}

/// A list of sofic approximation levels of one group.
pub struct SrLevels {
    inner: Vec<SoficLevel>,
}

/// A matrix over the integral group ring.
pub struct SrMatrix {
    inner: GroupRingMatrix,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SrStatus {
    match e {
        Error::Budget { .. } => SrStatus::Budget,
        Error::Eigen { .. } | Error::Io { .. } | Error::Serialize(_) => SrStatus::Internal,
        _ => SrStatus::Invalid,
    }
}

/// Runs `f`, recording errors and converting panics into [`SrStatus::Panic`].
fn guard(f: impl FnOnce() -> Result<(), (SrStatus, String)>) -> SrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SrStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            SrStatus::Panic
        }
    }
}

fn lib(e: Error) -> (SrStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (SrStatus, String) {
    (SrStatus::NullPointer, format!("{what} is null"))
}

/// # Safety
/// `p` is null or a valid nul-terminated string.
unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (SrStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (SrStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

/// # Safety
/// `p` is null or points to `len` readable values.
unsafe fn read_slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], (SrStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// # Safety
/// `h` is null or a live handle.
unsafe fn handle<'a, T>(h: *const T, what: &str) -> Result<&'a T, (SrStatus, String)> {
    h.as_ref().ok_or_else(|| null(what))
}

fn string_out(out: *mut *mut c_char, s: String) -> Result<(), (SrStatus, String)> {
    let c = CString::new(s).map_err(|_| (SrStatus::Internal, "output contains a nul byte".into()))?;
    // SAFETY: callers check `out` for null before producing output
    unsafe { *out = c.into_raw() };
    Ok(())
}

/// Message of the last error on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn sr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` is null or a string returned through an out-parameter of this
/// library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn sr_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// `Z^d` with generators `x, y, z, w` (or `x1..xd`).
///
/// # Safety
/// `out` is a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn sr_group_new_free_abelian(rank: usize, out: *mut *mut SrGroup) -> SrStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let g = GroupSpec::free_abelian(rank).map_err(lib)?;
        *out = Box::into_raw(Box::new(SrGroup { inner: Arc::new(g) }));
        Ok(())
    })
}

/// The free group `F_r` with generators `a, b, c, d` (or `a1..ar`).
///
/// # Safety
/// `out` is a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn sr_group_new_free(rank: usize, out: *mut *mut SrGroup) -> SrStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let g = GroupSpec::free(rank).map_err(lib)?;
        *out = Box::into_raw(Box::new(SrGroup { inner: Arc::new(g) }));
        Ok(())
    })
}

/// # Safety
/// `g` is null or a handle from `sr_group_new_*` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sr_group_destroy(g: *mut SrGroup) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Congruence quotients `(Z/N)^d` of a free abelian group, one per size.
///
/// # Safety
/// `group` is a live handle, `sizes` points to `len` values and `out` is
/// writable.
#[no_mangle]
pub unsafe extern "C" fn sr_levels_congruence(
    group: *const SrGroup,
    sizes: *const usize,
    len: usize,
    out: *mut *mut SrLevels,
) -> SrStatus {
    guard(|| {
        let g = handle(group, "group")?;
        let sizes = read_slice(sizes, len, "sizes")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let levels = quotient_chain(&g.inner, &QuotientSchedule::Congruence(sizes.to_vec())).map_err(lib)?;
        *out = Box::into_raw(Box::new(SrLevels { inner: levels }));
        Ok(())
    })
}

/// Seeded transitive permutation actions of a free group, one per degree.
///
/// # Safety
/// `group` is a live handle, `degrees` points to `len` values and `out` is
/// writable.
#[no_mangle]
pub unsafe extern "C" fn sr_levels_random_transitive(
    group: *const SrGroup,
    degrees: *const usize,
    len: usize,
    seed: u64,
    out: *mut *mut SrLevels,
) -> SrStatus {
    guard(|| {
        let g = handle(group, "group")?;
        let degrees = read_slice(degrees, len, "degrees")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let schedule = QuotientSchedule::Catalog {
            kind: CatalogKind::RandomTransitive { seed },
            degrees: degrees.to_vec(),
        };
        let levels = quotient_chain(&g.inner, &schedule).map_err(lib)?;
        *out = Box::into_raw(Box::new(SrLevels { inner: levels }));
        Ok(())
    })
}

/// Number of levels in a handle (0 for null).
///
/// # Safety
/// `levels` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sr_levels_len(levels: *const SrLevels) -> usize {
    levels.as_ref().map_or(0, |l| l.inner.len())
}

/// # Safety
/// `l` is null or a handle from `sr_levels_*` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sr_levels_destroy(l: *mut SrLevels) {
    if !l.is_null() {
        drop(Box::from_raw(l));
    }
}

/// Parses a matrix given as `rows * cols` element strings in row-major
/// order, e.g. `"x - 1"`.
///
/// # Safety
/// `group` is a live handle, `entries` points to `rows * cols` strings and
/// `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn sr_matrix_parse(
    group: *const SrGroup,
    entries: *const *const c_char,
    rows: usize,
    cols: usize,
    out: *mut *mut SrMatrix,
) -> SrStatus {
    guard(|| {
        let g = handle(group, "group")?;
        let count = rows
            .checked_mul(cols)
            .filter(|&c| c > 0)
            .ok_or((SrStatus::Invalid, "matrix must have positive shape".to_string()))?;
        let ptrs = read_slice(entries, count, "entries")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let mut parsed = Vec::with_capacity(rows);
        for r in 0..rows {
            let mut row = Vec::with_capacity(cols);
            for c in 0..cols {
                let s = read_str(ptrs[r * cols + c], "entry")?;
                row.push(parse_element(&g.inner, s).map_err(lib)?);
            }
            parsed.push(row);
        }
        let m = GroupRingMatrix::from_rows(g.inner.clone(), parsed).map_err(lib)?;
        *out = Box::into_raw(Box::new(SrMatrix { inner: m }));
        Ok(())
    })
}

/// # Safety
/// `m` is null or a handle from `sr_matrix_parse` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sr_matrix_destroy(m: *mut SrMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Exact `tr((f* f)^k)` as a decimal string.
///
/// # Safety
/// `f` is a live handle and `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn sr_trace_moment(f: *const SrMatrix, k: u32, out: *mut *mut c_char) -> SrStatus {
    guard(|| {
        let f = handle(f, "f")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let t = trace_moment(&f.inner, k).map_err(lib)?;
        string_out(out, t.to_string())
    })
}

/// `d_{η,i}` of `σ_i(f)` at `n` thresholds, written to `values`.
///
/// # Safety
/// `levels` and `f` are live handles, `etas` points to `n` values and
/// `values` to `n` writable values.
#[no_mangle]
pub unsafe extern "C" fn sr_counting_function(
    levels: *const SrLevels,
    level_index: usize,
    f: *const SrMatrix,
    etas: *const f64,
    n: usize,
    values: *mut f64,
) -> SrStatus {
    guard(|| {
        let levels = handle(levels, "levels")?;
        let f = handle(f, "f")?;
        let etas = read_slice(etas, n, "etas")?;
        if values.is_null() && n > 0 {
            return Err(null("values"));
        }
        let level = levels.inner.get(level_index).ok_or((
            SrStatus::Invalid,
            format!("level {level_index} out of range ({} levels)", levels.inner.len()),
        ))?;
        let a = represent(level, &f.inner).map_err(lib)?;
        let profile = singular_profile(&a, &ProfileOptions::default()).map_err(lib)?;
        let cf = counting_function(&profile, etas).map_err(lib)?;
        if n > 0 {
            std::slice::from_raw_parts_mut(values, n).copy_from_slice(&cf.values);
        }
        Ok(())
    })
}

/// Estimate of `dim ker ρ(f)` with thresholds `2^{-j}`, `j ≤ eta_depth`,
/// plus `η = 0`.
///
/// # Safety
/// `levels` and `f` are live handles and `estimate` is writable.
#[no_mangle]
pub unsafe extern "C" fn sr_vnd_estimate(
    levels: *const SrLevels,
    f: *const SrMatrix,
    eta_depth: u32,
    tail: usize,
    estimate: *mut f64,
) -> SrStatus {
    guard(|| {
        let levels = handle(levels, "levels")?;
        let f = handle(f, "f")?;
        if estimate.is_null() {
            return Err(null("estimate"));
        }
        let est = vnd_estimate(
            &levels.inner,
            &f.inner,
            &EtaSchedule::dyadic(eta_depth, tail),
            &EstimatorOptions::default(),
        )
        .map_err(lib)?;
        *estimate = est.estimate;
        Ok(())
    })
}

/// Estimate of `vr(Z(Γ)^n / B)` where the rows of `relators` generate `B`.
/// With `integer_rank` the kernel is counted by exact modular rank.
///
/// # Safety
/// `levels` and `relators` are live handles and `estimate` is writable.
#[no_mangle]
pub unsafe extern "C" fn sr_vr_estimate(
    levels: *const SrLevels,
    relators: *const SrMatrix,
    integer_rank: bool,
    tail: usize,
    estimate: *mut f64,
) -> SrStatus {
    guard(|| {
        let levels = handle(levels, "levels")?;
        let m = &handle(relators, "relators")?.inner;
        if estimate.is_null() {
            return Err(null("estimate"));
        }
        let rows = (0..m.rows())
            .map(|r| (0..m.cols()).map(|c| m.get(r, c).clone()).collect())
            .collect();
        let pres = ModulePresentation::new(m.group().clone(), m.cols(), rows).map_err(lib)?;
        let schedule = if integer_rank {
            EtaSchedule::kernel_only(tail)
        } else {
            EtaSchedule::dyadic(10, tail)
        };
        let opts = EstimatorOptions {
            integer_rank,
            ..Default::default()
        };
        let est = vr_estimate(&levels.inner, &pres, m.rows(), &schedule, &opts).map_err(lib)?;
        *estimate = est.estimate;
        Ok(())
    })
}

/// Lower and upper covering exponents `log S_ε / (d log(1/ε))` implied by
/// a counting value `d_η`.
///
/// # Safety
/// `lower` and `upper` are writable.
#[no_mangle]
pub unsafe extern "C" fn sr_covering_sandwich(d_eta: f64, eps: f64, lower: *mut f64, upper: *mut f64) -> SrStatus {
    guard(|| {
        if lower.is_null() || upper.is_null() {
            return Err(null("lower/upper"));
        }
        let (l, u) = sandwich_bounds(d_eta, eps).map_err(lib)?;
        *lower = l;
        *upper = u;
        Ok(())
    })
}

/// Runs a TOML job for a command (`"vr"`, `"vnd"`, `"spectrum"`,
/// `"moments"`, `"mdim"`, `"tile"`, `"demo-additivity"`) and returns the
/// JSON report.
///
/// # Safety
/// `job_toml` and `command` are nul-terminated strings and `out_json` is
/// writable.
#[no_mangle]
pub unsafe extern "C" fn sr_run_job(
    job_toml: *const c_char,
    command: *const c_char,
    out_json: *mut *mut c_char,
) -> SrStatus {
    guard(|| {
        let text = read_str(job_toml, "job_toml")?;
        let cmd = Command::from_name(read_str(command, "command")?).map_err(lib)?;
        if out_json.is_null() {
            return Err(null("out_json"));
        }
        let job = JobSpec::from_toml_str(text).map_err(lib)?;
        let out = run_job(&job, cmd).map_err(lib)?;
        string_out(out_json, out.json)
    })
}
