//! C ABI for `poismix`.
//!
//! Objects cross the boundary as opaque handles created by `*_new` or
//! `poismix_fit` and released with the matching `*_free`. Every fallible
//! function returns a [`PoismixStatus`]; on failure the message is available
//! from [`poismix_last_error`] on the same thread. Panics are caught and
//! reported as `POISMIX_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use poismix::anova::{benjamini_hochberg, permutation_test, pseudo_f, DistanceMatrix, StudyLayout};
use poismix::measures::w1_pmfs;
use poismix::{
    fit, phi, phi_prime, poisson_smooth, w1_measures, Algorithm, CountSample, DiscreteMeasure, Error, FitResult,
    SolverConfig,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoismixStatus {
    Ok = 0,
    NullPointer = 1,
    Domain = 2,
    Precondition = 3,
    Degenerate = 4,
    Design = 5,
    Parse = 6,
    Config = 7,
    Io = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoismixAlgorithm {
    Vdm = 0,
    Vem = 1,
    Isdm = 2,
}

/// Discrete mixing distribution on `[0, B]`.
pub struct PoismixMeasure(DiscreteMeasure);

/// Counts with per-cell read depths and a support bound.
pub struct PoismixSample(CountSample);

/// Result of an NPMLE fit.
pub struct PoismixFit(FitResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> PoismixStatus {
    match e {
        Error::Domain(_) => PoismixStatus::Domain,
        Error::Precondition(_) => PoismixStatus::Precondition,
        Error::Degenerate(_) => PoismixStatus::Degenerate,
        Error::Design(_) => PoismixStatus::Design,
        Error::Parse { .. } | Error::Csv(_) | Error::Json(_) => PoismixStatus::Parse,
        Error::Config(_) => PoismixStatus::Config,
        Error::Io(_) => PoismixStatus::Io,
    }
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PoismixStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PoismixStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            PoismixStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            PoismixStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn slice_in<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn slice_out<'a, T>(p: *mut T, len: usize, what: &'static str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn write<T>(out: *mut T, value: T, what: &'static str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null(what));
    }
    out.write(value);
    Ok(())
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn poismix_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn poismix_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => panic!("version string"),
    };
    VERSION.as_ptr()
}

/// Builds a measure from `len` atoms. Weights are normalised; atoms closer
/// than `1e-9 * bound` are merged.
///
/// # Safety
/// `support` and `weights` must point to `len` readable doubles; `out` must
/// be writable.
#[no_mangle]
pub unsafe extern "C" fn poismix_measure_new(
    support: *const f64,
    weights: *const f64,
    len: usize,
    bound: f64,
    out: *mut *mut PoismixMeasure,
) -> PoismixStatus {
    guard(|| {
        let s = slice_in(support, len, "support")?;
        let w = slice_in(weights, len, "weights")?;
        let m = DiscreteMeasure::new(s.to_vec(), w.to_vec(), bound)?;
        write(out, Box::into_raw(Box::new(PoismixMeasure(m))), "out")
    })
}

/// # Safety
/// `m` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn poismix_measure_free(m: *mut PoismixMeasure) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Number of atoms, or 0 for NULL.
///
/// # Safety
/// `m` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn poismix_measure_len(m: *const PoismixMeasure) -> usize {
    m.as_ref().map_or(0, |m| m.0.len())
}

/// Support bound, or NaN for NULL.
///
/// # Safety
/// `m` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn poismix_measure_bound(m: *const PoismixMeasure) -> f64 {
    m.as_ref().map_or(f64::NAN, |m| m.0.bound())
}

/// Copies the sorted support and weights into caller buffers of capacity
/// `cap`, which must be at least [`poismix_measure_len`].
///
/// # Safety
/// `m` must be a live handle; `support` and `weights` must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn poismix_measure_atoms(
    m: *const PoismixMeasure,
    support: *mut f64,
    weights: *mut f64,
    cap: usize,
) -> PoismixStatus {
    guard(|| {
        let m = &borrow(m, "measure")?.0;
        if cap < m.len() {
            return Err(Error::Domain(format!("buffer holds {cap} atoms, need {}", m.len())).into());
        }
        slice_out(support, m.len(), "support")?.copy_from_slice(m.support());
        slice_out(weights, m.len(), "weights")?.copy_from_slice(m.weights());
        Ok(())
    })
}

/// Builds a count sample. `read_depths` may be NULL for unit depths.
///
/// # Safety
/// `counts` must hold `len` values, `read_depths` `len` values when non-NULL;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn poismix_sample_new(
    counts: *const u64,
    read_depths: *const f64,
    len: usize,
    bound: f64,
    out: *mut *mut PoismixSample,
) -> PoismixStatus {
    guard(|| {
        let x = slice_in(counts, len, "counts")?.to_vec();
        let r = if read_depths.is_null() {
            vec![1.0; len]
        } else {
            slice_in(read_depths, len, "read_depths")?.to_vec()
        };
        let s = CountSample::new(x, r, bound)?;
        write(out, Box::into_raw(Box::new(PoismixSample(s))), "out")
    })
}

/// # Safety
/// `s` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn poismix_sample_free(s: *mut PoismixSample) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Mean log-likelihood of the sample under the mixture, without the
/// `log x!` constants.
///
/// # Safety
/// Handles must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn poismix_phi(
    m: *const PoismixMeasure,
    s: *const PoismixSample,
    out: *mut f64,
) -> PoismixStatus {
    guard(|| {
        let v = phi(&borrow(m, "measure")?.0, &borrow(s, "sample")?.0)?;
        write(out, v, "out")
    })
}

/// Directional derivative of the log-likelihood towards a point mass at
/// `lambda`.
///
/// # Safety
/// Handles must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn poismix_phi_prime(
    m: *const PoismixMeasure,
    lambda: f64,
    s: *const PoismixSample,
    out: *mut f64,
) -> PoismixStatus {
    guard(|| {
        let v = phi_prime(&borrow(m, "measure")?.0, lambda, &borrow(s, "sample")?.0)?;
        write(out, v, "out")
    })
}

/// Fits the NPMLE. `stop_tol <= 0` and `max_iters == 0` select the defaults
/// (0.01 and 2000).
///
/// # Safety
/// `s` must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn poismix_fit(
    s: *const PoismixSample,
    algorithm: PoismixAlgorithm,
    stop_tol: f64,
    max_iters: usize,
    out: *mut *mut PoismixFit,
) -> PoismixStatus {
    guard(|| {
        let defaults = SolverConfig::default();
        let cfg = SolverConfig {
            algorithm: match algorithm {
                PoismixAlgorithm::Vdm => Algorithm::Vdm,
                PoismixAlgorithm::Vem => Algorithm::Vem,
                PoismixAlgorithm::Isdm => Algorithm::Isdm,
            },
            stop_tol: if stop_tol > 0.0 { stop_tol } else { defaults.stop_tol },
            max_iters: if max_iters > 0 { max_iters } else { defaults.max_iters },
            ..defaults
        };
        let r = fit(&borrow(s, "sample")?.0, &cfg)?;
        write(out, Box::into_raw(Box::new(PoismixFit(r))), "out")
    })
}

/// # Safety
/// `f` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn poismix_fit_free(f: *mut PoismixFit) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

/// New measure handle holding a copy of the estimate.
///
/// # Safety
/// `f` must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn poismix_fit_estimate(f: *const PoismixFit, out: *mut *mut PoismixMeasure) -> PoismixStatus {
    guard(|| {
        let m = borrow(f, "fit")?.0.estimate.clone();
        write(out, Box::into_raw(Box::new(PoismixMeasure(m))), "out")
    })
}

/// Final log-likelihood, iteration count and convergence flag. Any output
/// pointer may be NULL.
///
/// # Safety
/// `f` must be live; non-NULL outputs writable.
#[no_mangle]
pub unsafe extern "C" fn poismix_fit_summary(
    f: *const PoismixFit,
    phi_out: *mut f64,
    iterations_out: *mut usize,
    converged_out: *mut bool,
) -> PoismixStatus {
    guard(|| {
        let f = &borrow(f, "fit")?.0;
        if !phi_out.is_null() {
            phi_out.write(f.phi());
        }
        if !iterations_out.is_null() {
            iterations_out.write(f.iterations);
        }
        if !converged_out.is_null() {
            converged_out.write(f.converged);
        }
        Ok(())
    })
}

/// W1 distance between two measures.
///
/// # Safety
/// Handles must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn poismix_w1_measures(
    a: *const PoismixMeasure,
    b: *const PoismixMeasure,
    out: *mut f64,
) -> PoismixStatus {
    guard(|| {
        let (a, b) = (&borrow(a, "a")?.0, &borrow(b, "b")?.0);
        if a.bound() != b.bound() {
            return Err(Error::Domain("measures have different bounds".into()).into());
        }
        write(out, w1_measures(a, b), "out")
    })
}

/// W1 distance between the Poisson mixtures (unit read depth) of two
/// measures, each truncated once its tail mass is below `tail_tol`.
///
/// # Safety
/// Handles must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn poismix_w1_mixtures(
    a: *const PoismixMeasure,
    b: *const PoismixMeasure,
    tail_tol: f64,
    out: *mut f64,
) -> PoismixStatus {
    guard(|| {
        let ha = poisson_smooth(&borrow(a, "a")?.0, tail_tol)?;
        let hb = poisson_smooth(&borrow(b, "b")?.0, tail_tol)?;
        write(out, w1_pmfs(&ha, &hb), "out")
    })
}

unsafe fn study(
    d: *const f64,
    n: usize,
    groups: *const usize,
) -> Result<(DistanceMatrix, StudyLayout), Failure> {
    let entries = slice_in(d, n * n, "distances")?;
    let rows: Vec<Vec<f64>> = entries.chunks(n.max(1)).map(<[f64]>::to_vec).collect();
    let dm = DistanceMatrix::from_rows(&rows)?;
    let layout = StudyLayout::new(slice_in(groups, n, "groups")?.to_vec())?;
    Ok((dm, layout))
}

/// Pseudo-F of an `n x n` row-major squared-distance matrix with group
/// labels `0..K`.
///
/// # Safety
/// `d` must hold `n * n` doubles and `groups` `n` labels; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn poismix_pseudo_f(
    d: *const f64,
    n: usize,
    groups: *const usize,
    out: *mut f64,
) -> PoismixStatus {
    guard(|| {
        let (dm, layout) = study(d, n, groups)?;
        write(out, pseudo_f(&dm, &layout)?, "out")
    })
}

/// Monte Carlo permutation test. A degenerate statistic yields
/// `statistic = NaN` and `p_value = 1`.
///
/// # Safety
/// As for [`poismix_pseudo_f`]; outputs writable.
#[no_mangle]
pub unsafe extern "C" fn poismix_permutation_test(
    d: *const f64,
    n: usize,
    groups: *const usize,
    n_perm: usize,
    seed: u64,
    statistic_out: *mut f64,
    p_value_out: *mut f64,
) -> PoismixStatus {
    guard(|| {
        let (dm, layout) = study(d, n, groups)?;
        let t = permutation_test(&dm, &layout, n_perm, seed, &[])?;
        write(statistic_out, t.statistic.unwrap_or(f64::NAN), "statistic_out")?;
        write(p_value_out, t.p_value, "p_value_out")
    })
}

/// Benjamini-Hochberg at level `q`. Writes one rejection flag and one
/// adjusted p-value per input.
///
/// # Safety
/// `p_values`, `rejected` and `adjusted` must each hold `m` elements.
#[no_mangle]
pub unsafe extern "C" fn poismix_benjamini_hochberg(
    p_values: *const f64,
    m: usize,
    q: f64,
    rejected: *mut bool,
    adjusted: *mut f64,
) -> PoismixStatus {
    guard(|| {
        let r = benjamini_hochberg(slice_in(p_values, m, "p_values")?, q)?;
        slice_out(rejected, m, "rejected")?.copy_from_slice(&r.rejected);
        slice_out(adjusted, m, "adjusted")?.copy_from_slice(&r.adjusted);
        Ok(())
    })
}
