//! C ABI over `honeycomb-walk`.
//!
//! Every function returns an [`HcStatus`] and writes results through out
//! pointers. On failure a message is kept per thread and can be read with
//! [`hc_last_error`]. Environments are opaque handles created by the
//! `hc_env_new_*` functions and released with [`hc_env_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use honeycomb_walk::environment::{EnvError, Environment, EnvironmentSpec, Orientation};
use honeycomb_walk::lattice_walk::{simulate_walk_with, WalkOptions};
use honeycomb_walk::oracle::{joint_pn_exact, OracleError};
use honeycomb_walk::skeleton::return_prob_exact;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ResourceLimit = 3,
    BufferTooSmall = 4,
    Panic = 5,
}

/// Opaque environment handle.
pub struct HcEnvironment {
    inner: Environment,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct HcJointPn {
    /// `P(X_2n = 0, Y_2n = 0)`
    pub p: f64,
    /// `P(Y_2n = 0)`
    pub y_return: f64,
    /// mass dropped by truncation, bounds the error of `p`
    pub deficit: f64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct HcWalkSummary {
    pub n_steps: u64,
    pub n_returns: u64,
    /// step of the first return to the origin, or -1
    pub first_return: i64,
    pub n_vertical: u64,
    pub final_x: i64,
    pub final_y: i64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let c = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn env_status(e: EnvError) -> HcStatus {
    set_error(e.to_string());
    HcStatus::InvalidArgument
}

fn oracle_status(e: OracleError) -> HcStatus {
    let status = match e {
        OracleError::ResourceLimit { .. } => HcStatus::ResourceLimit,
        _ => HcStatus::InvalidArgument,
    };
    set_error(e.to_string());
    status
}

fn guard(f: impl FnOnce() -> HcStatus) -> HcStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            HcStatus::Panic
        }
    }
}

/// Reads a ±1 table. A null pointer is accepted only with `len == 0`.
unsafe fn read_table(table: *const i8, len: usize) -> Result<Vec<Orientation>, HcStatus> {
    if len == 0 {
        return Ok(Vec::new());
    }
    if table.is_null() {
        set_error("table is null");
        return Err(HcStatus::NullPointer);
    }
    // SAFETY: caller guarantees `len` readable entries.
    let raw = unsafe { std::slice::from_raw_parts(table, len) };
    raw.iter()
        .map(|&v| {
            Orientation::from_sign(v as i64).ok_or_else(|| {
                set_error(format!("InvalidParam: table entry {v} is not +1 or -1"));
                HcStatus::InvalidArgument
            })
        })
        .collect()
}

unsafe fn make_env(spec: EnvironmentSpec, out: *mut *mut HcEnvironment) -> HcStatus {
    match Environment::new(spec) {
        Ok(inner) => {
            // SAFETY: `out` checked non-null by the caller of this helper.
            unsafe { *out = Box::into_raw(Box::new(HcEnvironment { inner })) };
            HcStatus::Ok
        }
        Err(e) => env_status(e),
    }
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn hc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hc_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => c"",
    };
    VERSION.as_ptr()
}

/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn hc_env_new_rademacher(seed: u64, out: *mut *mut HcEnvironment) -> HcStatus {
    guard(|| {
        if out.is_null() {
            set_error("out is null");
            return HcStatus::NullPointer;
        }
        unsafe { make_env(EnvironmentSpec::rademacher(seed), out) }
    })
}

/// Periodic environment from a table of `len` entries, each +1 or -1.
///
/// # Safety
/// `table` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hc_env_new_periodic(table: *const i8, len: usize, out: *mut *mut HcEnvironment) -> HcStatus {
    guard(|| {
        if out.is_null() {
            set_error("out is null");
            return HcStatus::NullPointer;
        }
        match unsafe { read_table(table, len) } {
            Ok(t) => unsafe { make_env(EnvironmentSpec::periodic(t), out) },
            Err(s) => s,
        }
    })
}

/// Periodic table with rows resampled at random with probability
/// `min(1, c / |y|^beta)`.
///
/// # Safety
/// Same contract as [`hc_env_new_periodic`].
#[no_mangle]
pub unsafe extern "C" fn hc_env_new_perturbed(
    seed: u64,
    table: *const i8,
    len: usize,
    c: f64,
    beta: f64,
    out: *mut *mut HcEnvironment,
) -> HcStatus {
    guard(|| {
        if out.is_null() {
            set_error("out is null");
            return HcStatus::NullPointer;
        }
        match unsafe { read_table(table, len) } {
            Ok(t) => unsafe { make_env(EnvironmentSpec::perturbed(seed, t, c, beta), out) },
            Err(s) => s,
        }
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `env` must come from an `hc_env_new_*` call and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn hc_env_free(env: *mut HcEnvironment) {
    if !env.is_null() {
        // SAFETY: ownership returns to Rust exactly once per handle.
        drop(unsafe { Box::from_raw(env) });
    }
}

/// Writes the orientation of row `y` (+1 or -1).
///
/// # Safety
/// `env` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hc_env_orientation(env: *const HcEnvironment, y: i64, out: *mut i8) -> HcStatus {
    guard(|| {
        let (Some(env), false) = (unsafe { env.as_ref() }, out.is_null()) else {
            set_error("null argument");
            return HcStatus::NullPointer;
        };
        unsafe { *out = env.inner.orientation(y).sign() as i8 };
        HcStatus::Ok
    })
}

/// Writes the 64-character hex digest plus a NUL into `buf`, which must hold
/// at least 65 bytes.
///
/// # Safety
/// `env` must be a live handle and `buf` must have `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn hc_env_digest(env: *const HcEnvironment, buf: *mut c_char, cap: usize) -> HcStatus {
    guard(|| {
        let (Some(env), false) = (unsafe { env.as_ref() }, buf.is_null()) else {
            set_error("null argument");
            return HcStatus::NullPointer;
        };
        let d = env.inner.digest();
        if cap < d.len() + 1 {
            set_error(format!("buffer holds {cap} bytes, need {}", d.len() + 1));
            return HcStatus::BufferTooSmall;
        }
        // SAFETY: capacity checked above.
        unsafe {
            ptr::copy_nonoverlapping(d.as_ptr().cast::<c_char>(), buf, d.len());
            *buf.add(d.len()) = 0;
        }
        HcStatus::Ok
    })
}

/// `P(Y_2n = 0)` for the vertical skeleton.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hc_return_prob_exact(n: usize, out: *mut f64) -> HcStatus {
    guard(|| {
        if out.is_null() {
            set_error("out is null");
            return HcStatus::NullPointer;
        }
        unsafe { *out = return_prob_exact(n) };
        HcStatus::Ok
    })
}

/// Exact joint return probability at time `2n` under `env`.
///
/// # Safety
/// `env` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hc_joint_pn(
    env: *const HcEnvironment,
    n: usize,
    tail_tol: f64,
    out: *mut HcJointPn,
) -> HcStatus {
    guard(|| {
        let (Some(env), false) = (unsafe { env.as_ref() }, out.is_null()) else {
            set_error("null argument");
            return HcStatus::NullPointer;
        };
        match joint_pn_exact(&env.inner, n, tail_tol) {
            Ok(j) => {
                unsafe { *out = HcJointPn { p: j.p, y_return: j.y_return, deficit: j.deficit } };
                HcStatus::Ok
            }
            Err(e) => oracle_status(e),
        }
    })
}

/// Runs one walk of `n_steps` steps from the origin and writes its summary.
///
/// # Safety
/// `env` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hc_simulate_walk(
    env: *const HcEnvironment,
    n_steps: u64,
    seed: u64,
    out: *mut HcWalkSummary,
) -> HcStatus {
    guard(|| {
        let (Some(env), false) = (unsafe { env.as_ref() }, out.is_null()) else {
            set_error("null argument");
            return HcStatus::NullPointer;
        };
        let t = simulate_walk_with(&env.inner, n_steps, seed, &WalkOptions { detail_limit: 0 });
        let s = &t.summary;
        unsafe {
            *out = HcWalkSummary {
                n_steps: s.n_steps,
                n_returns: s.n_returns,
                first_return: s.first_return.map_or(-1, |v| v as i64),
                n_vertical: s.n_vertical,
                final_x: t.final_position.x,
                final_y: t.final_position.y,
            }
        };
        HcStatus::Ok
    })
}
