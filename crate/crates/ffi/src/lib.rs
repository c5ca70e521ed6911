//! C interface to the lattice simulator and the cycle estimators.
//!
//! Every function returns an [`ExfrontStatus`]. On failure the message is kept
//! per thread and can be copied out with [`exfront_last_error`]. Handles are
//! opaque and must be released with [`exfront_sim_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use exfront::lattice::{front_window, SimConfig, Simulation};
use exfront::regen::{regen_replicas, RegenMode, RegenParams};
use exfront::stats::estimates::{cycle_estimates, EstimateOptions};
use exfront::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExfrontStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidConfig = 2,
    WindowUnderflow = 3,
    InsufficientData = 4,
    BufferTooSmall = 5,
    Internal = 6,
    Panic = 7,
}

/// Detector used by [`exfront_estimate_speeds`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExfrontDetector {
    ZeroRange = 0,
    Holes = 1,
}

/// Point estimates with standard errors.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ExfrontSpeeds {
    pub v: f64,
    pub v_se: f64,
    pub w: f64,
    pub w_se: f64,
    pub sigma_r: f64,
    pub sigma_p: f64,
    pub cycles: u64,
}

/// Opaque simulation handle.
pub struct ExfrontSim {
    sim: Simulation,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn remember(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> ExfrontStatus {
    match e {
        Error::Config(_) | Error::WidthTooLarge { .. } => ExfrontStatus::InvalidConfig,
        Error::WindowUnderflow { .. } | Error::NoEmptySite => ExfrontStatus::WindowUnderflow,
        Error::Insufficient(_) => ExfrontStatus::InsufficientData,
        _ => ExfrontStatus::Internal,
    }
}

fn guard<F: FnOnce() -> Result<(), ExfrontStatus>>(f: F) -> ExfrontStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ExfrontStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            remember("panic inside exfront".into());
            ExfrontStatus::Panic
        }
    }
}

fn fail(e: Error) -> ExfrontStatus {
    let s = status_of(&e);
    remember(e.to_string());
    s
}

fn null(what: &str) -> ExfrontStatus {
    remember(format!("{what} is null"));
    ExfrontStatus::NullPointer
}

/// Copies the last error message of this thread into `buf` (NUL terminated,
/// truncated to `len`). Returns the full message length, 0 if there is none.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn exfront_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn exfront_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a simulation started from a single particle at the origin.
///
/// # Safety
/// `out` must be null or valid for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn exfront_sim_new(rho: f64, window: usize, seed: u64, out: *mut *mut ExfrontSim) -> ExfrontStatus {
    if out.is_null() {
        return null("out");
    }
    guard(|| {
        let cfg = SimConfig { rho, window, seed, ..Default::default() };
        cfg.validate().map_err(fail)?;
        let sim = Simulation::new(&cfg).map_err(fail)?;
        *out = Box::into_raw(Box::new(ExfrontSim { sim }));
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `sim` must be null or a handle from [`exfront_sim_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn exfront_sim_free(sim: *mut ExfrontSim) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Advances the simulation clock to `t`.
///
/// # Safety
/// `sim` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn exfront_sim_run_until(sim: *mut ExfrontSim, t: f64) -> ExfrontStatus {
    let Some(h) = sim.as_mut() else { return null("sim") };
    guard(|| {
        if !t.is_finite() {
            return Err(fail(Error::Config(format!("time must be finite, got {t}"))));
        }
        while h.sim.step_until(t).map_err(fail)?.is_some() {}
        Ok(())
    })
}

/// Current time, front position `r` and counter `p`. Any output may be null.
///
/// # Safety
/// `sim` must be null or a live handle; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn exfront_sim_front(sim: *const ExfrontSim, time: *mut f64, front: *mut i64, counter: *mut i64) -> ExfrontStatus {
    let Some(h) = sim.as_ref() else { return null("sim") };
    if !time.is_null() {
        *time = h.sim.time();
    }
    if !front.is_null() {
        *front = h.sim.state().front();
    }
    if !counter.is_null() {
        *counter = h.sim.state().counter();
    }
    ExfrontStatus::Ok
}

/// Occupation of the `width` sites ending at the front, front site first.
///
/// # Safety
/// `sim` must be null or a live handle; `buf` must be valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn exfront_sim_window(sim: *const ExfrontSim, width: usize, buf: *mut u8, len: usize) -> ExfrontStatus {
    let Some(h) = sim.as_ref() else { return null("sim") };
    if buf.is_null() {
        return null("buf");
    }
    if len < width {
        remember(format!("buffer holds {len} bytes, need {width}"));
        return ExfrontStatus::BufferTooSmall;
    }
    guard(|| {
        let w = front_window(h.sim.state(), width).map_err(fail)?;
        std::ptr::copy_nonoverlapping(w.as_ptr(), buf, w.len());
        Ok(())
    })
}

/// Runs `replicas` independent regeneration runs and returns the ratio estimates.
///
/// # Safety
/// `out` must be null or valid for writing one [`ExfrontSpeeds`].
#[no_mangle]
pub unsafe extern "C" fn exfront_estimate_speeds(
    rho: f64,
    alpha1: f64,
    alpha2: f64,
    horizon: f64,
    replicas: usize,
    detector: ExfrontDetector,
    seed: u64,
    out: *mut ExfrontSpeeds,
) -> ExfrontStatus {
    if out.is_null() {
        return null("out");
    }
    guard(|| {
        let mut p = RegenParams::new(rho, alpha1, alpha2, horizon).map_err(fail)?;
        p.mode = match detector {
            ExfrontDetector::ZeroRange => RegenMode::ZrStoppingTimes,
            ExfrontDetector::Holes => RegenMode::AltHoles,
        };
        let runs = regen_replicas(&p, replicas, seed).map_err(fail)?;
        let records: Vec<_> = runs.into_iter().flat_map(|r| r.records).collect();
        let e = cycle_estimates(&records, &EstimateOptions { seed, ..Default::default() }).map_err(fail)?;
        *out = ExfrontSpeeds {
            v: e.v_hat.value,
            v_se: e.v_hat.se,
            w: e.w_hat.value,
            w_se: e.w_hat.se,
            sigma_r: e.sigma_r_hat.value,
            sigma_p: e.sigma_p_hat.value,
            cycles: e.cycles as u64,
        };
        Ok(())
    })
}
