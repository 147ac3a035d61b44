//! C ABI over `pubbias`.
//!
//! Every function returns a [`PbStatus`]; on failure the message is available
//! from [`pb_last_error_message`] on the same thread. Datasets are opaque
//! handles released with [`pb_dataset_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use pubbias::extended::InnerMode;
use pubbias::{data, Error, MetaDataset, OptConfig, Seed};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InputError = 3,
    NotConverged = 4,
    Internal = 5,
}

/// Opaque dataset handle.
pub struct PbDataset {
    inner: MetaDataset,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct PbFit {
    pub mu_hat: f64,
    pub tau_hat: f64,
    pub se_mu: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub loglik: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct PbBound {
    pub p: f64,
    pub lower: f64,
    pub upper: f64,
    pub tau_used: f64,
}

/// Extended bound with its parts. `degraded` is nonzero when either solve
/// missed the feasibility tolerance.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct PbExtBound {
    pub p: f64,
    pub lower: f64,
    pub upper: f64,
    pub cj_lower: f64,
    pub cj_upper: f64,
    pub a1_lower: f64,
    pub a1_upper: f64,
    pub ratio: f64,
    pub degraded: i32,
}

/// `inner_mode`: 0 discrete, 1 analytic.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PbOptConfig {
    pub k1: usize,
    pub k2: usize,
    pub kprime_stride: usize,
    pub max_iters: usize,
    pub restarts: usize,
    pub screen_iters: usize,
    pub refine_top: usize,
    pub floor_starts: usize,
    pub step_init: f64,
    pub tol_obj: f64,
    pub tol_feas: f64,
    pub inner_mode: u32,
    pub seed: u64,
}

impl From<OptConfig> for PbOptConfig {
    fn from(c: OptConfig) -> Self {
        PbOptConfig {
            k1: c.k1,
            k2: c.k2,
            kprime_stride: c.kprime_stride,
            max_iters: c.max_iters,
            restarts: c.restarts,
            screen_iters: c.screen_iters,
            refine_top: c.refine_top,
            floor_starts: c.floor_starts,
            step_init: c.step_init,
            tol_obj: c.tol_obj,
            tol_feas: c.tol_feas,
            inner_mode: match c.inner_mode {
                InnerMode::Discrete => 0,
                InnerMode::Analytic => 1,
            },
            seed: c.seed.0,
        }
    }
}

impl PbOptConfig {
    fn to_config(self) -> Result<OptConfig, (PbStatus, String)> {
        let inner_mode = match self.inner_mode {
            0 => InnerMode::Discrete,
            1 => InnerMode::Analytic,
            m => return Err((PbStatus::InvalidArgument, format!("unknown inner mode {m}"))),
        };
        Ok(OptConfig {
            k1: self.k1,
            k2: self.k2,
            kprime_stride: self.kprime_stride,
            max_iters: self.max_iters,
            step_init: self.step_init,
            tol_obj: self.tol_obj,
            tol_feas: self.tol_feas,
            restarts: self.restarts,
            inner_mode,
            screen_iters: self.screen_iters,
            refine_top: self.refine_top,
            floor_starts: self.floor_starts,
            seed: Seed(self.seed),
        })
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> PbStatus {
    match e {
        Error::NotConverged { .. } | Error::ZeroMass(_) => PbStatus::NotConverged,
        Error::Domain(..) | Error::Config(_) | Error::UnknownDataset(_) | Error::ModelSpec { .. } => {
            PbStatus::InvalidArgument
        }
        _ => PbStatus::InputError,
    }
}

/// Runs `f`, recording the error message and mapping panics to `Internal`.
fn guard<F>(f: F) -> PbStatus
where
    F: FnOnce() -> Result<(), (PbStatus, String)>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            PbStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            PbStatus::Internal
        }
    }
}

fn lib(e: Error) -> (PbStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (PbStatus, String) {
    (PbStatus::NullPointer, format!("{what} is null"))
}

unsafe fn dataset<'a>(ds: *const PbDataset) -> Result<&'a MetaDataset, (PbStatus, String)> {
    ds.as_ref().map(|d| &d.inner).ok_or_else(|| null("dataset"))
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn pb_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, a static string.
#[no_mangle]
pub extern "C" fn pb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Builds a dataset from `n` effects `y` and standard errors `s`.
///
/// # Safety
/// `y` and `s` must point to `n` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pb_dataset_from_arrays(
    y: *const f64,
    s: *const f64,
    n: usize,
    out: *mut *mut PbDataset,
) -> PbStatus {
    guard(|| {
        if y.is_null() || s.is_null() {
            return Err(null("y or s"));
        }
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = ptr::null_mut();
        let d = MetaDataset::from_pairs(std::slice::from_raw_parts(y, n), std::slice::from_raw_parts(s, n)).map_err(lib)?;
        *out = Box::into_raw(Box::new(PbDataset { inner: d }));
        Ok(())
    })
}

/// Loads an embedded dataset by name (`corticosteroids`, `clopidogrel`).
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pb_dataset_embedded(name: *const c_char, out: *mut *mut PbDataset) -> PbStatus {
    guard(|| {
        if name.is_null() {
            return Err(null("name"));
        }
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = ptr::null_mut();
        let name = CStr::from_ptr(name).to_str().map_err(|e| (PbStatus::InvalidArgument, e.to_string()))?;
        let d = data::embedded(name).map_err(lib)?;
        *out = Box::into_raw(Box::new(PbDataset { inner: d }));
        Ok(())
    })
}

/// # Safety
/// `ds` must come from this library and not be used afterwards. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn pb_dataset_free(ds: *mut PbDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Number of studies, 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pb_dataset_len(ds: *const PbDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.len())
}

/// # Safety
/// `ds` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pb_fit_ml(ds: *const PbDataset, out: *mut PbFit) -> PbStatus {
    guard(|| {
        let d = dataset(ds)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let f = pubbias::fit_ml(d).map_err(lib)?;
        *out = PbFit {
            mu_hat: f.mu_hat,
            tau_hat: f.tau_hat,
            se_mu: f.se_mu,
            ci_lower: f.ci_mu.0,
            ci_upper: f.ci_mu.1,
            loglik: f.loglik,
        };
        Ok(())
    })
}

/// Copas-Jackson bound on the bias at selection probability `p`.
///
/// # Safety
/// `ds` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pb_cj_bound(ds: *const PbDataset, tau: f64, p: f64, out: *mut PbBound) -> PbStatus {
    guard(|| {
        let d = dataset(ds)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let b = pubbias::cj_bound(d, tau, p).map_err(lib)?;
        *out = PbBound { p: b.p, lower: b.lower, upper: b.upper, tau_used: b.tau_used };
        Ok(())
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pb_opt_config_default(out: *mut PbOptConfig) -> PbStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = OptConfig::default().into();
        Ok(())
    })
}

/// Extended bound at selection probability `p`; `config` may be null for
/// the defaults.
///
/// # Safety
/// `ds` must be a live handle, `config` null or readable, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pb_ext_bound(
    ds: *const PbDataset,
    tau: f64,
    mu: f64,
    p: f64,
    config: *const PbOptConfig,
    out: *mut PbExtBound,
) -> PbStatus {
    guard(|| {
        let d = dataset(ds)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let cfg = match config.as_ref() {
            Some(c) => c.to_config()?,
            None => OptConfig::default(),
        };
        let e = pubbias::extended_bound(d, tau, mu, p, &cfg).map_err(lib)?;
        *out = PbExtBound {
            p,
            lower: e.bound.lower,
            upper: e.bound.upper,
            cj_lower: e.cj.lower,
            cj_upper: e.cj.upper,
            a1_lower: e.a1.bound.lower,
            a1_upper: e.a1.bound.upper,
            ratio: e.ratio,
            degraded: e.a1.degraded() as i32,
        };
        Ok(())
    })
}
