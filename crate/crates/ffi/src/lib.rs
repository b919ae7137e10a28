//! C ABI for the `nonlocal-lwr` solver.
//!
//! Every function returns an [`NllStatus`]. On failure a message is kept
//! per thread and can be read with [`nll_last_error`]. Handles are opaque
//! and must be released with the matching `_free` function. Panics never
//! cross the boundary; they surface as `NLL_STATUS_PANIC`.
//!
//! Boundary and engine selectors are passed as `uint32_t` holding an
//! [`NllBoundary`] or [`NllEngine`] value; anything else is
//! `NLL_STATUS_INVALID_ARGUMENT`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use nonlocal_lwr::grid::{total_variation, Boundary, Field};
use nonlocal_lwr::harness::{self, Plan};
use nonlocal_lwr::kernels::{DiscreteKernel, Engine, KernelSpec};
use nonlocal_lwr::models::VelocityModel;
use nonlocal_lwr::solver::{godunov_flux, run, SimulationTrace};
use nonlocal_lwr::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NllStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// The output buffer is too short; the required length was written.
    BufferTooSmall = 3,
    Domain = 4,
    Config = 5,
    Unsupported = 6,
    Aborted = 7,
    Io = 8,
    Parse = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NllBoundary {
    /// Constant states `u_minus` left and `u_plus` right of the grid.
    FarField = 0,
    Periodic = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NllEngine {
    Auto = 0,
    Direct = 1,
    Fft = 2,
    ExponentialRecursion = 3,
}

/// A kernel discretised for one `(epsilon, dx)`.
pub struct NllKernel {
    inner: DiscreteKernel,
}

/// A completed single run.
pub struct NllTrace {
    inner: SimulationTrace,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Fail(NllStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let s = match &e {
            Error::Domain(_) => NllStatus::Domain,
            Error::Config(_) => NllStatus::Config,
            Error::Unsupported(_) => NllStatus::Unsupported,
            Error::Aborted { .. } => NllStatus::Aborted,
            Error::Parse(_) => NllStatus::Parse,
            Error::Io(_) => NllStatus::Io,
        };
        Fail(s, e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(NllStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(NllStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> NllStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            NllStatus::Ok
        }
        Ok(Err(Fail(s, msg))) => {
            set_last_error(&msg);
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(&format!("internal panic: {msg}"));
            NllStatus::Panic
        }
    }
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn slice<'a>(p: *const f64, n: usize, what: &str) -> Result<&'a [f64], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn put<T>(p: *mut T, v: T, what: &str) -> Result<(), Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    p.write(v);
    Ok(())
}

/// Copies `src` into `out[..cap]`, reporting the length through `written`.
unsafe fn copy_out(src: &[f64], out: *mut f64, cap: usize, written: *mut usize) -> Result<(), Fail> {
    if !written.is_null() {
        written.write(src.len());
    }
    if cap < src.len() {
        return Err(Fail(
            NllStatus::BufferTooSmall,
            format!("buffer holds {cap} values, {} needed", src.len()),
        ));
    }
    if src.is_empty() {
        return Ok(());
    }
    if out.is_null() {
        return Err(null("out"));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    Ok(())
}

fn boundary(kind: u32, u_minus: f64, u_plus: f64) -> Result<Boundary, Fail> {
    match kind {
        0 => Ok(Boundary::FarField { u_minus, u_plus }),
        1 => Ok(Boundary::Periodic),
        k => Err(invalid(format!("unknown boundary selector {k}"))),
    }
}

fn engine(kind: u32) -> Result<Engine, Fail> {
    match kind {
        0 => Ok(Engine::Auto),
        1 => Ok(Engine::Direct),
        2 => Ok(Engine::Fft),
        3 => Ok(Engine::ExponentialRecursion),
        k => Err(invalid(format!("unknown engine selector {k}"))),
    }
}

fn kernel_spec(id: &str) -> Result<KernelSpec, Fail> {
    match id {
        "exponential" => Ok(KernelSpec::exponential()),
        "truncated_linear" => Ok(KernelSpec::truncated_linear()),
        "indicator" => Ok(KernelSpec::indicator()),
        "gaussian_even" => Ok(KernelSpec::gaussian_even()),
        other => Err(Fail(NllStatus::Config, format!("unknown kernel `{other}`"))),
    }
}

fn velocity(id: &str) -> Result<VelocityModel, Fail> {
    match id {
        "linear" => Ok(VelocityModel::linear()),
        "quadratic" => Ok(VelocityModel::quadratic_table()),
        other => Err(Fail(NllStatus::Config, format!("unknown velocity `{other}`"))),
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn nll_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or an empty string.
/// Valid until the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn nll_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Discretises kernel `id` (`exponential`, `truncated_linear`,
/// `indicator`, `gaussian_even`) at scale `epsilon` on spacing `dx`.
///
/// # Safety
/// `id` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nll_kernel_new(
    id: *const c_char,
    epsilon: f64,
    dx: f64,
    out: *mut *mut NllKernel,
) -> NllStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        out.write(ptr::null_mut());
        let spec = kernel_spec(c_str(id, "id")?)?;
        let inner = spec.discretize(epsilon, dx)?;
        out.write(Box::into_raw(Box::new(NllKernel { inner })));
        Ok(())
    })
}

/// # Safety
/// `k` must come from [`nll_kernel_new`] and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn nll_kernel_free(k: *mut NllKernel) {
    if !k.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(k))));
    }
}

/// Number of weights and the cell offset of the first one.
///
/// # Safety
/// `k` must be a live kernel handle; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn nll_kernel_shape(k: *const NllKernel, len: *mut usize, offset: *mut isize) -> NllStatus {
    guard(|| {
        let k = k.as_ref().ok_or_else(|| null("kernel"))?;
        put(len, k.inner.weights().len(), "len")?;
        put(offset, k.inner.offset(), "offset")
    })
}

/// Copies the weights into `out`.
///
/// # Safety
/// `k` must be a live kernel handle; `out` must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn nll_kernel_weights(
    k: *const NllKernel,
    out: *mut f64,
    cap: usize,
    written: *mut usize,
) -> NllStatus {
    guard(|| {
        let k = k.as_ref().ok_or_else(|| null("kernel"))?;
        copy_out(k.inner.weights(), out, cap, written)
    })
}

/// `w = u * eta_eps` at the left face of each of the `n` cells.
///
/// # Safety
/// `u` and `w_out` must hold `n` doubles; `k` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn nll_convolve(
    k: *const NllKernel,
    u: *const f64,
    n: usize,
    boundary_kind: u32,
    u_minus: f64,
    u_plus: f64,
    engine_kind: u32,
    w_out: *mut f64,
) -> NllStatus {
    guard(|| {
        let k = k.as_ref().ok_or_else(|| null("kernel"))?;
        let b = boundary(boundary_kind, u_minus, u_plus)?;
        let e = engine(engine_kind)?;
        let f = Field::new(slice(u, n, "u")?.to_vec())?;
        let w = k.inner.convolve(&f, &b, e)?;
        copy_out(w.values(), w_out, n, ptr::null_mut())
    })
}

/// Total variation of `u`, including the jumps to the far-field states.
///
/// # Safety
/// `u` must hold `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nll_total_variation(
    u: *const f64,
    n: usize,
    boundary_kind: u32,
    u_minus: f64,
    u_plus: f64,
    out: *mut f64,
) -> NllStatus {
    guard(|| {
        let b = boundary(boundary_kind, u_minus, u_plus)?;
        let f = Field::new(slice(u, n, "u")?.to_vec())?;
        put(out, total_variation(&f, &b), "out")
    })
}

/// Godunov flux of `f(u) = u V(u)` for velocity `linear` or `quadratic`.
///
/// # Safety
/// `velocity_id` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nll_godunov_flux(
    velocity_id: *const c_char,
    u_l: f64,
    u_r: f64,
    out: *mut f64,
) -> NllStatus {
    guard(|| {
        let v = velocity(c_str(velocity_id, "velocity_id")?)?;
        if !(0.0..=1.0).contains(&u_l) || !(0.0..=1.0).contains(&u_r) {
            return Err(Fail(NllStatus::Domain, format!("states ({u_l}, {u_r}) outside [0, 1]")));
        }
        put(out, godunov_flux(&v, u_l, u_r), "out")
    })
}

/// Parses a `single_run` configuration from TOML text and runs it in
/// memory. Relative file names resolve against the working directory.
///
/// # Safety
/// `config_toml` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nll_run_config(config_toml: *const c_char, out: *mut *mut NllTrace) -> NllStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        out.write(ptr::null_mut());
        let cfg = harness::parse_config_str(c_str(config_toml, "config_toml")?, Path::new("."))?;
        let Plan::Single(p) = cfg.plan else {
            return Err(Fail(
                NllStatus::Unsupported,
                format!(
                    "experiment `{}` writes artifacts; use nll_run_experiment",
                    cfg.experiment.id()
                ),
            ));
        };
        let inner = run(&p.model, &p.scheme, &p.grid, &p.snapshot_times)?;
        out.write(Box::into_raw(Box::new(NllTrace { inner })));
        Ok(())
    })
}

/// Runs any experiment from a config file, writing artifacts into
/// `out_dir`. `exit_code` receives the command-line exit status.
///
/// # Safety
/// Paths must be NUL-terminated strings; `exit_code` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nll_run_experiment(
    config_path: *const c_char,
    out_dir: *const c_char,
    create: bool,
    exit_code: *mut i32,
) -> NllStatus {
    guard(|| {
        if exit_code.is_null() {
            return Err(null("exit_code"));
        }
        let path = c_str(config_path, "config_path")?;
        let dir = c_str(out_dir, "out_dir")?;
        let res = harness::parse_config(Path::new(path))
            .and_then(|cfg| harness::run_experiment(&cfg, Path::new(dir), create));
        match res {
            Ok(o) => {
                exit_code.write(o.exit_code);
                Ok(())
            }
            Err(e) => {
                exit_code.write(e.exit_code());
                Err(e.into())
            }
        }
    })
}

/// # Safety
/// `t` must come from [`nll_run_config`] and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn nll_trace_free(t: *mut NllTrace) {
    if !t.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(t))));
    }
}

/// Cell count, stored snapshot count and number of time steps.
///
/// # Safety
/// `t` must be a live trace handle; outputs may be null to skip them.
#[no_mangle]
pub unsafe extern "C" fn nll_trace_info(
    t: *const NllTrace,
    n_cells: *mut usize,
    n_snapshots: *mut usize,
    n_steps: *mut usize,
) -> NllStatus {
    guard(|| {
        let t = &t.as_ref().ok_or_else(|| null("trace"))?.inner;
        if !n_cells.is_null() {
            n_cells.write(t.grid.n_cells());
        }
        if !n_snapshots.is_null() {
            n_snapshots.write(t.times.len());
        }
        if !n_steps.is_null() {
            n_steps.write(t.n_steps);
        }
        Ok(())
    })
}

/// Cell centres.
///
/// # Safety
/// `t` must be a live trace handle; `out` must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn nll_trace_centers(
    t: *const NllTrace,
    out: *mut f64,
    cap: usize,
    written: *mut usize,
) -> NllStatus {
    guard(|| {
        let t = &t.as_ref().ok_or_else(|| null("trace"))?.inner;
        copy_out(&t.grid.centers(), out, cap, written)
    })
}

fn snapshot_index(t: &SimulationTrace, i: usize) -> Result<(), Fail> {
    if i >= t.times.len() {
        return Err(invalid(format!("snapshot {i} out of range (have {})", t.times.len())));
    }
    Ok(())
}

/// Time of snapshot `i`.
///
/// # Safety
/// `t` must be a live trace handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nll_trace_time(t: *const NllTrace, i: usize, out: *mut f64) -> NllStatus {
    guard(|| {
        let t = &t.as_ref().ok_or_else(|| null("trace"))?.inner;
        snapshot_index(t, i)?;
        put(out, t.times[i], "out")
    })
}

/// Density `u` of snapshot `i`.
///
/// # Safety
/// `t` must be a live trace handle; `out` must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn nll_trace_u(
    t: *const NllTrace,
    i: usize,
    out: *mut f64,
    cap: usize,
    written: *mut usize,
) -> NllStatus {
    guard(|| {
        let t = &t.as_ref().ok_or_else(|| null("trace"))?.inner;
        snapshot_index(t, i)?;
        copy_out(t.fields_u[i].values(), out, cap, written)
    })
}

/// Convolution `w` of snapshot `i`; `NLL_STATUS_UNSUPPORTED` for local runs.
///
/// # Safety
/// `t` must be a live trace handle; `out` must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn nll_trace_w(
    t: *const NllTrace,
    i: usize,
    out: *mut f64,
    cap: usize,
    written: *mut usize,
) -> NllStatus {
    guard(|| {
        let t = &t.as_ref().ok_or_else(|| null("trace"))?.inner;
        snapshot_index(t, i)?;
        if !t.has_w() {
            return Err(Fail(NllStatus::Unsupported, "local run has no w".into()));
        }
        copy_out(t.fields_w[i].values(), out, cap, written)
    })
}
