//! C ABI for the dpbyz toolkit.
//!
//! Every function returns a [`DpbyzStatus`]; results are written through out
//! pointers. On failure the message of the last error on the calling thread
//! is available from [`dpbyz_last_error`]. Simulations are opaque handles
//! created by [`dpbyz_simulation_new`] and released by
//! [`dpbyz_simulation_free`].

// Entry points stay safe `extern "C"` functions: C callers cannot see the
// Rust `unsafe` marker, and every pointer is null-checked before use.
#![allow(clippy::not_unsafe_ptr_arg_deref)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use dpbyz::analyzer::{
    table1_condition, theorem_lower_bound, theorem_upper_bound, vn_feasibility, FeasibilityQuery, RateBoundQuery,
    DEFAULT_BATCH_CAP,
};
use dpbyz::config::parse_config;
use dpbyz::gar::{aggregate, kf, GarKind, GarSpec};
use dpbyz::privacy::{calibrate, PrivacyBudget};
use dpbyz::report::series_csv;
use dpbyz::simulator::{ExperimentConfig, Simulation, TrainingData};
use dpbyz::{Error, ErrorKind, GradientVector};

/// Status codes. Zero is success.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DpbyzStatus {
    Ok = 0,
    Parameter = 1,
    Precondition = 2,
    Unsupported = 3,
    Parse = 4,
    State = 5,
    Config = 6,
    Io = 7,
    NullPointer = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

/// Aggregation rules.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DpbyzGar {
    Average = 0,
    Mda = 1,
    Krum = 2,
    Bulyan = 3,
    Median = 4,
    Meamed = 5,
    Phocas = 6,
    TrimmedMean = 7,
}

impl From<DpbyzGar> for GarKind {
    fn from(g: DpbyzGar) -> Self {
        match g {
            DpbyzGar::Average => GarKind::Average,
            DpbyzGar::Mda => GarKind::Mda,
            DpbyzGar::Krum => GarKind::Krum,
            DpbyzGar::Bulyan => GarKind::Bulyan,
            DpbyzGar::Median => GarKind::Median,
            DpbyzGar::Meamed => GarKind::Meamed,
            DpbyzGar::Phocas => GarKind::Phocas,
            DpbyzGar::TrimmedMean => GarKind::TrimmedMean,
        }
    }
}

/// Result of [`dpbyz_feasibility`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpbyzFeasibility {
    pub c_constant: f64,
    pub threshold: f64,
    pub inverse_kf: f64,
    pub vn_can_hold: bool,
    /// Relaxed per-family necessary condition.
    pub table1_condition: bool,
    /// Zero when no batch size up to the cap works.
    pub min_batch: u64,
    /// Negative when no admissible `f` works.
    pub max_byz_fraction: f64,
}

/// Input of [`dpbyz_upper_bound`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpbyzRateQuery {
    pub mu: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub c: f64,
    pub sigma: f64,
    pub b: u64,
    pub d: u64,
    pub steps: u64,
    pub noise_std: f64,
    pub g_max: f64,
}

/// Opaque training run.
pub struct DpbyzSimulation {
    inner: Simulation<Box<TrainingData>>,
    seed: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(kind: ErrorKind) -> DpbyzStatus {
    match kind {
        ErrorKind::Parameter => DpbyzStatus::Parameter,
        ErrorKind::Precondition => DpbyzStatus::Precondition,
        ErrorKind::Unsupported => DpbyzStatus::Unsupported,
        ErrorKind::Parse => DpbyzStatus::Parse,
        ErrorKind::State => DpbyzStatus::State,
        ErrorKind::Config => DpbyzStatus::Config,
        ErrorKind::Io => DpbyzStatus::Io,
    }
}

enum Failure {
    Core(Error),
    Null(&'static str),
    Buffer { needed: usize },
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> DpbyzStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => DpbyzStatus::Ok,
        Ok(Err(Failure::Core(e))) => {
            let status = status_of(e.kind());
            set_error(e.to_string());
            status
        }
        Ok(Err(Failure::Null(name))) => {
            set_error(format!("null pointer: {name}"));
            DpbyzStatus::NullPointer
        }
        Ok(Err(Failure::Buffer { needed })) => {
            set_error(format!("buffer too small: {needed} elements needed"));
            DpbyzStatus::BufferTooSmall
        }
        Err(_) => {
            set_error("internal panic".into());
            DpbyzStatus::Panic
        }
    }
}

fn out<'a, T>(p: *mut T, name: &'static str) -> Result<&'a mut T, Failure> {
    // SAFETY: callers pass either null or a valid, writable pointer.
    unsafe { p.as_mut() }.ok_or(Failure::Null(name))
}

fn text<'a>(p: *const c_char, name: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    // SAFETY: non-null and NUL-terminated per the API contract.
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| Failure::Core(Error::Parameter(format!("{name} is not valid UTF-8"))))
}

/// Copies `values` into `buf` (capacity `len`) and stores the full count in
/// `out_len`, which is always written.
fn copy_out(values: &[f64], buf: *mut f64, len: usize, out_len: *mut usize) -> Result<(), Failure> {
    *out(out_len, "out_len")? = values.len();
    if values.len() > len {
        return Err(Failure::Buffer { needed: values.len() });
    }
    if !values.is_empty() {
        if buf.is_null() {
            return Err(Failure::Null("buf"));
        }
        // SAFETY: buf holds at least `len >= values.len()` elements.
        unsafe { ptr::copy_nonoverlapping(values.as_ptr(), buf, values.len()) };
    }
    Ok(())
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len` bytes) and returns the full message length in bytes.
#[no_mangle]
pub extern "C" fn dpbyz_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            // SAFETY: buf holds `len` bytes.
            unsafe {
                ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
                *buf.add(n) = 0;
            }
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dpbyz_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// VN-ratio constant `k_F(n, f)`; infinite for MDA with `f = 0`.
#[no_mangle]
pub extern "C" fn dpbyz_kf(gar: DpbyzGar, n: usize, f: usize, out_kf: *mut f64) -> DpbyzStatus {
    guard(|| {
        *out(out_kf, "out_kf")? = kf(&GarSpec::new(gar.into(), n, f))?;
        Ok(())
    })
}

/// Gaussian-mechanism calibration.
#[no_mangle]
pub extern "C" fn dpbyz_calibrate(
    epsilon: f64,
    delta: f64,
    g_max: f64,
    batch_size: usize,
    out_sensitivity: *mut f64,
    out_noise_std: *mut f64,
) -> DpbyzStatus {
    guard(|| {
        let cal = calibrate(&PrivacyBudget::new(epsilon, delta)?, g_max, batch_size)?;
        *out(out_sensitivity, "out_sensitivity")? = cal.sensitivity;
        *out(out_noise_std, "out_noise_std")? = cal.noise_std;
        Ok(())
    })
}

/// Aggregates `n` row-major reports of dimension `d` into `out_aggregate`
/// (length `d`).
#[no_mangle]
pub extern "C" fn dpbyz_aggregate(
    gar: DpbyzGar,
    n: usize,
    f: usize,
    d: usize,
    reports: *const f64,
    out_aggregate: *mut f64,
) -> DpbyzStatus {
    guard(|| {
        if reports.is_null() {
            return Err(Failure::Null("reports"));
        }
        if out_aggregate.is_null() {
            return Err(Failure::Null("out_aggregate"));
        }
        let total = n
            .checked_mul(d)
            .ok_or_else(|| Error::Parameter("n·d overflows".into()))?;
        // SAFETY: reports holds n·d values per the API contract.
        let flat = unsafe { slice::from_raw_parts(reports, total) };
        let vectors = flat
            .chunks(d.max(1))
            .take(n)
            .map(|c| GradientVector::new(c.to_vec()))
            .collect::<dpbyz::Result<Vec<_>>>()?;
        let agg = aggregate(&GarSpec::new(gar.into(), n, f), &vectors)?;
        // SAFETY: out_aggregate holds d values.
        unsafe { ptr::copy_nonoverlapping(agg.as_slice().as_ptr(), out_aggregate, d) };
        Ok(())
    })
}

/// Exact VN-ratio feasibility plus the relaxed necessary condition.
#[no_mangle]
pub extern "C" fn dpbyz_feasibility(
    gar: DpbyzGar,
    n: usize,
    f: usize,
    batch_size: u64,
    dim: u64,
    epsilon: f64,
    delta: f64,
    out_result: *mut DpbyzFeasibility,
) -> DpbyzStatus {
    guard(|| {
        let spec = GarSpec::new(gar.into(), n, f);
        let budget = PrivacyBudget::new(epsilon, delta)?;
        let v = vn_feasibility(
            &FeasibilityQuery {
                spec,
                batch_size,
                dim,
                budget,
            },
            DEFAULT_BATCH_CAP,
        )?;
        let t1 = table1_condition(&spec, batch_size, dim, &budget)?;
        *out(out_result, "out_result")? = DpbyzFeasibility {
            c_constant: v.c_constant,
            threshold: v.threshold,
            inverse_kf: v.inverse_kf,
            vn_can_hold: v.vn_can_hold,
            table1_condition: t1,
            min_batch: v.min_batch.unwrap_or(0),
            max_byz_fraction: v.max_byz_fraction.unwrap_or(-1.0),
        };
        Ok(())
    })
}

/// Upper convergence-rate bound.
#[no_mangle]
pub extern "C" fn dpbyz_upper_bound(query: *const DpbyzRateQuery, out_bound: *mut f64) -> DpbyzStatus {
    guard(|| {
        // SAFETY: null or a valid pointer per the API contract.
        let q = unsafe { query.as_ref() }.ok_or(Failure::Null("query"))?;
        *out(out_bound, "out_bound")? = theorem_upper_bound(&RateBoundQuery {
            mu: q.mu,
            lambda: q.lambda,
            alpha: q.alpha,
            c: q.c,
            sigma: q.sigma,
            b: q.b,
            d: q.d,
            steps: q.steps,
            noise_std: q.noise_std,
            g_max: q.g_max,
        })?;
        Ok(())
    })
}

/// Lower convergence-rate bound.
#[no_mangle]
pub extern "C" fn dpbyz_lower_bound(
    sigma: f64,
    b: u64,
    d: u64,
    steps: u64,
    noise_std: f64,
    out_bound: *mut f64,
) -> DpbyzStatus {
    guard(|| {
        *out(out_bound, "out_bound")? = theorem_lower_bound(sigma, b, d, steps, noise_std)?;
        Ok(())
    })
}

/// Creates a simulation from configuration text that expands to exactly one
/// experiment. `seed` replaces the configured master seed.
#[no_mangle]
pub extern "C" fn dpbyz_simulation_new(
    config_text: *const c_char,
    seed: u64,
    out_handle: *mut *mut DpbyzSimulation,
) -> DpbyzStatus {
    guard(|| {
        let slot = out(out_handle, "out_handle")?;
        *slot = ptr::null_mut();
        let mut configs = parse_config(text(config_text, "config_text")?)?;
        if configs.len() != 1 {
            return Err(Error::Config {
                key: "*".into(),
                message: format!("expected one configuration, got {}", configs.len()),
            }
            .into());
        }
        let config = ExperimentConfig {
            master_seed: seed,
            ..configs.remove(0)
        };
        let data = Box::new(TrainingData::load(&config.data)?);
        let inner = Simulation::new(config, data)?;
        *slot = Box::into_raw(Box::new(DpbyzSimulation { inner, seed }));
        Ok(())
    })
}

fn handle<'a>(h: *mut DpbyzSimulation) -> Result<&'a mut DpbyzSimulation, Failure> {
    // SAFETY: h is null or a live handle from dpbyz_simulation_new.
    unsafe { h.as_mut() }.ok_or(Failure::Null("handle"))
}

/// Releases a handle. Null is ignored.
#[no_mangle]
pub extern "C" fn dpbyz_simulation_free(h: *mut DpbyzSimulation) {
    if !h.is_null() {
        // SAFETY: h came from Box::into_raw in dpbyz_simulation_new.
        drop(unsafe { Box::from_raw(h) });
    }
}

/// Advances one step. `out_running` is false once the run has finished or
/// diverged.
#[no_mangle]
pub extern "C" fn dpbyz_simulation_step(h: *mut DpbyzSimulation, out_running: *mut bool) -> DpbyzStatus {
    guard(|| {
        let running = handle(h)?.inner.step()?;
        *out(out_running, "out_running")? = running;
        Ok(())
    })
}

/// Runs the remaining steps.
#[no_mangle]
pub extern "C" fn dpbyz_simulation_run(h: *mut DpbyzSimulation) -> DpbyzStatus {
    guard(|| {
        let sim = &mut handle(h)?.inner;
        while sim.step()? {}
        Ok(())
    })
}

/// Completed steps and, when non-null, the step at which the run diverged
/// (`-1` when it did not).
#[no_mangle]
pub extern "C" fn dpbyz_simulation_progress(
    h: *mut DpbyzSimulation,
    out_steps: *mut u64,
    out_diverged_at: *mut i64,
) -> DpbyzStatus {
    guard(|| {
        let sim = &handle(h)?.inner;
        *out(out_steps, "out_steps")? = sim.current_step() as u64;
        if !out_diverged_at.is_null() {
            *out(out_diverged_at, "out_diverged_at")? = sim.metrics().diverged_at.map_or(-1, |t| t as i64);
        }
        Ok(())
    })
}

/// Current model parameters (weights then bias).
#[no_mangle]
pub extern "C" fn dpbyz_simulation_params(
    h: *mut DpbyzSimulation,
    buf: *mut f64,
    len: usize,
    out_len: *mut usize,
) -> DpbyzStatus {
    guard(|| copy_out(handle(h)?.inner.params().as_slice(), buf, len, out_len))
}

/// Per-step training losses recorded so far.
#[no_mangle]
pub extern "C" fn dpbyz_simulation_losses(
    h: *mut DpbyzSimulation,
    buf: *mut f64,
    len: usize,
    out_len: *mut usize,
) -> DpbyzStatus {
    guard(|| copy_out(&handle(h)?.inner.metrics().train_loss, buf, len, out_len))
}

/// Test accuracies recorded so far, in evaluation order.
#[no_mangle]
pub extern "C" fn dpbyz_simulation_accuracies(
    h: *mut DpbyzSimulation,
    buf: *mut f64,
    len: usize,
    out_len: *mut usize,
) -> DpbyzStatus {
    guard(|| {
        let acc: Vec<f64> = handle(h)?.inner.metrics().accuracy.iter().map(|&(_, a)| a).collect();
        copy_out(&acc, buf, len, out_len)
    })
}

/// Writes the metrics recorded so far as CSV.
#[no_mangle]
pub extern "C" fn dpbyz_simulation_write_csv(h: *mut DpbyzSimulation, path: *const c_char) -> DpbyzStatus {
    guard(|| {
        let sim = handle(h)?;
        let csv = series_csv(sim.inner.config(), sim.seed, sim.inner.metrics())?;
        std::fs::write(Path::new(text(path, "path")?), csv).map_err(Error::from)?;
        Ok(())
    })
}
