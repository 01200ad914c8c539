//! C ABI for the survey-estimation library.
//!
//! Opaque handles own the Rust objects; every call returns a [`MadiStatus`]
//! code and the per-thread message from [`madi_last_error_message`] explains
//! the most recent failure. All functions are panic-safe at the boundary.
//!
//! The matching header `include/madi.h` is generated by cbindgen at build
//! time.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use madi::design::{draw_srs, Frame, FrameKind};
use madi::npd::{generate_npd, Scenario};
use madi::population::{Partition, Population};
use madi::rng::{stream, StreamDomain};
use madi::simulation::{
    estimate_once, fit_strategy_model, sample_size_greg, sample_size_ht, sample_size_madi,
    CvDenominator, SimulationConfig, Strategy,
};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MadiStatus {
    Ok = 0,
    /// File could not be read or written.
    Io = 1,
    /// Input file or text failed to parse.
    Parse = 2,
    /// An argument was null, out of range, or otherwise invalid.
    InvalidArgument = 3,
    /// The working model could not be fitted (singular design).
    SingularModel = 4,
    /// The sample cannot support the requested estimate.
    InsufficientSample = 5,
    /// An internal invariant failed; the library state is still sound.
    Internal = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn fail(status: MadiStatus, message: &str) -> MadiStatus {
    set_error(message);
    status
}

/// Message describing this thread's most recent error. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn madi_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn madi_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Opaque handle to a finite population.
#[repr(C)]
pub struct MadiPopulation {
    _private: [u8; 0],
}

/// Opaque handle to an A/B partition of a population.
#[repr(C)]
pub struct MadiPartition {
    _private: [u8; 0],
}

fn population_ref<'a>(handle: *const MadiPopulation) -> Option<&'a Population> {
    if handle.is_null() {
        return None;
    }
    Some(unsafe { &*(handle as *const Population) })
}

fn partition_ref<'a>(handle: *const MadiPartition) -> Option<&'a Partition> {
    if handle.is_null() {
        return None;
    }
    Some(unsafe { &*(handle as *const Partition) })
}

fn c_str<'a>(ptr: *const c_char) -> Option<&'a str> {
    if ptr.is_null() {
        return None;
    }
    unsafe { CStr::from_ptr(ptr) }.to_str().ok()
}

fn guarded(body: impl FnOnce() -> MadiStatus) -> MadiStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => fail(
            MadiStatus::Internal,
            "internal panic caught at the FFI boundary",
        ),
    }
}

/// Load a population from a `id,y,x1..xp` CSV file.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
/// A returned handle must be released with [`madi_population_free`].
#[no_mangle]
pub unsafe extern "C" fn madi_population_load_csv(
    path: *const c_char,
    out: *mut *mut MadiPopulation,
) -> MadiStatus {
    guarded(|| {
        let Some(path) = c_str(path) else {
            return fail(
                MadiStatus::InvalidArgument,
                "path must be valid UTF-8 and non-null",
            );
        };
        if out.is_null() {
            return fail(MadiStatus::InvalidArgument, "out pointer is null");
        }
        match Population::from_csv_path(Path::new(path)) {
            Ok(pop) => {
                unsafe { *out = Box::into_raw(Box::new(pop)) as *mut MadiPopulation };
                MadiStatus::Ok
            }
            Err(madi::population::PopulationError::Io(e)) => fail(MadiStatus::Io, &e.to_string()),
            Err(e) => fail(MadiStatus::Parse, &e.to_string()),
        }
    })
}

/// Generate the synthetic register-like population for `(seed, n, p)`.
///
/// # Safety
/// `out` must be a valid pointer; release the handle with
/// [`madi_population_free`].
#[no_mangle]
pub unsafe extern "C" fn madi_population_synthetic(
    seed: u64,
    n: usize,
    p: usize,
    out: *mut *mut MadiPopulation,
) -> MadiStatus {
    guarded(|| {
        if out.is_null() {
            return fail(MadiStatus::InvalidArgument, "out pointer is null");
        }
        match Population::synthetic(seed, n, p) {
            Ok(pop) => {
                unsafe { *out = Box::into_raw(Box::new(pop)) as *mut MadiPopulation };
                MadiStatus::Ok
            }
            Err(e) => fail(MadiStatus::InvalidArgument, &e.to_string()),
        }
    })
}

/// Write a population back to CSV.
///
/// # Safety
/// `handle` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn madi_population_save_csv(
    handle: *const MadiPopulation,
    path: *const c_char,
) -> MadiStatus {
    guarded(|| {
        let Some(pop) = population_ref(handle) else {
            return fail(MadiStatus::InvalidArgument, "population handle is null");
        };
        let Some(path) = c_str(path) else {
            return fail(
                MadiStatus::InvalidArgument,
                "path must be valid UTF-8 and non-null",
            );
        };
        match pop.save_csv_path(Path::new(path)) {
            Ok(()) => MadiStatus::Ok,
            Err(e) => fail(MadiStatus::Io, &e.to_string()),
        }
    })
}

/// Number of units N.
///
/// # Safety
/// `handle` must be a live population handle (returns 0 on null).
#[no_mangle]
pub unsafe extern "C" fn madi_population_size(handle: *const MadiPopulation) -> usize {
    population_ref(handle).map(|p| p.len()).unwrap_or(0)
}

/// Auxiliary dimension p.
///
/// # Safety
/// `handle` must be a live population handle (returns 0 on null).
#[no_mangle]
pub unsafe extern "C" fn madi_population_aux_dim(handle: *const MadiPopulation) -> usize {
    population_ref(handle).map(|p| p.aux_dim()).unwrap_or(0)
}

/// Population total of the study variable.
///
/// # Safety
/// `handle` must be live and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn madi_population_total_y(
    handle: *const MadiPopulation,
    out: *mut f64,
) -> MadiStatus {
    guarded(|| {
        let Some(pop) = population_ref(handle) else {
            return fail(MadiStatus::InvalidArgument, "population handle is null");
        };
        if out.is_null() {
            return fail(MadiStatus::InvalidArgument, "out pointer is null");
        }
        unsafe { *out = pop.total_y() };
        MadiStatus::Ok
    })
}

/// Release a population handle. Null is a no-op.
///
/// # Safety
/// `handle` must have come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn madi_population_free(handle: *mut MadiPopulation) {
    if !handle.is_null() {
        drop(unsafe { Box::from_raw(handle as *mut Population) });
    }
}

/// Load a partition (`id,delta` CSV) aligned with a population.
///
/// # Safety
/// Pointers must be valid; release the handle with [`madi_partition_free`].
#[no_mangle]
pub unsafe extern "C" fn madi_partition_load_csv(
    path: *const c_char,
    pop: *const MadiPopulation,
    out: *mut *mut MadiPartition,
) -> MadiStatus {
    guarded(|| {
        let Some(path) = c_str(path) else {
            return fail(
                MadiStatus::InvalidArgument,
                "path must be valid UTF-8 and non-null",
            );
        };
        let Some(pop) = population_ref(pop) else {
            return fail(MadiStatus::InvalidArgument, "population handle is null");
        };
        if out.is_null() {
            return fail(MadiStatus::InvalidArgument, "out pointer is null");
        }
        match Partition::from_csv_path(Path::new(path), pop) {
            Ok(part) => {
                unsafe { *out = Box::into_raw(Box::new(part)) as *mut MadiPartition };
                MadiStatus::Ok
            }
            Err(madi::population::PartitionError::Io(e)) => fail(MadiStatus::Io, &e.to_string()),
            Err(e) => fail(MadiStatus::Parse, &e.to_string()),
        }
    })
}

/// Generate a nonprobability partition for a scenario label (`sim1`,
/// `k1`..`k8`) with the given register share and seed.
///
/// # Safety
/// Pointers must be valid; release the handle with [`madi_partition_free`].
#[no_mangle]
pub unsafe extern "C" fn madi_partition_generate(
    pop: *const MadiPopulation,
    scenario: *const c_char,
    fraction: f64,
    seed: u64,
    out: *mut *mut MadiPartition,
) -> MadiStatus {
    guarded(|| {
        let Some(pop) = population_ref(pop) else {
            return fail(MadiStatus::InvalidArgument, "population handle is null");
        };
        let Some(scenario) = c_str(scenario) else {
            return fail(
                MadiStatus::InvalidArgument,
                "scenario must be valid UTF-8 and non-null",
            );
        };
        if out.is_null() {
            return fail(MadiStatus::InvalidArgument, "out pointer is null");
        }
        let scenario = match Scenario::parse(scenario) {
            Ok(s) => s,
            Err(e) => return fail(MadiStatus::InvalidArgument, &e.to_string()),
        };
        match generate_npd(pop, scenario, fraction, seed) {
            Ok((part, _prop)) => {
                unsafe { *out = Box::into_raw(Box::new(part)) as *mut MadiPartition };
                MadiStatus::Ok
            }
            Err(e) => fail(MadiStatus::InvalidArgument, &e.to_string()),
        }
    })
}

/// Number of register units N_A.
///
/// # Safety
/// `handle` must be a live partition handle (returns 0 on null).
#[no_mangle]
pub unsafe extern "C" fn madi_partition_register_size(handle: *const MadiPartition) -> usize {
    partition_ref(handle).map(|p| p.n_a()).unwrap_or(0)
}

/// Release a partition handle. Null is a no-op.
///
/// # Safety
/// `handle` must have come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn madi_partition_free(handle: *mut MadiPartition) {
    if !handle.is_null() {
        drop(unsafe { Box::from_raw(handle as *mut Partition) });
    }
}

/// One-shot estimate of the population total.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct MadiEstimate {
    pub point: f64,
    /// Valid only when `has_variance` is nonzero.
    pub variance: f64,
    /// Valid only when `has_interval` is nonzero.
    pub ci_low: f64,
    pub ci_high: f64,
    pub has_variance: u8,
    pub has_interval: u8,
}

/// Draw a seeded SRS of size `n` for the strategy's frame and estimate the
/// population total, mirroring the CLI `estimate --draw` path.
///
/// # Safety
/// `pop` must be live; `partition` may be null for the U-frame strategies;
/// `strategy` must be NUL-terminated; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn madi_estimate_total(
    pop: *const MadiPopulation,
    partition: *const MadiPartition,
    strategy: *const c_char,
    n: usize,
    seed: u64,
    level: f64,
    out: *mut MadiEstimate,
) -> MadiStatus {
    guarded(|| {
        let Some(pop) = population_ref(pop) else {
            return fail(MadiStatus::InvalidArgument, "population handle is null");
        };
        let partition = partition_ref(partition);
        let Some(strategy_text) = c_str(strategy) else {
            return fail(
                MadiStatus::InvalidArgument,
                "strategy must be valid UTF-8 and non-null",
            );
        };
        if out.is_null() {
            return fail(MadiStatus::InvalidArgument, "out pointer is null");
        }
        let strategy = match Strategy::parse(strategy_text) {
            Ok(s) => s,
            Err(e) => return fail(MadiStatus::InvalidArgument, &e.to_string()),
        };
        if strategy.needs_partition() && partition.is_none() {
            return fail(
                MadiStatus::InvalidArgument,
                &format!("strategy {} requires a partition", strategy.id()),
            );
        }
        let frame = match strategy.frame_kind() {
            FrameKind::Population => Frame::population(pop),
            FrameKind::Complement => Frame::complement(partition.expect("checked")),
        };
        if n == 0 || n > frame.len() {
            return fail(
                MadiStatus::InvalidArgument,
                &format!("sample size {n} out of range 1..={}", frame.len()),
            );
        }
        let config = SimulationConfig {
            master_seed: seed,
            level,
            ..Default::default()
        };
        let mut rng = stream(
            seed,
            StreamDomain::Sampling,
            strategy.stream_index(),
            n as u64,
            0,
        );
        let sample = match draw_srs(&frame, n, &mut rng) {
            Ok(s) => s,
            Err(e) => return fail(MadiStatus::InvalidArgument, &e.to_string()),
        };
        match estimate_once(strategy, &config, pop, partition, &sample) {
            Ok(single) => match single.result.point() {
                Some(point) => {
                    let variance = single.result.variance();
                    let interval = single.interval;
                    unsafe {
                        *out = MadiEstimate {
                            point,
                            variance: variance.unwrap_or(0.0),
                            ci_low: interval.map(|i| i.0).unwrap_or(0.0),
                            ci_high: interval.map(|i| i.1).unwrap_or(0.0),
                            has_variance: variance.is_some() as u8,
                            has_interval: interval.is_some() as u8,
                        };
                    }
                    MadiStatus::Ok
                }
                None => match single.result.status() {
                    madi::estimators::EstimateStatus::SingularModel => fail(
                        MadiStatus::SingularModel,
                        "working model is singular on this sample",
                    ),
                    _ => fail(
                        MadiStatus::InsufficientSample,
                        "sample cannot support this estimator",
                    ),
                },
            },
            Err(e) => fail(MadiStatus::InvalidArgument, &e.to_string()),
        }
    })
}

/// Required sample size for a target coefficient of variation.
/// `strategy` is one of `srs_u_ht`, `srs_u_greg`, `srs_b_madi_ols`,
/// `srs_b_madi_rf`; `denominator` is `yb` or `y` (model-assisted only).
///
/// # Safety
/// Pointers must be valid; `partition` may be null for the U strategies.
#[no_mangle]
pub unsafe extern "C" fn madi_required_sample_size(
    pop: *const MadiPopulation,
    partition: *const MadiPartition,
    strategy: *const c_char,
    cv_target: f64,
    denominator: *const c_char,
    seed: u64,
    out: *mut usize,
) -> MadiStatus {
    guarded(|| {
        let Some(pop) = population_ref(pop) else {
            return fail(MadiStatus::InvalidArgument, "population handle is null");
        };
        let partition = partition_ref(partition);
        let Some(strategy_text) = c_str(strategy) else {
            return fail(
                MadiStatus::InvalidArgument,
                "strategy must be valid UTF-8 and non-null",
            );
        };
        if out.is_null() {
            return fail(MadiStatus::InvalidArgument, "out pointer is null");
        }
        let strategy = match Strategy::parse(strategy_text) {
            Ok(s) => s,
            Err(e) => return fail(MadiStatus::InvalidArgument, &e.to_string()),
        };
        let denominator = match c_str(denominator) {
            Some(text) => match CvDenominator::parse(text) {
                Ok(d) => d,
                Err(e) => return fail(MadiStatus::InvalidArgument, &e.to_string()),
            },
            None => CvDenominator::ComplementTotal,
        };
        let config = SimulationConfig {
            master_seed: seed,
            ..Default::default()
        };
        let result = match strategy {
            Strategy::SrsUHt => sample_size_ht(pop, cv_target),
            Strategy::SrsUGreg => sample_size_greg(pop, cv_target),
            Strategy::SrsBMadiOls | Strategy::SrsBMadiRf => {
                let Some(part) = partition else {
                    return fail(
                        MadiStatus::InvalidArgument,
                        &format!("strategy {} requires a partition", strategy.id()),
                    );
                };
                fit_strategy_model(strategy, &config, pop, Some(part)).and_then(|model| {
                    sample_size_madi(pop, part, &model.expect("model"), cv_target, denominator)
                })
            }
            _ => {
                return fail(
                    MadiStatus::InvalidArgument,
                    &format!("strategy {} has no planning formula", strategy.id()),
                )
            }
        };
        match result {
            Ok(n) => {
                unsafe { *out = n };
                MadiStatus::Ok
            }
            Err(madi::simulation::SimError::SingularCensusFit(e)) => {
                fail(MadiStatus::SingularModel, &e.to_string())
            }
            Err(e) => fail(MadiStatus::InvalidArgument, &e.to_string()),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ptr;

    fn cstr(text: &str) -> CString {
        CString::new(text).unwrap()
    }

    #[test]
    fn synthetic_estimate_round_trip() {
        unsafe {
            let mut pop: *mut MadiPopulation = ptr::null_mut();
            assert_eq!(
                madi_population_synthetic(1, 500, 6, &mut pop),
                MadiStatus::Ok
            );
            assert_eq!(madi_population_size(pop), 500);
            assert_eq!(madi_population_aux_dim(pop), 6);
            let mut total = 0.0;
            assert_eq!(madi_population_total_y(pop, &mut total), MadiStatus::Ok);
            assert!(total > 0.0);

            let mut part: *mut MadiPartition = ptr::null_mut();
            let scenario = cstr("sim1");
            assert_eq!(
                madi_partition_generate(pop, scenario.as_ptr(), 0.7, 2, &mut part),
                MadiStatus::Ok
            );
            assert_eq!(madi_partition_register_size(part), 350);

            let strategy = cstr("srs_b_madi_ols");
            let mut est = MadiEstimate {
                point: 0.0,
                variance: 0.0,
                ci_low: 0.0,
                ci_high: 0.0,
                has_variance: 0,
                has_interval: 0,
            };
            assert_eq!(
                madi_estimate_total(pop, part, strategy.as_ptr(), 25, 3, 0.95, &mut est),
                MadiStatus::Ok
            );
            assert!(est.point > 0.0);
            assert_eq!(est.has_variance, 1);
            assert_eq!(est.has_interval, 1);
            assert!(est.ci_low <= est.point && est.point <= est.ci_high);

            // deterministic in the seed
            let mut est2 = est;
            assert_eq!(
                madi_estimate_total(pop, part, strategy.as_ptr(), 25, 3, 0.95, &mut est2),
                MadiStatus::Ok
            );
            assert_eq!(est.point.to_bits(), est2.point.to_bits());

            let mut required = 0usize;
            let plan_strategy = cstr("srs_b_madi_rf");
            let denom = cstr("yb");
            assert_eq!(
                madi_required_sample_size(
                    pop,
                    part,
                    plan_strategy.as_ptr(),
                    0.05,
                    denom.as_ptr(),
                    4,
                    &mut required
                ),
                MadiStatus::Ok
            );
            assert!(required >= 2);

            madi_partition_free(part);
            madi_population_free(pop);
        }
    }

    #[test]
    fn errors_set_messages_and_codes() {
        unsafe {
            let mut pop: *mut MadiPopulation = ptr::null_mut();
            let missing = cstr("/definitely/not/here.csv");
            assert_eq!(
                madi_population_load_csv(missing.as_ptr(), &mut pop),
                MadiStatus::Io
            );
            let msg = CStr::from_ptr(madi_last_error_message());
            assert!(!msg.to_str().unwrap().is_empty());

            assert_eq!(
                madi_population_synthetic(1, 10, 1, &mut pop),
                MadiStatus::InvalidArgument
            );
            assert_eq!(
                madi_population_load_csv(ptr::null(), &mut pop),
                MadiStatus::InvalidArgument
            );
            assert_eq!(madi_population_size(ptr::null()), 0);

            // singular-model surfaces through the estimate call
            assert_eq!(
                madi_population_synthetic(1, 60, 12, &mut pop),
                MadiStatus::Ok
            );
            let strategy = cstr("srs_u_greg");
            let mut est = MadiEstimate {
                point: 0.0,
                variance: 0.0,
                ci_low: 0.0,
                ci_high: 0.0,
                has_variance: 0,
                has_interval: 0,
            };
            assert_eq!(
                madi_estimate_total(pop, ptr::null(), strategy.as_ptr(), 5, 1, 0.95, &mut est),
                MadiStatus::SingularModel
            );
            madi_population_free(pop);
        }
    }

    #[test]
    fn version_is_exposed() {
        unsafe {
            let v = CStr::from_ptr(madi_version());
            assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
        }
    }
}
