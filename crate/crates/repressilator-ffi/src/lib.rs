//! C ABI for the repressilator library.
//!
//! Conventions:
//! - Handles (`RpDataset`, `RpNpmcResult`) are opaque; create them with the
//!   `*_generate`/`*_run` functions and release them with the matching
//!   `*_free`.
//! - Every fallible call returns an [`RpStatus`]; on failure a thread-local
//!   message is readable through [`rp_last_error_message`] until the next
//!   failing call on the same thread.
//! - Strings returned as `char*` are NUL-terminated, allocated by this
//!   library, and must be released with [`rp_string_free`].
//! - All functions are panic-safe: a caught panic maps to `RP_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use repressilator::config::ExperimentConfig;
use repressilator::error::Error;
use repressilator::experiment::generate_configured_dataset;
use repressilator::io::{DatasetHeader, NpmcSummary};
use repressilator::likelihood::{FilterLikelihood, LikelihoodEstimator};
use repressilator::model::{NoiseScales, Observation};
use repressilator::npmc::{run_npmc, NpmcConfig, NpmcResult};
use repressilator::seed::rng_for;
use repressilator::ssm::CompositeKernelConfig;
use repressilator::theta::{PriorBox, ThetaVector};

/// Result code of a C API call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RpStatus {
    Ok = 0,
    /// A pointer was null or an argument violated a documented precondition.
    InvalidArgument = 1,
    /// A runtime or numerical failure; details via `rp_last_error_message`.
    RuntimeError = 2,
    /// An internal panic was caught at the boundary.
    Panic = 3,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(error: &Error) -> RpStatus {
    match error.exit_code() {
        1 => RpStatus::InvalidArgument,
        _ => RpStatus::RuntimeError,
    }
}

fn guard(body: impl FnOnce() -> RpStatus) -> RpStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            set_error(&message);
            RpStatus::Panic
        }
    }
}

/// A generated dataset: metadata plus the observation record.
pub struct RpDataset {
    header: DatasetHeader,
    observations: Vec<Observation>,
    /// Observations flattened as `[y1_1, y2_1, y1_2, y2_2, ...]`.
    flat: Vec<f64>,
    kernel_noise: f64,
}

/// A completed sampler run.
pub struct RpNpmcResult {
    result: NpmcResult,
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message of the most recent failure on this thread. The pointer stays
/// valid until the next failing call on the same thread; do not free it.
#[no_mangle]
pub extern "C" fn rp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Releases a string allocated by this library.
///
/// # Safety
/// `s` must have been returned by a function of this library that documents
/// `rp_string_free` as its deallocator, and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Generates a dataset from an experiment configuration.
///
/// `config_json` may be null or empty for the default configuration;
/// otherwise it must be a NUL-terminated JSON document in the experiment
/// config schema. On success `*out` owns the new dataset.
///
/// # Safety
/// `out` must be a valid pointer. `config_json`, when non-null, must point
/// to a NUL-terminated string that outlives the call.
#[no_mangle]
pub unsafe extern "C" fn rp_dataset_generate(
    config_json: *const c_char,
    seed: u64,
    out: *mut *mut RpDataset,
) -> RpStatus {
    guard(|| {
        if out.is_null() {
            set_error("out pointer is null");
            return RpStatus::InvalidArgument;
        }
        let config = if config_json.is_null() {
            Ok(ExperimentConfig::default())
        } else {
            let text = match CStr::from_ptr(config_json).to_str() {
                Ok(t) => t,
                Err(_) => {
                    set_error("config_json is not valid UTF-8");
                    return RpStatus::InvalidArgument;
                }
            };
            if text.trim().is_empty() {
                Ok(ExperimentConfig::default())
            } else {
                serde_json::from_str::<ExperimentConfig>(text).map_err(|e| e.to_string())
            }
        };
        let config = match config {
            Ok(c) => c,
            Err(message) => {
                set_error(&message);
                return RpStatus::InvalidArgument;
            }
        };
        if let Err(e) = config.validate() {
            set_error(&e.to_string());
            return status_of(&e);
        }
        match generate_configured_dataset(&config.model, seed) {
            Ok((_, observations, header)) => {
                let flat = observations
                    .iter()
                    .flat_map(|o| o.y.into_iter())
                    .collect();
                let dataset = Box::new(RpDataset {
                    header,
                    observations: observations.0,
                    flat,
                    kernel_noise: config.model.kernel_noise,
                });
                *out = Box::into_raw(dataset);
                RpStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Number of observations in the dataset.
///
/// # Safety
/// `dataset` must be a live handle from [`rp_dataset_generate`].
#[no_mangle]
pub unsafe extern "C" fn rp_dataset_n_observations(dataset: *const RpDataset) -> usize {
    if dataset.is_null() {
        return 0;
    }
    (*dataset).observations.len()
}

/// Borrows the observation buffer: `2 * n_observations` doubles laid out as
/// `[y1, y2]` per tick. The pointer is owned by the handle.
///
/// # Safety
/// `dataset` must be a live handle; `out_ptr` and `out_len` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rp_dataset_observations(
    dataset: *const RpDataset,
    out_ptr: *mut *const f64,
    out_len: *mut usize,
) -> RpStatus {
    guard(|| {
        if dataset.is_null() || out_ptr.is_null() || out_len.is_null() {
            set_error("null pointer");
            return RpStatus::InvalidArgument;
        }
        *out_ptr = (*dataset).flat.as_ptr();
        *out_len = (*dataset).flat.len();
        RpStatus::Ok
    })
}

/// Releases a dataset handle.
///
/// # Safety
/// `dataset` must be null or a live handle; it must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rp_dataset_free(dataset: *mut RpDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

unsafe fn estimator_for(dataset: &RpDataset, n_particles: usize) -> FilterLikelihood {
    FilterLikelihood {
        observations: dataset.observations.clone(),
        kernel: CompositeKernelConfig {
            m_o: dataset.header.m_o,
            h: dataset.header.h,
            noise: NoiseScales::uniform(dataset.kernel_noise),
        },
        sigma_y: dataset.header.sigma_y,
        initial: dataset.header.initial_condition(),
        n_particles,
    }
}

/// Bootstrap-filter log-likelihood estimate of a parameter vector.
///
/// `theta` points to 4 doubles `(Q, m, alpha, beta_a)`.
///
/// # Safety
/// `dataset` must be a live handle; `theta` must point to 4 readable
/// doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rp_log_likelihood(
    dataset: *const RpDataset,
    theta: *const f64,
    n_particles: usize,
    seed: u64,
    out: *mut f64,
) -> RpStatus {
    guard(|| {
        if dataset.is_null() || theta.is_null() || out.is_null() {
            set_error("null pointer");
            return RpStatus::InvalidArgument;
        }
        if n_particles == 0 {
            set_error("n_particles must be >= 1");
            return RpStatus::InvalidArgument;
        }
        let theta = ThetaVector::from_array([
            *theta.add(0),
            *theta.add(1),
            *theta.add(2),
            *theta.add(3),
        ]);
        let estimator = estimator_for(&*dataset, n_particles);
        let mut rng = rng_for(seed, &[]);
        match estimator.log_likelihood(&theta, &mut rng) {
            Ok(value) => {
                *out = value;
                RpStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Runs the nonlinear population Monte Carlo sampler against a dataset with
/// the uniform reference prior. Clip count and covariance jitter take their
/// defaults (`floor(sqrt(n_samples))`, `1e-6`).
///
/// # Safety
/// `dataset` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rp_npmc_run(
    dataset: *const RpDataset,
    n_samples: usize,
    n_iterations: usize,
    n_particles: usize,
    seed: u64,
    out: *mut *mut RpNpmcResult,
) -> RpStatus {
    guard(|| {
        if dataset.is_null() || out.is_null() {
            set_error("null pointer");
            return RpStatus::InvalidArgument;
        }
        let config = NpmcConfig::new(n_samples, n_iterations, n_particles, seed);
        if let Err(e) = config.validate() {
            set_error(&e.to_string());
            return status_of(&e);
        }
        let estimator = estimator_for(&*dataset, n_particles);
        match run_npmc(&config, &estimator, &PriorBox::standard()) {
            Ok(result) => {
                *out = Box::into_raw(Box::new(RpNpmcResult { result }));
                RpStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Number of completed iterations (including the prior-sampling one).
///
/// # Safety
/// `result` must be a live handle from [`rp_npmc_run`].
#[no_mangle]
pub unsafe extern "C" fn rp_npmc_result_n_iterations(result: *const RpNpmcResult) -> usize {
    if result.is_null() {
        return 0;
    }
    (*result).result.iterations.len()
}

/// Final posterior-mean estimate, written as 4 doubles `(Q, m, alpha, beta_a)`.
///
/// # Safety
/// `result` must be a live handle; `out` must point to 4 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn rp_npmc_result_posterior_mean(
    result: *const RpNpmcResult,
    out: *mut f64,
) -> RpStatus {
    guard(|| {
        if result.is_null() || out.is_null() {
            set_error("null pointer");
            return RpStatus::InvalidArgument;
        }
        let mean = (*result)
            .result
            .final_iteration()
            .posterior_mean
            .as_array();
        for (i, value) in mean.into_iter().enumerate() {
            *out.add(i) = value;
        }
        RpStatus::Ok
    })
}

/// Posterior mean-square-error estimate of the final iteration.
///
/// # Safety
/// `result` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rp_npmc_result_mse(
    result: *const RpNpmcResult,
    out: *mut f64,
) -> RpStatus {
    guard(|| {
        if result.is_null() || out.is_null() {
            set_error("null pointer");
            return RpStatus::InvalidArgument;
        }
        *out = (*result).result.final_iteration().mse;
        RpStatus::Ok
    })
}

/// Serializes the run summary (config plus per-iteration proposal moments
/// and estimates) as JSON. Free with [`rp_string_free`].
///
/// # Safety
/// `result` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rp_npmc_result_to_json(
    result: *const RpNpmcResult,
    out: *mut *mut c_char,
) -> RpStatus {
    guard(|| {
        if result.is_null() || out.is_null() {
            set_error("null pointer");
            return RpStatus::InvalidArgument;
        }
        let summary = NpmcSummary::from_result(&(*result).result);
        match serde_json::to_string_pretty(&summary) {
            Ok(text) => match CString::new(text) {
                Ok(cstring) => {
                    *out = cstring.into_raw();
                    RpStatus::Ok
                }
                Err(_) => {
                    set_error("summary contained an interior NUL");
                    RpStatus::RuntimeError
                }
            },
            Err(e) => {
                set_error(&e.to_string());
                RpStatus::RuntimeError
            }
        }
    })
}

/// Releases a sampler result handle.
///
/// # Safety
/// `result` must be null or a live handle; it must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rp_npmc_result_free(result: *mut RpNpmcResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}
