//! State-space-model abstraction and the repressilator's instance of it.
//!
//! A model exposes sampling from the initial distribution, sampling from the
//! transition kernel, and pointwise evaluation of the observation
//! log-density. That is exactly the surface a bootstrap filter needs; no
//! transition densities are required.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    euler_maruyama_step, InitialCondition, ModelParams, NoiseScales, Observation, SystemState,
};
use crate::seed::Prng;
use crate::theta::ThetaVector;

const LN_2PI: f64 = 1.8378770664093453;

/// Minimal interface between a latent Markov model and the particle filter.
pub trait StateSpaceModel {
    type State: Clone + Send;
    type Obs;

    /// Draws from the initial state distribution.
    fn sample_initial(&self, rng: &mut Prng) -> Self::State;

    /// Draws from the one-tick transition kernel.
    fn sample_transition(&self, state: &Self::State, rng: &mut Prng) -> Result<Self::State>;

    /// Log conditional density of an observation given the state.
    fn log_obs_density(&self, obs: &Self::Obs, state: &Self::State) -> f64;
}

/// Configuration of the composite transition kernel: `m_o` integrator steps
/// of size `h` per observation tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompositeKernelConfig {
    pub m_o: usize,
    pub h: f64,
    pub noise: NoiseScales,
}

impl CompositeKernelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m_o == 0 {
            return Err(Error::invalid("kernel config", "m_o must be >= 1"));
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::invalid("kernel config", format!("h={} must be > 0", self.h)));
        }
        self.noise.validate()
    }

    /// Continuous time advanced per observation tick.
    pub fn tick_duration(&self) -> f64 {
        self.m_o as f64 * self.h
    }
}

/// Applies `m_o` consecutive Euler-Maruyama steps.
pub fn composite_transition(
    state: &SystemState,
    params: &ModelParams,
    cfg: &CompositeKernelConfig,
    rng: &mut Prng,
) -> Result<SystemState> {
    let mut current = *state;
    for _ in 0..cfg.m_o {
        current = euler_maruyama_step(&current, params, &cfg.noise, cfg.h, rng)?;
    }
    Ok(current)
}

/// Log-density of the bivariate Gaussian observation model
/// `y ~ N((a_1, a_2), sigma_y^2 I)`.
pub fn observation_log_density(y: &[f64; 2], state: &SystemState, sigma_y: f64) -> Result<f64> {
    if !(sigma_y > 0.0) {
        return Err(Error::invalid(
            "observation density",
            format!("sigma_y={sigma_y} is degenerate"),
        ));
    }
    let mean = state.observed_mrna();
    let d0 = y[0] - mean[0];
    let d1 = y[1] - mean[1];
    Ok(-LN_2PI - 2.0 * sigma_y.ln() - (d0 * d0 + d1 * d1) / (2.0 * sigma_y * sigma_y))
}

/// The repressilator as a state-space model for a fixed parameter vector.
#[derive(Debug, Clone)]
pub struct RepressilatorSsm {
    params: ModelParams,
    kernel: CompositeKernelConfig,
    initial: InitialCondition,
    log_norm: f64,
    inv_two_var: f64,
}

impl RepressilatorSsm {
    /// Binds a parameter vector to the model. The four unknowns override the
    /// standard values; remaining parameters stay at their standard values.
    pub fn new(
        theta: ThetaVector,
        kernel: CompositeKernelConfig,
        sigma_y: f64,
        initial: InitialCondition,
    ) -> Result<Self> {
        kernel.validate()?;
        if !(sigma_y > 0.0 && sigma_y.is_finite()) {
            return Err(Error::invalid(
                "state-space model",
                format!("sigma_y={sigma_y} must be > 0"),
            ));
        }
        Ok(RepressilatorSsm {
            params: theta.into_params(),
            kernel,
            initial,
            log_norm: -LN_2PI - 2.0 * sigma_y.ln(),
            inv_two_var: 1.0 / (2.0 * sigma_y * sigma_y),
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn kernel(&self) -> &CompositeKernelConfig {
        &self.kernel
    }
}

impl StateSpaceModel for RepressilatorSsm {
    type State = SystemState;
    type Obs = Observation;

    fn sample_initial(&self, rng: &mut Prng) -> SystemState {
        self.initial.sample(rng)
    }

    fn sample_transition(&self, state: &SystemState, rng: &mut Prng) -> Result<SystemState> {
        composite_transition(state, &self.params, &self.kernel, rng)
    }

    fn log_obs_density(&self, obs: &Observation, state: &SystemState) -> f64 {
        let mean = state.observed_mrna();
        let d0 = obs.y[0] - mean[0];
        let d1 = obs.y[1] - mean[1];
        self.log_norm - (d0 * d0 + d1 * d1) * self.inv_two_var
    }
}
