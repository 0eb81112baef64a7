//! Bootstrap particle filter and the unbiased likelihood estimator.
//!
//! The filter proposes from the model's transition kernel, weights particles
//! by the observation density, and resamples multinomially at every tick.
//! Its byproduct is the likelihood estimate
//! `l^N(y_1:R) = prod_n (1/N) sum_i l_n(y_n | x_n^i)`, evaluated over the
//! *predicted* (pre-resampling) particles. All weight arithmetic happens in
//! the log domain: products over thousands of ticks underflow otherwise.

use rand::Rng;

use crate::error::{Error, Result};
use crate::seed::Prng;
use crate::ssm::StateSpaceModel;

/// A weighted particle population at one observation tick.
#[derive(Debug, Clone)]
pub struct ParticleCloud<S> {
    pub states: Vec<S>,
    /// Normalized weights; nonnegative, summing to one.
    pub weights: Vec<f64>,
    pub tick: usize,
}

/// The log-likelihood estimate produced by one filter pass.
#[derive(Debug, Clone)]
pub struct LogLikelihoodEstimate {
    /// `log l^N(y | theta)`, the sum of the per-tick increments.
    pub log_value: f64,
    pub n_particles: usize,
    pub n_observations: usize,
    /// Log of the mean unnormalized weight at each tick.
    pub increments: Vec<f64>,
}

impl LogLikelihoodEstimate {
    /// Running sums of the increments: `log l^N(y_1:n)` for `n = 1..R`.
    pub fn cumulative(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.increments
            .iter()
            .map(|inc| {
                acc += inc;
                acc
            })
            .collect()
    }
}

/// Per-tick filter diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct TickDiagnostic {
    pub tick: usize,
    pub log_increment: f64,
    /// Effective sample size of the normalized weights.
    pub ess: f64,
}

/// Normalizes log-weights with max-subtraction.
///
/// Returns the normalized weights and `log((1/n) sum_i exp(log_w_i))`.
pub fn normalize_log_weights(log_weights: &[f64]) -> Result<(Vec<f64>, f64)> {
    if log_weights.is_empty() {
        return Err(Error::EmptyWeights { why: "no weights given" });
    }
    let max = log_weights.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    if max == f64::NEG_INFINITY {
        return Err(Error::EmptyWeights { why: "all weights are zero" });
    }
    let mut weights: Vec<f64> = log_weights.iter().map(|lw| (lw - max).exp()).collect();
    let sum: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= sum;
    }
    let log_mean = max + (sum / log_weights.len() as f64).ln();
    Ok((weights, log_mean))
}

/// Draws `n_out` indices i.i.d. from the categorical distribution given by
/// normalized `weights`.
pub fn multinomial_resample(weights: &[f64], n_out: usize, rng: &mut Prng) -> Vec<usize> {
    let mut cumulative = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for w in weights {
        acc += w;
        cumulative.push(acc);
    }
    let total = acc;
    (0..n_out)
        .map(|_| {
            let u: f64 = rng.random::<f64>() * total;
            cumulative
                .partition_point(|&c| c <= u)
                .min(weights.len() - 1)
        })
        .collect()
}

/// Runs the bootstrap filter and returns the likelihood estimate.
pub fn run_filter<M: StateSpaceModel>(
    model: &M,
    observations: &[M::Obs],
    n_particles: usize,
    rng: &mut Prng,
) -> Result<LogLikelihoodEstimate> {
    run_filter_impl(model, observations, n_particles, rng, |_| {})
}

/// As [`run_filter`], additionally collecting per-tick diagnostics.
pub fn run_filter_with_diagnostics<M: StateSpaceModel>(
    model: &M,
    observations: &[M::Obs],
    n_particles: usize,
    rng: &mut Prng,
) -> Result<(LogLikelihoodEstimate, Vec<TickDiagnostic>)> {
    let mut diagnostics = Vec::with_capacity(observations.len());
    let estimate = run_filter_impl(model, observations, n_particles, rng, |d| {
        diagnostics.push(d)
    })?;
    Ok((estimate, diagnostics))
}

fn run_filter_impl<M: StateSpaceModel>(
    model: &M,
    observations: &[M::Obs],
    n_particles: usize,
    rng: &mut Prng,
    mut on_tick: impl FnMut(TickDiagnostic),
) -> Result<LogLikelihoodEstimate> {
    if n_particles == 0 {
        return Err(Error::invalid("filter", "n_particles must be >= 1"));
    }
    if observations.is_empty() {
        return Err(Error::invalid("filter", "observation sequence is empty"));
    }

    let mut cloud = ParticleCloud {
        states: (0..n_particles).map(|_| model.sample_initial(rng)).collect(),
        weights: vec![1.0 / n_particles as f64; n_particles],
        tick: 0,
    };
    let mut scratch: Vec<M::State> = Vec::with_capacity(n_particles);
    let mut log_weights = vec![0.0; n_particles];
    let mut increments = Vec::with_capacity(observations.len());
    let mut log_value = 0.0;

    for (index, obs) in observations.iter().enumerate() {
        let tick = index + 1;
        for state in &mut cloud.states {
            *state = model.sample_transition(state, rng)?;
        }
        for (lw, state) in log_weights.iter_mut().zip(&cloud.states) {
            *lw = model.log_obs_density(obs, state);
        }
        let (weights, log_mean) = normalize_log_weights(&log_weights)
            .map_err(|_| Error::DegenerateWeights { tick })?;
        cloud.weights = weights;
        cloud.tick = tick;
        increments.push(log_mean);
        log_value += log_mean;
        on_tick(TickDiagnostic {
            tick,
            log_increment: log_mean,
            ess: 1.0 / cloud.weights.iter().map(|w| w * w).sum::<f64>(),
        });

        let ancestors = multinomial_resample(&cloud.weights, n_particles, rng);
        scratch.clear();
        scratch.extend(ancestors.iter().map(|&i| cloud.states[i].clone()));
        std::mem::swap(&mut cloud.states, &mut scratch);
    }

    Ok(LogLikelihoodEstimate {
        log_value,
        n_particles,
        n_observations: observations.len(),
        increments,
    })
}
