//! Likelihood estimation behind a trait, so the samplers are generic over
//! how `log l(y | theta)` is produced (particle filter, exact formula, or a
//! test stub).

use crate::error::Result;
use crate::filter::run_filter;
use crate::model::{InitialCondition, Observation};
use crate::seed::Prng;
use crate::ssm::{CompositeKernelConfig, RepressilatorSsm};
use crate::theta::ThetaVector;

/// Produces (an estimate of) the log-likelihood of a parameter vector.
///
/// Implementations must be deterministic given the generator state, and
/// `Sync` so independent evaluations can run concurrently.
pub trait LikelihoodEstimator: Sync {
    fn log_likelihood(&self, theta: &ThetaVector, rng: &mut Prng) -> Result<f64>;
}

impl<F> LikelihoodEstimator for F
where
    F: Fn(&ThetaVector, &mut Prng) -> Result<f64> + Sync,
{
    fn log_likelihood(&self, theta: &ThetaVector, rng: &mut Prng) -> Result<f64> {
        self(theta, rng)
    }
}

/// Bootstrap-filter likelihood estimate for the repressilator model over a
/// fixed observation record.
#[derive(Debug, Clone)]
pub struct FilterLikelihood {
    pub observations: Vec<Observation>,
    pub kernel: CompositeKernelConfig,
    pub sigma_y: f64,
    pub initial: InitialCondition,
    pub n_particles: usize,
}

impl LikelihoodEstimator for FilterLikelihood {
    fn log_likelihood(&self, theta: &ThetaVector, rng: &mut Prng) -> Result<f64> {
        let ssm = RepressilatorSsm::new(*theta, self.kernel, self.sigma_y, self.initial)?;
        Ok(run_filter(&ssm, &self.observations, self.n_particles, rng)?.log_value)
    }
}
