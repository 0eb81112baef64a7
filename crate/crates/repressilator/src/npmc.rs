//! Nonlinear population Monte Carlo: iterated importance sampling with
//! clipped weights and moment-matched Gaussian proposals.
//!
//! Each iteration draws `M` parameter samples from the current proposal,
//! computes importance weights `l^N(y|theta) p0(theta) / q(theta)` with the
//! likelihood estimated by a particle filter, and *clips* the `M_c` largest
//! weights down to the `M_c`-th largest value before normalizing. Clipping
//! trades a vanishing bias for a large variance reduction and keeps early
//! iterations from collapsing onto the single luckiest sample. The next
//! proposal is the Gaussian matching the clipped-weight mean and covariance.
//!
//! Iteration 0 samples from the prior, in which case the prior/proposal
//! ratio cancels and the importance weight is the likelihood estimate alone.

use std::time::{Duration, Instant};

use nalgebra::{Cholesky, Const, Matrix4, Vector4};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::normalize_log_weights;
use crate::likelihood::LikelihoodEstimator;
use crate::seed::{rng_for, Prng};
use crate::theta::{PriorBox, ThetaVector};

const LN_2PI: f64 = 1.8378770664093453;

// Seed-path tags for the two random streams of each iteration.
const STREAM_DRAW: u64 = 1;
const STREAM_WEIGHT: u64 = 2;

/// Multivariate Gaussian proposal over the four parameters.
#[derive(Debug, Clone)]
pub struct GaussianProposal {
    mean: Vector4<f64>,
    cov: Matrix4<f64>,
    chol: Cholesky<f64, Const<4>>,
    log_norm: f64,
}

impl GaussianProposal {
    /// Builds a proposal from a mean and a symmetric covariance.
    ///
    /// The covariance is symmetrized and must be positive definite (callers
    /// regularize with a jitter before getting here).
    pub fn new(mean: Vector4<f64>, cov: Matrix4<f64>) -> Result<Self> {
        let sym = (cov + cov.transpose()) * 0.5;
        let chol = sym
            .cholesky()
            .ok_or(Error::NotPositiveDefinite { what: "proposal covariance" })?;
        let log_det = 2.0 * chol.l().diagonal().map(f64::ln).sum();
        Ok(GaussianProposal {
            mean,
            cov: sym,
            chol,
            log_norm: -0.5 * (4.0 * LN_2PI + log_det),
        })
    }

    pub fn mean(&self) -> [f64; 4] {
        self.mean.into()
    }

    pub fn covariance(&self) -> [[f64; 4]; 4] {
        let mut out = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                out[i][j] = self.cov[(i, j)];
            }
        }
        out
    }

    pub fn sample(&self, rng: &mut Prng) -> ThetaVector {
        let z = Vector4::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        ThetaVector::from_array((self.mean + self.chol.l() * z).into())
    }

    pub fn log_density(&self, theta: &ThetaVector) -> f64 {
        let diff = Vector4::from(theta.as_array()) - self.mean;
        let solved = self.chol.solve(&diff);
        self.log_norm - 0.5 * diff.dot(&solved)
    }
}

/// The density samples are drawn from at one iteration.
#[derive(Debug, Clone)]
pub enum Proposal {
    Prior(PriorBox),
    Gaussian(GaussianProposal),
}

impl Proposal {
    pub fn sample(&self, rng: &mut Prng) -> ThetaVector {
        match self {
            Proposal::Prior(prior) => prior.sample(rng),
            Proposal::Gaussian(g) => g.sample(rng),
        }
    }

    pub fn log_density(&self, theta: &ThetaVector) -> f64 {
        match self {
            Proposal::Prior(prior) => prior.log_density(theta),
            Proposal::Gaussian(g) => g.log_density(theta),
        }
    }
}

/// One iteration's samples with raw, clipped, and normalized weights.
#[derive(Debug, Clone)]
pub struct WeightedSampleSet {
    pub thetas: Vec<ThetaVector>,
    /// Log importance weights.
    pub log_iw: Vec<f64>,
    /// Log transformed (clipped) importance weights.
    pub log_tiw: Vec<f64>,
    /// Normalized transformed weights; sum to one.
    pub weights: Vec<f64>,
    pub iteration: usize,
}

/// Sampler configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NpmcConfig {
    /// Samples per iteration (`M`).
    pub n_samples: usize,
    /// Number of proposal-adaptation iterations (`K`); the run performs
    /// `K + 1` weighting passes including the prior-sampling initialisation.
    pub n_iterations: usize,
    /// Clip count (`M_c`); must satisfy `1 <= M_c <= sqrt(M)`.
    pub clip_count: usize,
    /// Particles per likelihood evaluation.
    pub n_particles: usize,
    pub seed: u64,
    /// Covariance regularizer, as a fraction of the squared prior range per
    /// dimension.
    pub jitter_scale: f64,
}

impl NpmcConfig {
    /// Configuration with the default clip count `floor(sqrt(M))` (the
    /// largest admissible value) and jitter `1e-6`.
    pub fn new(n_samples: usize, n_iterations: usize, n_particles: usize, seed: u64) -> Self {
        NpmcConfig {
            n_samples,
            n_iterations,
            clip_count: (n_samples as f64).sqrt().floor() as usize,
            n_particles,
            seed,
            jitter_scale: 1e-6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 2 {
            return Err(Error::invalid("NPMC config", "n_samples must be >= 2"));
        }
        if self.clip_count < 1 || (self.clip_count as f64) > (self.n_samples as f64).sqrt() {
            return Err(Error::invalid(
                "NPMC config",
                format!(
                    "clip_count={} violates 1 <= M_c <= sqrt(M) for M={}",
                    self.clip_count, self.n_samples
                ),
            ));
        }
        if self.n_particles == 0 {
            return Err(Error::invalid("NPMC config", "n_particles must be >= 1"));
        }
        if !(self.jitter_scale >= 0.0 && self.jitter_scale.is_finite()) {
            return Err(Error::invalid("NPMC config", "jitter_scale must be >= 0"));
        }
        Ok(())
    }
}

/// Record of one iteration.
#[derive(Debug, Clone)]
pub struct NpmcIteration {
    pub samples: WeightedSampleSet,
    /// The Gaussian the samples were drawn from; `None` at iteration 0,
    /// which samples the prior.
    pub proposal: Option<GaussianProposal>,
    pub posterior_mean: ThetaVector,
    pub mse: f64,
    pub ess: f64,
    /// Samples falling outside the prior support (zero weight, no filter run).
    pub out_of_support: usize,
    /// Filter runs that failed (degenerate weights or numerical range).
    pub filter_failures: usize,
    pub wall_clock: Duration,
}

/// Full sampler output: iterations `0..=K` in order.
#[derive(Debug, Clone)]
pub struct NpmcResult {
    pub config: NpmcConfig,
    pub iterations: Vec<NpmcIteration>,
}

impl NpmcResult {
    pub fn final_iteration(&self) -> &NpmcIteration {
        self.iterations.last().expect("result has >= 1 iteration")
    }
}

/// Outcome of a single importance-weight evaluation.
#[derive(Debug, Clone, Copy)]
pub struct LogIwOutcome {
    pub log_iw: f64,
    pub out_of_support: bool,
    pub filter_failed: bool,
}

/// Clips the `clip_count` largest entries down to the `clip_count`-th
/// largest value (ties broken by lowest index), leaving the rest unchanged.
///
/// Operating on logs is equivalent to clipping the raw weights: the
/// transform is order-preserving.
pub fn clip_log_weights(log_iws: &[f64], clip_count: usize) -> Result<Vec<f64>> {
    if clip_count == 0 || clip_count > log_iws.len() {
        return Err(Error::invalid(
            "clip transform",
            format!("clip_count={} for {} weights", clip_count, log_iws.len()),
        ));
    }
    let mut order: Vec<usize> = (0..log_iws.len()).collect();
    order.sort_by(|&i, &j| log_iws[j].total_cmp(&log_iws[i]).then(i.cmp(&j)));
    let threshold = log_iws[order[clip_count - 1]];
    let mut out = log_iws.to_vec();
    for &i in &order[..clip_count] {
        out[i] = threshold;
    }
    Ok(out)
}

/// Evaluates one sample's log importance weight.
///
/// Out-of-support samples short-circuit to `-inf` without running the
/// estimator; estimator failures map to `-inf` and are flagged. When the
/// proposal is the prior itself the prior/proposal ratio cancels exactly.
pub fn evaluate_log_iw(
    theta: &ThetaVector,
    proposal: &Proposal,
    prior: &PriorBox,
    estimator: &impl LikelihoodEstimator,
    rng: &mut Prng,
) -> LogIwOutcome {
    if !prior.contains(theta) {
        return LogIwOutcome {
            log_iw: f64::NEG_INFINITY,
            out_of_support: true,
            filter_failed: false,
        };
    }
    match estimator.log_likelihood(theta, rng) {
        Err(_) => LogIwOutcome {
            log_iw: f64::NEG_INFINITY,
            out_of_support: false,
            filter_failed: true,
        },
        Ok(log_lik) => {
            let log_iw = match proposal {
                Proposal::Prior(_) => log_lik,
                Proposal::Gaussian(g) => log_lik + prior.log_density(theta) - g.log_density(theta),
            };
            LogIwOutcome {
                log_iw,
                out_of_support: false,
                filter_failed: false,
            }
        }
    }
}

/// Weighted mean and covariance of a sample set, regularized by a
/// per-dimension diagonal jitter.
pub fn fit_gaussian_proposal(
    set: &WeightedSampleSet,
    jitter: &[f64; 4],
) -> Result<GaussianProposal> {
    let supported = set.weights.iter().filter(|&&w| w > 0.0).count();
    if supported < 2 {
        return Err(Error::DegenerateProposal { got: supported });
    }
    let mut mean = Vector4::zeros();
    for (theta, &w) in set.thetas.iter().zip(&set.weights) {
        mean += Vector4::from(theta.as_array()) * w;
    }
    let mut cov = Matrix4::zeros();
    for (theta, &w) in set.thetas.iter().zip(&set.weights) {
        let d = Vector4::from(theta.as_array()) - mean;
        cov += d * d.transpose() * w;
    }
    for (i, &j) in jitter.iter().enumerate() {
        cov[(i, i)] += j;
    }
    GaussianProposal::new(mean, cov)
}

/// Normalized-weight average of the samples.
pub fn posterior_mean(set: &WeightedSampleSet) -> ThetaVector {
    let mut mean = [0.0; 4];
    for (theta, &w) in set.thetas.iter().zip(&set.weights) {
        for (m, x) in mean.iter_mut().zip(theta.as_array()) {
            *m += w * x;
        }
    }
    ThetaVector::from_array(mean)
}

/// Weighted mean squared Euclidean distance to an estimate.
pub fn posterior_mse(set: &WeightedSampleSet, estimate: &ThetaVector) -> f64 {
    let center = estimate.as_array();
    set.thetas
        .iter()
        .zip(&set.weights)
        .map(|(theta, &w)| {
            let d: f64 = theta
                .as_array()
                .iter()
                .zip(center)
                .map(|(x, c)| (x - c) * (x - c))
                .sum();
            w * d
        })
        .sum()
}

/// Weight-degeneracy diagnostic `1 / sum_i w_i^2` for normalized weights.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}

/// Runs the full sampler: prior-sampling initialisation plus `K` adaptive
/// iterations.
///
/// The `M` likelihood evaluations of an iteration run concurrently; each
/// uses a generator seeded from `(config seed, iteration, sample index)`,
/// so results do not depend on scheduling.
pub fn run_npmc(
    config: &NpmcConfig,
    estimator: &impl LikelihoodEstimator,
    prior: &PriorBox,
) -> Result<NpmcResult> {
    config.validate()?;
    prior.validate()?;
    let jitter = prior.ranges().map(|r| config.jitter_scale * r * r);

    let mut iterations: Vec<NpmcIteration> = Vec::with_capacity(config.n_iterations + 1);
    for k in 0..=config.n_iterations {
        let start = Instant::now();
        let proposal = match iterations.last() {
            None => Proposal::Prior(*prior),
            Some(previous) => {
                Proposal::Gaussian(fit_gaussian_proposal(&previous.samples, &jitter)?)
            }
        };

        let mut draw_rng = rng_for(config.seed, &[STREAM_DRAW, k as u64]);
        let thetas: Vec<ThetaVector> = (0..config.n_samples)
            .map(|_| proposal.sample(&mut draw_rng))
            .collect();

        let outcomes: Vec<LogIwOutcome> = thetas
            .par_iter()
            .enumerate()
            .map(|(i, theta)| {
                let mut rng = rng_for(config.seed, &[STREAM_WEIGHT, k as u64, i as u64]);
                evaluate_log_iw(theta, &proposal, prior, estimator, &mut rng)
            })
            .collect();

        let out_of_support = outcomes.iter().filter(|o| o.out_of_support).count();
        let filter_failures = outcomes.iter().filter(|o| o.filter_failed).count();
        let log_iw: Vec<f64> = outcomes.iter().map(|o| o.log_iw).collect();
        if log_iw.iter().all(|lw| *lw == f64::NEG_INFINITY) {
            return Err(Error::AllWeightsZero {
                iteration: k,
                n_samples: config.n_samples,
                out_of_support,
                filter_failures,
            });
        }

        // With fewer finite weights than the clip count, the threshold
        // weight would be zero and clipping would erase every weight; cap
        // the count by the number of usable samples.
        let finite = log_iw.iter().filter(|lw| lw.is_finite()).count();
        let effective_clip = config.clip_count.min(finite).max(1);
        let log_tiw = clip_log_weights(&log_iw, effective_clip)?;
        let (weights, _) = normalize_log_weights(&log_tiw)?;
        let samples = WeightedSampleSet {
            thetas,
            log_iw,
            log_tiw,
            weights,
            iteration: k,
        };
        let mean = posterior_mean(&samples);
        let mse = posterior_mse(&samples, &mean);
        let ess = effective_sample_size(&samples.weights);
        iterations.push(NpmcIteration {
            proposal: match proposal {
                Proposal::Gaussian(g) => Some(g),
                Proposal::Prior(_) => None,
            },
            posterior_mean: mean,
            mse,
            ess,
            out_of_support,
            filter_failures,
            samples,
            wall_clock: start.elapsed(),
        });
    }

    Ok(NpmcResult {
        config: *config,
        iterations,
    })
}
