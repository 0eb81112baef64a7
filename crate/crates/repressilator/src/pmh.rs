//! Particle Metropolis-Hastings baseline.
//!
//! A Gaussian random-walk chain over the four unknown parameters. Candidate
//! likelihoods are estimated with a fresh bootstrap filter run; the
//! incumbent's estimate is stored and reused until the next acceptance, the
//! convention that keeps the chain an exact-approximation method.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::LikelihoodEstimator;
use crate::seed::rng_for;
use crate::theta::{PriorBox, ThetaVector};

const STREAM_CHAIN: u64 = 11;
const STREAM_CANDIDATE: u64 = 12;

/// Chain configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PmhConfig {
    /// Number of chain states, the initial state included.
    pub chain_length: usize,
    /// Diagonal proposal variances in `(Q, m, alpha, beta_a)` order.
    pub proposal_var: [f64; 4],
    /// Particles per likelihood evaluation.
    pub n_particles: usize,
    pub initial: ThetaVector,
    pub seed: u64,
}

impl PmhConfig {
    /// Reference settings: chain length 6000, 100 filter particles, and the
    /// proposal variances `(0.01, 0.01, 100, 0.01)` — the large variance
    /// belongs to `alpha`, the only parameter with a prior range of 250.
    pub fn standard(initial: ThetaVector, seed: u64) -> Self {
        PmhConfig {
            chain_length: 6000,
            proposal_var: [0.01, 0.01, 100.0, 0.01],
            n_particles: 100,
            initial,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.chain_length < 1 {
            return Err(Error::invalid("PMH config", "chain_length must be >= 1"));
        }
        if self.n_particles == 0 {
            return Err(Error::invalid("PMH config", "n_particles must be >= 1"));
        }
        for (i, v) in self.proposal_var.iter().enumerate() {
            if !(*v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(
                    "PMH config",
                    format!("proposal variance {i} is {v}, must be > 0"),
                ));
            }
        }
        Ok(())
    }
}

/// One chain state.
#[derive(Debug, Clone, Copy)]
pub struct PmhStep {
    pub theta: ThetaVector,
    /// The stored likelihood estimate of the incumbent; carried over
    /// unchanged on rejection.
    pub log_likelihood: f64,
    /// Whether the proposal leading to this state was accepted (the initial
    /// state counts as accepted).
    pub accepted: bool,
}

/// A completed chain with bookkeeping counters.
#[derive(Debug, Clone)]
pub struct PmhChain {
    pub steps: Vec<PmhStep>,
    pub acceptance_rate: f64,
    /// Candidates rejected for leaving the prior support; no filter run.
    pub rejected_out_of_support: usize,
    /// Candidates rejected because their filter run failed.
    pub filter_failures: usize,
}

impl PmhChain {
    /// Posterior-mean estimate from the second half of the chain (the first
    /// half is discarded as burn-in).
    pub fn posterior_mean(&self) -> ThetaVector {
        let tail = &self.steps[self.steps.len() / 2..];
        let mut mean = [0.0; 4];
        for step in tail {
            for (m, x) in mean.iter_mut().zip(step.theta.as_array()) {
                *m += x;
            }
        }
        for m in &mut mean {
            *m /= tail.len() as f64;
        }
        ThetaVector::from_array(mean)
    }
}

/// Runs the chain. The initial state must lie inside the prior support.
pub fn run_pmh(
    config: &PmhConfig,
    estimator: &impl LikelihoodEstimator,
    prior: &PriorBox,
) -> Result<PmhChain> {
    config.validate()?;
    prior.validate()?;
    if !prior.contains(&config.initial) {
        return Err(Error::invalid(
            "PMH config",
            "initial state is outside the prior support",
        ));
    }

    let mut chain_rng = rng_for(config.seed, &[STREAM_CHAIN]);
    let proposal_std = config.proposal_var.map(f64::sqrt);

    let mut current = config.initial;
    let mut current_ll = estimator.log_likelihood(
        &current,
        &mut rng_for(config.seed, &[STREAM_CANDIDATE, 0]),
    )?;

    let mut steps = Vec::with_capacity(config.chain_length);
    steps.push(PmhStep {
        theta: current,
        log_likelihood: current_ll,
        accepted: true,
    });

    let mut accepted_count = 0usize;
    let mut rejected_out_of_support = 0usize;
    let mut filter_failures = 0usize;

    for step_index in 1..config.chain_length {
        let mut candidate = current.as_array();
        for (x, std) in candidate.iter_mut().zip(proposal_std) {
            let z: f64 = chain_rng.sample(StandardNormal);
            *x += std * z;
        }
        let candidate = ThetaVector::from_array(candidate);
        let u: f64 = chain_rng.random();

        let mut accepted = false;
        if !prior.contains(&candidate) {
            rejected_out_of_support += 1;
        } else {
            let mut candidate_rng =
                rng_for(config.seed, &[STREAM_CANDIDATE, step_index as u64]);
            match estimator.log_likelihood(&candidate, &mut candidate_rng) {
                Err(_) => filter_failures += 1,
                Ok(candidate_ll) => {
                    // Uniform prior densities cancel for in-support states;
                    // the symmetric proposal contributes nothing.
                    if u.ln() < candidate_ll - current_ll {
                        current = candidate;
                        current_ll = candidate_ll;
                        accepted = true;
                        accepted_count += 1;
                    }
                }
            }
        }
        steps.push(PmhStep {
            theta: current,
            log_likelihood: current_ll,
            accepted,
        });
    }

    let proposals = (config.chain_length - 1).max(1);
    Ok(PmhChain {
        steps,
        acceptance_rate: accepted_count as f64 / proposals as f64,
        rejected_out_of_support,
        filter_failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear_gaussian::LinearGaussianModel;
    use crate::seed::Prng;
    use approx::assert_abs_diff_eq;
    use nalgebra::DVector;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct CountingEstimator<F: Fn(&ThetaVector) -> Result<f64> + Sync> {
        calls: AtomicUsize,
        f: F,
    }

    impl<F: Fn(&ThetaVector) -> Result<f64> + Sync> LikelihoodEstimator for CountingEstimator<F> {
        fn log_likelihood(&self, theta: &ThetaVector, _rng: &mut Prng) -> Result<f64> {
            self.calls.fetch_add(1, Ordering::Relaxed);
            (self.f)(theta)
        }
    }

    fn small_config(seed: u64) -> PmhConfig {
        PmhConfig {
            chain_length: 500,
            proposal_var: [0.02, 0.1, 50.0, 0.02],
            n_particles: 1,
            initial: ThetaVector::standard(),
            seed,
        }
    }

    #[test]
    fn standard_config_values() {
        let cfg = PmhConfig::standard(ThetaVector::standard(), 1);
        assert_eq!(cfg.chain_length, 6000);
        assert_eq!(cfg.proposal_var, [0.01, 0.01, 100.0, 0.01]);
        assert_eq!(cfg.n_particles, 100);
        cfg.validate().unwrap();
    }

    #[test]
    fn constant_likelihood_accepts_every_in_support_proposal() {
        let estimator = CountingEstimator {
            calls: AtomicUsize::new(0),
            f: |_| Ok(-5.0),
        };
        let chain = run_pmh(&small_config(1), &estimator, &PriorBox::standard()).unwrap();
        let in_support_proposals =
            chain.steps.len() - 1 - chain.rejected_out_of_support - chain.filter_failures;
        let accepted = chain.steps.iter().skip(1).filter(|s| s.accepted).count();
        assert_eq!(accepted, in_support_proposals);
        assert_eq!(chain.filter_failures, 0);
    }

    #[test]
    fn incumbent_likelihood_is_never_recomputed() {
        let estimator = CountingEstimator {
            calls: AtomicUsize::new(0),
            f: |theta| Ok(-theta.q * theta.q),
        };
        let chain = run_pmh(&small_config(2), &estimator, &PriorBox::standard()).unwrap();
        let in_support_proposals =
            chain.steps.len() - 1 - chain.rejected_out_of_support - chain.filter_failures;
        // One call for the initial state plus exactly one per in-support
        // candidate, regardless of acceptance.
        assert_eq!(
            estimator.calls.load(Ordering::Relaxed),
            1 + in_support_proposals
        );
        // Rejections carry the stored estimate forward.
        for pair in chain.steps.windows(2) {
            if !pair[1].accepted {
                assert_eq!(pair[0].log_likelihood.to_bits(), pair[1].log_likelihood.to_bits());
            }
        }
    }

    #[test]
    fn out_of_support_candidates_skip_the_filter() {
        // An initial state close to the support corner makes escapes common.
        let estimator = CountingEstimator {
            calls: AtomicUsize::new(0),
            f: |theta| {
                assert!(PriorBox::standard().contains(theta), "filter ran out of support");
                Ok(0.0)
            },
        };
        let config = PmhConfig {
            initial: ThetaVector::new(0.05, 1.05, 55.0, 0.05),
            ..small_config(3)
        };
        let chain = run_pmh(&config, &estimator, &PriorBox::standard()).unwrap();
        assert!(chain.rejected_out_of_support > 0);
    }

    #[test]
    fn filter_failures_reject_the_candidate() {
        let estimator = CountingEstimator {
            calls: AtomicUsize::new(0),
            f: |theta| {
                if theta.q > 0.85 {
                    Err(Error::DegenerateWeights { tick: 1 })
                } else {
                    Ok(0.0)
                }
            },
        };
        let chain = run_pmh(&small_config(4), &estimator, &PriorBox::standard()).unwrap();
        assert!(chain.filter_failures > 0);
        assert!(chain.steps.iter().all(|s| s.theta.q <= 0.85));
    }

    #[test]
    fn chains_are_seed_deterministic() {
        let estimator = |theta: &ThetaVector, _: &mut Prng| -> Result<f64> { Ok(-theta.m) };
        let a = run_pmh(&small_config(5), &estimator, &PriorBox::standard()).unwrap();
        let b = run_pmh(&small_config(5), &estimator, &PriorBox::standard()).unwrap();
        for (x, y) in a.steps.iter().zip(&b.steps) {
            assert_eq!(x.theta, y.theta);
        }
        assert_eq!(a.acceptance_rate, b.acceptance_rate);
    }

    #[test]
    fn out_of_support_initial_state_rejected() {
        let estimator = |_: &ThetaVector, _: &mut Prng| -> Result<f64> { Ok(0.0) };
        let config = PmhConfig {
            initial: ThetaVector::new(2.0, 2.0, 100.0, 0.5),
            ..small_config(6)
        };
        assert!(run_pmh(&config, &estimator, &PriorBox::standard()).is_err());
    }

    #[test]
    fn chain_matches_exact_posterior_from_quadrature() {
        // 1-d unknown: the prior mean of a scalar linear-Gaussian model,
        // mapped onto the `q` component. The likelihood is evaluated exactly
        // by the Kalman recursion; the reference posterior CDF comes from an
        // independent grid quadrature of the same likelihood.
        let data: Vec<DVector<f64>> = [0.42, 0.55, 0.38, 0.61, 0.47]
            .iter()
            .map(|&v| DVector::from_element(1, v))
            .collect();
        let log_lik = |q: f64| {
            LinearGaussianModel::scalar(1.0, 0.01, 1.0, 0.04, q, 0.04)
                .unwrap()
                .kalman_log_likelihood(&data)
                .unwrap()
        };
        let estimator =
            |theta: &ThetaVector, _: &mut Prng| -> Result<f64> { Ok(log_lik(theta.q)) };

        let config = PmhConfig {
            chain_length: 10_000,
            proposal_var: [0.02, 0.1, 100.0, 0.02],
            n_particles: 1,
            initial: ThetaVector::new(0.5, 3.0, 175.0, 0.5),
            seed: 7,
        };
        let chain = run_pmh(&config, &estimator, &PriorBox::standard()).unwrap();

        // Quadrature posterior CDF on (0, 1).
        let n_grid = 4001;
        let step = 1.0 / (n_grid - 1) as f64;
        let density: Vec<f64> = (0..n_grid)
            .map(|i| log_lik(i as f64 * step).exp())
            .collect();
        let total: f64 = density.iter().sum();
        let cdf: Vec<f64> = density
            .iter()
            .scan(0.0, |acc, d| {
                *acc += d / total;
                Some(*acc)
            })
            .collect();

        // Kolmogorov-Smirnov distance between the chain's q samples
        // (post burn-in) and the quadrature CDF.
        let mut qs: Vec<f64> = chain.steps[chain.steps.len() / 2..]
            .iter()
            .map(|s| s.theta.q)
            .collect();
        qs.sort_by(f64::total_cmp);
        let n = qs.len() as f64;
        let mut ks: f64 = 0.0;
        for (i, &q) in qs.iter().enumerate() {
            let grid_index = ((q / step) as usize).min(n_grid - 1);
            let empirical = (i + 1) as f64 / n;
            ks = ks.max((empirical - cdf[grid_index]).abs());
        }
        assert!(ks < 0.1, "KS distance {ks}");

        // The posterior mean lands near the quadrature mean.
        let quad_mean: f64 = (0..n_grid)
            .map(|i| i as f64 * step * density[i] / total)
            .sum();
        assert_abs_diff_eq!(chain.posterior_mean().q, quad_mean, epsilon = 0.02);
    }
}
