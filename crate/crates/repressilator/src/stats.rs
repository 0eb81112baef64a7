//! Post-processing: weighted kernel density estimates and the normalized
//! mean-square-error benchmark metric.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::theta::{ThetaVector, THETA_NAMES};

const LN_2PI: f64 = 1.8378770664093453;

/// A univariate Gaussian-kernel density estimate on an evaluation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdeCurve {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
}

impl KdeCurve {
    /// Trapezoid integral over the grid.
    pub fn integral(&self) -> f64 {
        self.grid
            .windows(2)
            .zip(self.density.windows(2))
            .map(|(x, f)| 0.5 * (f[0] + f[1]) * (x[1] - x[0]))
            .sum()
    }
}

/// Weighted Gaussian-kernel density estimate
/// `f(x) = sum_i w_i N(x; s_i, bandwidth^2)`.
pub fn weighted_kde(
    samples: &[f64],
    weights: &[f64],
    grid: &[f64],
    bandwidth: f64,
) -> Result<KdeCurve> {
    if samples.is_empty() {
        return Err(Error::invalid("KDE", "no samples"));
    }
    if samples.len() != weights.len() {
        return Err(Error::invalid(
            "KDE",
            format!("{} samples but {} weights", samples.len(), weights.len()),
        ));
    }
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::invalid("KDE", format!("bandwidth {bandwidth} must be > 0")));
    }
    let norm = -0.5 * LN_2PI - bandwidth.ln();
    let inv_two_bw2 = 1.0 / (2.0 * bandwidth * bandwidth);
    let density = grid
        .iter()
        .map(|&x| {
            samples
                .iter()
                .zip(weights)
                .map(|(&s, &w)| {
                    let d = x - s;
                    w * (norm - d * d * inv_two_bw2).exp()
                })
                .sum()
        })
        .collect();
    Ok(KdeCurve {
        grid: grid.to_vec(),
        density,
        bandwidth,
    })
}

/// Evenly spaced grid covering `[lo, hi]` with `n` points.
pub fn linear_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![lo];
    }
    let step = (hi - lo) / (n - 1) as f64;
    (0..n).map(|i| lo + i as f64 * step).collect()
}

/// Rule-of-thumb bandwidth `1.06 * sigma_w * ESS^(-1/5)` for weighted
/// samples, with the effective sample size in place of the sample count.
pub fn silverman_bandwidth(samples: &[f64], weights: &[f64]) -> Result<f64> {
    if samples.len() < 2 || samples.len() != weights.len() {
        return Err(Error::invalid(
            "bandwidth",
            "need at least two samples with matching weights",
        ));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::invalid("bandwidth", "weights sum to zero"));
    }
    let mean: f64 = samples.iter().zip(weights).map(|(s, w)| s * w).sum::<f64>() / total;
    let var: f64 = samples
        .iter()
        .zip(weights)
        .map(|(s, w)| w * (s - mean) * (s - mean))
        .sum::<f64>()
        / total;
    if !(var > 0.0) {
        return Err(Error::invalid("bandwidth", "weighted variance is zero"));
    }
    let ess = total * total / weights.iter().map(|w| w * w).sum::<f64>();
    Ok(1.06 * var.sqrt() * ess.powf(-0.2))
}

/// Per-parameter squared relative error statistics across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NmseEntry {
    pub parameter: String,
    pub mean: f64,
    pub std: f64,
}

/// NMSE report for one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NmseReport {
    pub method: String,
    pub n_runs: usize,
    pub per_parameter: Vec<NmseEntry>,
}

/// Normalized mean square error of posterior-mean estimates: for each
/// parameter `j`, the mean over runs of `(est_j - truth_j)^2 / truth_j^2`,
/// with the across-run standard deviation of the same quantity.
pub fn nmse(method: &str, estimates: &[ThetaVector], truth: &ThetaVector) -> Result<NmseReport> {
    if estimates.is_empty() {
        return Err(Error::invalid("NMSE", "no estimates"));
    }
    if truth.as_array().iter().any(|t| *t == 0.0) {
        return Err(Error::invalid("NMSE", "truth has a zero component"));
    }
    let n = estimates.len() as f64;
    let truth_arr = truth.as_array();
    let per_parameter = (0..4)
        .map(|d| {
            let errors: Vec<f64> = estimates
                .iter()
                .map(|est| {
                    let e = est.as_array()[d] - truth_arr[d];
                    e * e / (truth_arr[d] * truth_arr[d])
                })
                .collect();
            let mean = errors.iter().sum::<f64>() / n;
            let std = if estimates.len() > 1 {
                (errors.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            NmseEntry {
                parameter: THETA_NAMES[d].to_string(),
                mean,
                std,
            }
        })
        .collect();
    Ok(NmseReport {
        method: method.to_string(),
        n_runs: estimates.len(),
        per_parameter,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_for;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::Rng;

    #[test]
    fn single_sample_kde_is_the_kernel() {
        let grid = linear_grid(-3.0, 5.0, 101);
        let curve = weighted_kde(&[1.0], &[1.0], &grid, 0.5).unwrap();
        for (&x, &f) in grid.iter().zip(&curve.density) {
            let d: f64 = x - 1.0;
            let kernel = (-0.5 * LN_2PI - 0.5f64.ln() - d * d / (2.0 * 0.25)).exp();
            assert_relative_eq!(f, kernel, max_relative = 1e-12);
        }
    }

    #[test]
    fn symmetric_samples_give_symmetric_curve() {
        let grid = linear_grid(-4.0, 4.0, 81);
        let curve = weighted_kde(&[-1.0, 1.0], &[0.5, 0.5], &grid, 0.7).unwrap();
        let n = grid.len();
        for i in 0..n {
            assert_relative_eq!(
                curve.density[i],
                curve.density[n - 1 - i],
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn kde_matches_double_loop_oracle() {
        let mut rng = rng_for(1, &[]);
        for _ in 0..20 {
            let n = 2 + (rng.random::<u32>() % 30) as usize;
            let samples: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
            let bandwidth = rng.random_range(0.1..1.0);
            let grid = linear_grid(-4.0, 4.0, 37);
            let curve = weighted_kde(&samples, &weights, &grid, bandwidth).unwrap();
            for (&x, &f) in grid.iter().zip(&curve.density) {
                let mut direct = 0.0;
                for i in 0..n {
                    let z = (x - samples[i]) / bandwidth;
                    direct += weights[i]
                        * (-0.5 * z * z).exp()
                        / (bandwidth * (2.0 * std::f64::consts::PI).sqrt());
                }
                assert_abs_diff_eq!(f, direct, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn kde_is_linear_in_weights() {
        let samples = [0.0, 0.5, 1.5, -0.25];
        let w1 = [0.1, 0.2, 0.3, 0.4];
        let w2 = [0.4, 0.3, 0.2, 0.1];
        let summed: Vec<f64> = w1.iter().zip(&w2).map(|(a, b)| a + b).collect();
        let grid = linear_grid(-2.0, 3.0, 51);
        let c1 = weighted_kde(&samples, &w1, &grid, 0.4).unwrap();
        let c2 = weighted_kde(&samples, &w2, &grid, 0.4).unwrap();
        let c12 = weighted_kde(&samples, &summed, &grid, 0.4).unwrap();
        for i in 0..grid.len() {
            assert_relative_eq!(
                c1.density[i] + c2.density[i],
                c12.density[i],
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn kde_integrates_to_one_on_a_wide_grid() {
        let mut rng = rng_for(2, &[]);
        let samples: Vec<f64> = (0..200).map(|_| rng.random_range(-1.0..1.0)).collect();
        let weights = vec![1.0 / 200.0; 200];
        let bandwidth = silverman_bandwidth(&samples, &weights).unwrap();
        let lo = samples.iter().cloned().fold(f64::INFINITY, f64::min) - 3.0 * bandwidth;
        let hi = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 3.0 * bandwidth;
        let curve = weighted_kde(&samples, &weights, &linear_grid(lo, hi, 512), bandwidth).unwrap();
        assert!(curve.density.iter().all(|d| *d >= 0.0));
        assert_abs_diff_eq!(curve.integral(), 1.0, epsilon = 0.02);
    }

    #[test]
    fn bandwidth_reference_value() {
        // 100 equally weighted samples with unit weighted variance:
        // 1.06 * 100^(-1/5), checked against a direct calculator evaluation.
        let n = 100;
        let samples: Vec<f64> = (0..n)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let weights = vec![1.0 / n as f64; n];
        let got = silverman_bandwidth(&samples, &weights).unwrap();
        assert_relative_eq!(got, 0.42199360078670709, max_relative = 1e-14);
    }

    #[test]
    fn bandwidth_scales_with_the_samples() {
        let mut rng = rng_for(3, &[]);
        let samples: Vec<f64> = (0..50).map(|_| rng.random_range(-2.0..2.0)).collect();
        let weights = vec![1.0 / 50.0; 50];
        let base = silverman_bandwidth(&samples, &weights).unwrap();
        let scaled: Vec<f64> = samples.iter().map(|s| 3.0 * s).collect();
        assert_relative_eq!(
            silverman_bandwidth(&scaled, &weights).unwrap(),
            3.0 * base,
            max_relative = 1e-12
        );
    }

    #[test]
    fn degenerate_bandwidth_inputs_rejected() {
        assert!(silverman_bandwidth(&[1.0], &[1.0]).is_err());
        assert!(silverman_bandwidth(&[2.0; 10], &[0.1; 10]).is_err());
    }

    #[test]
    fn nmse_reference_cases() {
        let truth = ThetaVector::standard();
        let exact = nmse("exact", &[truth, truth], &truth).unwrap();
        assert!(exact.per_parameter.iter().all(|e| e.mean == 0.0 && e.std == 0.0));

        // A single run with q doubled: NMSE for q is 1, others 0.
        let mut doubled = truth;
        doubled.q *= 2.0;
        let report = nmse("doubled", &[doubled], &truth).unwrap();
        assert_relative_eq!(report.per_parameter[0].mean, 1.0, max_relative = 1e-12);
        for entry in &report.per_parameter[1..] {
            assert_eq!(entry.mean, 0.0);
        }

        // Two runs with symmetric errors +/- delta on m.
        let delta = 0.3;
        let mut up = truth;
        up.m += delta;
        let mut down = truth;
        down.m -= delta;
        let report = nmse("symmetric", &[up, down], &truth).unwrap();
        assert_relative_eq!(
            report.per_parameter[1].mean,
            delta * delta / (truth.m * truth.m),
            max_relative = 1e-12
        );
        assert_abs_diff_eq!(report.per_parameter[1].std, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn nmse_shift_affects_only_one_parameter() {
        let truth = ThetaVector::standard();
        let mut rng = rng_for(4, &[]);
        let estimates: Vec<ThetaVector> = (0..10)
            .map(|_| {
                ThetaVector::new(
                    truth.q + rng.random_range(-0.05..0.05),
                    truth.m + rng.random_range(-0.2..0.2),
                    truth.alpha + rng.random_range(-10.0..10.0),
                    truth.beta_a + rng.random_range(-0.05..0.05),
                )
            })
            .collect();
        let base = nmse("base", &estimates, &truth).unwrap();
        let shifted: Vec<ThetaVector> = estimates
            .iter()
            .map(|e| ThetaVector::new(e.q, e.m, e.alpha + 30.0, e.beta_a))
            .collect();
        let moved = nmse("shifted", &shifted, &truth).unwrap();
        assert!(moved.per_parameter[2].mean > base.per_parameter[2].mean);
        for d in [0usize, 1, 3] {
            assert_relative_eq!(
                moved.per_parameter[d].mean,
                base.per_parameter[d].mean,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn nmse_rejects_zero_truth() {
        let truth = ThetaVector::new(0.0, 2.6, 216.0, 0.85);
        assert!(nmse("bad", &[ThetaVector::standard()], &truth).is_err());
        assert!(nmse("empty", &[], &ThetaVector::standard()).is_err());
    }
}
