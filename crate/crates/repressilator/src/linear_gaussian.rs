//! Linear-Gaussian reference model with an exact Kalman-filter likelihood.
//!
//! This model exists as a test oracle: the particle filter's likelihood
//! estimate can be compared against the exact marginal likelihood computed
//! by the prediction-error decomposition.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::seed::Prng;
use crate::ssm::StateSpaceModel;

const LN_2PI: f64 = 1.8378770664093453;

/// `x_n = F x_{n-1} + w`, `y_n = H x_n + v`, with `x_0 ~ N(m0, P0)`,
/// `w ~ N(0, Q)` and `v ~ N(0, R)`.
#[derive(Debug, Clone)]
pub struct LinearGaussianModel {
    transition: DMatrix<f64>,
    observation: DMatrix<f64>,
    transition_cov: DMatrix<f64>,
    observation_cov: DMatrix<f64>,
    prior_mean: DVector<f64>,
    prior_cov: DMatrix<f64>,
    chol_transition: Cholesky<f64, Dyn>,
    chol_observation: Cholesky<f64, Dyn>,
    chol_prior: Cholesky<f64, Dyn>,
    obs_log_norm: f64,
}

impl LinearGaussianModel {
    pub fn new(
        transition: DMatrix<f64>,
        transition_cov: DMatrix<f64>,
        observation: DMatrix<f64>,
        observation_cov: DMatrix<f64>,
        prior_mean: DVector<f64>,
        prior_cov: DMatrix<f64>,
    ) -> Result<Self> {
        let d = transition.nrows();
        let p = observation.nrows();
        let dims_ok = transition.ncols() == d
            && transition_cov.shape() == (d, d)
            && observation.ncols() == d
            && observation_cov.shape() == (p, p)
            && prior_mean.len() == d
            && prior_cov.shape() == (d, d);
        if !dims_ok {
            return Err(Error::invalid("linear-Gaussian model", "inconsistent dimensions"));
        }
        let chol_transition = transition_cov
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite { what: "transition covariance" })?;
        let chol_observation = observation_cov
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite { what: "observation covariance" })?;
        let chol_prior = prior_cov
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite { what: "prior covariance" })?;
        let log_det_r = 2.0 * chol_observation.l().diagonal().map(f64::ln).sum();
        Ok(LinearGaussianModel {
            transition,
            observation,
            transition_cov,
            observation_cov,
            prior_mean,
            prior_cov,
            chol_transition,
            chol_observation,
            chol_prior,
            obs_log_norm: -0.5 * (p as f64 * LN_2PI + log_det_r),
        })
    }

    /// One-dimensional convenience constructor.
    pub fn scalar(
        transition: f64,
        transition_var: f64,
        observation: f64,
        observation_var: f64,
        prior_mean: f64,
        prior_var: f64,
    ) -> Result<Self> {
        Self::new(
            DMatrix::from_element(1, 1, transition),
            DMatrix::from_element(1, 1, transition_var),
            DMatrix::from_element(1, 1, observation),
            DMatrix::from_element(1, 1, observation_var),
            DVector::from_element(1, prior_mean),
            DMatrix::from_element(1, 1, prior_var),
        )
    }

    pub fn state_dim(&self) -> usize {
        self.transition.nrows()
    }

    pub fn obs_dim(&self) -> usize {
        self.observation.nrows()
    }

    /// Exact log marginal likelihood of an observation sequence via the
    /// predict/update recursion with innovation log-densities.
    pub fn kalman_log_likelihood(&self, observations: &[DVector<f64>]) -> Result<f64> {
        let mut mean = self.prior_mean.clone();
        let mut cov = self.prior_cov.clone();
        let p = self.obs_dim() as f64;
        let mut log_lik = 0.0;
        for y in observations {
            let mean_pred = &self.transition * &mean;
            let cov_pred =
                &self.transition * &cov * self.transition.transpose() + &self.transition_cov;
            let innovation_cov =
                &self.observation * &cov_pred * self.observation.transpose() + &self.observation_cov;
            let chol = innovation_cov
                .clone()
                .cholesky()
                .ok_or(Error::NotPositiveDefinite { what: "innovation covariance" })?;
            let innovation = y - &self.observation * &mean_pred;
            let solved = chol.solve(&innovation);
            let log_det = 2.0 * chol.l().diagonal().map(f64::ln).sum();
            log_lik += -0.5 * (p * LN_2PI + log_det + innovation.dot(&solved));
            let gain = &cov_pred * self.observation.transpose() * chol.inverse();
            mean = mean_pred + &gain * innovation;
            cov = &cov_pred - &gain * &self.observation * &cov_pred;
            // Guard against symmetry drift over long recursions.
            cov = (&cov + cov.transpose()) * 0.5;
        }
        Ok(log_lik)
    }

    fn standard_normal_vector(&self, len: usize, rng: &mut Prng) -> DVector<f64> {
        DVector::from_fn(len, |_, _| rng.sample::<f64, _>(StandardNormal))
    }
}

impl StateSpaceModel for LinearGaussianModel {
    type State = DVector<f64>;
    type Obs = DVector<f64>;

    fn sample_initial(&self, rng: &mut Prng) -> DVector<f64> {
        let z = self.standard_normal_vector(self.state_dim(), rng);
        &self.prior_mean + self.chol_prior.l() * z
    }

    fn sample_transition(&self, state: &DVector<f64>, rng: &mut Prng) -> Result<DVector<f64>> {
        let z = self.standard_normal_vector(self.state_dim(), rng);
        Ok(&self.transition * state + self.chol_transition.l() * z)
    }

    fn log_obs_density(&self, obs: &DVector<f64>, state: &DVector<f64>) -> f64 {
        let innovation = obs - &self.observation * state;
        let solved = self.chol_observation.solve(&innovation);
        self.obs_log_norm - 0.5 * innovation.dot(&solved)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn obs1(values: &[f64]) -> Vec<DVector<f64>> {
        values.iter().map(|&v| DVector::from_element(1, v)).collect()
    }

    /// Independent brute-force likelihood for a 1-d model: forward grid
    /// recursion over a fine discretization of the state space.
    fn quadrature_log_likelihood(
        transition: f64,
        transition_var: f64,
        observation: f64,
        observation_var: f64,
        prior_mean: f64,
        prior_var: f64,
        ys: &[f64],
        half_width: f64,
        n_points: usize,
    ) -> f64 {
        let normal_pdf = |x: f64, mean: f64, var: f64| {
            (-(x - mean) * (x - mean) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
        };
        let step = 2.0 * half_width / (n_points - 1) as f64;
        let grid: Vec<f64> = (0..n_points).map(|i| -half_width + i as f64 * step).collect();
        let mut density: Vec<f64> = grid
            .iter()
            .map(|&x| normal_pdf(x, prior_mean, prior_var))
            .collect();
        let mut log_scale = 0.0;
        for &y in ys {
            let mut next = vec![0.0; n_points];
            for (j, &xj) in grid.iter().enumerate() {
                let mut acc = 0.0;
                for (i, &xi) in grid.iter().enumerate() {
                    acc += normal_pdf(xj, transition * xi, transition_var) * density[i];
                }
                next[j] = acc * step * normal_pdf(y, observation * xj, observation_var);
            }
            // Rescale to keep the recursion in range; track the factor.
            let total: f64 = next.iter().sum::<f64>() * step;
            log_scale += total.ln();
            for v in &mut next {
                *v /= total;
            }
            density = next;
        }
        log_scale
    }

    #[test]
    fn degenerate_chain_is_iid_gaussian() {
        // F = 0 and H = 0 make the observations i.i.d. N(0, R).
        let model = LinearGaussianModel::scalar(0.0, 1.0, 0.0, 1.0, 0.3, 1.0).unwrap();
        let ys = [0.4, -1.2, 2.0, 0.0];
        let expected: f64 = ys.iter().map(|y| -0.5 * (LN_2PI + y * y)).sum();
        let got = model.kalman_log_likelihood(&obs1(&ys)).unwrap();
        assert_relative_eq!(got, expected, max_relative = 1e-12);
    }

    #[test]
    fn random_walk_matches_quadrature_oracle() {
        let (f, q, h, r, m0, p0) = (1.0, 0.25, 1.0, 1.0, 0.0, 1.0);
        let ys = [0.5, 1.0, 0.2, -0.4, 0.9];
        let model = LinearGaussianModel::scalar(f, q, h, r, m0, p0).unwrap();
        let exact = model.kalman_log_likelihood(&obs1(&ys)).unwrap();
        let oracle = quadrature_log_likelihood(f, q, h, r, m0, p0, &ys, 12.0, 3001);
        assert_relative_eq!(exact, oracle, max_relative = 1e-6);
    }

    #[test]
    fn ordering_matters_except_for_iid_case() {
        let ys = [0.5, 1.0, 0.2, -0.4, 0.9];
        let mut reversed = ys;
        reversed.reverse();

        let iid = LinearGaussianModel::scalar(0.0, 1.0, 0.0, 1.0, 0.0, 1.0).unwrap();
        assert_relative_eq!(
            iid.kalman_log_likelihood(&obs1(&ys)).unwrap(),
            iid.kalman_log_likelihood(&obs1(&reversed)).unwrap(),
            max_relative = 1e-12
        );

        let correlated = LinearGaussianModel::scalar(1.0, 0.25, 1.0, 1.0, 0.0, 1.0).unwrap();
        let forward = correlated.kalman_log_likelihood(&obs1(&ys)).unwrap();
        let backward = correlated.kalman_log_likelihood(&obs1(&reversed)).unwrap();
        assert!((forward - backward).abs() > 1e-6);
    }

    #[test]
    fn non_spd_covariance_rejected() {
        assert!(LinearGaussianModel::scalar(1.0, -1.0, 1.0, 1.0, 0.0, 1.0).is_err());
        assert!(LinearGaussianModel::scalar(1.0, 1.0, 1.0, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn two_dimensional_dimensions_check() {
        let model = LinearGaussianModel::new(
            DMatrix::identity(2, 2) * 0.9,
            DMatrix::identity(2, 2) * 0.3,
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DMatrix::identity(1, 1),
            DVector::zeros(2),
            DMatrix::identity(2, 2),
        )
        .unwrap();
        assert_eq!((model.state_dim(), model.obs_dim()), (2, 1));
        let bad = LinearGaussianModel::new(
            DMatrix::identity(2, 2),
            DMatrix::identity(3, 3),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DMatrix::identity(1, 1),
            DVector::zeros(2),
            DMatrix::identity(2, 2),
        );
        assert!(bad.is_err());
    }
}
