//! The unknown-parameter vector and its uniform prior support.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::seed::Prng;

/// Names of the four inferred parameters, in vector order.
pub const THETA_NAMES: [&str; 4] = ["q", "m", "alpha", "beta_a"];

/// The four unknown model parameters `(Q, m, alpha, beta_a)`.
///
/// All other model parameters are treated as known constants at their
/// standard values; see [`ThetaVector::into_params`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaVector {
    pub q: f64,
    pub m: f64,
    pub alpha: f64,
    pub beta_a: f64,
}

impl ThetaVector {
    pub fn new(q: f64, m: f64, alpha: f64, beta_a: f64) -> Self {
        ThetaVector { q, m, alpha, beta_a }
    }

    /// The generating values of the reference experiments.
    pub fn standard() -> Self {
        let p = ModelParams::standard();
        ThetaVector {
            q: p.q,
            m: p.m,
            alpha: p.alpha,
            beta_a: p.beta_a,
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.q, self.m, self.alpha, self.beta_a]
    }

    pub fn from_array(x: [f64; 4]) -> Self {
        ThetaVector {
            q: x[0],
            m: x[1],
            alpha: x[2],
            beta_a: x[3],
        }
    }

    /// Assembles full model parameters: the four unknowns override the
    /// standard values, everything else stays fixed.
    pub fn into_params(self) -> ModelParams {
        ModelParams {
            q: self.q,
            m: self.m,
            alpha: self.alpha,
            beta_a: self.beta_a,
            ..ModelParams::standard()
        }
    }
}

/// Axis-aligned uniform prior support box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorBox {
    /// Per-parameter `(low, high)` bounds in `(Q, m, alpha, beta_a)` order.
    pub bounds: [(f64, f64); 4],
}

impl PriorBox {
    /// The support `(0,1) x (1,5) x (50,300) x (0,1)`.
    pub fn standard() -> Self {
        PriorBox {
            bounds: [(0.0, 1.0), (1.0, 5.0), (50.0, 300.0), (0.0, 1.0)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, (lo, hi)) in self.bounds.iter().enumerate() {
            if !(lo < hi && lo.is_finite() && hi.is_finite()) {
                return Err(Error::invalid(
                    "prior box",
                    format!("bounds for {} are ({lo}, {hi})", THETA_NAMES[i]),
                ));
            }
        }
        Ok(())
    }

    pub fn contains(&self, theta: &ThetaVector) -> bool {
        theta
            .as_array()
            .iter()
            .zip(self.bounds)
            .all(|(x, (lo, hi))| *x > lo && *x < hi)
    }

    /// Log-density of the uniform prior: constant inside the box,
    /// `-inf` outside.
    pub fn log_density(&self, theta: &ThetaVector) -> f64 {
        if self.contains(theta) {
            -self
                .bounds
                .iter()
                .map(|(lo, hi)| (hi - lo).ln())
                .sum::<f64>()
        } else {
            f64::NEG_INFINITY
        }
    }

    pub fn sample(&self, rng: &mut Prng) -> ThetaVector {
        let mut x = [0.0; 4];
        for (xi, (lo, hi)) in x.iter_mut().zip(self.bounds) {
            *xi = rng.random_range(lo..hi);
        }
        ThetaVector::from_array(x)
    }

    /// Per-dimension widths `high - low`.
    pub fn ranges(&self) -> [f64; 4] {
        let mut r = [0.0; 4];
        for (ri, (lo, hi)) in r.iter_mut().zip(self.bounds) {
            *ri = hi - lo;
        }
        r
    }
}
