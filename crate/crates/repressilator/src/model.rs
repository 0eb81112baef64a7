//! Stochastic two-cell repressilator dynamics.
//!
//! Two identical three-gene ring oscillators are coupled through an
//! autoinducer (AI) molecule that diffuses across the cell membranes. Each
//! cell carries seven concentrations: three mRNAs (`a`, `b`, `c`), their
//! protein products (`A`, `B`, `C`) and the intracellular AI level (`S`).
//! The extracellular AI concentration is eliminated with a quasi-steady-state
//! approximation, leaving a coupling term proportional to the mean
//! intracellular level.
//!
//! Dynamical noise is multiplicative: each component `x` carries an
//! independent Wiener term `sigma_x * x * dW`. Integration uses the
//! Euler-Maruyama scheme with increment `h * drift + sigma_x * x * sqrt(h) * z`,
//! `z ~ N(0,1)`, and clamps components at zero afterwards to preserve the
//! concentration semantics (clamp events are counted on the trajectory).

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::Prng;

/// The model always couples exactly two cells.
pub const N_CELLS: usize = 2;

/// Total number of state components (7 per cell).
pub const STATE_DIM: usize = N_CELLS * 7;

/// Component labels in serialization order: cell 1 then cell 2, each
/// `(a, b, c, A, B, C, S)`.
pub const COMPONENT_NAMES: [&str; STATE_DIM] = [
    "a1", "b1", "c1", "A1", "B1", "C1", "S1", "a2", "b2", "c2", "A2", "B2", "C2", "S2",
];

/// Constant parameters of the coupled-repressilator model.
///
/// All rates are dimensionless: time is measured in units of the mRNA
/// lifetime and concentrations in units of their Michaelis constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Extracellular coupling strength, in (0, 1).
    pub q: f64,
    /// Hill coefficient of the transcriptional repression terms.
    pub m: f64,
    /// Maximum transcription rate in the absence of repressor.
    pub alpha: f64,
    /// mRNA-to-protein lifetime ratio for the `a`/`A` pair.
    pub beta_a: f64,
    /// Lifetime ratio for the `b`/`B` pair.
    pub beta_b: f64,
    /// Lifetime ratio for the `c`/`C` pair.
    pub beta_c: f64,
    /// AI membrane diffusion coefficient.
    pub eta: f64,
    /// Maximum transcription rate of the AI-activated promoter.
    pub kappa: f64,
    /// Intracellular AI degradation rate.
    pub ks0: f64,
    /// AI synthesis rate (driven by protein `B`).
    pub ks1: f64,
}

impl ModelParams {
    /// The standard parameter set, which puts the deterministic system in a
    /// chaotic regime.
    pub fn standard() -> Self {
        ModelParams {
            q: 0.85,
            m: 2.6,
            alpha: 216.0,
            beta_a: 0.85,
            beta_b: 0.1,
            beta_c: 0.1,
            eta: 2.0,
            kappa: 25.0,
            ks0: 1.0,
            ks1: 0.01,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(Error::invalid("model params", format!("q={} not in (0,1)", self.q)));
        }
        if !(self.m > 0.0) {
            return Err(Error::invalid("model params", format!("m={} not positive", self.m)));
        }
        let rates = [
            ("alpha", self.alpha),
            ("beta_a", self.beta_a),
            ("beta_b", self.beta_b),
            ("beta_c", self.beta_c),
            ("eta", self.eta),
            ("kappa", self.kappa),
            ("ks0", self.ks0),
            ("ks1", self.ks1),
        ];
        for (name, value) in rates {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::invalid(
                    "model params",
                    format!("{name}={value} must be strictly positive and finite"),
                ));
            }
        }
        Ok(())
    }
}

/// Multiplicative noise scale per state-variable class.
///
/// All scales must be nonnegative; all-zero recovers the deterministic model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseScales {
    pub mrna_a: f64,
    pub mrna_b: f64,
    pub mrna_c: f64,
    pub prot_a: f64,
    pub prot_b: f64,
    pub prot_c: f64,
    pub ai: f64,
}

impl NoiseScales {
    pub fn zero() -> Self {
        Self::uniform(0.0)
    }

    /// The same scale on every component.
    pub fn uniform(sigma: f64) -> Self {
        NoiseScales {
            mrna_a: sigma,
            mrna_b: sigma,
            mrna_c: sigma,
            prot_a: sigma,
            prot_b: sigma,
            prot_c: sigma,
            ai: sigma,
        }
    }

    /// Scales in component order `(a, b, c, A, B, C, S)`.
    pub fn as_array(&self) -> [f64; 7] {
        [
            self.mrna_a,
            self.mrna_b,
            self.mrna_c,
            self.prot_a,
            self.prot_b,
            self.prot_c,
            self.ai,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (i, sigma) in self.as_array().into_iter().enumerate() {
            if !(sigma >= 0.0 && sigma.is_finite()) {
                return Err(Error::invalid(
                    "noise scales",
                    format!("scale for {} is {sigma}, must be >= 0", COMPONENT_NAMES[i]),
                ));
            }
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.as_array().iter().all(|&s| s == 0.0)
    }
}

/// The seven concentrations of one cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellState {
    pub mrna_a: f64,
    pub mrna_b: f64,
    pub mrna_c: f64,
    pub prot_a: f64,
    pub prot_b: f64,
    pub prot_c: f64,
    pub ai: f64,
}

impl CellState {
    pub fn as_array(&self) -> [f64; 7] {
        [
            self.mrna_a,
            self.mrna_b,
            self.mrna_c,
            self.prot_a,
            self.prot_b,
            self.prot_c,
            self.ai,
        ]
    }

    pub fn from_array(x: [f64; 7]) -> Self {
        CellState {
            mrna_a: x[0],
            mrna_b: x[1],
            mrna_c: x[2],
            prot_a: x[3],
            prot_b: x[4],
            prot_c: x[5],
            ai: x[6],
        }
    }
}

/// Full system state: the two cells' concentrations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub cells: [CellState; N_CELLS],
}

impl SystemState {
    /// Flattens to the 14-vector `(cell 1, cell 2)`, each `(a,b,c,A,B,C,S)`.
    pub fn to_array(&self) -> [f64; STATE_DIM] {
        let mut out = [0.0; STATE_DIM];
        for (cell, chunk) in self.cells.iter().zip(out.chunks_exact_mut(7)) {
            chunk.copy_from_slice(&cell.as_array());
        }
        out
    }

    pub fn from_array(x: [f64; STATE_DIM]) -> Self {
        let mut cells = [CellState::from_array([0.0; 7]); N_CELLS];
        for (i, cell) in cells.iter_mut().enumerate() {
            let mut chunk = [0.0; 7];
            chunk.copy_from_slice(&x[7 * i..7 * (i + 1)]);
            *cell = CellState::from_array(chunk);
        }
        SystemState { cells }
    }

    /// The observable pair `(a_1, a_2)`.
    pub fn observed_mrna(&self) -> [f64; 2] {
        [self.cells[0].mrna_a, self.cells[1].mrna_a]
    }

    pub fn is_valid(&self) -> bool {
        self.to_array().iter().all(|&x| x.is_finite() && x >= 0.0)
    }
}

/// A discretized sample path on the uniform grid `t = m * h`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Integration step in time units.
    pub h: f64,
    /// States indexed by discrete time, including the initial state.
    pub states: Vec<SystemState>,
    /// Number of components clamped to zero across the whole simulation.
    pub clamp_events: u64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn time(&self, index: usize) -> f64 {
        index as f64 * self.h
    }
}

/// One noisy reading of `(a_1, a_2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// Observation tick `n >= 1`; the underlying state index is `n * m_o`.
    pub tick: usize,
    pub y: [f64; 2],
}

/// An ordered sequence of observations on the decimated grid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObservationSequence(pub Vec<Observation>);

impl ObservationSequence {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[Observation] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Observation> {
        self.0.iter()
    }
}

/// Gaussian initial-state distribution: `N(mean, sigma^2 I)`, clamped at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialCondition {
    pub mean: [f64; STATE_DIM],
    pub sigma: f64,
}

impl InitialCondition {
    /// The reference initial condition used throughout the experiments.
    pub fn standard() -> Self {
        InitialCondition {
            mean: [
                4.5, 6.0, 3.0, 4.2, 19.0, 4.3, 0.1, 7.3, 1.5, 3.4, 7.0, 6.5, 3.6, 0.08,
            ],
            sigma: 0.05,
        }
    }

    pub fn sample(&self, rng: &mut Prng) -> SystemState {
        let mut x = [0.0; STATE_DIM];
        for (xi, mu) in x.iter_mut().zip(self.mean) {
            let z: f64 = rng.sample(StandardNormal);
            *xi = (mu + self.sigma * z).max(0.0);
        }
        SystemState::from_array(x)
    }
}

/// Quasi-steady-state extracellular AI level: `q` times the mean
/// intracellular AI concentration.
pub fn extracellular_ai(state: &SystemState, q: f64) -> f64 {
    let sum: f64 = state.cells.iter().map(|c| c.ai).sum();
    q * sum / N_CELLS as f64
}

/// Repressive Hill production term `alpha / (1 + x^m)`.
///
/// For large `x` the power is evaluated in the log domain so the term
/// saturates to zero instead of overflowing.
fn hill(alpha: f64, x: f64, m: f64) -> f64 {
    if x <= 0.0 {
        return alpha;
    }
    let xm = if x > 1e6 {
        let log_pow = m * x.ln();
        if log_pow > 700.0 {
            return 0.0;
        }
        log_pow.exp()
    } else {
        x.powf(m)
    };
    alpha / (1.0 + xm)
}

fn drift_array(x: &[f64; STATE_DIM], params: &ModelParams, s_e: f64) -> [f64; STATE_DIM] {
    let mut d = [0.0; STATE_DIM];
    for cell in 0..N_CELLS {
        let o = 7 * cell;
        let (a, b, c) = (x[o], x[o + 1], x[o + 2]);
        let (pa, pb, pc) = (x[o + 3], x[o + 4], x[o + 5]);
        let s = x[o + 6];
        d[o] = -(a - hill(params.alpha, pc, params.m));
        d[o + 1] = -(b - hill(params.alpha, pa, params.m));
        d[o + 2] = -(c - hill(params.alpha, pb, params.m) - params.kappa * s / (1.0 + s));
        d[o + 3] = params.beta_a * (a - pa);
        d[o + 4] = params.beta_b * (b - pb);
        d[o + 5] = params.beta_c * (c - pc);
        d[o + 6] = -(params.ks0 * s - params.ks1 * pb + params.eta * (s - s_e));
    }
    d
}

/// Deterministic time derivative of all 14 components.
pub fn drift(state: &SystemState, params: &ModelParams) -> [f64; STATE_DIM] {
    let x = state.to_array();
    drift_array(&x, params, extracellular_ai(state, params.q))
}

fn step_array(
    x: &[f64; STATE_DIM],
    params: &ModelParams,
    sigma: &[f64; 7],
    h: f64,
    rng: &mut Prng,
    clamps: &mut u64,
) -> Result<[f64; STATE_DIM]> {
    let s_e = params.q * (x[6] + x[13]) / N_CELLS as f64;
    let d = drift_array(x, params, s_e);
    let sqrt_h = h.sqrt();
    // The full noise vector is drawn every step, regardless of the scales,
    // so random streams line up across noise settings.
    let mut z = [0.0; STATE_DIM];
    for zi in &mut z {
        *zi = rng.sample::<f64, _>(StandardNormal);
    }
    let mut out = [0.0; STATE_DIM];
    for i in 0..STATE_DIM {
        let next = x[i] + h * d[i] + sigma[i % 7] * x[i] * sqrt_h * z[i];
        if !next.is_finite() {
            return Err(Error::NonFinite {
                component: COMPONENT_NAMES[i],
                step: 0,
            });
        }
        out[i] = if next < 0.0 {
            *clamps += 1;
            0.0
        } else {
            next
        };
    }
    Ok(out)
}

/// One Euler-Maruyama step of size `h`.
///
/// With all noise scales zero this reduces exactly to a forward Euler step;
/// with `h = 0` it returns the state unchanged. Components that step below
/// zero are clamped to zero.
pub fn euler_maruyama_step(
    state: &SystemState,
    params: &ModelParams,
    noise: &NoiseScales,
    h: f64,
    rng: &mut Prng,
) -> Result<SystemState> {
    let mut clamps = 0;
    let x = state.to_array();
    let out = step_array(&x, params, &noise.as_array(), h, rng, &mut clamps)?;
    Ok(SystemState::from_array(out))
}

/// Iterates the Euler-Maruyama step `n_steps` times.
///
/// The returned trajectory contains `n_steps + 1` states (initial state
/// included) and is a pure function of the generator state.
pub fn simulate(
    initial: &SystemState,
    params: &ModelParams,
    noise: &NoiseScales,
    h: f64,
    n_steps: usize,
    rng: &mut Prng,
) -> Result<Trajectory> {
    if n_steps == 0 {
        return Err(Error::invalid("simulation", "n_steps must be >= 1"));
    }
    let sigma = noise.as_array();
    let mut clamps = 0;
    let mut states = Vec::with_capacity(n_steps + 1);
    states.push(*initial);
    let mut x = initial.to_array();
    for step in 1..=n_steps {
        x = step_array(&x, params, &sigma, h, rng, &mut clamps).map_err(|e| match e {
            Error::NonFinite { component, .. } => Error::NonFinite { component, step },
            other => other,
        })?;
        states.push(SystemState::from_array(x));
    }
    Ok(Trajectory {
        h,
        states,
        clamp_events: clamps,
    })
}

/// Forward-Euler simulation of the noiseless model; no random draws.
///
/// Produces exactly the same states as [`simulate`] with all noise scales
/// zero (the stochastic increment contributes an exact `+0.0` there).
pub fn simulate_deterministic(
    initial: &SystemState,
    params: &ModelParams,
    h: f64,
    n_steps: usize,
) -> Result<Trajectory> {
    if n_steps == 0 {
        return Err(Error::invalid("simulation", "n_steps must be >= 1"));
    }
    let mut clamps = 0;
    let mut states = Vec::with_capacity(n_steps + 1);
    states.push(*initial);
    let mut x = initial.to_array();
    for step in 1..=n_steps {
        let s_e = params.q * (x[6] + x[13]) / N_CELLS as f64;
        let d = drift_array(&x, params, s_e);
        for i in 0..STATE_DIM {
            let next = x[i] + h * d[i];
            if !next.is_finite() {
                return Err(Error::NonFinite {
                    component: COMPONENT_NAMES[i],
                    step,
                });
            }
            x[i] = if next < 0.0 {
                clamps += 1;
                0.0
            } else {
                next
            };
        }
        states.push(SystemState::from_array(x));
    }
    Ok(Trajectory {
        h,
        states,
        clamp_events: clamps,
    })
}

/// Noisy partial observation `y = (a_1, a_2) + sigma_y * eps`.
pub fn observe(state: &SystemState, sigma_y: f64, tick: usize, rng: &mut Prng) -> Observation {
    let mean = state.observed_mrna();
    let e0: f64 = rng.sample(StandardNormal);
    let e1: f64 = rng.sample(StandardNormal);
    Observation {
        tick,
        y: [mean[0] + sigma_y * e0, mean[1] + sigma_y * e1],
    }
}

/// Simulates `n_obs * m_o` steps from a random initial state and collects one
/// observation every `m_o` steps.
#[allow(clippy::too_many_arguments)]
pub fn generate_dataset(
    init: &InitialCondition,
    params: &ModelParams,
    noise: &NoiseScales,
    h: f64,
    m_o: usize,
    n_obs: usize,
    sigma_y: f64,
    rng: &mut Prng,
) -> Result<(Trajectory, ObservationSequence)> {
    if m_o == 0 {
        return Err(Error::invalid("dataset", "m_o must be >= 1"));
    }
    if n_obs == 0 {
        return Err(Error::invalid("dataset", "n_obs must be >= 1"));
    }
    let sigma = noise.as_array();
    let initial = init.sample(rng);
    let mut states = Vec::with_capacity(n_obs * m_o + 1);
    states.push(initial);
    let mut clamps = 0;
    let mut x = initial.to_array();
    let mut observations = Vec::with_capacity(n_obs);
    for n in 1..=n_obs {
        for inner in 0..m_o {
            let step = (n - 1) * m_o + inner + 1;
            x = step_array(&x, params, &sigma, h, rng, &mut clamps).map_err(|e| match e {
                Error::NonFinite { component, .. } => Error::NonFinite { component, step },
                other => other,
            })?;
            states.push(SystemState::from_array(x));
        }
        observations.push(observe(states.last().unwrap(), sigma_y, n, rng));
    }
    Ok((
        Trajectory {
            h,
            states,
            clamp_events: clamps,
        },
        ObservationSequence(observations),
    ))
}
