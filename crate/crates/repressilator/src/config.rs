//! Experiment configuration: a JSON document validated at load time.
//!
//! Unknown keys are rejected so that typos fail loudly. Every field has a
//! default matching the reference experiment setup (80 time units of data,
//! `h = 1e-3`, observations every 20 steps, unit observation noise).

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{ModelParams, NoiseScales};
use crate::theta::ThetaVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub model: ModelConfig,
    /// Inference method for `infer`; also usable as a single-method
    /// benchmark entry.
    #[serde(default)]
    pub method: Option<MethodConfig>,
    #[serde(default)]
    pub seeds: SeedsConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub likelihood_study: Option<LikelihoodStudyConfig>,
    #[serde(default)]
    pub benchmark: Option<BenchmarkConfig>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if let Some(method) = &self.method {
            method.validate()?;
        }
        self.seeds.validate()?;
        self.output.validate()?;
        if let Some(study) = &self.likelihood_study {
            study.validate()?;
        }
        if let Some(benchmark) = &self.benchmark {
            benchmark.validate()?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON serialization.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&bytes);
        let mut hex = String::with_capacity(64);
        for byte in digest {
            hex.push_str(&format!("{byte:02x}"));
        }
        hex
    }
}

fn default_params() -> ModelParams {
    ModelParams::standard()
}

fn default_h() -> f64 {
    1e-3
}

fn default_m_o() -> usize {
    20
}

fn default_sigma_y() -> f64 {
    1.0
}

fn default_horizon() -> f64 {
    80.0
}

fn default_kernel_noise() -> f64 {
    0.02
}

fn default_initial_sigma() -> f64 {
    0.05
}

/// Data-generation and state-space settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "default_params")]
    pub params: ModelParams,
    /// Dynamical noise scale (uniform across components) used when
    /// generating data; zero yields the deterministic model.
    #[serde(default)]
    pub data_noise: f64,
    /// Dynamical noise scale assumed by the filter's transition kernel.
    #[serde(default = "default_kernel_noise")]
    pub kernel_noise: f64,
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default = "default_m_o")]
    pub m_o: usize,
    #[serde(default = "default_sigma_y")]
    pub sigma_y: f64,
    /// Observation horizon in continuous time units.
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    /// Standard deviation of the Gaussian initial-state distribution.
    #[serde(default = "default_initial_sigma")]
    pub initial_sigma: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            params: default_params(),
            data_noise: 0.0,
            kernel_noise: default_kernel_noise(),
            h: default_h(),
            m_o: default_m_o(),
            sigma_y: default_sigma_y(),
            horizon: default_horizon(),
            initial_sigma: default_initial_sigma(),
        }
    }
}

impl ModelConfig {
    /// Number of observations implied by the horizon: `horizon / (m_o h)`.
    pub fn n_observations(&self) -> usize {
        (self.horizon / (self.m_o as f64 * self.h)).round() as usize
    }

    pub fn data_noise_scales(&self) -> NoiseScales {
        NoiseScales::uniform(self.data_noise)
    }

    pub fn kernel_noise_scales(&self) -> NoiseScales {
        NoiseScales::uniform(self.kernel_noise)
    }

    pub fn truth(&self) -> ThetaVector {
        ThetaVector {
            q: self.params.q,
            m: self.params.m,
            alpha: self.params.alpha,
            beta_a: self.params.beta_a,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.data_noise >= 0.0 && self.kernel_noise >= 0.0) {
            return Err(Error::invalid("model config", "noise scales must be >= 0"));
        }
        if !(self.h > 0.0) {
            return Err(Error::invalid("model config", "h must be > 0"));
        }
        if self.m_o == 0 {
            return Err(Error::invalid("model config", "m_o must be >= 1"));
        }
        if !(self.sigma_y > 0.0) {
            return Err(Error::invalid("model config", "sigma_y must be > 0"));
        }
        if !(self.initial_sigma >= 0.0) {
            return Err(Error::invalid("model config", "initial_sigma must be >= 0"));
        }
        if self.n_observations() == 0 {
            return Err(Error::invalid(
                "model config",
                "horizon too short for a single observation",
            ));
        }
        Ok(())
    }
}

fn default_npmc_samples() -> usize {
    200
}

fn default_npmc_iterations() -> usize {
    15
}

fn default_n_particles() -> usize {
    100
}

fn default_jitter_scale() -> f64 {
    1e-6
}

fn default_chain_length() -> usize {
    6000
}

fn default_proposal_var() -> [f64; 4] {
    [0.01, 0.01, 100.0, 0.01]
}

fn default_tolerances() -> Vec<f64> {
    vec![3.0, 2.5, 2.3, 2.2, 2.1]
}

fn default_target_accepted() -> usize {
    1200
}

fn default_max_draws() -> usize {
    1_600_000
}

fn default_perturbation_scale() -> f64 {
    1.0
}

/// Method selection with per-method settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MethodConfig {
    Npmc {
        #[serde(default = "default_npmc_samples")]
        n_samples: usize,
        #[serde(default = "default_npmc_iterations")]
        n_iterations: usize,
        /// Defaults to `floor(sqrt(n_samples))` when omitted.
        #[serde(default)]
        clip_count: Option<usize>,
        #[serde(default = "default_n_particles")]
        n_particles: usize,
        #[serde(default = "default_jitter_scale")]
        jitter_scale: f64,
    },
    Pmh {
        #[serde(default = "default_chain_length")]
        chain_length: usize,
        #[serde(default = "default_n_particles")]
        n_particles: usize,
        /// Diagonal proposal variances in `(Q, m, alpha, beta_a)` order.
        #[serde(default = "default_proposal_var")]
        proposal_var: [f64; 4],
    },
    Abc {
        #[serde(default = "default_tolerances")]
        tolerances: Vec<f64>,
        #[serde(default = "default_target_accepted")]
        target_accepted: usize,
        #[serde(default = "default_max_draws")]
        max_draws_per_stage: usize,
        #[serde(default = "default_perturbation_scale")]
        perturbation_scale: f64,
    },
    /// Validation hook: reports the generating parameters as the estimate.
    Oracle,
}

impl MethodConfig {
    /// Short label used in file names and report rows.
    pub fn label(&self) -> String {
        match self {
            MethodConfig::Npmc { n_samples, .. } => format!("npmc-m{n_samples}"),
            MethodConfig::Pmh { chain_length, .. } => format!("pmh-l{chain_length}"),
            MethodConfig::Abc { .. } => "abc-smc".to_string(),
            MethodConfig::Oracle => "oracle".to_string(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            MethodConfig::Npmc {
                n_samples,
                clip_count,
                n_particles,
                jitter_scale,
                ..
            } => {
                let clip = clip_count.unwrap_or((*n_samples as f64).sqrt().floor() as usize);
                let config = crate::npmc::NpmcConfig {
                    n_samples: *n_samples,
                    n_iterations: 0,
                    clip_count: clip,
                    n_particles: *n_particles,
                    seed: 0,
                    jitter_scale: *jitter_scale,
                };
                config.validate()
            }
            MethodConfig::Pmh {
                chain_length,
                n_particles,
                proposal_var,
            } => {
                let config = crate::pmh::PmhConfig {
                    chain_length: *chain_length,
                    proposal_var: *proposal_var,
                    n_particles: *n_particles,
                    initial: ThetaVector::standard(),
                    seed: 0,
                };
                config.validate()
            }
            MethodConfig::Abc {
                tolerances,
                target_accepted,
                max_draws_per_stage,
                perturbation_scale,
            } => {
                let config = crate::abc::AbcConfig {
                    tolerances: tolerances.clone(),
                    target_accepted: *target_accepted,
                    max_draws_per_stage: *max_draws_per_stage,
                    distance: crate::abc::AbcDistance::NormalizedRmse,
                    perturbation_scale: *perturbation_scale,
                    seed: 0,
                };
                config.validate()
            }
            MethodConfig::Oracle => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedsConfig {
    #[serde(default)]
    pub master_seed: u64,
    /// Independent replications for `benchmark`.
    #[serde(default = "default_run_count")]
    pub run_count: usize,
}

fn default_run_count() -> usize {
    45
}

impl Default for SeedsConfig {
    fn default() -> Self {
        SeedsConfig {
            master_seed: 0,
            run_count: default_run_count(),
        }
    }
}

impl SeedsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.run_count == 0 {
            return Err(Error::invalid("seeds config", "run_count must be >= 1"));
        }
        Ok(())
    }
}

fn default_trajectory_every() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Default output directory when the CLI gives none.
    #[serde(default)]
    pub dir: Option<String>,
    /// Keep every n-th state in the trajectory CSV.
    #[serde(default = "default_trajectory_every")]
    pub trajectory_every: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: None,
            trajectory_every: default_trajectory_every(),
        }
    }
}

impl OutputConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trajectory_every == 0 {
            return Err(Error::invalid("output config", "trajectory_every must be >= 1"));
        }
        Ok(())
    }
}

fn default_study_thetas() -> Vec<[f64; 4]> {
    let truth = ThetaVector::standard().as_array();
    let mut perturbed = truth;
    perturbed[2] -= 10.0;
    vec![truth, perturbed]
}

fn default_study_particles() -> usize {
    600
}

/// Settings for the cumulative likelihood comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LikelihoodStudyConfig {
    /// Parameter vectors to compare, `(Q, m, alpha, beta_a)` order. The
    /// default pair is the generating values and the same with `alpha`
    /// lowered by 10.
    #[serde(default = "default_study_thetas")]
    pub thetas: Vec<[f64; 4]>,
    #[serde(default = "default_study_particles")]
    pub n_particles: usize,
    /// Also write per-tick filter diagnostics (tick, log-increment, ESS).
    #[serde(default)]
    pub diagnostics: bool,
}

impl Default for LikelihoodStudyConfig {
    fn default() -> Self {
        LikelihoodStudyConfig {
            thetas: default_study_thetas(),
            n_particles: default_study_particles(),
            diagnostics: false,
        }
    }
}

impl LikelihoodStudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.thetas.is_empty() {
            return Err(Error::invalid("likelihood study", "theta list is empty"));
        }
        if self.n_particles == 0 {
            return Err(Error::invalid("likelihood study", "n_particles must be >= 1"));
        }
        Ok(())
    }
}

fn default_benchmark_methods() -> Vec<MethodConfig> {
    vec![
        MethodConfig::Npmc {
            n_samples: 50,
            n_iterations: 15,
            clip_count: None,
            n_particles: 100,
            jitter_scale: 1e-6,
        },
        MethodConfig::Npmc {
            n_samples: 200,
            n_iterations: 15,
            clip_count: None,
            n_particles: 100,
            jitter_scale: 1e-6,
        },
        MethodConfig::Pmh {
            chain_length: 6000,
            n_particles: 100,
            proposal_var: default_proposal_var(),
        },
        MethodConfig::Abc {
            tolerances: default_tolerances(),
            target_accepted: default_target_accepted(),
            max_draws_per_stage: default_max_draws(),
            perturbation_scale: 1.0,
        },
    ]
}

/// Settings for the multi-method NMSE comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    #[serde(default = "default_benchmark_methods")]
    pub methods: Vec<MethodConfig>,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            methods: default_benchmark_methods(),
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::invalid("benchmark config", "no methods listed"));
        }
        for method in &self.methods {
            method.validate()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_reference_setup() {
        let config = ExperimentConfig::default();
        config.validate().unwrap();
        assert_eq!(config.model.n_observations(), 4000);
        assert_eq!(config.model.sigma_y, 1.0);
        assert_eq!(config.model.m_o, 20);
        assert_eq!(config.seeds.run_count, 45);
        let study = LikelihoodStudyConfig::default();
        assert_eq!(study.n_particles, 600);
        assert_eq!(study.thetas[0], [0.85, 2.6, 216.0, 0.85]);
        assert_eq!(study.thetas[1], [0.85, 2.6, 206.0, 0.85]);
    }

    #[test]
    fn load_serialize_load_is_a_fixed_point() {
        let json = r#"{
            "model": {"horizon": 20.0, "data_noise": 0.02},
            "method": {"name": "npmc", "n_samples": 50, "n_iterations": 10},
            "seeds": {"master_seed": 7, "run_count": 10}
        }"#;
        let first: ExperimentConfig = serde_json::from_str(json).unwrap();
        first.validate().unwrap();
        let serialized = serde_json::to_string(&first).unwrap();
        let second: ExperimentConfig = serde_json::from_str(&serialized).unwrap();
        assert_eq!(first, second);
        assert_eq!(first.hash(), second.hash());
        assert_eq!(serialized, serde_json::to_string(&second).unwrap());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let json = r#"{"model": {"horizon": 20.0, "horizont": 1.0}}"#;
        assert!(serde_json::from_str::<ExperimentConfig>(json).is_err());
        let json = r#"{"mode": {}}"#;
        assert!(serde_json::from_str::<ExperimentConfig>(json).is_err());
    }

    #[test]
    fn invariants_checked_at_validation() {
        let mut config = ExperimentConfig::default();
        config.model.params.q = 1.5;
        assert!(config.validate().is_err());

        let mut config = ExperimentConfig::default();
        config.method = Some(MethodConfig::Npmc {
            n_samples: 100,
            n_iterations: 5,
            clip_count: Some(11),
            n_particles: 100,
            jitter_scale: 1e-6,
        });
        assert!(config.validate().is_err());

        let mut config = ExperimentConfig::default();
        config.benchmark = Some(BenchmarkConfig {
            methods: vec![MethodConfig::Abc {
                tolerances: vec![2.0, 3.0],
                target_accepted: 10,
                max_draws_per_stage: 100,
                perturbation_scale: 1.0,
            }],
        });
        assert!(config.validate().is_err());
    }

    #[test]
    fn method_labels() {
        assert_eq!(
            MethodConfig::Npmc {
                n_samples: 50,
                n_iterations: 10,
                clip_count: None,
                n_particles: 100,
                jitter_scale: 1e-6,
            }
            .label(),
            "npmc-m50"
        );
        assert_eq!(MethodConfig::Oracle.label(), "oracle");
    }

    #[test]
    fn hash_is_sensitive_to_content() {
        let a = ExperimentConfig::default();
        let mut b = ExperimentConfig::default();
        b.seeds.master_seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
