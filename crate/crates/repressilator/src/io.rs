//! Artifact files: CSV tables and JSON headers.
//!
//! CSV is the canonical tabular format (headers mandatory, `,` separator);
//! JSON carries configuration, manifests, and dataset metadata. Floats are
//! written with the shortest round-trip representation, so identical inputs
//! produce byte-identical files.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::filter::TickDiagnostic;
use crate::model::{
    InitialCondition, ModelParams, NoiseScales, Observation, ObservationSequence, Trajectory,
    COMPONENT_NAMES, STATE_DIM,
};
use crate::npmc::{NpmcResult, WeightedSampleSet};
use crate::pmh::PmhChain;
use crate::stats::NmseReport;
use crate::theta::{ThetaVector, THETA_NAMES};

/// An output directory enforcing the overwrite policy and recording every
/// artifact written into it.
#[derive(Debug)]
pub struct OutDir {
    root: PathBuf,
    overwrite: bool,
    artifacts: Vec<String>,
}

impl OutDir {
    pub fn create(root: impl Into<PathBuf>, overwrite: bool) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| Error::io(root.display().to_string(), e))?;
        Ok(OutDir {
            root,
            overwrite,
            artifacts: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn artifacts(&self) -> &[String] {
        &self.artifacts
    }

    fn open(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.root.join(name);
        if path.exists() && !self.overwrite {
            return Err(Error::WouldOverwrite {
                path: path.display().to_string(),
            });
        }
        let file = File::create(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
        self.artifacts.push(name.to_string());
        Ok(BufWriter::new(file))
    }

    /// Writes a CSV or text artifact through the closure.
    pub fn write_with(
        &mut self,
        name: &str,
        write: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
    ) -> Result<()> {
        let mut writer = self.open(name)?;
        write(&mut writer)
            .and_then(|_| writer.flush())
            .map_err(|e| Error::io(self.root.join(name).display().to_string(), e))
    }

    /// Serializes a value as pretty-printed JSON.
    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse {
            what: "json artifact",
            why: e.to_string(),
        })?;
        self.write_with(name, |w| {
            w.write_all(text.as_bytes())?;
            w.write_all(b"\n")
        })
    }
}

/// Reproducibility record written alongside every command's outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub artifacts: Vec<String>,
    pub timings_s: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, config: &ExperimentConfig) -> Self {
        RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config_hash: config.hash(),
            config: config.clone(),
            artifacts: Vec::new(),
            timings_s: BTreeMap::new(),
        }
    }

    /// Writes the manifest itself, finalizing the artifact list.
    pub fn finish(mut self, out: &mut OutDir) -> Result<RunManifest> {
        self.artifacts = out.artifacts().to_vec();
        self.artifacts.push("manifest.json".to_string());
        out.write_json("manifest.json", &self)?;
        Ok(self)
    }
}

/// Dataset metadata stored next to the observation record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub params: ModelParams,
    pub data_noise: NoiseScales,
    pub h: f64,
    pub m_o: usize,
    pub sigma_y: f64,
    pub seed: u64,
    pub n_obs: usize,
    /// Mean and spread of the Gaussian initial-state distribution.
    pub initial_mean: [f64; STATE_DIM],
    pub initial_sigma: f64,
    /// The realized initial state of this dataset.
    pub initial_state: [f64; STATE_DIM],
    /// Generating values of the four unknowns.
    pub truth: [f64; 4],
}

impl DatasetHeader {
    pub fn initial_condition(&self) -> InitialCondition {
        InitialCondition {
            mean: self.initial_mean,
            sigma: self.initial_sigma,
        }
    }
}

pub fn write_trajectory_csv(
    w: &mut dyn Write,
    trajectory: &Trajectory,
    every: usize,
) -> std::io::Result<()> {
    write!(w, "t")?;
    for name in COMPONENT_NAMES {
        write!(w, ",{name}")?;
    }
    writeln!(w)?;
    for (index, state) in trajectory.states.iter().enumerate() {
        if index % every != 0 && index != trajectory.states.len() - 1 {
            continue;
        }
        write!(w, "{}", trajectory.time(index))?;
        for value in state.to_array() {
            write!(w, ",{value}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn write_observations_csv(
    w: &mut dyn Write,
    observations: &ObservationSequence,
    m_o: usize,
    h: f64,
) -> std::io::Result<()> {
    writeln!(w, "n,t,y1,y2")?;
    for obs in observations.iter() {
        let t = (obs.tick * m_o) as f64 * h;
        writeln!(w, "{},{},{},{}", obs.tick, t, obs.y[0], obs.y[1])?;
    }
    Ok(())
}

pub fn read_observations_csv(path: &Path) -> Result<ObservationSequence> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Parse {
        what: "observations csv",
        why: format!("{}: {e}", path.display()),
    })?;
    let mut observations = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            what: "observations csv",
            why: e.to_string(),
        })?;
        let parse = |i: usize| -> Result<f64> {
            record
                .get(i)
                .ok_or_else(|| Error::Parse {
                    what: "observations csv",
                    why: format!("missing column {i}"),
                })?
                .parse()
                .map_err(|e| Error::Parse {
                    what: "observations csv",
                    why: format!("bad float: {e}"),
                })
        };
        let tick: usize = record
            .get(0)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Parse {
                what: "observations csv",
                why: "bad tick".to_string(),
            })?;
        observations.push(Observation {
            tick,
            y: [parse(2)?, parse(3)?],
        });
    }
    if observations.is_empty() {
        return Err(Error::Parse {
            what: "observations csv",
            why: "no data rows".to_string(),
        });
    }
    Ok(ObservationSequence(observations))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, what: &'static str) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::MissingInput {
        what,
        path: format!("{}: {e}", path.display()),
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        what,
        why: format!("{}: {e}", path.display()),
    })
}

pub fn write_samples_csv(w: &mut dyn Write, set: &WeightedSampleSet) -> std::io::Result<()> {
    write!(w, "i")?;
    for name in THETA_NAMES {
        write!(w, ",{name}")?;
    }
    writeln!(w, ",log_iw,log_tiw,weight")?;
    for (i, theta) in set.thetas.iter().enumerate() {
        write!(w, "{i}")?;
        for value in theta.as_array() {
            write!(w, ",{value}")?;
        }
        writeln!(w, ",{},{},{}", set.log_iw[i], set.log_tiw[i], set.weights[i])?;
    }
    Ok(())
}

/// Serializable summary of a sampler run: configuration plus per-iteration
/// proposal moments and estimates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NpmcSummary {
    pub config: crate::npmc::NpmcConfig,
    pub iterations: Vec<NpmcIterationSummary>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NpmcIterationSummary {
    pub iteration: usize,
    /// Proposal moments; absent at iteration 0 (prior sampling).
    pub proposal_mean: Option<[f64; 4]>,
    pub proposal_cov: Option<[[f64; 4]; 4]>,
    pub posterior_mean: [f64; 4],
    pub mse: f64,
    pub ess: f64,
    pub out_of_support: usize,
    pub filter_failures: usize,
}

impl NpmcSummary {
    pub fn from_result(result: &NpmcResult) -> Self {
        NpmcSummary {
            config: result.config,
            iterations: result
                .iterations
                .iter()
                .map(|it| NpmcIterationSummary {
                    iteration: it.samples.iteration,
                    proposal_mean: it.proposal.as_ref().map(|p| p.mean()),
                    proposal_cov: it.proposal.as_ref().map(|p| p.covariance()),
                    posterior_mean: it.posterior_mean.as_array(),
                    mse: it.mse,
                    ess: it.ess,
                    out_of_support: it.out_of_support,
                    filter_failures: it.filter_failures,
                })
                .collect(),
        }
    }
}

pub fn write_chain_csv(w: &mut dyn Write, chain: &PmhChain) -> std::io::Result<()> {
    write!(w, "step")?;
    for name in THETA_NAMES {
        write!(w, ",{name}")?;
    }
    writeln!(w, ",log_likelihood,accepted")?;
    for (step, state) in chain.steps.iter().enumerate() {
        write!(w, "{step}")?;
        for value in state.theta.as_array() {
            write!(w, ",{value}")?;
        }
        writeln!(
            w,
            ",{},{}",
            state.log_likelihood,
            if state.accepted { 1 } else { 0 }
        )?;
    }
    Ok(())
}

pub fn write_abc_stage_csv(
    w: &mut dyn Write,
    stage: &crate::abc::AbcStage,
) -> std::io::Result<()> {
    write!(w, "i")?;
    for name in THETA_NAMES {
        write!(w, ",{name}")?;
    }
    writeln!(w, ",weight,distance")?;
    for (i, theta) in stage.thetas.iter().enumerate() {
        write!(w, "{i}")?;
        for value in theta.as_array() {
            write!(w, ",{value}")?;
        }
        writeln!(w, ",{},{}", stage.weights[i], stage.distances[i])?;
    }
    Ok(())
}

/// Writes a grid and one or more named density columns.
pub fn write_kde_csv(
    w: &mut dyn Write,
    grid: &[f64],
    curves: &[(&str, &[f64])],
) -> std::io::Result<()> {
    write!(w, "x")?;
    for (name, _) in curves {
        write!(w, ",{name}")?;
    }
    writeln!(w)?;
    for (i, x) in grid.iter().enumerate() {
        write!(w, "{x}")?;
        for (_, values) in curves {
            write!(w, ",{}", values[i])?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn write_filter_diagnostics_csv(
    w: &mut dyn Write,
    diagnostics: &[TickDiagnostic],
) -> std::io::Result<()> {
    writeln!(w, "tick,log_increment,ess")?;
    for d in diagnostics {
        writeln!(w, "{},{},{}", d.tick, d.log_increment, d.ess)?;
    }
    Ok(())
}

/// Cumulative log-likelihood curves and pairwise log-ratio columns.
pub fn write_likelihood_study_csv(
    w: &mut dyn Write,
    labels: &[String],
    cumulative: &[Vec<f64>],
    m_o: usize,
    h: f64,
) -> std::io::Result<()> {
    write!(w, "n,t")?;
    for label in labels {
        write!(w, ",cum_log_lik_{label}")?;
    }
    for i in 0..labels.len() {
        for j in (i + 1)..labels.len() {
            write!(w, ",log_ratio_{}_{}", labels[i], labels[j])?;
        }
    }
    writeln!(w)?;
    let n_ticks = cumulative.first().map_or(0, Vec::len);
    for n in 0..n_ticks {
        write!(w, "{},{}", n + 1, ((n + 1) * m_o) as f64 * h)?;
        for curve in cumulative {
            write!(w, ",{}", curve[n])?;
        }
        for i in 0..labels.len() {
            for j in (i + 1)..labels.len() {
                write!(w, ",{}", cumulative[i][n] - cumulative[j][n])?;
            }
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn write_nmse_csv(w: &mut dyn Write, reports: &[NmseReport]) -> std::io::Result<()> {
    writeln!(w, "method,parameter,nmse_mean,nmse_std,n_runs")?;
    for report in reports {
        for entry in &report.per_parameter {
            writeln!(
                w,
                "{},{},{},{},{}",
                report.method, entry.parameter, entry.mean, entry.std, report.n_runs
            )?;
        }
    }
    Ok(())
}

/// Posterior-mean estimates plus the generating truth, written by `infer`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimatesFile {
    pub method: String,
    pub truth: [f64; 4],
    pub posterior_mean: [f64; 4],
    pub mse: Option<f64>,
    pub kde_bandwidths: BTreeMap<String, f64>,
}

/// KDE curves for one parameter with the bandwidth used per curve.
pub fn kde_grid_for(theta_index: usize, bounds: (f64, f64), n: usize) -> Vec<f64> {
    debug_assert!(theta_index < 4);
    crate::stats::linear_grid(bounds.0, bounds.1, n)
}

/// Extracts one theta component from a sample list.
pub fn component(thetas: &[ThetaVector], index: usize) -> Vec<f64> {
    thetas.iter().map(|t| t.as_array()[index]).collect()
}
