//! Experiment harness: the library side of the command-line tool.
//!
//! Each command takes a validated [`ExperimentConfig`], writes its artifacts
//! into an output directory, and finishes with a `manifest.json` from which
//! the run can be reproduced exactly (re-running any command with the same
//! manifest, or a config with the same hash and seed, yields byte-identical
//! CSV files; timings live only in the manifest).

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::abc::{AbcConfig, AbcDistance, DeterministicSimulator, run_abc_smc};
use crate::config::{ExperimentConfig, MethodConfig, ModelConfig};
use crate::error::{Error, Result};
use crate::filter::{run_filter, run_filter_with_diagnostics};
use crate::io::{
    component, read_json, read_observations_csv, write_abc_stage_csv, write_chain_csv,
    write_kde_csv, write_likelihood_study_csv, write_nmse_csv, write_observations_csv,
    write_samples_csv, write_trajectory_csv, DatasetHeader, EstimatesFile, NpmcSummary, OutDir,
    RunManifest,
};
use crate::likelihood::FilterLikelihood;
use crate::model::{generate_dataset, InitialCondition, ObservationSequence, Trajectory};
use crate::npmc::{run_npmc, NpmcConfig, NpmcResult};
use crate::pmh::{run_pmh, PmhConfig};
use crate::seed::{derive_seed, rng_for};
use crate::ssm::{CompositeKernelConfig, RepressilatorSsm};
use crate::stats::{linear_grid, nmse, silverman_bandwidth, weighted_kde, NmseReport};
use crate::theta::{PriorBox, ThetaVector, THETA_NAMES};

// Seed-path tags, one per random stream the harness owns.
const TAG_DATASET: u64 = 41;
const TAG_INFER: u64 = 42;
const TAG_PMH_INITIAL: u64 = 43;
const TAG_STUDY: u64 = 44;
const TAG_BENCH_DATA: u64 = 45;
const TAG_BENCH_METHOD: u64 = 46;

const KDE_GRID_POINTS: usize = 512;

/// Where and how a command writes its outputs.
#[derive(Debug, Clone)]
pub struct CommandOptions {
    pub out_dir: PathBuf,
    pub overwrite: bool,
}

/// Generates a dataset for a model configuration: the trajectory, the
/// observation record, and the metadata header.
pub fn generate_configured_dataset(
    model: &ModelConfig,
    seed: u64,
) -> Result<(Trajectory, ObservationSequence, DatasetHeader)> {
    let initial = InitialCondition {
        mean: InitialCondition::standard().mean,
        sigma: model.initial_sigma,
    };
    let mut rng = rng_for(seed, &[TAG_DATASET]);
    let (trajectory, observations) = generate_dataset(
        &initial,
        &model.params,
        &model.data_noise_scales(),
        model.h,
        model.m_o,
        model.n_observations(),
        model.sigma_y,
        &mut rng,
    )?;
    let header = DatasetHeader {
        params: model.params,
        data_noise: model.data_noise_scales(),
        h: model.h,
        m_o: model.m_o,
        sigma_y: model.sigma_y,
        seed,
        n_obs: observations.len(),
        initial_mean: initial.mean,
        initial_sigma: initial.sigma,
        initial_state: trajectory.states[0].to_array(),
        truth: model.truth().as_array(),
    };
    Ok((trajectory, observations, header))
}

/// Generates a dataset and writes `trajectory.csv`, `observations.csv`, and
/// `dataset.json`.
pub fn cmd_simulate(config: &ExperimentConfig, options: &CommandOptions) -> Result<RunManifest> {
    config.validate()?;
    let seed = config.seeds.master_seed;
    let mut out = OutDir::create(&options.out_dir, options.overwrite)?;
    let mut manifest = RunManifest::new("simulate", seed, config);

    let start = Instant::now();
    let (trajectory, observations, header) = generate_configured_dataset(&config.model, seed)?;
    manifest
        .timings_s
        .insert("simulate".into(), start.elapsed().as_secs_f64());

    let every = config.output.trajectory_every;
    out.write_with("trajectory.csv", |w| {
        write_trajectory_csv(w, &trajectory, every)
    })?;
    out.write_with("observations.csv", |w| {
        write_observations_csv(w, &observations, header.m_o, header.h)
    })?;
    out.write_json("dataset.json", &header)?;
    manifest.finish(&mut out)
}

fn load_dataset(data_dir: &Path) -> Result<(DatasetHeader, ObservationSequence)> {
    let header: DatasetHeader = read_json(&data_dir.join("dataset.json"), "dataset header")?;
    let observations = read_observations_csv(&data_dir.join("observations.csv"))?;
    Ok((header, observations))
}

fn filter_estimator(
    header: &DatasetHeader,
    observations: &ObservationSequence,
    kernel_noise: crate::model::NoiseScales,
    n_particles: usize,
) -> FilterLikelihood {
    FilterLikelihood {
        observations: observations.0.clone(),
        kernel: CompositeKernelConfig {
            m_o: header.m_o,
            h: header.h,
            noise: kernel_noise,
        },
        sigma_y: header.sigma_y,
        initial: header.initial_condition(),
        n_particles,
    }
}

/// Density columns for one parameter: the flat prior plus weighted KDEs of
/// selected sample sets.
fn kde_columns(
    prior: &PriorBox,
    theta_index: usize,
    sets: &[(String, &[ThetaVector], &[f64])],
) -> Result<(Vec<f64>, Vec<(String, Vec<f64>)>, f64)> {
    let (lo, hi) = prior.bounds[theta_index];
    let grid = linear_grid(lo, hi, KDE_GRID_POINTS);
    let prior_density = vec![1.0 / (hi - lo); grid.len()];
    let mut columns = vec![("prior".to_string(), prior_density)];
    let mut bandwidth_used = 0.0;
    for (label, thetas, weights) in sets {
        let samples = component(thetas, theta_index);
        let bandwidth = silverman_bandwidth(&samples, weights)
            .unwrap_or_else(|_| 0.05 * (hi - lo));
        bandwidth_used = bandwidth;
        let curve = weighted_kde(&samples, weights, &grid, bandwidth)?;
        columns.push((label.clone(), curve.density));
    }
    Ok((grid, columns, bandwidth_used))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct KdeJsonEntry {
    bandwidth: f64,
    grid: Vec<f64>,
    curves: std::collections::BTreeMap<String, Vec<f64>>,
}

fn write_kde_files(
    out: &mut OutDir,
    prior: &PriorBox,
    sets: &[(String, &[ThetaVector], &[f64])],
) -> Result<std::collections::BTreeMap<String, f64>> {
    let mut bandwidths = std::collections::BTreeMap::new();
    let mut json = std::collections::BTreeMap::new();
    for (index, name) in THETA_NAMES.iter().enumerate() {
        let (grid, columns, bandwidth) = kde_columns(prior, index, sets)?;
        let column_refs: Vec<(&str, &[f64])> = columns
            .iter()
            .map(|(label, values)| (label.as_str(), values.as_slice()))
            .collect();
        out.write_with(&format!("kde_{name}.csv"), |w| {
            write_kde_csv(w, &grid, &column_refs)
        })?;
        bandwidths.insert((*name).to_string(), bandwidth);
        json.insert(
            (*name).to_string(),
            KdeJsonEntry {
                bandwidth,
                grid,
                curves: columns.into_iter().collect(),
            },
        );
    }
    out.write_json("kde.json", &json)?;
    Ok(bandwidths)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AbcStageSummary {
    tolerance: f64,
    accepted: usize,
    draws: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AbcSummary {
    stages: Vec<AbcStageSummary>,
}

/// Runs the configured inference method against an existing dataset.
pub fn cmd_infer(
    config: &ExperimentConfig,
    data_dir: &Path,
    options: &CommandOptions,
) -> Result<RunManifest> {
    config.validate()?;
    let method = config
        .method
        .clone()
        .ok_or_else(|| Error::invalid("config", "`method` block required for infer"))?;
    let (header, observations) = load_dataset(data_dir)?;
    let master = config.seeds.master_seed;
    let prior = PriorBox::standard();
    let mut out = OutDir::create(&options.out_dir, options.overwrite)?;
    let mut manifest = RunManifest::new("infer", master, config);
    let start = Instant::now();

    match &method {
        MethodConfig::Npmc {
            n_samples,
            n_iterations,
            clip_count,
            n_particles,
            jitter_scale,
        } => {
            let npmc_config = NpmcConfig {
                n_samples: *n_samples,
                n_iterations: *n_iterations,
                clip_count: clip_count.unwrap_or((*n_samples as f64).sqrt().floor() as usize),
                n_particles: *n_particles,
                seed: derive_seed(master, &[TAG_INFER]),
                jitter_scale: *jitter_scale,
            };
            let estimator = filter_estimator(
                &header,
                &observations,
                config.model.kernel_noise_scales(),
                *n_particles,
            );
            let result = run_npmc(&npmc_config, &estimator, &prior)?;
            write_npmc_outputs(&mut out, &method, &header, &prior, &result)?;
        }
        MethodConfig::Pmh {
            chain_length,
            n_particles,
            proposal_var,
        } => {
            let initial = prior.sample(&mut rng_for(master, &[TAG_PMH_INITIAL]));
            let pmh_config = PmhConfig {
                chain_length: *chain_length,
                proposal_var: *proposal_var,
                n_particles: *n_particles,
                initial,
                seed: derive_seed(master, &[TAG_INFER]),
            };
            let estimator = filter_estimator(
                &header,
                &observations,
                config.model.kernel_noise_scales(),
                *n_particles,
            );
            let chain = run_pmh(&pmh_config, &estimator, &prior)?;
            out.write_with("chain.csv", |w| write_chain_csv(w, &chain))?;
            let tail = &chain.steps[chain.steps.len() / 2..];
            let thetas: Vec<ThetaVector> = tail.iter().map(|s| s.theta).collect();
            let weights = vec![1.0 / thetas.len() as f64; thetas.len()];
            let sets = [("posterior".to_string(), thetas.as_slice(), weights.as_slice())];
            let bandwidths = write_kde_files(&mut out, &prior, &sets)?;
            out.write_json(
                "estimates.json",
                &EstimatesFile {
                    method: method.label(),
                    truth: header.truth,
                    posterior_mean: chain.posterior_mean().as_array(),
                    mse: None,
                    kde_bandwidths: bandwidths,
                },
            )?;
        }
        MethodConfig::Abc {
            tolerances,
            target_accepted,
            max_draws_per_stage,
            perturbation_scale,
        } => {
            let abc_config = AbcConfig {
                tolerances: tolerances.clone(),
                target_accepted: *target_accepted,
                max_draws_per_stage: *max_draws_per_stage,
                distance: AbcDistance::NormalizedRmse,
                perturbation_scale: *perturbation_scale,
                seed: derive_seed(master, &[TAG_INFER]),
            };
            let simulator = DeterministicSimulator {
                initial: crate::model::SystemState::from_array(header.initial_state),
                h: header.h,
                m_o: header.m_o,
                n_obs: header.n_obs,
            };
            let population = run_abc_smc(&abc_config, &simulator, &observations, &prior)?;
            for (index, stage) in population.stages.iter().enumerate() {
                out.write_with(&format!("abc_stage_{index:02}.csv"), |w| {
                    write_abc_stage_csv(w, stage)
                })?;
            }
            out.write_json(
                "abc.json",
                &AbcSummary {
                    stages: population
                        .stages
                        .iter()
                        .map(|s| AbcStageSummary {
                            tolerance: s.tolerance,
                            accepted: s.thetas.len(),
                            draws: s.draws,
                        })
                        .collect(),
                },
            )?;
            let stage = population.final_stage();
            let sets = [(
                "posterior".to_string(),
                stage.thetas.as_slice(),
                stage.weights.as_slice(),
            )];
            let bandwidths = write_kde_files(&mut out, &prior, &sets)?;
            out.write_json(
                "estimates.json",
                &EstimatesFile {
                    method: method.label(),
                    truth: header.truth,
                    posterior_mean: population.posterior_mean().as_array(),
                    mse: None,
                    kde_bandwidths: bandwidths,
                },
            )?;
        }
        MethodConfig::Oracle => {
            out.write_json(
                "estimates.json",
                &EstimatesFile {
                    method: method.label(),
                    truth: header.truth,
                    posterior_mean: header.truth,
                    mse: Some(0.0),
                    kde_bandwidths: Default::default(),
                },
            )?;
        }
    }

    manifest
        .timings_s
        .insert("infer".into(), start.elapsed().as_secs_f64());
    manifest.finish(&mut out)
}

fn write_npmc_outputs(
    out: &mut OutDir,
    method: &MethodConfig,
    header: &DatasetHeader,
    prior: &PriorBox,
    result: &NpmcResult,
) -> Result<()> {
    for iteration in &result.iterations {
        let k = iteration.samples.iteration;
        out.write_with(&format!("samples_iter_{k:02}.csv"), |w| {
            write_samples_csv(w, &iteration.samples)
        })?;
    }
    out.write_json("npmc.json", &NpmcSummary::from_result(result))?;

    // Fig-3-style curves: prior, first adapted iteration, final iteration.
    let mut sets: Vec<(String, &[ThetaVector], &[f64])> = Vec::new();
    if result.iterations.len() > 1 {
        let first = &result.iterations[1].samples;
        sets.push((
            format!("iter_{:02}", first.iteration),
            &first.thetas,
            &first.weights,
        ));
    }
    let last = &result.final_iteration().samples;
    if sets.is_empty() || last.iteration != 1 {
        sets.push((
            format!("iter_{:02}", last.iteration),
            &last.thetas,
            &last.weights,
        ));
    }
    let bandwidths = write_kde_files(out, prior, &sets)?;

    let final_it = result.final_iteration();
    out.write_json(
        "estimates.json",
        &EstimatesFile {
            method: method.label(),
            truth: header.truth,
            posterior_mean: final_it.posterior_mean.as_array(),
            mse: Some(final_it.mse),
            kde_bandwidths: bandwidths,
        },
    )?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StudySummary {
    thetas: Vec<[f64; 4]>,
    n_particles: usize,
    seed: u64,
}

/// Cumulative log-likelihood curves for a list of parameter vectors on a
/// fixed dataset, with pairwise log-ratio columns.
pub fn cmd_likelihood_study(
    config: &ExperimentConfig,
    data_dir: &Path,
    options: &CommandOptions,
) -> Result<RunManifest> {
    config.validate()?;
    let study = config.likelihood_study.clone().unwrap_or_default();
    let (header, observations) = load_dataset(data_dir)?;
    let master = config.seeds.master_seed;
    let mut out = OutDir::create(&options.out_dir, options.overwrite)?;
    let mut manifest = RunManifest::new("likelihood-study", master, config);
    let start = Instant::now();

    let kernel = CompositeKernelConfig {
        m_o: header.m_o,
        h: header.h,
        noise: config.model.kernel_noise_scales(),
    };
    let outputs: Vec<(Vec<f64>, Vec<crate::filter::TickDiagnostic>)> = study
        .thetas
        .par_iter()
        .enumerate()
        .map(|(index, theta)| -> Result<_> {
            let ssm = RepressilatorSsm::new(
                ThetaVector::from_array(*theta),
                kernel,
                header.sigma_y,
                header.initial_condition(),
            )?;
            let mut rng = rng_for(master, &[TAG_STUDY, index as u64]);
            let (estimate, diagnostics) = run_filter_with_diagnostics(
                &ssm,
                observations.as_slice(),
                study.n_particles,
                &mut rng,
            )?;
            Ok((estimate.cumulative(), diagnostics))
        })
        .collect::<Result<_>>()?;
    let curves: Vec<Vec<f64>> = outputs.iter().map(|(c, _)| c.clone()).collect();
    if study.diagnostics {
        for (index, (_, diagnostics)) in outputs.iter().enumerate() {
            out.write_with(&format!("filter_diagnostics_theta{index}.csv"), |w| {
                crate::io::write_filter_diagnostics_csv(w, diagnostics)
            })?;
        }
    }

    let labels: Vec<String> = (0..study.thetas.len())
        .map(|i| format!("theta{i}"))
        .collect();
    out.write_with("likelihood_study.csv", |w| {
        write_likelihood_study_csv(w, &labels, &curves, header.m_o, header.h)
    })?;
    out.write_json(
        "study.json",
        &StudySummary {
            thetas: study.thetas.clone(),
            n_particles: study.n_particles,
            seed: master,
        },
    )?;
    manifest
        .timings_s
        .insert("likelihood_study".into(), start.elapsed().as_secs_f64());
    manifest.finish(&mut out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BenchmarkRunRecord {
    run: usize,
    method: String,
    estimate: Option<[f64; 4]>,
    error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BenchmarkSummary {
    truth: [f64; 4],
    n_runs: usize,
    records: Vec<BenchmarkRunRecord>,
    failures: usize,
    nmse: Vec<NmseReport>,
}

fn run_method_on_dataset(
    method: &MethodConfig,
    model: &ModelConfig,
    header: &DatasetHeader,
    observations: &ObservationSequence,
    seed: u64,
) -> Result<ThetaVector> {
    let prior = PriorBox::standard();
    match method {
        MethodConfig::Npmc {
            n_samples,
            n_iterations,
            clip_count,
            n_particles,
            jitter_scale,
        } => {
            let config = NpmcConfig {
                n_samples: *n_samples,
                n_iterations: *n_iterations,
                clip_count: clip_count.unwrap_or((*n_samples as f64).sqrt().floor() as usize),
                n_particles: *n_particles,
                seed,
                jitter_scale: *jitter_scale,
            };
            let estimator =
                filter_estimator(header, observations, model.kernel_noise_scales(), *n_particles);
            Ok(run_npmc(&config, &estimator, &prior)?
                .final_iteration()
                .posterior_mean)
        }
        MethodConfig::Pmh {
            chain_length,
            n_particles,
            proposal_var,
        } => {
            let initial = prior.sample(&mut rng_for(seed, &[TAG_PMH_INITIAL]));
            let config = PmhConfig {
                chain_length: *chain_length,
                proposal_var: *proposal_var,
                n_particles: *n_particles,
                initial,
                seed,
            };
            let estimator =
                filter_estimator(header, observations, model.kernel_noise_scales(), *n_particles);
            Ok(run_pmh(&config, &estimator, &prior)?.posterior_mean())
        }
        MethodConfig::Abc {
            tolerances,
            target_accepted,
            max_draws_per_stage,
            perturbation_scale,
        } => {
            let config = AbcConfig {
                tolerances: tolerances.clone(),
                target_accepted: *target_accepted,
                max_draws_per_stage: *max_draws_per_stage,
                distance: AbcDistance::NormalizedRmse,
                perturbation_scale: *perturbation_scale,
                seed,
            };
            let simulator = DeterministicSimulator {
                initial: crate::model::SystemState::from_array(header.initial_state),
                h: header.h,
                m_o: header.m_o,
                n_obs: header.n_obs,
            };
            Ok(run_abc_smc(&config, &simulator, observations, &prior)?.posterior_mean())
        }
        MethodConfig::Oracle => Ok(ThetaVector::from_array(header.truth)),
    }
}

/// Multi-method NMSE comparison over independent replications, each with a
/// freshly generated dataset.
pub fn cmd_benchmark(config: &ExperimentConfig, options: &CommandOptions) -> Result<RunManifest> {
    config.validate()?;
    let benchmark = config.benchmark.clone().unwrap_or_default();
    let master = config.seeds.master_seed;
    let n_runs = config.seeds.run_count;
    let truth = config.model.truth();
    let mut out = OutDir::create(&options.out_dir, options.overwrite)?;
    let mut manifest = RunManifest::new("benchmark", master, config);
    let start = Instant::now();

    let mut records: Vec<BenchmarkRunRecord> = Vec::new();
    let mut estimates: Vec<Vec<ThetaVector>> = vec![Vec::new(); benchmark.methods.len()];
    for run in 0..n_runs {
        let dataset_seed = derive_seed(master, &[TAG_BENCH_DATA, run as u64]);
        let (_, observations, header) = generate_configured_dataset(&config.model, dataset_seed)?;
        for (method_index, method) in benchmark.methods.iter().enumerate() {
            let method_seed =
                derive_seed(master, &[TAG_BENCH_METHOD, run as u64, method_index as u64]);
            match run_method_on_dataset(method, &config.model, &header, &observations, method_seed)
            {
                Ok(estimate) => {
                    estimates[method_index].push(estimate);
                    records.push(BenchmarkRunRecord {
                        run,
                        method: method.label(),
                        estimate: Some(estimate.as_array()),
                        error: None,
                    });
                }
                Err(error) => records.push(BenchmarkRunRecord {
                    run,
                    method: method.label(),
                    estimate: None,
                    error: Some(error.to_string()),
                }),
            }
        }
    }

    let mut reports: Vec<NmseReport> = Vec::new();
    for (method, method_estimates) in benchmark.methods.iter().zip(&estimates) {
        if !method_estimates.is_empty() {
            reports.push(nmse(&method.label(), method_estimates, &truth)?);
        }
    }
    let failures = records.iter().filter(|r| r.error.is_some()).count();
    out.write_with("nmse.csv", |w| write_nmse_csv(w, &reports))?;
    out.write_json(
        "benchmark.json",
        &BenchmarkSummary {
            truth: truth.as_array(),
            n_runs,
            records,
            failures,
            nmse: reports,
        },
    )?;
    manifest
        .timings_s
        .insert("benchmark".into(), start.elapsed().as_secs_f64());
    manifest.finish(&mut out)
}

/// Figure data assembled by `plot-data`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FigureKind {
    /// Phase-diagram pairs `(a1, b1)` and `(a1, a2)` from a trajectory.
    Fig2,
    /// Posterior KDE curves per parameter.
    Fig3,
    /// Cumulative log-likelihood comparison.
    Fig4,
    /// NMSE comparison table.
    Fig5,
}

impl std::str::FromStr for FigureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig2" => Ok(FigureKind::Fig2),
            "fig3" => Ok(FigureKind::Fig3),
            "fig4" => Ok(FigureKind::Fig4),
            "fig5" => Ok(FigureKind::Fig5),
            other => Err(Error::invalid(
                "figure kind",
                format!("{other}; expected fig2|fig3|fig4|fig5"),
            )),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FigureFiles {
    figure: String,
    source_dir: String,
    files: Vec<String>,
}

/// Collects plot-ready data for one figure from a command's output
/// directory. With `render`, additionally shells out to `python3` and
/// `matplotlib` to produce a PNG.
pub fn cmd_plot_data(
    kind: FigureKind,
    source_dir: &Path,
    options: &CommandOptions,
    render: bool,
) -> Result<()> {
    let mut out = OutDir::create(&options.out_dir, options.overwrite)?;
    let require = |name: &str| -> Result<String> {
        let path = source_dir.join(name);
        if !path.exists() {
            return Err(Error::MissingInput {
                what: "figure source",
                path: path.display().to_string(),
            });
        }
        Ok(path.display().to_string())
    };

    let (figure, files) = match kind {
        FigureKind::Fig2 => {
            let trajectory = require("trajectory.csv")?;
            let mut reader = csv::Reader::from_path(&trajectory).map_err(|e| Error::Parse {
                what: "trajectory csv",
                why: e.to_string(),
            })?;
            let headers = reader.headers().map_err(|e| Error::Parse {
                what: "trajectory csv",
                why: e.to_string(),
            })?;
            let find = |name: &str| -> Result<usize> {
                headers
                    .iter()
                    .position(|h| h == name)
                    .ok_or_else(|| Error::Parse {
                        what: "trajectory csv",
                        why: format!("missing column {name}"),
                    })
            };
            let (t_col, a1, b1, a2) = (find("t")?, find("a1")?, find("b1")?, find("a2")?);
            let mut rows = Vec::new();
            for record in reader.records() {
                let record = record.map_err(|e| Error::Parse {
                    what: "trajectory csv",
                    why: e.to_string(),
                })?;
                rows.push((
                    record[t_col].to_string(),
                    record[a1].to_string(),
                    record[b1].to_string(),
                    record[a2].to_string(),
                ));
            }
            out.write_with("fig2_phase.csv", |w| {
                writeln!(w, "t,a1,b1,a2")?;
                for (t, a1, b1, a2) in &rows {
                    writeln!(w, "{t},{a1},{b1},{a2}")?;
                }
                Ok(())
            })?;
            ("fig2".to_string(), vec!["fig2_phase.csv".to_string()])
        }
        FigureKind::Fig3 => {
            let files: Vec<String> = THETA_NAMES
                .iter()
                .map(|name| require(&format!("kde_{name}.csv")))
                .collect::<Result<_>>()?;
            ("fig3".to_string(), files)
        }
        FigureKind::Fig4 => {
            let file = require("likelihood_study.csv")?;
            ("fig4".to_string(), vec![file])
        }
        FigureKind::Fig5 => {
            let file = require("nmse.csv")?;
            ("fig5".to_string(), vec![file])
        }
    };

    out.write_json(
        &format!("{figure}_files.json"),
        &FigureFiles {
            figure: figure.clone(),
            source_dir: source_dir.display().to_string(),
            files: files.clone(),
        },
    )?;

    if render {
        render_figure(&figure, &files, &mut out)?;
    }
    Ok(())
}

fn render_figure(figure: &str, files: &[String], out: &mut OutDir) -> Result<()> {
    let png = out.root().join(format!("{figure}.png"));
    let script = match figure {
        "fig2" => format!(
            r#"
import pandas as pd, matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
d = pd.read_csv({source:?})
fig, axes = plt.subplots(1, 2, figsize=(10, 4))
axes[0].plot(d["a1"], d["b1"], lw=0.2); axes[0].set_xlabel("a1"); axes[0].set_ylabel("b1")
axes[1].plot(d["a1"], d["a2"], lw=0.2); axes[1].set_xlabel("a1"); axes[1].set_ylabel("a2")
fig.tight_layout(); fig.savefig({png:?}, dpi=120)
"#,
            source = files[0],
            png = png.display().to_string(),
        ),
        "fig3" => format!(
            r#"
import pandas as pd, matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
files = {files:?}
fig, axes = plt.subplots(2, 2, figsize=(10, 7))
for ax, path in zip(axes.flat, files):
    d = pd.read_csv(path)
    for column in d.columns[1:]:
        ax.plot(d["x"], d[column], label=column)
    ax.set_title(path.split("kde_")[-1].removesuffix(".csv")); ax.legend()
fig.tight_layout(); fig.savefig({png:?}, dpi=120)
"#,
            files = files,
            png = png.display().to_string(),
        ),
        "fig4" => format!(
            r#"
import pandas as pd, matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
d = pd.read_csv({source:?})
fig, axes = plt.subplots(1, 2, figsize=(10, 4))
for column in d.columns:
    if column.startswith("cum_log_lik_"):
        axes[0].plot(d["n"], d[column], label=column)
    if column.startswith("log_ratio_"):
        axes[1].plot(d["n"], d[column], label=column)
axes[0].legend(); axes[1].legend(); axes[0].set_xlabel("n"); axes[1].set_xlabel("n")
fig.tight_layout(); fig.savefig({png:?}, dpi=120)
"#,
            source = files[0],
            png = png.display().to_string(),
        ),
        _ => format!(
            r#"
import pandas as pd, matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
d = pd.read_csv({source:?})
fig, axes = plt.subplots(2, 2, figsize=(10, 7))
for ax, (parameter, group) in zip(axes.flat, d.groupby("parameter")):
    ax.bar(group["method"], group["nmse_mean"], yerr=group["nmse_std"])
    ax.set_title(parameter); ax.tick_params(axis="x", rotation=30)
fig.tight_layout(); fig.savefig({png:?}, dpi=120)
"#,
            source = files[0],
            png = png.display().to_string(),
        ),
    };
    let script_name = format!("render_{figure}.py");
    out.write_with(&script_name, |w| w.write_all(script.as_bytes()))?;
    let status = std::process::Command::new("python3")
        .arg(out.root().join(&script_name))
        .status()
        .map_err(|e| Error::io("python3", e))?;
    if !status.success() {
        return Err(Error::invalid("render", format!("python3 exited with {status}")));
    }
    Ok(())
}


#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn desk_config() -> ExperimentConfig {
        let mut config = ExperimentConfig::default();
        config.model.horizon = 0.4; // 20 observations
        config.seeds.master_seed = 11;
        config.seeds.run_count = 2;
        config
    }

    #[test]
    fn simulate_then_infer_npmc_smoke() {
        let dir = tempdir().unwrap();
        let data_dir = dir.path().join("data");
        let mut config = desk_config();
        cmd_simulate(
            &config,
            &CommandOptions {
                out_dir: data_dir.clone(),
                overwrite: false,
            },
        )
        .unwrap();
        assert!(data_dir.join("dataset.json").exists());
        assert!(data_dir.join("observations.csv").exists());
        assert!(data_dir.join("trajectory.csv").exists());
        assert!(data_dir.join("manifest.json").exists());

        config.method = Some(MethodConfig::Npmc {
            n_samples: 12,
            n_iterations: 2,
            clip_count: None,
            n_particles: 10,
            jitter_scale: 1e-6,
        });
        let infer_dir = dir.path().join("npmc");
        cmd_infer(
            &config,
            &data_dir,
            &CommandOptions {
                out_dir: infer_dir.clone(),
                overwrite: false,
            },
        )
        .unwrap();
        for name in ["samples_iter_00.csv", "samples_iter_02.csv", "npmc.json"] {
            assert!(infer_dir.join(name).exists(), "{name}");
        }
        for name in THETA_NAMES {
            assert!(infer_dir.join(format!("kde_{name}.csv")).exists());
        }
        let estimates: EstimatesFile =
            read_json(&infer_dir.join("estimates.json"), "estimates").unwrap();
        assert_eq!(estimates.truth, [0.85, 2.6, 216.0, 0.85]);
        assert!(estimates.posterior_mean.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn infer_requires_dataset_and_method() {
        let dir = tempdir().unwrap();
        let config = desk_config();
        let missing_method = cmd_infer(
            &config,
            dir.path(),
            &CommandOptions {
                out_dir: dir.path().join("out"),
                overwrite: false,
            },
        );
        assert!(missing_method.is_err());

        let mut config = desk_config();
        config.method = Some(MethodConfig::Oracle);
        let missing_data = cmd_infer(
            &config,
            &dir.path().join("nowhere"),
            &CommandOptions {
                out_dir: dir.path().join("out2"),
                overwrite: false,
            },
        );
        assert!(matches!(missing_data, Err(Error::MissingInput { .. })));
    }

    #[test]
    fn benchmark_with_oracle_method_has_zero_nmse() {
        let dir = tempdir().unwrap();
        let mut config = desk_config();
        config.benchmark = Some(crate::config::BenchmarkConfig {
            methods: vec![MethodConfig::Oracle],
        });
        config.seeds.run_count = 1;
        cmd_benchmark(
            &config,
            &CommandOptions {
                out_dir: dir.path().join("bench"),
                overwrite: false,
            },
        )
        .unwrap();
        let text = std::fs::read_to_string(dir.path().join("bench/nmse.csv")).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "method,parameter,nmse_mean,nmse_std,n_runs"
        );
        for line in lines {
            let fields: Vec<&str> = line.split(',').collect();
            assert_eq!(fields[0], "oracle");
            assert_eq!(fields[2], "0");
        }
    }

    #[test]
    fn plot_data_extracts_phase_columns() {
        let dir = tempdir().unwrap();
        let data_dir = dir.path().join("data");
        cmd_simulate(
            &desk_config(),
            &CommandOptions {
                out_dir: data_dir.clone(),
                overwrite: false,
            },
        )
        .unwrap();
        let fig_dir = dir.path().join("fig2");
        cmd_plot_data(
            FigureKind::Fig2,
            &data_dir,
            &CommandOptions {
                out_dir: fig_dir.clone(),
                overwrite: false,
            },
            false,
        )
        .unwrap();
        let text = std::fs::read_to_string(fig_dir.join("fig2_phase.csv")).unwrap();
        assert!(text.starts_with("t,a1,b1,a2\n"));
        assert!(fig_dir.join("fig2_files.json").exists());
    }
}
