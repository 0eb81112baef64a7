//! End-to-end tests of the command-line interface: exit codes, overwrite
//! protection, environment overrides, and manifest-based reproduction.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::tempdir;

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_repressilator"))
}

fn write_config(dir: &Path, name: &str, contents: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, contents).unwrap();
    path.display().to_string()
}

fn tiny_config(dir: &Path) -> String {
    write_config(
        dir,
        "tiny.json",
        r#"{
            "model": {"horizon": 0.4, "data_noise": 0.0},
            "method": {"name": "npmc", "n_samples": 12, "n_iterations": 1, "n_particles": 10},
            "seeds": {"master_seed": 9, "run_count": 2}
        }"#,
    )
}

fn run(args: &[&str]) -> Output {
    binary().args(args).output().expect("spawn CLI")
}

fn assert_exit(output: &Output, code: i32) {
    assert_eq!(
        output.status.code(),
        Some(code),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

#[test]
fn help_and_version_exit_zero() {
    assert_exit(&run(&["--help"]), 0);
    assert_exit(&run(&["simulate", "--help"]), 0);
    assert_exit(&run(&["--version"]), 0);
}

#[test]
fn unknown_config_key_is_a_validation_error() {
    let dir = tempdir().unwrap();
    let config = write_config(dir.path(), "bad.json", r#"{"modle": {}}"#);
    let out_dir = dir.path().join("out");
    let output = run(&["simulate", "--config", &config, "--out", out_dir.to_str().unwrap()]);
    assert_exit(&output, 1);
}

#[test]
fn invalid_parameter_is_a_validation_error() {
    let dir = tempdir().unwrap();
    let config = write_config(dir.path(), "bad.json", r#"{"model": {"h": -0.5}}"#);
    let output = run(&[
        "simulate",
        "--config",
        &config,
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_exit(&output, 1);
}

#[test]
fn missing_dataset_is_a_validation_error() {
    let dir = tempdir().unwrap();
    let config = tiny_config(dir.path());
    let output = run(&[
        "infer",
        "--config",
        &config,
        "--data",
        dir.path().join("nowhere").to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_exit(&output, 1);
}

#[test]
fn refusing_to_overwrite_then_succeeding_with_flag() {
    let dir = tempdir().unwrap();
    let config = tiny_config(dir.path());
    let out = dir.path().join("data");
    assert_exit(&run(&["simulate", "--config", &config, "--out", out.to_str().unwrap()]), 0);
    assert_exit(&run(&["simulate", "--config", &config, "--out", out.to_str().unwrap()]), 1);
    assert_exit(
        &run(&[
            "simulate",
            "--config",
            &config,
            "--out",
            out.to_str().unwrap(),
            "--overwrite",
        ]),
        0,
    );
}

#[test]
fn abc_stage_failure_is_a_runtime_error() {
    let dir = tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "abc.json",
        r#"{
            "model": {"horizon": 0.4, "data_noise": 0.0},
            "method": {"name": "abc", "tolerances": [1e-9], "target_accepted": 5,
                       "max_draws_per_stage": 50},
            "seeds": {"master_seed": 9, "run_count": 1}
        }"#,
    );
    let data = dir.path().join("data");
    assert_exit(&run(&["simulate", "--config", &config, "--out", data.to_str().unwrap()]), 0);
    let output = run(&[
        "infer",
        "--config",
        &config,
        "--data",
        data.to_str().unwrap(),
        "--out",
        dir.path().join("abc").to_str().unwrap(),
    ]);
    assert_exit(&output, 2);
}

#[test]
fn out_root_env_var_rebases_relative_output() {
    let dir = tempdir().unwrap();
    let config = tiny_config(dir.path());
    let output = binary()
        .args(["simulate", "--config", &config, "--out", "nested/run"])
        .env("REPRESSILATOR_OUT_ROOT", dir.path())
        .output()
        .unwrap();
    assert_exit(&output, 0);
    assert!(dir.path().join("nested/run/dataset.json").exists());
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempdir().unwrap();
    let config = tiny_config(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_exit(
        &run(&["simulate", "--config", &config, "--seed", "123", "--out", a.to_str().unwrap()]),
        0,
    );
    assert_exit(&run(&["simulate", "--config", &config, "--out", b.to_str().unwrap()]), 0);
    let obs_a = fs::read(a.join("observations.csv")).unwrap();
    let obs_b = fs::read(b.join("observations.csv")).unwrap();
    assert_ne!(obs_a, obs_b, "different seeds must change the data");
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 123);
}

#[test]
fn workers_flag_does_not_change_results() {
    let dir = tempdir().unwrap();
    let config = tiny_config(dir.path());
    let data = dir.path().join("data");
    assert_exit(&run(&["simulate", "--config", &config, "--out", data.to_str().unwrap()]), 0);
    let one = dir.path().join("w1");
    let two = dir.path().join("w2");
    for (workers, out) in [("1", &one), ("2", &two)] {
        assert_exit(
            &run(&[
                "infer",
                "--config",
                &config,
                "--data",
                data.to_str().unwrap(),
                "--workers",
                workers,
                "--out",
                out.to_str().unwrap(),
            ]),
            0,
        );
    }
    for name in ["samples_iter_00.csv", "samples_iter_01.csv", "kde_q.csv"] {
        assert_eq!(
            fs::read(one.join(name)).unwrap(),
            fs::read(two.join(name)).unwrap(),
            "{name} differs across worker counts"
        );
    }
}

#[test]
fn plot_data_requires_its_inputs() {
    let dir = tempdir().unwrap();
    let output = run(&[
        "plot-data",
        "--kind",
        "fig4",
        "--dir",
        dir.path().to_str().unwrap(),
        "--out",
        dir.path().join("fig").to_str().unwrap(),
    ]);
    assert_exit(&output, 1);

    let bad_kind = run(&[
        "plot-data",
        "--kind",
        "fig9",
        "--dir",
        dir.path().to_str().unwrap(),
        "--out",
        dir.path().join("fig").to_str().unwrap(),
    ]);
    assert_exit(&bad_kind, 1);
}
