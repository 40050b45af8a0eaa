//! End-to-end checks of the command-line surface: output layout, exit
//! codes, and the documented subcommand behaviors, on a desk-sized config.

use std::fs;
use std::path::Path;
use std::process::Command;

fn chloresp() -> Command {
    Command::new(env!("CARGO_BIN_EXE_chloresp"))
}

const SMALL_CONFIG: &str = "\
[neat]
population = 12

[env]
episode_length = 16

[esp]
iterations = 1
init_generations = 1
surrogate_generations = 2
elites = 2
elite_scenarios = 2
scenario_pool = 6
context_windows = 6

[surrogate]
hidden_size = 6
head_layer1 = 8
head_layer2 = 6
epochs = 3
patience = 1
";

fn write_small_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("config.ini");
    fs::write(&path, SMALL_CONFIG).unwrap();
    path
}

#[test]
fn run_creates_the_documented_layout() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_small_config(dir.path());
    let out = dir.path().join("out");
    let status = chloresp()
        .args(["run", "--config"])
        .arg(&config)
        .args(["--seed", "5", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());

    for artifact in [
        "run.json",
        "metrics.csv",
        "experience.jsonl",
        "checkpoints/iter0/population.json",
        "checkpoints/iter0/surrogate.json",
        "checkpoints/iter1/population.json",
        "checkpoints/iter1/surrogate.json",
        "pareto/pareto.csv",
        "pareto/pareto.svg",
    ] {
        assert!(out.join(artifact).is_file(), "missing {artifact}");
    }

    // run.json holds the resolved config with the CLI seed baked in.
    let run_json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(run_json["master_seed"], 5);
    assert_eq!(run_json["neat"]["population"], 12);
}

#[test]
fn run_iterations_flag_overrides_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_small_config(dir.path());
    let out = dir.path().join("out");
    let status = chloresp()
        .args(["run", "--config"])
        .arg(&config)
        .args(["--seed", "5", "--iterations", "0", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("checkpoints/iter0/population.json").is_file());
    assert!(!out.join("checkpoints/iter1").exists());
    // Initial collection artifacts are still all present.
    assert!(out.join("metrics.csv").is_file());
    assert!(out.join("experience.jsonl").is_file());
}

#[test]
fn pareto_subcommand_writes_the_requested_rows() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_small_config(dir.path());
    let out = dir.path().join("out");
    assert!(chloresp()
        .args(["run", "--config"])
        .arg(&config)
        .args(["--seed", "9", "--out"])
        .arg(&out)
        .status()
        .unwrap()
        .success());

    let pareto_out = dir.path().join("pareto");
    let status = chloresp()
        .args(["pareto", "--population"])
        .arg(out.join("checkpoints/iter1/population.json"))
        .args(["--top", "8", "--out"])
        .arg(&pareto_out)
        .status()
        .unwrap();
    assert!(status.success());

    let csv = fs::read_to_string(pareto_out.join("pareto.csv")).unwrap();
    assert_eq!(csv.trim().lines().count(), 9, "header plus 8 rows");
}

#[test]
fn eval_prints_one_line_per_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_small_config(dir.path());
    let out = dir.path().join("out");
    assert!(chloresp()
        .args(["run", "--config"])
        .arg(&config)
        .args(["--seed", "2", "--out"])
        .arg(&out)
        .status()
        .unwrap()
        .success());

    let population: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(out.join("checkpoints/iter1/population.json")).unwrap(),
    )
    .unwrap();
    let genome_path = dir.path().join("genome.json");
    fs::write(&genome_path, population[0]["genome"].to_string()).unwrap();

    let output = chloresp()
        .args(["eval", "--genome"])
        .arg(&genome_path)
        .args(["--config"])
        .arg(&config)
        .args(["--scenarios", "5", "--seed", "3"])
        .output()
        .unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8(output.stdout).unwrap();
    let lines: Vec<&str> = stdout.trim().lines().collect();
    assert_eq!(lines.len(), 5);
    for line in lines {
        assert!(line.starts_with("scenario="), "line: {line}");
        assert!(line.contains("violation="));
        assert!(line.contains("cost="));
        assert!(line.contains("reward="));
    }
}

#[test]
fn ingest_round_trips_experience_into_windows() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_small_config(dir.path());
    let out = dir.path().join("out");
    assert!(chloresp()
        .args(["run", "--config"])
        .arg(&config)
        .args(["--seed", "4", "--out"])
        .arg(&out)
        .status()
        .unwrap()
        .success());

    let buffer_path = dir.path().join("buffer.jsonl");
    let output = chloresp()
        .args(["ingest", "--jsonl"])
        .arg(out.join("experience.jsonl"))
        .args(["--out"])
        .arg(&buffer_path)
        .output()
        .unwrap();
    assert!(output.status.success());
    let lines = fs::read_to_string(&buffer_path).unwrap();
    // 16-step episodes slide into 7 windows each; something must be there.
    assert!(lines.lines().count() > 0);
    for line in lines.lines().take(3) {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["window"]["obs_seq"].as_array().unwrap().len(), 10);
    }
}

#[test]
fn unknown_flag_exits_one_with_usage_on_stderr() {
    let output = chloresp().args(["run", "--frobnicate"]).output().unwrap();
    assert_eq!(output.status.code(), Some(1));
    assert!(!output.stderr.is_empty());
    assert!(output.stdout.is_empty());
}

#[test]
fn unknown_subcommand_exits_one() {
    let output = chloresp().arg("launch").output().unwrap();
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn runtime_errors_exit_two() {
    let output = chloresp()
        .args([
            "eval",
            "--genome",
            "/nonexistent/genome.json",
            "--scenarios",
            "1",
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8(output.stderr).unwrap();
    assert!(stderr.contains("error"), "stderr: {stderr}");
}

#[test]
fn bad_config_content_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.ini");
    fs::write(&config, "[neat]\npopulation = -5\n").unwrap();
    let output = chloresp()
        .args(["run", "--config"])
        .arg(&config)
        .args(["--seed", "1", "--out"])
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8(output.stderr).unwrap();
    assert!(stderr.contains("neat.population"), "stderr: {stderr}");
}

#[test]
fn help_exits_zero() {
    let output = chloresp().arg("--help").output().unwrap();
    assert_eq!(output.status.code(), Some(0));
    let stdout = String::from_utf8(output.stdout).unwrap();
    for sub in ["run", "pareto", "eval", "ingest"] {
        assert!(stdout.contains(sub), "help is missing {sub}");
    }
}
