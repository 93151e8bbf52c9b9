use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn cases() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../cases")
}

fn golden(name: &str) -> String {
    fs::read_to_string(
        Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("tests/golden")
            .join(name),
    )
    .unwrap()
}

/// Workspace holding copies of the bundled inputs, so reports carry relative paths.
fn workspace() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    for name in ["radial3.json", "two_bus.json"] {
        fs::copy(cases().join(name), dir.path().join(name)).unwrap();
    }
    fs::copy(
        cases().join("models/radial3_box.json"),
        dir.path().join("box.json"),
    )
    .unwrap();
    dir
}

fn ccopf(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ccopf"))
        .current_dir(dir)
        .env_remove("CCOPF_OUT_DIR")
        .args(["--out", "out"])
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).trim().to_string()
}

fn without_timestamp(text: &str) -> String {
    text.lines()
        .map(|l| {
            if l.trim_start().starts_with("\"timestamp\":") {
                "  \"timestamp\": 0,"
            } else {
                l
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn report(dir: &Path, name: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("out").join(name)).unwrap()).unwrap()
}

#[test]
fn explicit_sample_bound_is_printed() {
    let dir = workspace();
    let o = ccopf(
        dir.path(),
        &[
            "samples", "--eps", "0.1", "--beta", "1e-6", "--nu", "10", "--bound", "explicit",
        ],
    );
    assert!(o.status.success());
    assert_eq!(stdout(&o), "361");
    let r = report(dir.path(), "samples.json");
    assert_eq!(r["result"]["explicit"], 361);
    assert_eq!(r["config"]["nu"], 10);
}

#[test]
fn sample_dimension_follows_the_case() {
    let dir = workspace();
    let o = ccopf(
        dir.path(),
        &[
            "samples",
            "--eps",
            "0.2",
            "--beta",
            "0.05",
            "--case",
            "radial3.json",
        ],
    );
    assert!(o.status.success());
    assert_eq!(stdout(&o), "57");
}

#[test]
fn radial_acopf_is_rank_one() {
    let dir = workspace();
    let o = ccopf(dir.path(), &["acopf", "--case", "radial3.json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("rank-one true"));
    let r = report(dir.path(), "acopf.json");
    assert_eq!(r["result"]["rank_one"], true);
    assert_eq!(r["config"]["subcommand"], "acopf");
    assert_eq!(r["inputs"][0]["role"], "case");
    assert_eq!(r["input_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn reports_match_golden_files_modulo_timestamp() {
    let dir = workspace();
    let runs: [(&str, &[&str]); 3] = [
        ("acopf.json", &["acopf", "--case", "radial3.json"]),
        ("pf.json", &["pf", "--case", "radial3.json"]),
        (
            "samples.json",
            &[
                "samples", "--eps", "0.1", "--beta", "1e-6", "--nu", "10", "--bound", "explicit",
            ],
        ),
    ];
    for (name, args) in runs {
        assert!(ccopf(dir.path(), args).status.success());
        let first = fs::read_to_string(dir.path().join("out").join(name)).unwrap();
        assert!(ccopf(dir.path(), args).status.success());
        let second = fs::read_to_string(dir.path().join("out").join(name)).unwrap();
        assert_eq!(
            without_timestamp(&first),
            without_timestamp(&second),
            "{name}"
        );
        assert_eq!(
            without_timestamp(&first),
            without_timestamp(&golden(name)),
            "{name}"
        );
    }
}

#[test]
fn validating_with_the_training_seed_exits_2() {
    let dir = workspace();
    let o = ccopf(
        dir.path(),
        &[
            "swc",
            "--case",
            "radial3.json",
            "--model",
            "box.json",
            "--eps",
            "0.2",
            "--beta",
            "0.05",
            "--seed",
            "9",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("swc: N = 57"));
    let o = ccopf(
        dir.path(),
        &[
            "validate",
            "--case",
            "radial3.json",
            "--model",
            "box.json",
            "--seed",
            "9",
        ],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("training seed"));
    assert!(!dir.path().join("out/validate.json").exists());

    let o = ccopf(
        dir.path(),
        &[
            "validate",
            "--case",
            "radial3.json",
            "--model",
            "box.json",
            "--seed",
            "10",
            "-M",
            "200",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(dir.path(), "validate.json");
    assert_eq!(r["result"]["M"], 200);
    assert_eq!(r["config"]["train_seed"], 9);
    assert_eq!(r["config"]["validate_seed"], 10);
    let csv = fs::read_to_string(dir.path().join("out/validate_outcomes.csv")).unwrap();
    assert_eq!(csv.lines().count(), 201);
}

#[test]
fn usage_and_io_errors_exit_2() {
    let dir = workspace();
    assert_eq!(
        ccopf(dir.path(), &["acopf", "--case", "missing.json"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        ccopf(
            dir.path(),
            &["samples", "--eps", "1.5", "--beta", "0.1", "--nu", "2"]
        )
        .status
        .code(),
        Some(2)
    );
    assert_eq!(
        ccopf(dir.path(), &["samples", "--eps", "0.1"])
            .status
            .code(),
        Some(2)
    );
    fs::write(dir.path().join("bad.json"), "{\"base_mva\": 100}").unwrap();
    assert_eq!(
        ccopf(dir.path(), &["pf", "--case", "bad.json"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn excess_demand_exits_1() {
    let dir = workspace();
    let o = ccopf(
        dir.path(),
        &["ed", "--case", "radial3.json", "--demand", "50"],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("capacity"));
}

#[test]
fn output_directory_comes_from_the_environment() {
    let dir = workspace();
    let o = Command::new(env!("CARGO_BIN_EXE_ccopf"))
        .current_dir(dir.path())
        .env("CCOPF_OUT_DIR", "from-env")
        .args(["--threads", "2", "ed", "--case", "two_bus.json"])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("from-env/ed.json")).unwrap())
            .unwrap();
    assert_eq!(r["config"]["threads"], 2);
    assert_eq!(r["config"]["out_dir"], "from-env");
}
