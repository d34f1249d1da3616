use std::path::Path;
use std::process::Command;

use cbas_bench::report::recompute;

fn bench() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cbas-bench"))
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, body).unwrap();
    path
}

const SMALL_SEQUENCE: &str = r#"{
    "scenario": "sequence-design",
    "methods": ["cbas", "fb"],
    "seeds": [0],
    "budget": 1000,
    "oracle": { "ensemble_sizes": [1, 5] }
}"#;

#[test]
fn validate_accepts_a_good_config_and_rejects_bad_ones() {
    let dir = tempfile::tempdir().unwrap();
    let good = write_config(dir.path(), SMALL_SEQUENCE);
    assert_eq!(bench().args(["validate", "--config"]).arg(&good).status().unwrap().code(), Some(0));

    for body in [r#"{ "q": 1.5 }"#, r#"{ "no_such_key": 1 }"#, "not json", r#"{ "methods": [] }"#] {
        let bad = write_config(dir.path(), body);
        let status = bench().args(["validate", "--config"]).arg(&bad).status().unwrap();
        assert_eq!(status.code(), Some(1), "{body}");
    }
    let missing = dir.path().join("absent.json");
    assert_eq!(bench().args(["validate", "--config"]).arg(&missing).status().unwrap().code(), Some(1));
}

#[test]
fn unknown_scenario_override_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_SEQUENCE);
    let status = bench()
        .args(["run", "--scenario", "nope", "--config"])
        .arg(&cfg)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn run_writes_artifacts_and_report_reproduces_the_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_SEQUENCE);
    let out = dir.path().join("out");
    let status = bench().args(["run", "--config"]).arg(&cfg).arg("--out").arg(&out).status().unwrap();
    assert_eq!(status.code(), Some(0));

    for f in ["run_summary.csv", "aggregate.csv", "config.json", "landscape.json", "prior.json", "oracles/ens-5.json"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let runs = std::fs::read_dir(out.join("runs")).unwrap().count();
    assert_eq!(runs, 4);

    let (summary, table) = recompute(&out).unwrap();
    assert_eq!(summary, std::fs::read(out.join("run_summary.csv")).unwrap());
    assert_eq!(table, std::fs::read(out.join("aggregate.csv")).unwrap());

    // report rewrites the same bytes
    std::fs::remove_file(out.join("aggregate.csv")).unwrap();
    let status = bench().args(["report", "--in"]).arg(&out).status().unwrap();
    assert_eq!(status.code(), Some(0));
    assert_eq!(table, std::fs::read(out.join("aggregate.csv")).unwrap());
}

#[test]
fn report_rejects_a_corrupted_run_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_SEQUENCE);
    let out = dir.path().join("out");
    assert!(bench().args(["run", "--config"]).arg(&cfg).arg("--out").arg(&out).status().unwrap().success());

    let run = std::fs::read_dir(out.join("runs")).unwrap().next().unwrap().unwrap().path();
    let text = std::fs::read_to_string(&run).unwrap();
    let header = text.lines().next().unwrap().replacen("gamma", "gama", 1);
    let rest: Vec<&str> = text.lines().skip(1).collect();
    std::fs::write(&run, format!("{header}\n{}\n", rest.join("\n"))).unwrap();
    let status = bench().args(["report", "--in"]).arg(&out).status().unwrap();
    assert_eq!(status.code(), Some(2));

    let status = bench().args(["report", "--in"]).arg(dir.path().join("nowhere")).status().unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn seed_override_changes_the_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_SEQUENCE);
    let read = |seed: &str| {
        let out = dir.path().join(format!("s{seed}"));
        assert!(bench()
            .args(["run", "--seed", seed, "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap()
            .success());
        std::fs::read(out.join("run_summary.csv")).unwrap()
    };
    assert_ne!(read("1"), read("2"));
}
