//! Runs every subcommand end to end on the tiny profile.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn phasefb(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phasefb"))
        .current_dir(root)
        .env_remove("PHASEFB_SEED")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(root: &Path, args: &[&str]) -> String {
    let out = phasefb(root, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

const COMMON: [&str; 6] = ["--profile", "tiny", "--seed", "5", "--steps", "300"];

fn with_common<'a>(args: &[&'a str]) -> Vec<&'a str> {
    let mut v = args.to_vec();
    v.extend(COMMON);
    v
}

#[test]
fn full_pipeline_on_the_tiny_profile() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();

    let out = ok(root, &with_common(&["gen-data"]));
    assert!(out.contains("12 demonstrations"), "{out}");
    let demo_dirs = ["0", "5", "10"]
        .iter()
        .map(|s| fs::read_dir(root.join("corpus").join(s)).unwrap().count())
        .sum::<usize>();
    assert_eq!(demo_dirs, 12);
    let pose = fs::read(root.join("corpus/5/demo_2/pose.csv")).unwrap();

    // Refuses to overwrite, then regenerates identical bytes when forced.
    assert_eq!(
        phasefb(root, &with_common(&["gen-data"])).status.code(),
        Some(3)
    );
    ok(root, &with_common(&["gen-data", "--force"]));
    assert_eq!(
        fs::read(root.join("corpus/5/demo_2/pose.csv")).unwrap(),
        pose
    );

    ok(root, &with_common(&["learn-nominal"]));
    for p in 1..=3 {
        assert!(root.join(format!("models/primitive_{p}.json")).exists());
    }
    let reports: serde_json::Value =
        serde_json::from_slice(&fs::read(root.join("models/reproduction.json")).unwrap()).unwrap();
    assert_eq!(reports.as_array().unwrap().len(), 3);

    ok(root, &with_common(&["extract-coupling"]));
    let csv = fs::read_to_string(root.join("data/coupling_prim2.csv")).unwrap();
    assert!(
        csv.starts_with("demo_id,setting,p,u,ds_1,"),
        "{}",
        &csv[..40]
    );
    assert!(!root.join("data/coupling_prim1.csv").exists());

    ok(root, &with_common(&["train"]));
    let model = fs::read(root.join("models/feedback_prim2.json")).unwrap();
    ok(root, &with_common(&["train", "--force"]));
    assert_eq!(
        fs::read(root.join("models/feedback_prim2.json")).unwrap(),
        model
    );
    let curves = fs::read_to_string(root.join("models/curves_prim3.csv")).unwrap();
    assert!(curves.starts_with("step,train,val,test,gen"));

    let table = ok(root, &with_common(&["loo", "--primitive", "2"]));
    for col in [
        "Training",
        "Validation",
        "Testing",
        "Generalization",
        "Prim. 2",
    ] {
        assert!(table.contains(col), "{table}");
    }
    assert!(root.join("reports/loo_pmnn_100.json").exists());

    ok(
        root,
        &with_common(&["unroll", "--setting", "10", "--coupling", "off"]),
    );
    let summary: serde_json::Value = serde_json::from_slice(
        &fs::read(root.join("reports/unroll_10deg_off/summary.json")).unwrap(),
    )
    .unwrap();
    let err = summary["final_roll_error_deg"].as_f64().unwrap();
    assert!((err - 10.0).abs() < 0.5, "{err}");

    ok(root, &with_common(&["unroll", "--setting", "10"]));
    let coupling = fs::read_to_string(root.join("reports/unroll_10deg_on/coupling.csv")).unwrap();
    let first = coupling.lines().nth(1).unwrap();
    assert_eq!(first.split(',').nth(2), Some("0"), "{first}");
    assert!(root.join("reports/unroll_10deg_on/deviation.csv").exists());

    ok(root, &with_common(&["dominance", "--primitive", "2"]));
    let dom = fs::read_to_string(root.join("reports/dominance_prim2.csv")).unwrap();
    assert!(dom.starts_with("network,kernel,rank,feature,magnitude,top"));
}

#[test]
fn exit_codes_follow_the_contract() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    // No seed anywhere: validation error.
    assert_eq!(
        phasefb(root, &["gen-data", "--profile", "tiny"])
            .status
            .code(),
        Some(2)
    );
    // Unparseable architecture: validation error.
    assert_eq!(
        phasefb(root, &with_common(&["train", "--arch", "lstm-3"]))
            .status
            .code(),
        Some(2)
    );
    // Missing inputs: data error.
    assert_eq!(
        phasefb(root, &with_common(&["learn-nominal"]))
            .status
            .code(),
        Some(3)
    );
    // Seed through the environment.
    let out = Command::new(env!("CARGO_BIN_EXE_phasefb"))
        .current_dir(root)
        .env("PHASEFB_SEED", "9")
        .args(["gen-data", "--profile", "tiny", "--corpus", "c"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let meta: serde_json::Value =
        serde_json::from_slice(&fs::read(root.join("c/meta.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 9);
}

#[test]
fn config_file_values_are_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    fs::write(
        root.join("exp.toml"),
        "seed = 3\nprofile = \"tiny\"\ncorpus = \"from_config\"\n",
    )
    .unwrap();
    ok(root, &["gen-data", "--config", "exp.toml", "--seed", "4"]);
    let meta: serde_json::Value =
        serde_json::from_slice(&fs::read(root.join("from_config/meta.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 4);
    fs::write(root.join("bad.toml"), "seed = \"x\"\n").unwrap();
    assert_eq!(
        phasefb(root, &["gen-data", "--config", "bad.toml"])
            .status
            .code(),
        Some(2)
    );
}
