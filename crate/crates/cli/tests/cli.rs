//! End-to-end command tests against the built binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn binary() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_conjoint"))
}

fn run(args: &[&str]) -> Output {
    Command::new(binary())
        .args(args)
        .output()
        .expect("binary runs")
}

fn small_config(out_dir: &Path) -> serde_json::Value {
    serde_json::json!({
        "schema": [
            { "name": "gender", "levels": [
                { "label": "female", "utility": 0.0, "salience": 0.0 },
                { "label": "male", "utility": 0.4, "salience": 1.0 }
            ]},
            { "name": "age", "levels": [
                { "label": "40", "utility": 0.9, "salience": 40.0 },
                { "label": "60", "utility": 0.5, "salience": 60.0 },
                { "label": "75", "utility": 0.1, "salience": 75.0 }
            ]},
            { "name": "tax", "levels": [
                { "label": "oppose", "utility": 0.0, "salience": -1.0 },
                { "label": "support", "utility": 0.6, "salience": 1.0 }
            ]}
        ],
        "population": {
            "size": 120,
            "dirichlet_kappa": 3.0,
            "delta": { "type": "uniform", "low": 0.4, "high": 1.0 },
            "utility_offset_width": 0.2,
            "utility_shift": 1.5,
            "seed": 11
        },
        "design": {
            "profiles_per_round": 2,
            "rounds": 3,
            "sampling": "uniform_iid",
            "k_list": [2, 3],
            "real_m": 3,
            "seed": 12
        },
        "estimation": {
            "method": "difference_in_means",
            "outcome": "choice",
            "bootstrap_resamples": 80,
            "seed": 13
        },
        "sweep": {
            "target_attribute": "gender",
            "contrast_levels": ["male", "female"]
        },
        "verify": {
            "budget": 4000,
            "seed": 14,
            "no_reversal_draws": 400,
            "amplification_draws": 60,
            "max_report_instances": 2
        },
        "output_dir": out_dir
    })
}

fn write_config(dir: &Path, value: &serde_json::Value) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

#[test]
fn simulate_writes_one_dataset_per_group_and_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let config = write_config(dir.path(), &small_config(&out));
    let first = run(&["simulate", "--config", config.to_str().unwrap()]);
    assert!(
        first.status.success(),
        "{}",
        String::from_utf8_lossy(&first.stderr)
    );
    let k2 = std::fs::read(out.join("dataset_k2.csv")).unwrap();
    let k3 = std::fs::read(out.join("dataset_k3.csv")).unwrap();
    assert!(k2.starts_with(b"respondent,round,profile,gender,age,choice,rating\n"));
    assert!(k3.starts_with(b"respondent,round,profile,gender,age,tax,choice,rating\n"));

    let second = run(&["simulate", "--config", config.to_str().unwrap()]);
    assert!(second.status.success());
    assert_eq!(k2, std::fs::read(out.join("dataset_k2.csv")).unwrap());
    assert_eq!(k3, std::fs::read(out.join("dataset_k3.csv")).unwrap());
}

#[test]
fn five_group_example_config_writes_five_datasets() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let example =
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/examples/candidate_choice.json");
    let mut config: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(example).unwrap()).unwrap();
    // Trim the population so the test stays quick; the group structure is
    // what matters here.
    config["population"]["size"] = serde_json::json!(100);
    config["design"]["rounds"] = serde_json::json!(2);
    let config_path = write_config(dir.path(), &config);
    let result = run(&[
        "simulate",
        "--config",
        config_path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        result.status.success(),
        "{}",
        String::from_utf8_lossy(&result.stderr)
    );
    for k in [2usize, 4, 6, 8, 10] {
        let header = std::fs::read_to_string(out.join(format!("dataset_k{k}.csv")))
            .unwrap()
            .lines()
            .next()
            .unwrap()
            .to_string();
        // respondent,round,profile + k attribute columns + choice,rating.
        assert_eq!(header.split(',').count(), 3 + k + 2, "k={k}: {header}");
    }
}

#[test]
fn estimate_emits_an_effect_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let config = write_config(dir.path(), &small_config(&out));
    assert!(run(&["simulate", "--config", config.to_str().unwrap()])
        .status
        .success());
    let dataset = out.join("dataset_k3.csv");
    let result = run(&[
        "estimate",
        dataset.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
    ]);
    assert!(
        result.status.success(),
        "{}",
        String::from_utf8_lossy(&result.stderr)
    );
    let effects = std::fs::read_to_string(out.join("effects_dataset_k3.csv")).unwrap();
    let mut lines = effects.lines();
    assert_eq!(
        lines.next().unwrap(),
        "attribute,level,baseline,estimate,variance,n,method,k_attributes"
    );
    // gender (1) + age (2) + tax (1) non-baseline levels.
    assert_eq!(lines.count(), 4);
    assert!(effects.contains("age,60,40,"));
}

#[test]
fn seed_override_changes_outputs_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let out_c = dir.path().join("c");
    let config = write_config(dir.path(), &small_config(&out_a));
    let config_str = config.to_str().unwrap();
    assert!(run(&["simulate", "--config", config_str]).status.success());
    for (out, seed) in [(&out_b, "777"), (&out_c, "777")] {
        let result = run(&[
            "simulate",
            "--config",
            config_str,
            "--out",
            out.to_str().unwrap(),
            "--seed-override",
            seed,
        ]);
        assert!(result.status.success());
    }
    let base = std::fs::read(out_a.join("dataset_k2.csv")).unwrap();
    let b = std::fs::read(out_b.join("dataset_k2.csv")).unwrap();
    let c = std::fs::read(out_c.join("dataset_k2.csv")).unwrap();
    assert_ne!(base, b, "seed override must change the data");
    assert_eq!(b, c, "identical overridden seeds must agree");
}

#[test]
fn verify_passes_and_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let config = write_config(dir.path(), &small_config(&out));
    let result = run(&["verify", "--config", config.to_str().unwrap()]);
    assert!(
        result.status.success(),
        "{}",
        String::from_utf8_lossy(&result.stderr)
    );
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("verify_report.json")).unwrap())
            .unwrap();
    assert_eq!(report["pass"], serde_json::json!(true));
    assert_eq!(report["no_reversal"]["flips"], serde_json::json!(0));
    assert!(report["sign_reversal_search"]["found"].as_u64().unwrap() >= 1);
}

#[test]
fn sweep_emits_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let mut config_value = small_config(&out);
    // Keep the sweep fast; three k points so the meta fit is defined.
    config_value["population"]["size"] = serde_json::json!(80);
    config_value["estimation"]["bootstrap_resamples"] = serde_json::json!(40);
    config_value["design"]["k_list"] = serde_json::json!([1, 2, 3]);
    let config = write_config(dir.path(), &config_value);
    let result = run(&[
        "sweep",
        "--config",
        config.to_str().unwrap(),
        "--abs-effects",
    ]);
    assert!(
        result.status.success(),
        "{}",
        String::from_utf8_lossy(&result.stderr)
    );
    for name in [
        "sweep_effects.csv",
        "sweep_meta.json",
        "sign_heatmap.csv",
        "importance_amce_heatmap.csv",
        "importance_r2_heatmap.csv",
    ] {
        assert!(out.join(name).exists(), "{name} missing");
    }
    let effects = std::fs::read_to_string(out.join("sweep_effects.csv")).unwrap();
    assert!(effects.starts_with("study_id,k_attributes,effect,variance\n"));
    assert_eq!(effects.lines().count(), 1 + 3);
}

#[test]
fn meta_reproduces_the_frozen_fit() {
    let table =
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/examples/effects_sample.csv");
    let result = run(&["meta", table.to_str().unwrap()]);
    assert!(
        result.status.success(),
        "{}",
        String::from_utf8_lossy(&result.stderr)
    );
    let fit: serde_json::Value =
        serde_json::from_slice(&result.stdout).expect("fit json on stdout");
    let slope = fit["slope"].as_f64().unwrap();
    let intercept = fit["intercept"].as_f64().unwrap();
    assert!((slope - (-0.026)).abs() < 1e-9, "slope {slope}");
    assert!((intercept - 0.192).abs() < 1e-9, "intercept {intercept}");
}

#[test]
fn exit_codes_distinguish_failure_kinds() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");

    // Validation failure: malformed config.
    let mut broken = small_config(&out);
    broken["design"]["k_list"] = serde_json::json!([3, 2]);
    let config = write_config(dir.path(), &broken);
    let result = run(&["simulate", "--config", config.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(1));

    // I/O failure: dataset file missing.
    let config = write_config(dir.path(), &small_config(&out));
    let result = run(&[
        "estimate",
        dir.path().join("absent.csv").to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(3));

    // Validation failure inside meta: too few studies.
    let short = dir.path().join("short.csv");
    std::fs::write(
        &short,
        "study_id,k_attributes,effect,variance\na,2,0.1,1.0\n",
    )
    .unwrap();
    let result = run(&["meta", short.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(1));
}
