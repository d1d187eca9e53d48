//! End-to-end tests of the `kme-lab` binary: exit codes, output determinism,
//! config-file mirroring, and schema validation of every JSON output.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_kme-lab")
}

fn schemas_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schemas")
}

fn run_in(dir: &Path, args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(bin());
    cmd.args(args).current_dir(dir).env_remove("KME_LAB_JOBS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("spawn kme-lab")
}

fn read_json(path: &Path) -> Value {
    let text = std::fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("read {}: {e}", path.display()));
    serde_json::from_str(&text).unwrap_or_else(|e| panic!("parse {}: {e}", path.display()))
}

// ---------------------------------------------------------------------------
// Minimal JSON-Schema-subset validator: type / properties / required /
// items / enum. Enough to check our own published schemas.
// ---------------------------------------------------------------------------

fn type_matches(ty: &str, value: &Value) -> bool {
    match ty {
        "object" => value.is_object(),
        "array" => value.is_array(),
        "string" => value.is_string(),
        "number" => value.is_number(),
        "integer" => value.is_i64() || value.is_u64(),
        "boolean" => value.is_boolean(),
        "null" => value.is_null(),
        _ => false,
    }
}

fn validate(schema: &Value, value: &Value, path: &str) -> Result<(), String> {
    if let Some(allowed) = schema.get("enum").and_then(Value::as_array) {
        if !allowed.contains(value) {
            return Err(format!("{path}: {value} not in enum {allowed:?}"));
        }
    }
    if let Some(ty) = schema.get("type") {
        let ok = match ty {
            Value::String(s) => type_matches(s, value),
            Value::Array(list) => list
                .iter()
                .filter_map(Value::as_str)
                .any(|s| type_matches(s, value)),
            _ => return Err(format!("{path}: malformed 'type' in schema")),
        };
        if !ok {
            return Err(format!("{path}: value {value} does not have type {ty}"));
        }
    }
    if let Some(required) = schema.get("required").and_then(Value::as_array) {
        let obj = value
            .as_object()
            .ok_or_else(|| format!("{path}: 'required' on non-object"))?;
        for key in required.iter().filter_map(Value::as_str) {
            if !obj.contains_key(key) {
                return Err(format!("{path}: missing required key '{key}'"));
            }
        }
    }
    if let Some(props) = schema.get("properties").and_then(Value::as_object) {
        if let Some(obj) = value.as_object() {
            for (key, sub) in props {
                if let Some(v) = obj.get(key) {
                    validate(sub, v, &format!("{path}.{key}"))?;
                }
            }
        }
    }
    if let Some(items) = schema.get("items") {
        if let Some(arr) = value.as_array() {
            for (i, v) in arr.iter().enumerate() {
                validate(items, v, &format!("{path}[{i}]"))?;
            }
        }
    }
    Ok(())
}

fn assert_valid(schema_name: &str, value: &Value) {
    let schema = read_json(&schemas_dir().join(schema_name));
    if let Err(e) = validate(&schema, value, "$") {
        panic!("{schema_name} validation failed: {e}");
    }
}

// ---------------------------------------------------------------------------
// rate
// ---------------------------------------------------------------------------

const SMALL_RATE: &[&str] = &[
    "rate", "--kernel", "gaussian", "--eta", "1", "--d", "1", "--n", "64,128", "--reps", "3",
    "--seed", "7", "--norm", "both",
];

#[test]
fn rate_outputs_validate_and_are_deterministic() {
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let out1 = run_in(d1.path(), SMALL_RATE, &[]);
    assert!(out1.status.success(), "stderr: {}", String::from_utf8_lossy(&out1.stderr));
    // Second run under a different worker count: results must not change.
    let out2 = run_in(d2.path(), SMALL_RATE, &[("KME_LAB_JOBS", "2")]);
    assert!(out2.status.success());

    let report = read_json(&d1.path().join("rate_report.json"));
    assert_valid("rate.json", &report);
    assert_eq!(report["reports"].as_array().unwrap().len(), 2);

    for name in ["rate_report.json", "errors.csv"] {
        let a = std::fs::read(d1.path().join(name)).unwrap();
        let b = std::fs::read(d2.path().join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
    // The manifest pairs the outputs.
    let manifest = read_json(&d1.path().join("rate_manifest.json"));
    assert_eq!(manifest["subcommand"], "rate");
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 2);

    let csv = std::fs::read_to_string(d1.path().join("errors.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("norm,n,replicate,error"));
    assert_eq!(lines.count(), 2 * 2 * 3, "norms * grid * reps rows");
}

#[test]
fn rate_missing_kernel_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["rate", "--d", "1"], &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn rate_config_file_mirrors_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"kernel":"gaussian","eta":1.0,"d":1,"n":"64,128","reps":3,"seed":7,"norm":"both"}"#,
    )
    .unwrap();
    let sub1 = dir.path().join("a");
    let sub2 = dir.path().join("b");
    std::fs::create_dir_all(&sub1).unwrap();
    std::fs::create_dir_all(&sub2).unwrap();
    let out1 = run_in(&sub1, &["rate", "--config", cfg.to_str().unwrap()], &[]);
    assert!(out1.status.success(), "stderr: {}", String::from_utf8_lossy(&out1.stderr));
    let out2 = run_in(&sub2, SMALL_RATE, &[]);
    assert!(out2.status.success());
    for name in ["rate_report.json", "errors.csv"] {
        assert_eq!(
            std::fs::read(sub1.join(name)).unwrap(),
            std::fs::read(sub2.join(name)).unwrap(),
            "{name}: config-driven run differs from flag-driven run"
        );
    }

    // A flag given on the command line overrides the config value.
    let sub3 = dir.path().join("c");
    std::fs::create_dir_all(&sub3).unwrap();
    let out3 = run_in(&sub3, &["rate", "--config", cfg.to_str().unwrap(), "--reps", "2"], &[]);
    assert!(out3.status.success());
    let report = read_json(&sub3.join("rate_report.json"));
    let errors = report["reports"][0]["errors"].as_array().unwrap();
    assert_eq!(errors.len(), 2 * 2, "grid points * overridden reps");

    // A malformed config file is a usage error.
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{not json").unwrap();
    let out4 = run_in(dir.path(), &["rate", "--config", bad.to_str().unwrap()], &[]);
    assert_eq!(out4.status.code(), Some(2));
}

// ---------------------------------------------------------------------------
// bounds
// ---------------------------------------------------------------------------

#[test]
fn bounds_table_validates_and_sandwiches() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &["bounds", "--kernel", "gaussian", "--eta", "1", "--d", "1..3", "--n", "100,10000"],
        &[],
    );
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let table = read_json(&dir.path().join("bounds.json"));
    assert_valid("bounds.json", &table);
    let rows = table["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 7 * 3 * 2, "ids * dims * n grid");
    for row in rows {
        assert!(row.get("skip_reason").is_none(), "unexpected skip: {row}");
        let s = row["report"]["s"].as_f64().unwrap();
        assert!(s > 0.0);
        if let Some(ub) = row.get("upper_bound").and_then(Value::as_f64) {
            assert!(s <= ub, "lower threshold exceeds the matching upper bound: {row}");
        }
    }
    // thm8 and thm13 carry the sandwich column.
    for id in ["thm8", "thm13"] {
        assert!(rows
            .iter()
            .filter(|r| r["id"] == *id)
            .all(|r| r.get("upper_bound").is_some()));
    }
}

#[test]
fn bounds_reports_moment_failure_without_value() {
    let dir = tempfile::tempdir().unwrap();
    // gamma = d/8 < d/4: the L2-side rows cannot be evaluated.
    let out = run_in(
        dir.path(),
        &[
            "bounds", "--kernel", "inverse_multiquadric", "--c", "1", "--gamma", "0.125", "--d",
            "1", "--n", "100", "--ids", "cor10",
        ],
        &[],
    );
    assert!(out.status.success());
    let table = read_json(&dir.path().join("bounds.json"));
    assert_valid("bounds.json", &table);
    let row = &table["rows"][0];
    assert!(row.get("report").is_none(), "moment-failing cell must carry no value");
    assert!(row["skip_reason"].as_str().unwrap().contains("moment condition"));
}

#[test]
fn bounds_unknown_id_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &["bounds", "--kernel", "gaussian", "--eta", "1", "--ids", "thm99"],
        &[],
    );
    assert_eq!(out.status.code(), Some(2));
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

#[test]
fn verify_passes_and_detects_injected_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["verify", "--pairs", "1", "--d", "1"], &[]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&dir.path().join("verify.json"));
    assert_valid("verify.json", &report);
    assert_eq!(report["all_pass"], true);
    assert!(report["checks"].as_array().unwrap().len() >= 8);

    let out = run_in(dir.path(), &["verify", "--pairs", "1", "--d", "1", "--inject-error"], &[]);
    assert_eq!(out.status.code(), Some(3), "perturbed closed forms must be detected");
    let report = read_json(&dir.path().join("verify.json"));
    assert_valid("verify.json", &report);
    assert_eq!(report["all_pass"], false);
    assert_eq!(report["injected_error"], true);

    // A loose tolerance override is honored and recorded.
    let out = run_in(
        dir.path(),
        &["verify", "--pairs", "1", "--d", "1", "--inject-error", "--tol", "0.1"],
        &[],
    );
    assert!(out.status.success(), "loose tolerance should let the perturbation through");
    let report = read_json(&dir.path().join("verify.json"));
    assert_eq!(report["tol"], 0.1);
    assert_eq!(report["all_pass"], true);
}

// ---------------------------------------------------------------------------
// lecam
// ---------------------------------------------------------------------------

#[test]
fn lecam_constructs_verifies_and_stresses() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &[
            "lecam", "--kernel", "gaussian", "--eta", "1", "--d", "1", "--n", "100", "--norm",
            "rkhs", "--stress", "10", "--seed", "3",
        ],
        &[],
    );
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&dir.path().join("lecam.json"));
    assert_valid("lecam.json", &report);
    assert_eq!(report["report"]["overall_pass"], true);
    assert_eq!(report["stress"]["replicates"], 10);
    assert_eq!(report["family"]["hypotheses"], 5);
    assert_eq!(report["family"]["m"], 4);
}

#[test]
fn lecam_rejects_dimension_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &["lecam", "--kernel", "gaussian", "--eta", "1", "--d", "0", "--n", "100"],
        &[],
    );
    assert_eq!(out.status.code(), Some(2));
}

// ---------------------------------------------------------------------------
// constants
// ---------------------------------------------------------------------------

#[test]
fn constants_prints_the_table_it_writes() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["constants", "--d", "2"], &[]);
    assert!(out.status.success());
    let stdout: Value = serde_json::from_slice(&out.stdout).expect("stdout is JSON");
    let file = read_json(&dir.path().join("constants.json"));
    assert_eq!(stdout, file);
    let rows = file["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 4, "four standard families at d = 2");
    for row in rows {
        let beta = row["beta"].as_f64().unwrap();
        let mass = row["window_mass"].as_f64().unwrap();
        assert!(mass >= beta - 1e-10, "window mass below beta in {row}");
    }
}

#[test]
fn jobs_env_var_must_be_numeric() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["constants", "--d", "1"], &[("KME_LAB_JOBS", "soon")]);
    assert_eq!(out.status.code(), Some(2));
}
