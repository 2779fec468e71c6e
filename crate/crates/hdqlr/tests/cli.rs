//! End-to-end tests that spawn the compiled `hdqlr` binary: every emitted
//! JSON document is checked against its file in `/schemas`, reruns with the
//! same seed must be byte-identical, and the exit-code contract (0 success,
//! 2 configuration, 3 IO, 4 numerical) is pinned down.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

/// Just enough of JSON Schema draft-07 to check the documents this binary
/// emits against `/schemas` (no validator crate is vendored). Keywords
/// outside the implemented subset are hard errors, so editing a schema
/// cannot silently disable a constraint.
mod subset {
    use serde_json::Value;

    const STRUCTURAL: &[&str] = &["$schema", "$id", "title", "description", "definitions"];
    const HANDLED: &[&str] = &[
        "$ref",
        "type",
        "const",
        "enum",
        "required",
        "properties",
        "additionalProperties",
        "items",
        "minItems",
        "maxItems",
        "minimum",
        "maximum",
        "exclusiveMinimum",
        "exclusiveMaximum",
        "minLength",
    ];

    pub fn validate(root: &Value, doc: &Value) -> Result<(), String> {
        node(root, root, doc, "$".to_string())
    }

    fn node(root: &Value, schema: &Value, doc: &Value, at: String) -> Result<(), String> {
        let s = schema
            .as_object()
            .ok_or(format!("{at}: schema node is not an object"))?;
        for key in s.keys() {
            if !HANDLED.contains(&key.as_str()) && !STRUCTURAL.contains(&key.as_str()) {
                return Err(format!("{at}: schema keyword `{key}` is outside the checked subset"));
            }
        }
        if let Some(r) = s.get("$ref") {
            let r = r.as_str().ok_or(format!("{at}: $ref must be a string"))?;
            let name = r
                .strip_prefix("#/definitions/")
                .ok_or(format!("{at}: unsupported $ref `{r}`"))?;
            let target = root
                .pointer(&format!("/definitions/{name}"))
                .ok_or(format!("{at}: unresolved $ref `{r}`"))?;
            return node(root, target, doc, at);
        }
        if let Some(ty) = s.get("type") {
            let ty = ty
                .as_str()
                .ok_or(format!("{at}: non-string `type` is outside the checked subset"))?;
            let ok = match ty {
                "object" => doc.is_object(),
                "array" => doc.is_array(),
                "string" => doc.is_string(),
                "boolean" => doc.is_boolean(),
                "number" => doc.is_number(),
                "integer" => doc.is_i64() || doc.is_u64(),
                other => return Err(format!("{at}: unsupported type `{other}`")),
            };
            if !ok {
                return Err(format!("{at}: expected {ty}, got {doc}"));
            }
        }
        if let Some(c) = s.get("const") {
            if doc != c {
                return Err(format!("{at}: expected const {c}, got {doc}"));
            }
        }
        if let Some(options) = s.get("enum").and_then(Value::as_array) {
            if !options.contains(doc) {
                return Err(format!("{at}: {doc} is not one of {options:?}"));
            }
        }
        if let Some(v) = doc.as_f64() {
            for (key, strict) in [("minimum", false), ("exclusiveMinimum", true)] {
                if let Some(b) = s.get(key).and_then(Value::as_f64) {
                    if v < b || (strict && v == b) {
                        return Err(format!("{at}: {v} violates {key} {b}"));
                    }
                }
            }
            for (key, strict) in [("maximum", false), ("exclusiveMaximum", true)] {
                if let Some(b) = s.get(key).and_then(Value::as_f64) {
                    if v > b || (strict && v == b) {
                        return Err(format!("{at}: {v} violates {key} {b}"));
                    }
                }
            }
        }
        if let Some(text) = doc.as_str() {
            if let Some(min) = s.get("minLength").and_then(Value::as_u64) {
                if (text.chars().count() as u64) < min {
                    return Err(format!("{at}: string shorter than minLength {min}"));
                }
            }
        }
        if let Some(map) = doc.as_object() {
            if let Some(required) = s.get("required").and_then(Value::as_array) {
                for name in required {
                    let name = name.as_str().unwrap_or_default();
                    if !map.contains_key(name) {
                        return Err(format!("{at}: missing required property `{name}`"));
                    }
                }
            }
            let props = s.get("properties").and_then(Value::as_object);
            if s.get("additionalProperties") == Some(&Value::Bool(false)) {
                for key in map.keys() {
                    if props.is_none_or(|p| !p.contains_key(key)) {
                        return Err(format!("{at}: unexpected property `{key}`"));
                    }
                }
            }
            if let Some(props) = props {
                for (key, sub) in props {
                    if let Some(value) = map.get(key) {
                        node(root, sub, value, format!("{at}.{key}"))?;
                    }
                }
            }
        }
        if let Some(list) = doc.as_array() {
            if let Some(min) = s.get("minItems").and_then(Value::as_u64) {
                if (list.len() as u64) < min {
                    return Err(format!("{at}: fewer than minItems {min} items"));
                }
            }
            if let Some(max) = s.get("maxItems").and_then(Value::as_u64) {
                if (list.len() as u64) > max {
                    return Err(format!("{at}: more than maxItems {max} items"));
                }
            }
            if let Some(sub) = s.get("items") {
                for (i, value) in list.iter().enumerate() {
                    node(root, sub, value, format!("{at}[{i}]"))?;
                }
            }
        }
        Ok(())
    }
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hdqlr"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("spawn hdqlr");
    assert!(
        out.status.success(),
        "hdqlr {args:?} exited with {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&out.stdout))
    })
}

fn schema(name: &str) -> Value {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schemas").join(name);
    let text = fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    serde_json::from_str(&text).unwrap_or_else(|e| panic!("{name} is not valid JSON: {e}"))
}

fn assert_valid(schema_name: &str, doc: &Value) {
    if let Err(msg) = subset::validate(&schema(schema_name), doc) {
        panic!("{schema_name} violation: {msg}\ndocument: {doc:#}");
    }
}

/// Draw a dataset to `dir/name` and return its path as a String for reuse
/// in later argv lists.
fn simulate(dir: &Path, name: &str, extra: &[&str]) -> String {
    let path = dir.join(name).display().to_string();
    let mut args = vec!["simulate", "--out", path.as_str()];
    args.extend_from_slice(extra);
    run_ok(&args);
    path
}

fn covered(intervals: &Value, theta: f64) -> bool {
    intervals
        .as_array()
        .unwrap()
        .iter()
        .any(|pair| pair[0].as_f64().unwrap() <= theta && theta <= pair[1].as_f64().unwrap())
}

#[test]
fn simulate_writes_identical_bytes_for_identical_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a.csv").display().to_string();
    let out = run_ok(&["simulate", "--out", &first, "--n", "200", "--dim-x", "4", "--design",
        "strong", "--seed", "42"]);
    let base = ["--n", "200", "--dim-x", "4", "--design", "strong", "--seed", "42"];
    let second = simulate(dir.path(), "b.csv", &base);
    let third = simulate(dir.path(), "c.csv", &["--n", "200", "--dim-x", "4", "--design",
        "strong", "--seed", "43"]);

    assert_eq!(fs::read(&first).unwrap(), fs::read(&second).unwrap());
    assert_ne!(fs::read(&first).unwrap(), fs::read(&third).unwrap());

    let summary = stdout_json(&out);
    assert_valid("simulate_summary.schema.json", &summary);
    assert_eq!(summary["design_id"], "strong-dim4-n200");
    assert_eq!(summary["n"], 200);
    assert_eq!(summary["p"], 4);

    let header = fs::read_to_string(&first).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header, "y,d,z,x1,x2,x3,x4");
}

#[test]
fn simulate_with_zero_shares_makes_everyone_a_complier() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("all.csv").display().to_string();
    let out = run_ok(&["simulate", "--out", &path, "--n", "300", "--dim-x", "2", "--p-at", "0",
        "--p-nt", "0", "--seed", "1"]);
    let summary = stdout_json(&out);
    assert_valid("simulate_summary.schema.json", &summary);
    assert_eq!(summary["complier_share"], 1.0);
}

#[test]
fn test_reports_validate_and_repeat_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "d.csv", &["--n", "150", "--dim-x", "3", "--design",
        "strong", "--seed", "4"]);

    let hdqlr_args = ["test", "--data", data.as_str(), "--theta0", "1.0", "--reps", "2",
        "--draws", "200", "--seed", "5"];
    let first = run_ok(&hdqlr_args);
    let again = run_ok(&hdqlr_args);
    assert_eq!(first.stdout, again.stdout, "same seed must reproduce the report byte-for-byte");

    let doc = stdout_json(&first);
    assert_valid("test_outcome.schema.json", &doc);
    assert_eq!(doc["method"], "hdqlr");
    assert_eq!(doc["reps"], 2);
    assert_eq!(doc["draws"], 200);
    assert_eq!(doc["per_rep"].as_array().unwrap().len(), 2);

    let am16 = stdout_json(&run_ok(&["test", "--data", &data, "--theta0", "1.0", "--method",
        "am16", "--draws", "200", "--seed", "5"]));
    assert_valid("test_outcome.schema.json", &am16);
    assert_eq!(am16["method"], "am16");

    let dml = stdout_json(&run_ok(&["test", "--data", &data, "--theta0", "1.0", "--method",
        "dml", "--seed", "5"]));
    assert_valid("test_outcome.schema.json", &dml);
    assert!(dml["point_estimate"].is_number());
    assert!(dml["std_error"].is_number());
    assert!(dml.get("draws").is_none(), "t-tests draw no critical values");
}

#[test]
fn ci_reports_validate_and_match_the_test_decision() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "d.csv", &["--n", "150", "--dim-x", "3", "--design",
        "strong", "--seed", "8"]);

    let region = stdout_json(&run_ok(&["ci", "--data", &data, "--reps", "2", "--draws", "150",
        "--seed", "9", "--grid-lo", "0", "--grid-hi", "2", "--grid-points", "5"]));
    assert_valid("confidence_region.schema.json", &region);
    assert_eq!(region["grid"]["points"], 5);
    for pair in region["intervals"].as_array().unwrap() {
        let (lo, hi) = (pair[0].as_f64().unwrap(), pair[1].as_f64().unwrap());
        assert!(0.0 <= lo && lo <= hi && hi <= 2.0, "interval [{lo}, {hi}] leaves the grid");
    }

    // inverting the same configuration must give the same answer as `ci`
    for theta in ["0.5", "2"] {
        let test = stdout_json(&run_ok(&["test", "--data", &data, "--theta0", theta, "--reps",
            "2", "--draws", "150", "--seed", "9"]));
        let t: f64 = theta.parse().unwrap();
        assert_eq!(
            test["reject"].as_bool().unwrap(),
            !covered(&region["intervals"], t),
            "test and ci disagree at theta0 = {theta}"
        );
    }

    let dml = stdout_json(&run_ok(&["ci", "--data", &data, "--method", "dml", "--seed", "9"]));
    assert_valid("confidence_region.schema.json", &dml);
    assert_eq!(dml["intervals"].as_array().unwrap().len(), 1);
    assert!(dml.get("grid").is_none(), "normal intervals have no hypothesis grid");
}

#[test]
fn numerical_breakdown_exits_four_with_a_structured_report() {
    let dir = tempfile::tempdir().unwrap();
    // p + 2 >= n sinks the unpenalized logit; the conditional methods with
    // lasso nuisances handle this regime, which is the point of the contrast
    let data = simulate(dir.path(), "wide.csv", &["--n", "20", "--dim-x", "30", "--design",
        "strong", "--seed", "2"]);
    let out = bin()
        .args(["test", "--data", &data, "--theta0", "1.0", "--method", "am16"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
    let doc = stdout_json(&out);
    assert_valid("error.schema.json", &doc);
    assert_eq!(doc["error"]["kind"], "singular_fit");
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));
}

#[test]
fn missing_inputs_exit_three_and_usage_errors_exit_two() {
    let absent = bin()
        .args(["test", "--data", "/no/such/file.csv", "--theta0", "1.0"])
        .output()
        .unwrap();
    assert_eq!(absent.status.code(), Some(3));

    let usage = bin().args(["test", "--data", "x.csv"]).output().unwrap();
    assert_eq!(usage.status.code(), Some(2), "clap usage errors are configuration errors");

    let method = bin()
        .args(["test", "--data", "x.csv", "--theta0", "1", "--method", "ols"])
        .output()
        .unwrap();
    assert_eq!(method.status.code(), Some(2));

    let shares = bin()
        .args(["power", "--dim-x", "2", "--p-at", "0.3", "--reps", "50"])
        .output()
        .unwrap();
    assert_eq!(shares.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&shares.stderr).contains("--p-nt"));
}

#[test]
fn power_csv_is_tidy_deterministic_and_notes_small_runs() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("power.csv").display().to_string();
    let args = ["power", "--design", "strong", "--n", "120", "--dim-x", "2", "--reps", "4",
        "--draws", "120", "--methods", "hdqlr,dml", "--theta-lo", "0.5", "--theta-hi", "1.5",
        "--theta-points", "3", "--jobs", "2", "--seed", "3", "--out", &path];
    let first = run_ok(&args);
    let bytes = fs::read(&path).unwrap();
    run_ok(&args);
    assert_eq!(bytes, fs::read(&path).unwrap(), "power reruns must be byte-identical");

    let text = String::from_utf8(bytes).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "theta,method,rate,reps,design_id");
    assert_eq!(lines.len(), 1 + 2 * 3, "one row per (method, theta)");
    for line in &lines[1..] {
        let fields: Vec<&str> = line.split(',').collect();
        let rate: f64 = fields[2].parse().unwrap();
        assert!((0.0..=1.0).contains(&rate));
        assert_eq!(fields[3], "4");
        assert_eq!(fields[4], "strong-dim2-n120");
    }

    let notes = String::from_utf8_lossy(&first.stderr);
    assert!(notes.contains("below the 50 advised"), "small runs deserve a warning: {notes}");
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "d.csv", &["--n", "120", "--dim-x", "2", "--design",
        "strong", "--seed", "6"]);
    let cfg = dir.path().join("run.json").display().to_string();
    fs::write(&cfg, "{\"method\": \"dml_nocf\", \"alpha\": 0.2, \"k_folds\": 2}").unwrap();

    let doc = stdout_json(&run_ok(&["test", "--data", &data, "--theta0", "1.0", "--config",
        &cfg, "--alpha", "0.1"]));
    assert_valid("test_outcome.schema.json", &doc);
    assert_eq!(doc["method"], "dml_nocf");
    assert_eq!(doc["alpha"], 0.1, "the explicit flag beats the file value");

    let unknown = dir.path().join("bad.json").display().to_string();
    fs::write(&unknown, "{\"criticaldraws\": 7}").unwrap();
    let out = bin()
        .args(["test", "--data", &data, "--theta0", "1.0", "--config", &unknown])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "unknown config keys are configuration errors");
}

#[test]
fn replication_schema_renames_and_expands_columns() {
    let dir = tempfile::tempdir().unwrap();
    let plain = simulate(dir.path(), "plain.csv", &["--n", "120", "--dim-x", "2", "--design",
        "strong", "--seed", "7"]);
    let renamed = dir.path().join("survey.csv").display().to_string();
    let body = fs::read_to_string(&plain)
        .unwrap()
        .replacen("y,d,z,x1,x2", "wage,college,nearby,age,tenure", 1);
    fs::write(&renamed, body).unwrap();

    let mapping = dir.path().join("roles.json").display().to_string();
    fs::write(
        &mapping,
        "{\"outcome\": \"wage\", \"treatment\": \"college\", \"instrument\": \"nearby\", \
         \"covariates\": [\"age\", \"tenure\"], \
         \"expansion\": {\"degree\": 2, \"interactions\": true}}",
    )
    .unwrap();

    let doc = stdout_json(&run_ok(&["test", "--data", &renamed, "--schema", &mapping,
        "--theta0", "1.0", "--method", "dml", "--seed", "1"]));
    assert_valid("test_outcome.schema.json", &doc);
    // two base columns, two squares, one interaction
    assert_eq!(doc["p"], 5);
    assert_eq!(doc["n"], 120);
}
