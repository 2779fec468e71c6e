//! Dataset CSV ingestion and the replication-config JSON format.
//!
//! CSV contract: comma-separated UTF-8 with a header row and `.` decimals.
//! Floats are written in Rust's shortest round-trip notation, so
//! `load ∘ write` is the identity on every finite value. Rows with missing
//! (empty) cells are rejected with a count rather than imputed.

use std::fs;
use std::path::Path;

use hdqlr_core::data::{expand_features, DataError, Dataset, FeatureExpansionSpec};
use hdqlr_core::linalg::Mat;
use serde::{Deserialize, Serialize};

use crate::error::AppError;

/// Ceiling on the post-expansion covariate count.
pub const MAX_EXPANDED_COLUMNS: usize = 20_000;

/// Column-role map for loading foreign CSVs
/// (`schemas/replication_config.schema.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplicationConfig {
    pub outcome: String,
    pub treatment: String,
    pub instrument: String,
    /// Covariate columns, in the order they should appear in the design.
    pub covariates: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expansion: Option<ExpansionSpec>,
}

/// Polynomial/interaction expansion applied after loading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpansionSpec {
    /// 1 = identity, 2 = append squares.
    pub degree: u8,
    /// With degree 2, also append pairwise products.
    #[serde(default)]
    pub interactions: bool,
}

pub fn read_replication_config(path: &Path) -> Result<ReplicationConfig, AppError> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| AppError::Config(format!("replication config {}: {e}", path.display())))
}

fn find_column(headers: &[String], name: &str, path: &Path) -> Result<usize, AppError> {
    headers.iter().position(|h| h == name).ok_or_else(|| {
        AppError::Config(format!("column '{name}' not found in {}", path.display()))
    })
}

/// Load and validate a dataset. Without a schema the header must contain
/// columns named `y`, `d`, and `z`; every other column is a covariate in
/// file order. With a schema, roles follow the named columns and covariates
/// keep the schema's order.
pub fn load_dataset(path: &Path, schema: Option<&ReplicationConfig>) -> Result<Dataset, AppError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| AppError::Io(format!("{}: {e}", path.display())))?;
    let headers: Vec<String> =
        reader.headers().map_err(|e| csv_err(path, e))?.iter().map(str::to_string).collect();

    let (y_col, d_col, z_col, x_cols, x_names) = match schema {
        Some(s) => {
            let y = find_column(&headers, &s.outcome, path)?;
            let d = find_column(&headers, &s.treatment, path)?;
            let z = find_column(&headers, &s.instrument, path)?;
            let mut cols = Vec::with_capacity(s.covariates.len());
            for name in &s.covariates {
                cols.push(find_column(&headers, name, path)?);
            }
            (y, d, z, cols, s.covariates.clone())
        }
        None => {
            let y = find_column(&headers, "y", path)?;
            let d = find_column(&headers, "d", path)?;
            let z = find_column(&headers, "z", path)?;
            let mut cols = Vec::new();
            let mut names = Vec::new();
            for (j, h) in headers.iter().enumerate() {
                if j != y && j != d && j != z {
                    cols.push(j);
                    names.push(h.clone());
                }
            }
            (y, d, z, cols, names)
        }
    };
    if x_cols.is_empty() {
        return Err(AppError::Config(format!(
            "no covariate columns in {}: need at least one besides outcome/treatment/instrument",
            path.display()
        )));
    }

    let mut y = Vec::new();
    let mut d = Vec::new();
    let mut z = Vec::new();
    let mut x: Vec<Vec<f64>> = vec![Vec::new(); x_cols.len()];
    let mut missing = 0usize;
    let mut first_missing: Option<(usize, String)> = None;
    // 1-based data row counter, header excluded
    let mut row = 0usize;
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        row += 1;
        let mut cell = |col: usize, name: &str| -> Result<f64, AppError> {
            let raw = record.get(col).unwrap_or("");
            if raw.is_empty() {
                missing += 1;
                if first_missing.is_none() {
                    first_missing = Some((row, name.to_string()));
                }
                return Ok(f64::NAN);
            }
            raw.parse::<f64>().map_err(|_| {
                AppError::Config(format!(
                    "{}: row {row}, column '{name}': '{raw}' is not a number",
                    path.display()
                ))
            })
        };
        y.push(cell(y_col, &headers[y_col])?);
        d.push(cell(d_col, &headers[d_col])?);
        z.push(cell(z_col, &headers[z_col])?);
        for (slot, &col) in x.iter_mut().zip(&x_cols) {
            slot.push(cell(col, &headers[col])?);
        }
    }
    if missing > 0 {
        let (r, c) = first_missing.unwrap();
        return Err(AppError::Config(format!(
            "{}: {missing} missing cell(s); first at row {r}, column '{c}' — complete cases only",
            path.display()
        )));
    }

    let mat = Mat::from_columns(&x).map_err(|e| AppError::Config(e.to_string()))?;
    let ds = Dataset::new(y, d, z, mat, x_names, None).map_err(|e| match e {
        // core indexes rows from 0; report 1-based data rows like the parser
        DataError::NotBinary { what, row, value } => AppError::Config(format!(
            "{}: row {}, column '{what}': value {value} is not 0/1",
            path.display(),
            row + 1
        )),
        DataError::NonFinite { what, row } => AppError::Config(format!(
            "{}: row {}: non-finite value in {what}",
            path.display(),
            row + 1
        )),
        other => AppError::Config(format!("{}: {other}", path.display())),
    })?;
    match schema.and_then(|s| s.expansion) {
        Some(exp) if exp.degree > 1 => {
            let spec = FeatureExpansionSpec {
                base_columns: (0..ds.p()).collect(),
                degree: exp.degree,
                include_interactions: exp.interactions,
            };
            Ok(expand_features(&ds, &spec, MAX_EXPANDED_COLUMNS)?)
        }
        _ => Ok(ds),
    }
}

fn csv_err(path: &Path, e: csv::Error) -> AppError {
    if e.is_io_error() {
        AppError::Io(format!("{}: {e}", path.display()))
    } else {
        AppError::Config(format!("{}: {e}", path.display()))
    }
}

/// Write a dataset as `y,d,z,<covariates...>` with exact float round-trip.
pub fn write_dataset(path: &Path, ds: &Dataset) -> Result<(), AppError> {
    let mut writer =
        csv::Writer::from_path(path).map_err(|e| AppError::Io(format!("{}: {e}", path.display())))?;
    let mut header = vec!["y".to_string(), "d".to_string(), "z".to_string()];
    header.extend(ds.column_names().iter().cloned());
    writer.write_record(&header).map_err(|e| csv_err(path, e))?;
    let mut record = Vec::with_capacity(3 + ds.p());
    for i in 0..ds.n() {
        record.clear();
        record.push(format_f64(ds.y()[i]));
        record.push(format_f64(ds.d()[i]));
        record.push(format_f64(ds.z()[i]));
        for j in 0..ds.p() {
            record.push(format_f64(ds.x().get(i, j)));
        }
        writer.write_record(&record).map_err(|e| csv_err(path, e))?;
    }
    writer.flush()?;
    Ok(())
}

/// Shortest decimal that parses back to the same bits.
fn format_f64(v: f64) -> String {
    let mut s = format!("{v}");
    // keep scientific values parseable by strict readers
    if s.parse::<f64>().map(f64::to_bits) != Ok(v.to_bits()) {
        s = format!("{v:e}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use hdqlr_core::dgp::{generate, DesignPreset, DgpConfig};
    use std::io::Write as _;

    fn tmp(name: &str) -> tempfile::TempDir {
        tempfile::Builder::new().prefix(name).tempdir().unwrap()
    }

    #[test]
    fn roundtrip_is_exact_on_simulated_data() {
        let dir = tmp("roundtrip");
        let path = dir.path().join("ds.csv");
        let cfg = DgpConfig::preset(DesignPreset::Strong, 97, 4, 5);
        let ds = generate(&cfg).unwrap();
        write_dataset(&path, &ds).unwrap();
        let back = load_dataset(&path, None).unwrap();
        assert_eq!(ds, back);
    }

    #[test]
    fn default_roles_split_header_by_name() {
        let dir = tmp("roles");
        let path = dir.path().join("ds.csv");
        fs::write(&path, "x_a,y,d,z,x_b\n0.5,1.0,0,1,2.5\n-0.25,2.0,1,0,3.5\n0.75,0.5,0,0,1.25\n")
            .unwrap();
        let ds = load_dataset(&path, None).unwrap();
        assert_eq!(ds.n(), 3);
        assert_eq!(ds.p(), 2);
        assert_eq!(ds.column_names(), ["x_a", "x_b"]);
        assert_eq!(ds.y(), [1.0, 2.0, 0.5]);
        assert_eq!(ds.x().col(1), [2.5, 3.5, 1.25]);
    }

    #[test]
    fn schema_selects_and_orders_columns() {
        let dir = tmp("schema");
        let path = dir.path().join("ds.csv");
        fs::write(
            &path,
            "wage,offer,took,age,edu,junk\n1.0,1,1,30,12,9\n2.0,0,0,40,16,9\n1.5,1,0,35,10,9\n",
        )
        .unwrap();
        let schema = ReplicationConfig {
            outcome: "wage".into(),
            treatment: "took".into(),
            instrument: "offer".into(),
            covariates: vec!["edu".into(), "age".into()],
            expansion: None,
        };
        let ds = load_dataset(&path, Some(&schema)).unwrap();
        assert_eq!(ds.column_names(), ["edu", "age"]);
        assert_eq!(ds.x().col(0), [12.0, 16.0, 10.0]);
        // junk column ignored entirely
        assert_eq!(ds.p(), 2);
    }

    #[test]
    fn expansion_appends_squares_and_interactions() {
        let dir = tmp("expand");
        let path = dir.path().join("ds.csv");
        fs::write(&path, "y,d,z,a,b\n1.0,1,1,2.0,3.0\n2.0,0,0,4.0,5.0\n1.5,1,0,-1.0,2.0\n")
            .unwrap();
        let schema = ReplicationConfig {
            outcome: "y".into(),
            treatment: "d".into(),
            instrument: "z".into(),
            covariates: vec!["a".into(), "b".into()],
            expansion: Some(ExpansionSpec { degree: 2, interactions: true }),
        };
        let ds = load_dataset(&path, Some(&schema)).unwrap();
        // 2 base + 2 squares + 1 interaction
        assert_eq!(ds.p(), 5);
        assert_eq!(ds.x().get(0, 2), 4.0);
        assert_eq!(ds.x().get(1, 4), 20.0);
    }

    #[test]
    fn missing_cells_are_counted_not_imputed() {
        let dir = tmp("missing");
        let path = dir.path().join("ds.csv");
        fs::write(&path, "y,d,z,x1\n1.0,1,1,0.5\n2.0,,1,\n1.5,0,0,0.25\n").unwrap();
        let err = load_dataset(&path, None).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2 missing cell(s)"), "{msg}");
        assert!(msg.contains("row 2"), "{msg}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn bad_cells_and_bad_schema_name_the_spot() {
        let dir = tmp("bad");
        let path = dir.path().join("ds.csv");
        fs::write(&path, "y,d,z,x1\n1.0,1,1,abc\n").unwrap();
        let msg = load_dataset(&path, None).unwrap_err().to_string();
        assert!(msg.contains("row 1") && msg.contains("'x1'") && msg.contains("abc"), "{msg}");

        fs::write(&path, "y,d,z,x1\n1.0,2,1,0.5\n2.0,0,1,0.25\n").unwrap();
        let msg = load_dataset(&path, None).unwrap_err().to_string();
        assert!(msg.contains("0/1") && msg.contains("row 1"), "{msg}");

        let schema = ReplicationConfig {
            outcome: "wage".into(),
            treatment: "d".into(),
            instrument: "z".into(),
            covariates: vec!["x1".into()],
            expansion: None,
        };
        let msg = load_dataset(&path, Some(&schema)).unwrap_err().to_string();
        assert!(msg.contains("'wage' not found"), "{msg}");

        let missing = dir.path().join("nope.csv");
        assert_eq!(load_dataset(&missing, None).unwrap_err().exit_code(), 3);
    }

    #[test]
    fn replication_config_roundtrips_and_rejects_unknown_keys() {
        let schema = ReplicationConfig {
            outcome: "y".into(),
            treatment: "d".into(),
            instrument: "z".into(),
            covariates: vec!["a".into(), "b".into()],
            expansion: Some(ExpansionSpec { degree: 2, interactions: false }),
        };
        let text = serde_json::to_string_pretty(&schema).unwrap();
        let back: ReplicationConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(schema, back);

        let dir = tmp("repcfg");
        let path = dir.path().join("cfg.json");
        let mut f = fs::File::create(&path).unwrap();
        writeln!(f, "{{\"outcome\":\"y\",\"treatment\":\"d\",\"instrument\":\"z\",\"covariates\":[\"a\"],\"typo\":1}}").unwrap();
        let err = read_replication_config(&path).unwrap_err();
        assert!(err.to_string().contains("typo"), "{err}");
    }

    #[test]
    fn float_formatting_survives_awkward_values() {
        for v in [0.1, 1.0 / 3.0, 1e-300, -2.5e300, 123456789.123456789, f64::MIN_POSITIVE] {
            let s = format_f64(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{v} -> {s}");
        }
    }
}
