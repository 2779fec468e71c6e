//! In-memory dataset model, fold assignment for cross-fitting, and
//! polynomial feature expansion.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use thiserror::Error;

use crate::linalg::Mat;
use crate::rng;

#[derive(Debug, Error, PartialEq)]
pub enum DataError {
    #[error("column lengths disagree: {0}")]
    LengthMismatch(String),
    #[error("non-finite value in {what} at row {row}")]
    NonFinite { what: String, row: usize },
    #[error("{what} must be 0/1 but row {row} holds {value}")]
    NotBinary { what: String, row: usize, value: f64 },
    #[error("covariate column '{name}' is constant; flag it as an intercept to keep it")]
    ConstantColumn { name: String },
    #[error("duplicate column name '{name}'")]
    DuplicateColumn { name: String },
    #[error("need at least {need} rows, found {found}")]
    TooFewRows { need: usize, found: usize },
    #[error("fold count {k} needs at least 2 observations per fold, found n = {n}")]
    BadFoldCount { n: usize, k: usize },
    #[error("expansion would produce {would} columns, exceeding the configured maximum {limit}")]
    Capacity { would: usize, limit: usize },
    #[error("column index {index} out of range for p = {p}")]
    ColumnRange { index: usize, p: usize },
    #[error("expansion degree {0} unsupported (only 1 or 2)")]
    BadDegree(u8),
}

/// One observational unit per row: outcome `y`, binary treatment `d`, binary
/// instrument `z`, and covariates `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: Vec<f64>,
    d: Vec<f64>,
    z: Vec<f64>,
    x: Mat,
    column_names: Vec<String>,
    intercept_col: Option<usize>,
}

impl Dataset {
    /// Validating constructor. `intercept_col` marks the one covariate column
    /// allowed to be constant.
    pub fn new(
        y: Vec<f64>,
        d: Vec<f64>,
        z: Vec<f64>,
        x: Mat,
        column_names: Vec<String>,
        intercept_col: Option<usize>,
    ) -> Result<Self, DataError> {
        let n = y.len();
        if d.len() != n || z.len() != n || x.n_rows() != n {
            return Err(DataError::LengthMismatch(format!(
                "y = {}, d = {}, z = {}, x rows = {}",
                n,
                d.len(),
                z.len(),
                x.n_rows()
            )));
        }
        if column_names.len() != x.n_cols() {
            return Err(DataError::LengthMismatch(format!(
                "{} names for {} covariate columns",
                column_names.len(),
                x.n_cols()
            )));
        }
        if n < 2 {
            return Err(DataError::TooFewRows { need: 2, found: n });
        }
        check_finite(&y, "y")?;
        check_binary(&d, "d")?;
        check_binary(&z, "z")?;
        for j in 0..x.n_cols() {
            let col = x.col(j);
            for (row, &v) in col.iter().enumerate() {
                if !v.is_finite() {
                    return Err(DataError::NonFinite {
                        what: format!("x[{}]", column_names[j]),
                        row,
                    });
                }
            }
            if Some(j) != intercept_col {
                let first = col[0];
                if col.iter().all(|&v| v == first) {
                    return Err(DataError::ConstantColumn { name: column_names[j].clone() });
                }
            }
        }
        let mut seen = column_names.clone();
        seen.sort_unstable();
        for w in seen.windows(2) {
            if w[0] == w[1] {
                return Err(DataError::DuplicateColumn { name: w[0].clone() });
            }
        }
        Ok(Dataset { y, d, z, x, column_names, intercept_col })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.y.len()
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.x.n_cols()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn d(&self) -> &[f64] {
        &self.d
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn x(&self) -> &Mat {
        &self.x
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn intercept_col(&self) -> Option<usize> {
        self.intercept_col
    }
}

fn check_finite(v: &[f64], what: &str) -> Result<(), DataError> {
    for (row, &x) in v.iter().enumerate() {
        if !x.is_finite() {
            return Err(DataError::NonFinite { what: String::from(what), row });
        }
    }
    Ok(())
}

fn check_binary(v: &[f64], what: &str) -> Result<(), DataError> {
    for (row, &x) in v.iter().enumerate() {
        if x != 0.0 && x != 1.0 {
            return Err(DataError::NotBinary { what: String::from(what), row, value: x });
        }
    }
    Ok(())
}

/// Partition of `0..n` into `k` folds, stored as a 1-based fold id per row.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldAssignment {
    fold_of: Vec<usize>,
    k: usize,
    seed: u64,
}

impl FoldAssignment {
    #[inline]
    pub fn fold_of(&self) -> &[usize] {
        &self.fold_of
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Row indices of fold `k` (1-based).
    pub fn fold_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] == fold).collect()
    }

    /// Row indices outside fold `k` (1-based) — the estimation sample.
    pub fn complement_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] != fold).collect()
    }
}

/// Random equal-split fold assignment: a seeded Fisher–Yates shuffle of row
/// indices cut into contiguous blocks. The first `n mod k` folds take the
/// extra observation, so fold sizes differ by at most one.
pub fn assign_folds(n: usize, k: usize, seed: u64) -> Result<FoldAssignment, DataError> {
    if k < 2 || n < 2 * k {
        return Err(DataError::BadFoldCount { n, k });
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = rng::stream(rng::mix2(seed, rng::tag::FOLDS));
    order.shuffle(&mut rng);
    let base = n / k;
    let extra = n % k;
    let mut fold_of = alloc::vec![0usize; n];
    let mut pos = 0usize;
    for fold in 1..=k {
        let size = base + usize::from(fold <= extra);
        for &row in &order[pos..pos + size] {
            fold_of[row] = fold;
        }
        pos += size;
    }
    Ok(FoldAssignment { fold_of, k, seed })
}

/// Degree-2 polynomial expansion plan over a subset of covariate columns.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureExpansionSpec {
    /// Indices of the covariate columns to expand.
    pub base_columns: Vec<usize>,
    /// 1 = identity, 2 = append squares (and interactions if enabled).
    pub degree: u8,
    pub include_interactions: bool,
}

/// Append squares and pairwise interactions of the base columns to a dataset.
///
/// New columns are named `name^2` and `name_i*name_j` (i < j in base order)
/// and sit after the original covariates. Degree 1 returns the input
/// unchanged. `limit` caps the expanded column count.
pub fn expand_features(
    ds: &Dataset,
    spec: &FeatureExpansionSpec,
    limit: usize,
) -> Result<Dataset, DataError> {
    if spec.degree == 0 || spec.degree > 2 {
        return Err(DataError::BadDegree(spec.degree));
    }
    for &j in &spec.base_columns {
        if j >= ds.p() {
            return Err(DataError::ColumnRange { index: j, p: ds.p() });
        }
    }
    if spec.degree == 1 {
        return Ok(ds.clone());
    }
    let b = spec.base_columns.len();
    let extra = b + if spec.include_interactions { b * (b - 1) / 2 } else { 0 };
    let would = ds.p() + extra;
    if would > limit {
        return Err(DataError::Capacity { would, limit });
    }
    let n = ds.n();
    let mut cols: Vec<Vec<f64>> = (0..ds.p()).map(|j| ds.x().col(j).to_vec()).collect();
    let mut names: Vec<String> = ds.column_names().to_vec();
    for &j in &spec.base_columns {
        let src = ds.x().col(j);
        cols.push(src.iter().map(|&v| v * v).collect());
        names.push(format!("{}^2", ds.column_names()[j]));
    }
    if spec.include_interactions {
        for (a_pos, &a) in spec.base_columns.iter().enumerate() {
            for &bcol in &spec.base_columns[a_pos + 1..] {
                let ca = ds.x().col(a);
                let cb = ds.x().col(bcol);
                cols.push((0..n).map(|i| ca[i] * cb[i]).collect());
                names.push(format!("{}*{}", ds.column_names()[a], ds.column_names()[bcol]));
            }
        }
    }
    let x = Mat::from_columns(&cols).expect("equal column lengths by construction");
    Dataset::new(
        ds.y().to_vec(),
        ds.d().to_vec(),
        ds.z().to_vec(),
        x,
        names,
        ds.intercept_col(),
    )
}
