//! libsvm-format datasets and input normalization.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{dot, DenseMatrix, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Full,
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: DenseMatrix,
    /// Class labels (integral values) or regression targets.
    pub y: Vec<f64>,
    pub split: SplitTag,
    pub source: Option<PathBuf>,
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { path: path.display().to_string(), line, msg: msg.into() }
}

/// Parse libsvm text. Indices are 1-based; missing entries are zero. With
/// `dim` set, rows with a larger index are rejected; otherwise the largest
/// index seen fixes the dimension.
pub fn parse_libsvm(text: &str, path: &Path, dim: Option<usize>) -> Result<Dataset> {
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut y = Vec::new();
    let mut max_index = 0;
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let label = tokens.next().expect("non-empty line");
        let label: f64 = label
            .parse()
            .map_err(|_| parse_err(path, ln + 1, format!("bad label {label:?}")))?;
        let mut row = Vec::new();
        for tok in tokens {
            let (i, v) = tok
                .split_once(':')
                .ok_or_else(|| parse_err(path, ln + 1, format!("expected idx:val, got {tok:?}")))?;
            let i: usize = i
                .parse()
                .map_err(|_| parse_err(path, ln + 1, format!("bad index {i:?}")))?;
            let v: f64 = v
                .parse()
                .map_err(|_| parse_err(path, ln + 1, format!("bad value {v:?}")))?;
            if i == 0 {
                return Err(parse_err(path, ln + 1, "indices are 1-based"));
            }
            if !v.is_finite() || !label.is_finite() {
                return Err(parse_err(path, ln + 1, "non-finite entry"));
            }
            if let Some(d) = dim {
                if i > d {
                    return Err(parse_err(path, ln + 1, format!("index {i} exceeds dimension {d}")));
                }
            }
            max_index = max_index.max(i);
            row.push((i - 1, v));
        }
        rows.push(row);
        y.push(label);
    }
    let d = dim.unwrap_or(max_index);
    let mut x = DenseMatrix::zeros(rows.len(), d);
    for (r, row) in rows.iter().enumerate() {
        for &(j, v) in row {
            x[(r, j)] = v;
        }
    }
    Ok(Dataset { x, y, split: SplitTag::Full, source: Some(path.to_path_buf()) })
}

pub fn load_libsvm(path: impl AsRef<Path>, dim: Option<usize>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    parse_libsvm(&text, path, dim)
}

/// Sparse libsvm text; values use the shortest round-trip representation.
pub fn to_libsvm(ds: &Dataset) -> String {
    let mut out = String::new();
    for i in 0..ds.len() {
        write!(out, "{}", ds.y[i]).unwrap();
        for j in 0..ds.dim() {
            let v = ds.x[(i, j)];
            if v != 0.0 {
                write!(out, " {}:{}", j + 1, v).unwrap();
            }
        }
        out.push('\n');
    }
    out
}

pub fn save_libsvm(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_libsvm(ds))?;
    Ok(())
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn select(&self, idx: &[usize]) -> Dataset {
        let rows: Vec<Vec<f64>> = idx.iter().map(|&i| self.x.row(i)).collect();
        let x = if rows.is_empty() { DenseMatrix::zeros(0, self.dim()) } else { DenseMatrix::from_rows(&rows) };
        Dataset {
            x,
            y: idx.iter().map(|&i| self.y[i]).collect(),
            split: self.split,
            source: self.source.clone(),
        }
    }

    /// Random subset of at most `k` rows, order randomized.
    pub fn subsample(&self, k: usize, rng: &mut Rng) -> Dataset {
        let k = k.min(self.len());
        self.select(&rng.sample_indices(self.len(), k))
    }

    /// Shuffle and split into `n_train` training rows and the rest.
    pub fn split(&self, n_train: usize, rng: &mut Rng) -> Result<(Dataset, Dataset)> {
        if n_train == 0 || n_train >= self.len() {
            return Err(Error::Data(format!("cannot split {} rows with {n_train} for training", self.len())));
        }
        let perm = rng.sample_indices(self.len(), self.len());
        let mut train = self.select(&perm[..n_train]);
        let mut test = self.select(&perm[n_train..]);
        train.split = SplitTag::Train;
        test.split = SplitTag::Test;
        Ok((train, test))
    }

    /// Distinct labels in increasing order.
    pub fn classes(&self) -> Vec<f64> {
        let mut c = self.y.clone();
        c.sort_by(f64::total_cmp);
        c.dedup();
        c
    }
}

/// Per-coordinate min/max taken from a training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl BoxScaler {
    pub fn fit(train: &Dataset) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Data("cannot fit a scaler on an empty dataset".into()));
        }
        let d = train.dim();
        let mut min = vec![f64::INFINITY; d];
        let mut max = vec![f64::NEG_INFINITY; d];
        for j in 0..d {
            for &v in train.x.col(j) {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        Ok(BoxScaler { min, max })
    }

    /// Map into [0, 1]^d, clipping values outside the training range.
    /// Constant training coordinates map to 0.
    pub fn apply_row(&self, x: &mut [f64]) {
        for (j, v) in x.iter_mut().enumerate() {
            let span = self.max[j] - self.min[j];
            *v = if span > 0.0 { ((*v - self.min[j]) / span).clamp(0.0, 1.0) } else { 0.0 };
        }
    }

    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        if ds.dim() != self.min.len() {
            return Err(Error::DimensionMismatch { expected: self.min.len(), got: ds.dim() });
        }
        let mut out = ds.clone();
        for j in 0..ds.dim() {
            let span = self.max[j] - self.min[j];
            for v in out.x.col_mut(j) {
                *v = if span > 0.0 { ((*v - self.min[j]) / span).clamp(0.0, 1.0) } else { 0.0 };
            }
        }
        Ok(out)
    }
}

/// Box-normalize a dataset with its own statistics.
pub fn normalize_unit_box(ds: &Dataset) -> Result<Dataset> {
    BoxScaler::fit(ds)?.apply(ds)
}

pub fn project_row(x: &mut [f64]) -> Result<()> {
    let n = dot(x, x).sqrt();
    if n == 0.0 {
        return Err(Error::Data("zero row cannot be projected onto the sphere".into()));
    }
    if (n - 1.0).abs() > 1e-15 {
        x.iter_mut().for_each(|v| *v /= n);
    }
    Ok(())
}

/// Scale every row to unit Euclidean norm.
pub fn project_sphere(ds: &Dataset) -> Result<Dataset> {
    let mut rows = Vec::with_capacity(ds.len());
    for i in 0..ds.len() {
        let mut r = ds.x.row(i);
        project_row(&mut r).map_err(|_| Error::Data(format!("row {i} is zero and cannot be projected")))?;
        rows.push(r);
    }
    let mut out = ds.clone();
    if !rows.is_empty() {
        out.x = DenseMatrix::from_rows(&rows);
    }
    Ok(out)
}
