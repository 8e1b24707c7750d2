//! Datasets, CSV ingestion, preprocessing and the binary dropout distribution.

use std::collections::BTreeSet;
use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::rng::RngStream;

/// Per-column affine transform applied by [`standardize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

/// Design matrix (rows are observations) with its response vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
    feature_names: Vec<String>,
    standardization: Option<Standardization>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, feature_names: Vec<String>) -> Result<Self> {
        if y.len() != x.nrows() {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                found: y.len(),
            });
        }
        if feature_names.len() != x.ncols() {
            return Err(Error::DimensionMismatch {
                expected: x.ncols(),
                found: feature_names.len(),
            });
        }
        ensure(x.iter().chain(y.iter()).all(|v| v.is_finite()), || {
            "dataset contains non-finite entries".into()
        })?;
        Ok(Self {
            x,
            y,
            feature_names,
            standardization: None,
        })
    }

    /// Builds a dataset with generated feature names `x0, x1, ...`.
    pub fn from_parts(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        let names = (0..x.ncols()).map(|j| format!("x{j}")).collect();
        Self::new(x, y, names)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn standardization(&self) -> Option<&Standardization> {
        self.standardization.as_ref()
    }

    pub fn is_standardized(&self) -> bool {
        self.standardization.is_some()
    }

    pub fn is_binary(&self) -> bool {
        self.y.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    /// Copies the given rows, in order, into a new dataset.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        let x = DMatrix::from_fn(rows.len(), self.p(), |i, j| self.x[(rows[i], j)]);
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|&r| self.y[r]));
        Dataset {
            x,
            y,
            feature_names: self.feature_names.clone(),
            standardization: self.standardization.clone(),
        }
    }
}

/// Prepends a column of ones.
pub fn with_bias(x: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), x.ncols() + 1, |i, j| {
        if j == 0 {
            1.0
        } else {
            x[(i, j - 1)]
        }
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabelColumn {
    Name(String),
    Index(usize),
}

impl std::str::FromStr for LabelColumn {
    type Err = std::convert::Infallible;

    /// Integers select a column by position, anything else by header name.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => LabelColumn::Index(i),
            Err(_) => LabelColumn::Name(s.to_string()),
        })
    }
}

pub fn load_csv(path: impl AsRef<Path>, label: &LabelColumn, has_header: bool) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    parse_csv(file, label, has_header)
}

/// Parses comma-separated numeric data. Row numbers in errors count data rows
/// from 1, excluding the header; columns count from 1.
pub fn parse_csv<R: Read>(reader: R, label: &LabelColumn, has_header: bool) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let header: Option<Vec<String>> = if has_header {
        Some(rdr.headers()?.iter().map(str::to_string).collect())
    } else {
        None
    };

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = header.as_ref().map(Vec::len);
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row = r + 1;
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        match width {
            Some(w) if w != record.len() => {
                return Err(Error::InconsistentColumns {
                    row,
                    expected: w,
                    found: record.len(),
                })
            }
            None => width = Some(record.len()),
            _ => {}
        }
        let values = record
            .iter()
            .enumerate()
            .map(|(c, cell)| match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::Parse {
                    row,
                    column: c + 1,
                    message: format!("cannot parse {cell:?} as a finite real"),
                }),
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(values);
    }

    let width = width.unwrap_or(0);
    if rows.is_empty() || width == 0 {
        return Err(Error::EmptyInput);
    }

    let label_idx = match label {
        LabelColumn::Index(i) => *i,
        LabelColumn::Name(name) => header
            .as_ref()
            .and_then(|h| h.iter().position(|c| c == name))
            .ok_or_else(|| Error::InvalidArgument(format!("label column {name:?} not found")))?,
    };
    ensure(label_idx < width, || {
        format!("label column index {label_idx} out of range")
    })?;

    let names: Vec<String> = (0..width)
        .filter(|&c| c != label_idx)
        .map(|c| match &header {
            Some(h) => h[c].clone(),
            None => format!("x{c}"),
        })
        .collect();
    let n = rows.len();
    let p = width - 1;
    let x = DMatrix::from_fn(n, p, |i, j| {
        let c = if j < label_idx { j } else { j + 1 };
        rows[i][c]
    });
    let y = DVector::from_iterator(n, rows.iter().map(|r| r[label_idx]));
    Dataset::new(x, y, names)
}

/// Centers every column and scales it to unit (population) standard deviation.
/// Constant columns are centered and keep scale 1.
pub fn standardize(d: &Dataset) -> Result<Dataset> {
    if d.is_standardized() {
        return Err(Error::AlreadyStandardized);
    }
    let n = d.n() as f64;
    let mut x = d.x.clone();
    let mut means = Vec::with_capacity(d.p());
    let mut scales = Vec::with_capacity(d.p());
    for mut col in x.column_iter_mut() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
        let sd = (col.norm_squared() / n).sqrt();
        // constant up to round-off relative to the column magnitude
        let scale = if sd <= 1e-12 * (1.0 + mean.abs()) {
            col.fill(0.0);
            1.0
        } else {
            col /= sd;
            sd
        };
        means.push(mean);
        scales.push(scale);
    }
    Ok(Dataset {
        x,
        y: d.y.clone(),
        feature_names: d.feature_names.clone(),
        standardization: Some(Standardization { means, scales }),
    })
}

/// Inverts [`standardize`].
pub fn destandardize(d: &Dataset) -> Result<Dataset> {
    let st = d
        .standardization
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("dataset is not standardized".into()))?;
    let mut x = d.x.clone();
    for (j, mut col) in x.column_iter_mut().enumerate() {
        col *= st.scales[j];
        col.add_scalar_mut(st.means[j]);
    }
    Ok(Dataset {
        x,
        y: d.y.clone(),
        feature_names: d.feature_names.clone(),
        standardization: None,
    })
}

/// Appends `junk` columns of i.i.d. standard normal noise.
pub fn augment_junk(d: &Dataset, junk: usize, stream: RngStream) -> Dataset {
    if junk == 0 {
        return d.clone();
    }
    let mut rng = stream.rng();
    let (n, p) = (d.n(), d.p());
    // column-major fill so draws are laid out column by column
    let noise: Vec<f64> = (0..n * junk).map(|_| rng.sample(StandardNormal)).collect();
    let x = DMatrix::from_fn(n, p + junk, |i, j| {
        if j < p {
            d.x[(i, j)]
        } else {
            noise[(j - p) * n + i]
        }
    });
    let mut names = d.feature_names.clone();
    names.extend((0..junk).map(|k| format!("junk{k}")));
    let standardization = d.standardization.clone().map(|mut s| {
        s.means.extend(std::iter::repeat_n(0.0, junk));
        s.scales.extend(std::iter::repeat_n(1.0, junk));
        s
    });
    Dataset {
        x,
        y: d.y.clone(),
        feature_names: names,
        standardization,
    }
}

/// Random row partition with `round(train_fraction * n)` training rows.
pub fn split(d: &Dataset, train_fraction: f64, stream: RngStream) -> Result<(Dataset, Dataset)> {
    ensure(train_fraction > 0.0 && train_fraction < 1.0, || {
        format!("train fraction {train_fraction} not in (0, 1)")
    })?;
    let n = d.n();
    let n_train = (train_fraction * n as f64).round() as usize;
    if n < 2 || n_train == 0 || n_train == n {
        return Err(Error::Degenerate(format!(
            "split of {n} rows at fraction {train_fraction} leaves an empty part"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream.rng());
    Ok((
        d.select_rows(&idx[..n_train]),
        d.select_rows(&idx[n_train..]),
    ))
}

/// Independent binary dropout: each coordinate outside `exempt` is zeroed with
/// probability `rate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropoutSpec {
    rate: f64,
    exempt: BTreeSet<usize>,
}

impl DropoutSpec {
    pub fn new(rate: f64, exempt: impl IntoIterator<Item = usize>) -> Result<Self> {
        ensure((0.0..1.0).contains(&rate), || {
            format!("dropout rate {rate} not in [0, 1)")
        })?;
        Ok(Self {
            rate,
            exempt: exempt.into_iter().collect(),
        })
    }

    pub fn none() -> Self {
        Self {
            rate: 0.0,
            exempt: BTreeSet::new(),
        }
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn exempt(&self) -> &BTreeSet<usize> {
        &self.exempt
    }

    pub fn is_exempt(&self, k: usize) -> bool {
        self.exempt.contains(&k)
    }

    pub fn validate_for(&self, p: usize) -> Result<()> {
        match self.exempt.iter().next_back() {
            Some(&k) if k >= p => Err(Error::InvalidArgument(format!(
                "exempt index {k} out of range for dimension {p}"
            ))),
            _ => Ok(()),
        }
    }

    /// Writes `w` with dropped coordinates zeroed into `out`.
    pub fn corrupt<R: Rng + ?Sized>(&self, w: &[f64], out: &mut [f64], rng: &mut R) {
        for (k, (o, &v)) in out.iter_mut().zip(w).enumerate() {
            *o = if self.rate > 0.0 && !self.is_exempt(k) && rng.random::<f64>() < self.rate {
                0.0
            } else {
                v
            };
        }
    }
}

/// Keep-indicators (true = kept) for a `p`-dimensional parameter vector.
pub fn sample_dropout_mask<R: Rng + ?Sized>(
    p: usize,
    spec: &DropoutSpec,
    rng: &mut R,
) -> Vec<bool> {
    (0..p)
        .map(|k| spec.rate == 0.0 || spec.is_exempt(k) || rng.random::<f64>() >= spec.rate)
        .collect()
}
