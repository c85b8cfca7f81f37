//! Labelled point sets, label normalization, covariates and CSV I/O.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Raw labelled points, one row of `x` per label.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: Vec<f64>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: Vec<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::InvalidData(format!("{} input rows but {} labels", x.nrows(), y.len())));
        }
        if x.ncols() == 0 {
            return Err(Error::InvalidData("inputs have zero columns".into()));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite value in data".into()));
        }
        Ok(Dataset { x, y })
    }

    pub fn from_rows(rows: &[Vec<f64>], y: Vec<f64>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidData("ragged input rows".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Dataset::new(DMatrix::from_row_slice(rows.len(), d, &flat), y)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn point(&self, i: usize) -> Vec<f64> {
        self.x.row(i).iter().copied().collect()
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    /// First `n` rows.
    pub fn head(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset { x: self.x.rows(0, n).into_owned(), y: self.y[..n].to_vec() }
    }

    /// Reads `x1..xd, y` with a header row.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(input);
        let width = rdr.headers()?.len();
        if width < 2 {
            return Err(Error::InvalidData("csv needs at least one input column and a label column".into()));
        }
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let vals = rec
                .iter()
                .map(|s| s.parse::<f64>().map_err(|_| Error::InvalidData(format!("row {}: cannot parse `{s}`", line + 1))))
                .collect::<Result<Vec<f64>>>()?;
            y.push(vals[width - 1]);
            rows.push(vals[..width - 1].to_vec());
        }
        if rows.is_empty() {
            return Err(Error::InvalidData("csv has no data rows".into()));
        }
        Dataset::from_rows(&rows, y)
    }

    pub fn read_csv_path(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Dataset::read_csv(f)
    }

    /// A dataset with no rows, used where test data are optional.
    pub fn empty(dim: usize) -> Self {
        Dataset { x: DMatrix::zeros(0, dim), y: Vec::new() }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=self.dim()).map(|j| format!("x{j}")).collect();
        header.push("y".into());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut row: Vec<String> = self.x.row(i).iter().map(|v| v.to_string()).collect();
            row.push(self.y[i].to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Prediction inputs: every column except a trailing `y` column, which is
/// returned separately when present.
pub fn read_points_csv<R: Read>(input: R) -> Result<(Vec<Vec<f64>>, Option<Vec<f64>>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(input);
    let headers = rdr.headers()?.clone();
    let labelled = headers.iter().next_back().is_some_and(|h| h.eq_ignore_ascii_case("y"));
    let d = headers.len() - usize::from(labelled);
    if d == 0 {
        return Err(Error::InvalidData("csv has no input columns".into()));
    }
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let vals = rec?
            .iter()
            .map(|s| s.parse::<f64>().map_err(|_| Error::InvalidData(format!("row {}: cannot parse `{s}`", line + 1))))
            .collect::<Result<Vec<f64>>>()?;
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!("row {}: non-finite value", line + 1)));
        }
        if labelled {
            labels.push(vals[d]);
        }
        points.push(vals[..d].to_vec());
    }
    Ok((points, labelled.then_some(labels)))
}

pub fn read_points_csv_path(path: &Path) -> Result<(Vec<Vec<f64>>, Option<Vec<f64>>)> {
    let f = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_points_csv(f)
}

/// Affine map of labels onto `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub shift: f64,
    pub scale: f64,
    pub offset: f64,
}

/// Target interval for normalized labels.
pub const NORMALIZED_RANGE: (f64, f64) = (0.1, 1.0);

impl Normalization {
    pub fn identity() -> Self {
        Normalization { shift: 0.0, scale: 1.0, offset: 0.0 }
    }

    pub fn fit(y: &[f64]) -> Result<Self> {
        let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(hi > lo) {
            return Err(Error::InvalidData("labels are constant; nothing to regress".into()));
        }
        let (a, b) = NORMALIZED_RANGE;
        Ok(Normalization { shift: lo, scale: (b - a) / (hi - lo), offset: a })
    }

    pub fn forward(&self, y: f64) -> f64 {
        self.offset + (y - self.shift) * self.scale
    }

    pub fn inverse(&self, z: f64) -> f64 {
        self.shift + (z - self.offset) / self.scale
    }
}

/// Mean-function basis `m(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CovariateKind {
    /// `m(x) = 1`.
    #[default]
    Constant,
    /// `m(x) = (1, x₁, …, x_d)`.
    Linear,
}

impl CovariateKind {
    pub fn count(self, dim: usize) -> usize {
        match self {
            CovariateKind::Constant => 1,
            CovariateKind::Linear => dim + 1,
        }
    }

    pub fn row(self, x: &[f64]) -> DVector<f64> {
        match self {
            CovariateKind::Constant => DVector::from_element(1, 1.0),
            CovariateKind::Linear => DVector::from_iterator(x.len() + 1, std::iter::once(1.0).chain(x.iter().copied())),
        }
    }

    pub fn matrix(self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let p = self.count(x.ncols());
        DMatrix::from_fn(x.nrows(), p, |i, j| match (self, j) {
            (_, 0) => 1.0,
            (CovariateKind::Linear, j) => x[(i, j - 1)],
            _ => unreachable!(),
        })
    }
}

/// Conditioning data: locations, normalized labels and covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub x: DMatrix<f64>,
    /// Labels after normalization.
    pub y: DVector<f64>,
    pub covariates: DMatrix<f64>,
    pub covariate_kind: CovariateKind,
    pub normalization: Normalization,
}

impl TrainingSet {
    pub fn new(data: &Dataset, covariate_kind: CovariateKind, normalize: bool) -> Result<Self> {
        let normalization = if normalize { Normalization::fit(&data.y)? } else { Normalization::identity() };
        let n = data.len();
        let p = covariate_kind.count(data.dim());
        if n <= p {
            return Err(Error::InvalidData(format!("need more than {p} points for {p} covariates, got {n}")));
        }
        Ok(TrainingSet {
            x: data.x.clone(),
            y: DVector::from_iterator(n, data.y.iter().map(|v| normalization.forward(*v))),
            covariates: covariate_kind.matrix(&data.x),
            covariate_kind,
            normalization,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.covariates.ncols()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn covariate_row(&self, x: &[f64]) -> DVector<f64> {
        self.covariate_kind.row(x)
    }

    /// Labels on the original scale.
    pub fn raw_labels(&self) -> Vec<f64> {
        self.y.iter().map(|v| self.normalization.inverse(*v)).collect()
    }

    /// The training set with point `i` removed.
    pub fn without(&self, i: usize) -> TrainingSet {
        TrainingSet {
            x: self.x.clone().remove_row(i),
            y: self.y.clone().remove_row(i),
            covariates: self.covariates.clone().remove_row(i),
            covariate_kind: self.covariate_kind,
            normalization: self.normalization,
        }
    }
}
