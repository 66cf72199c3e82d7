use std::io::Read;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{DenseMatrix, LinalgError};

const IRIS_CSV: &str = include_str!("../../data/iris.csv");
const SPLIT_SALT: u64 = 0x5eed_5011;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("no column named `label`")]
    MissingLabel,
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    Class(usize),
    Value(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Labels {
    Classes(Vec<usize>),
    Values(Vec<f64>),
}

impl Labels {
    pub fn len(&self) -> usize {
        match self {
            Labels::Classes(c) => c.len(),
            Labels::Values(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: DenseMatrix,
    labels: Labels,
    class_count: usize,
    train: Vec<usize>,
    test: Vec<usize>,
    embeddings: Option<DenseMatrix>,
}

impl Dataset {
    pub fn new(features: DenseMatrix, labels: Labels, train: Vec<usize>, test: Vec<usize>) -> Result<Self, DataError> {
        let n = features.rows();
        if labels.len() != n {
            return Err(DataError::Invalid(format!("{} labels for {n} samples", labels.len())));
        }
        if train.iter().chain(&test).any(|&i| i >= n) {
            return Err(DataError::Invalid("split index out of range".into()));
        }
        let class_count = match &labels {
            Labels::Classes(c) => c.iter().max().map_or(0, |m| m + 1),
            Labels::Values(_) => 0,
        };
        Ok(Self { features, labels, class_count, train, test, embeddings: None })
    }

    /// Attaches per-sample embeddings used instead of the raw inputs for
    /// feature extraction.
    pub fn with_embeddings(mut self, embeddings: DenseMatrix) -> Result<Self, DataError> {
        if embeddings.rows() != self.len() {
            return Err(DataError::Invalid(format!(
                "{} embedding rows for {} samples",
                embeddings.rows(),
                self.len()
            )));
        }
        self.embeddings = Some(embeddings);
        Ok(self)
    }

    /// Shuffles all samples with `seed` and holds out `round(test_fraction · n)`.
    pub fn with_random_split(mut self, test_fraction: f64, seed: u64) -> Self {
        let n = self.len();
        let mut idx: Vec<usize> = (0..n).collect();
        // salted so the split is independent of generator draws with the same seed
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ SPLIT_SALT));
        let n_test = ((test_fraction.clamp(0.0, 1.0)) * n as f64).round() as usize;
        self.test = idx[..n_test].to_vec();
        self.train = idx[n_test..].to_vec();
        self.test.sort_unstable();
        self.train.sort_unstable();
        self
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &DenseMatrix {
        &self.features
    }

    pub fn embeddings(&self) -> Option<&DenseMatrix> {
        self.embeddings.as_ref()
    }

    pub fn labels(&self) -> &Labels {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn is_classification(&self) -> bool {
        matches!(self.labels, Labels::Classes(_))
    }

    pub fn train(&self) -> &[usize] {
        &self.train
    }

    pub fn test(&self) -> &[usize] {
        &self.test
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }

    pub fn target(&self, i: usize) -> Target {
        match &self.labels {
            Labels::Classes(c) => Target::Class(c[i]),
            Labels::Values(v) => Target::Value(v[i]),
        }
    }
}

/// Two isotropic Gaussian classes in `dim` dimensions whose means are
/// `separation` standard deviations apart along the all-ones direction.
/// Labels alternate, so the classes are balanced.
pub fn two_gaussians(n: usize, dim: usize, separation: f64, test_fraction: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift = 0.5 * separation / (dim as f64).sqrt();
    let mut data = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = i % 2;
        let sign = if y == 0 { -1.0 } else { 1.0 };
        for _ in 0..dim {
            let z: f64 = StandardNormal.sample(&mut rng);
            data.push(sign * shift + z);
        }
        labels.push(y);
    }
    let features = DenseMatrix::new(n, dim, data).expect("generated data is finite");
    Dataset::new(features, Labels::Classes(labels), Vec::new(), Vec::new())
        .expect("consistent by construction")
        .with_random_split(test_fraction, seed)
}

/// Balanced classes, each drawn from its own `rank`-dimensional affine
/// subspace plus isotropic noise.
pub fn low_rank_classes(
    n: usize,
    dim: usize,
    classes: usize,
    rank: usize,
    noise: f64,
    test_fraction: f64,
    seed: u64,
) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let centers: Vec<Vec<f64>> = (0..classes).map(|_| (0..dim).map(|_| 2.0 * normal()).collect()).collect();
    let bases: Vec<Vec<f64>> =
        (0..classes).map(|_| (0..dim * rank).map(|_| normal() / (rank as f64).sqrt()).collect()).collect();
    let mut data = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % classes;
        let z: Vec<f64> = (0..rank).map(|_| normal()).collect();
        for d in 0..dim {
            let lat: f64 = (0..rank).map(|r| bases[c][d * rank + r] * z[r]).sum();
            data.push(centers[c][d] + lat + noise * normal());
        }
        labels.push(c);
    }
    let features = DenseMatrix::new(n, dim, data).expect("generated data is finite");
    Dataset::new(features, Labels::Classes(labels), Vec::new(), Vec::new())
        .expect("consistent by construction")
        .with_random_split(test_fraction, seed)
}

/// The bundled 150-sample, 4-feature, 3-class Iris table.
pub fn iris(test_fraction: f64, seed: u64) -> Dataset {
    load_csv_from(IRIS_CSV.as_bytes()).expect("bundled table parses").with_random_split(test_fraction, seed)
}

/// Header names plus numeric rows. A first row that does not parse as
/// numbers is taken as the header.
pub fn read_numeric_csv<R: Read>(reader: R) -> Result<(Option<Vec<String>>, Vec<Vec<f64>>), DataError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(reader);
    let mut header: Option<Vec<String>> = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| DataError::Malformed {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(n as u64 + 1, |p| p.line());
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let parsed: Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(vals) => {
                if let Some(bad) = vals.iter().position(|v| !v.is_finite()) {
                    return Err(DataError::Malformed { line, message: format!("non-finite value in column {}", bad + 1) });
                }
                if let Some(first) = rows.first() {
                    if first.len() != vals.len() {
                        return Err(DataError::Malformed {
                            line,
                            message: format!("expected {} fields, found {}", first.len(), vals.len()),
                        });
                    }
                }
                rows.push(vals);
            }
            Err(_) if n == 0 => {
                header = Some(rec.iter().map(str::to_owned).collect());
            }
            Err(e) => return Err(DataError::Malformed { line, message: e.to_string() }),
        }
    }
    if let (Some(h), Some(first)) = (&header, rows.first()) {
        if h.len() != first.len() {
            return Err(DataError::Malformed { line: 2, message: "row width differs from header".into() });
        }
    }
    Ok((header, rows))
}

/// Reads a numeric matrix; a `label` column, if present, is dropped.
pub fn load_matrix_csv(path: &Path) -> Result<DenseMatrix, DataError> {
    let file = std::fs::File::open(path).map_err(|source| DataError::Io { path: path.to_owned(), source })?;
    let (header, rows) = read_numeric_csv(file)?;
    let drop = header.as_ref().and_then(|h| h.iter().position(|c| c == "label"));
    let rows: Vec<Vec<f64>> = rows
        .into_iter()
        .map(|r| r.into_iter().enumerate().filter(|(j, _)| Some(*j) != drop).map(|(_, v)| v).collect())
        .collect();
    Ok(DenseMatrix::from_rows(&rows)?)
}

/// Loads a dataset with a header row and a `label` column. Integer labels
/// make a classification set, anything else a regression set.
pub fn load_csv(path: &Path) -> Result<Dataset, DataError> {
    let file = std::fs::File::open(path).map_err(|source| DataError::Io { path: path.to_owned(), source })?;
    load_csv_from(file)
}

fn load_csv_from<R: Read>(reader: R) -> Result<Dataset, DataError> {
    let (header, rows) = read_numeric_csv(reader)?;
    let header = header.ok_or(DataError::MissingLabel)?;
    let label_col = header.iter().position(|c| c == "label").ok_or(DataError::MissingLabel)?;
    let n = rows.len();
    let dim = header.len() - 1;
    let mut data = Vec::with_capacity(n * dim);
    let mut raw_labels = Vec::with_capacity(n);
    for r in &rows {
        for (j, &v) in r.iter().enumerate() {
            if j == label_col {
                raw_labels.push(v);
            } else {
                data.push(v);
            }
        }
    }
    let labels = if raw_labels.iter().all(|v| *v >= 0.0 && v.fract() == 0.0) {
        Labels::Classes(raw_labels.iter().map(|v| *v as usize).collect())
    } else {
        Labels::Values(raw_labels)
    };
    let features = DenseMatrix::new(n, dim, data)?;
    let all: Vec<usize> = (0..n).collect();
    Dataset::new(features, labels, all, Vec::new())
}
