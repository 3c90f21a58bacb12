//! Tabular datasets, CSV ingestion, seeded splitting and the synthetic
//! generators used by the simulations and benchmarks.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Open01};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("file is empty or has no data rows")]
    EmptyFile,
    #[error("target column `{0}` not found in header")]
    MissingTarget(String),
    #[error("classification target has {0} distinct labels, expected exactly 2")]
    NonBinaryTarget(usize),
    #[error("cannot parse cell at row {row}, column `{column}`: {value:?}")]
    UnparseableCell {
        row: usize,
        column: String,
        value: String,
    },
    #[error("missing value at row {row}, column `{column}`")]
    MissingValue { row: usize, column: String },
    #[error("split leaves an empty side (n = {n}, train fraction = {fraction})")]
    DegenerateSplit { n: usize, fraction: f64 },
    #[error("sparsity s = {s} exceeds p = {p}")]
    InvalidSparsity { s: usize, p: usize },
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Regression,
    Classification,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Regression => "regression",
            Task::Classification => "classification",
        }
    }
}

impl std::str::FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "regression" | "reg" => Ok(Task::Regression),
            "classification" | "clf" | "binary" => Ok(Task::Classification),
            other => Err(format!("unknown task `{other}`")),
        }
    }
}

/// How non-numeric feature columns are handled at ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CategoricalPolicy {
    /// Replace a column with `k` levels by `k` indicator columns.
    #[default]
    OneHot,
    /// Any non-numeric feature cell is an error.
    Strict,
}

/// How empty / `NA` cells are handled at ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MissingPolicy {
    #[default]
    Reject,
    /// Numeric feature columns get the column median. Missing targets and
    /// missing categorical cells are still rejected.
    ImputeMedian,
}

/// A dense feature matrix (row-major) with its response vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    responses: Vec<f64>,
    n_features: usize,
    task: Task,
    feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        features: Vec<f64>,
        n_features: usize,
        responses: Vec<f64>,
        task: Task,
        feature_names: Vec<String>,
    ) -> Result<Self, DataError> {
        if n_features == 0 {
            return Err(DataError::Invalid("dataset needs at least one feature".into()));
        }
        if responses.is_empty() {
            return Err(DataError::Invalid("dataset needs at least one row".into()));
        }
        if features.len() != responses.len() * n_features {
            return Err(DataError::Invalid(format!(
                "feature buffer has {} values, expected {} rows x {} features",
                features.len(),
                responses.len(),
                n_features
            )));
        }
        if feature_names.len() != n_features {
            return Err(DataError::Invalid(format!(
                "{} feature names for {} features",
                feature_names.len(),
                n_features
            )));
        }
        if features.iter().chain(&responses).any(|v| !v.is_finite()) {
            return Err(DataError::Invalid("non-finite value".into()));
        }
        if task == Task::Classification && responses.iter().any(|&y| y != 0.0 && y != 1.0) {
            return Err(DataError::Invalid(
                "classification responses must be 0 or 1".into(),
            ));
        }
        Ok(Dataset {
            features,
            responses,
            n_features,
            task,
            feature_names,
        })
    }

    /// Builds a dataset from rows, naming features `x0, x1, ...`.
    pub fn from_rows(rows: &[Vec<f64>], responses: Vec<f64>, task: Task) -> Result<Self, DataError> {
        let p = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != p) {
            return Err(DataError::Invalid("ragged rows".into()));
        }
        if rows.len() != responses.len() {
            return Err(DataError::Invalid(format!(
                "{} rows but {} responses",
                rows.len(),
                responses.len()
            )));
        }
        let features = rows.iter().flatten().copied().collect();
        Dataset::new(features, p, responses, task, default_names(p))
    }

    pub fn n_samples(&self) -> usize {
        self.responses.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn responses(&self) -> &[f64] {
        &self.responses
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.features.chunks_exact(self.n_features)
    }

    #[inline]
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.features[i * self.n_features + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn mean_response(&self) -> f64 {
        self.responses.iter().sum::<f64>() / self.n_samples() as f64
    }

    /// Per-feature medians, used as default pinned values for boundary maps.
    pub fn feature_medians(&self) -> Vec<f64> {
        (0..self.n_features)
            .map(|j| median(&mut self.column(j)))
            .collect()
    }

    /// Rows at `indices`, in that order; repeats are kept (bootstrap samples).
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.n_features);
        let mut responses = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            responses.push(self.responses[i]);
        }
        Dataset {
            features,
            responses,
            n_features: self.n_features,
            task: self.task,
            feature_names: self.feature_names.clone(),
        }
    }
}

pub(crate) fn default_names(p: usize) -> Vec<String> {
    (0..p).map(|j| format!("x{j}")).collect()
}

pub(crate) fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    }
}

fn is_missing(cell: &str) -> bool {
    let c = cell.trim();
    c.is_empty() || c.eq_ignore_ascii_case("na") || c.eq_ignore_ascii_case("nan")
}

fn parse_number(cell: &str) -> Option<f64> {
    cell.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Options for [`load_csv`] beyond the target column and task.
#[derive(Debug, Clone, Copy, Default)]
pub struct CsvOptions {
    pub categorical: CategoricalPolicy,
    pub missing: MissingPolicy,
}

pub fn load_csv(
    path: impl AsRef<Path>,
    target_column: &str,
    task: Task,
    options: CsvOptions,
) -> Result<Dataset, DataError> {
    let file = std::fs::File::open(path)?;
    read_csv(file, target_column, task, options)
}

/// Parses a CSV document. Classification labels are mapped to {0, 1} with the
/// larger label as 1 (numeric order when both labels are numbers,
/// lexicographic otherwise).
pub fn read_csv<R: std::io::Read>(
    reader: R,
    target_column: &str,
    task: Task,
    options: CsvOptions,
) -> Result<Dataset, DataError> {
    let (header, cells) = read_table(reader)?;
    let target = header
        .iter()
        .position(|h| h == target_column)
        .ok_or_else(|| DataError::MissingTarget(target_column.to_string()))?;

    let responses = parse_target(&cells, target, target_column, task)?;
    let columns: Vec<usize> = (0..header.len()).filter(|&j| j != target).collect();
    let (features, names) = encode_features(&header, &cells, &columns, options)?;
    let p = names.len();
    Dataset::new(features, p, responses, task, names)
}

/// Reads the feature columns of a CSV (dropping `target_column` when present)
/// and returns them encoded with the same rules as [`read_csv`].
pub fn read_feature_table<R: std::io::Read>(
    reader: R,
    target_column: Option<&str>,
    options: CsvOptions,
) -> Result<(Vec<f64>, Vec<String>, usize), DataError> {
    let (header, cells) = read_table(reader)?;
    let columns: Vec<usize> = (0..header.len())
        .filter(|&j| Some(header[j].as_str()) != target_column)
        .collect();
    let (features, names) = encode_features(&header, &cells, &columns, options)?;
    Ok((features, names, cells.len()))
}

fn read_table<R: std::io::Read>(reader: R) -> Result<(Vec<String>, Vec<Vec<String>>), DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(DataError::EmptyFile);
    }
    let mut cells = Vec::new();
    for record in rdr.records() {
        let record = record?;
        cells.push(record.iter().map(str::to_string).collect::<Vec<_>>());
    }
    if cells.is_empty() {
        return Err(DataError::EmptyFile);
    }
    Ok((header, cells))
}

fn parse_target(
    cells: &[Vec<String>],
    target: usize,
    name: &str,
    task: Task,
) -> Result<Vec<f64>, DataError> {
    for (row, record) in cells.iter().enumerate() {
        if is_missing(&record[target]) {
            return Err(DataError::MissingValue {
                row: row + 1,
                column: name.to_string(),
            });
        }
    }
    match task {
        Task::Regression => cells
            .iter()
            .enumerate()
            .map(|(row, record)| {
                parse_number(&record[target]).ok_or_else(|| DataError::UnparseableCell {
                    row: row + 1,
                    column: name.to_string(),
                    value: record[target].clone(),
                })
            })
            .collect(),
        Task::Classification => {
            let labels: BTreeSet<&str> = cells.iter().map(|r| r[target].as_str()).collect();
            if labels.len() != 2 {
                return Err(DataError::NonBinaryTarget(labels.len()));
            }
            let labels: Vec<&str> = labels.into_iter().collect();
            let positive = match (parse_number(labels[0]), parse_number(labels[1])) {
                (Some(a), Some(b)) if a > b => labels[0],
                _ => labels[1],
            };
            Ok(cells
                .iter()
                .map(|r| if r[target] == positive { 1.0 } else { 0.0 })
                .collect())
        }
    }
}

enum ColumnKind {
    Numeric(Vec<f64>),
    Categorical(Vec<String>),
}

fn encode_features(
    header: &[String],
    cells: &[Vec<String>],
    columns: &[usize],
    options: CsvOptions,
) -> Result<(Vec<f64>, Vec<String>), DataError> {
    let n = cells.len();
    let mut encoded: Vec<Vec<f64>> = Vec::new();
    let mut names = Vec::new();

    for &j in columns {
        let name = &header[j];
        match classify_column(cells, j, name, options)? {
            ColumnKind::Numeric(values) => {
                encoded.push(values);
                names.push(name.clone());
            }
            ColumnKind::Categorical(levels) => {
                for level in levels {
                    encoded.push(
                        cells
                            .iter()
                            .map(|r| if r[j] == level { 1.0 } else { 0.0 })
                            .collect(),
                    );
                    names.push(format!("{name}={level}"));
                }
            }
        }
    }
    if names.is_empty() {
        return Err(DataError::Invalid("no feature columns".into()));
    }
    let p = names.len();
    let mut features = vec![0.0; n * p];
    for (k, col) in encoded.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            features[i * p + k] = v;
        }
    }
    Ok((features, names))
}

fn classify_column(
    cells: &[Vec<String>],
    j: usize,
    name: &str,
    options: CsvOptions,
) -> Result<ColumnKind, DataError> {
    let mut parsed = Vec::with_capacity(cells.len());
    let mut first_bad = None;
    let mut first_missing = None;
    for (row, record) in cells.iter().enumerate() {
        let cell = &record[j];
        if is_missing(cell) {
            first_missing.get_or_insert(row);
            parsed.push(None);
        } else if let Some(v) = parse_number(cell) {
            parsed.push(Some(v));
        } else {
            first_bad.get_or_insert(row);
            parsed.push(None);
        }
    }

    if let Some(row) = first_bad {
        if options.categorical == CategoricalPolicy::Strict {
            return Err(DataError::UnparseableCell {
                row: row + 1,
                column: name.to_string(),
                value: cells[row][j].clone(),
            });
        }
        if let Some(row) = first_missing {
            return Err(DataError::MissingValue {
                row: row + 1,
                column: name.to_string(),
            });
        }
        let levels: BTreeSet<String> = cells.iter().map(|r| r[j].clone()).collect();
        return Ok(ColumnKind::Categorical(levels.into_iter().collect()));
    }

    if let Some(row) = first_missing {
        if options.missing == MissingPolicy::Reject {
            return Err(DataError::MissingValue {
                row: row + 1,
                column: name.to_string(),
            });
        }
        let mut present: Vec<f64> = parsed.iter().flatten().copied().collect();
        if present.is_empty() {
            return Err(DataError::MissingValue {
                row: row + 1,
                column: name.to_string(),
            });
        }
        let fill = median(&mut present);
        return Ok(ColumnKind::Numeric(
            parsed.into_iter().map(|v| v.unwrap_or(fill)).collect(),
        ));
    }
    Ok(ColumnKind::Numeric(parsed.into_iter().flatten().collect()))
}

/// Writes a dataset as CSV with the response in a trailing `target` column.
pub fn write_csv<W: std::io::Write>(ds: &Dataset, writer: W, target_name: &str) -> Result<(), DataError> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = ds.feature_names.iter().map(String::as_str).collect();
    header.push(target_name);
    wtr.write_record(&header)?;
    for (row, y) in ds.rows().zip(&ds.responses) {
        let mut record: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        record.push(y.to_string());
        wtr.write_record(&record)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Index sets of a seeded train/test partition.
pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>), DataError> {
    let degenerate = DataError::DegenerateSplit {
        n,
        fraction: train_fraction,
    };
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(degenerate);
    }
    let n_train = (train_fraction * n as f64).floor() as usize;
    if n_train < 1 || n_train >= n {
        return Err(degenerate);
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = idx.split_off(n_train);
    Ok((idx, test))
}

/// Uniform random train/test partition; the train side gets
/// `floor(train_fraction * n)` rows.
pub fn train_test_split(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset), DataError> {
    let (train, test) = split_indices(ds.n_samples(), train_fraction, seed)?;
    Ok((ds.subset(&train), ds.subset(&test)))
}

/// Default training fraction of the benchmark protocol.
pub const DEFAULT_TRAIN_FRACTION: f64 = 2.0 / 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    Gaussian,
    Laplacian,
}

/// Parametric data-generating processes with a known noiseless target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Simulation {
    Friedman1 {
        noise_sd: f64,
    },
    Friedman3 {
        noise_sd: f64,
    },
    Linear {
        p: usize,
        s: usize,
        noise: NoiseKind,
        noise_var: f64,
        interactions: bool,
    },
    /// Two isotropic Gaussian blobs in 2-D with a fraction of labels flipped.
    Blobs {
        separation: f64,
        label_noise: f64,
    },
}

impl Default for Simulation {
    fn default() -> Self {
        Simulation::linear_default()
    }
}

impl Simulation {
    /// 50 uniform features, the first 10 active, Gaussian noise with variance 0.01.
    pub fn linear_default() -> Self {
        Simulation::Linear {
            p: 50,
            s: 10,
            noise: NoiseKind::Gaussian,
            noise_var: 0.01,
            interactions: false,
        }
    }

    pub fn n_features(&self) -> usize {
        match *self {
            Simulation::Friedman1 { .. } => 10,
            Simulation::Friedman3 { .. } => 4,
            Simulation::Linear { p, .. } => p,
            Simulation::Blobs { .. } => 2,
        }
    }

    pub fn task(&self) -> Task {
        match self {
            Simulation::Blobs { .. } => Task::Classification,
            _ => Task::Regression,
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        match *self {
            Simulation::Linear {
                p,
                s,
                interactions,
                noise_var,
                ..
            } => {
                if s > p {
                    return Err(DataError::InvalidSparsity { s, p });
                }
                if p == 0 {
                    return Err(DataError::Invalid("p must be positive".into()));
                }
                if interactions && p < 12 {
                    return Err(DataError::Invalid(
                        "the interaction terms use features 1..12, need p >= 12".into(),
                    ));
                }
                if !(noise_var >= 0.0 && noise_var.is_finite()) {
                    return Err(DataError::Invalid("noise variance must be >= 0".into()));
                }
            }
            Simulation::Friedman1 { noise_sd } | Simulation::Friedman3 { noise_sd } => {
                if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
                    return Err(DataError::Invalid("noise sd must be >= 0".into()));
                }
            }
            Simulation::Blobs { label_noise, .. } => {
                if !(0.0..=1.0).contains(&label_noise) {
                    return Err(DataError::Invalid("label noise must be in [0, 1]".into()));
                }
            }
        }
        Ok(())
    }

    /// Variance of the additive noise (0 for the classification blobs).
    pub fn noise_variance(&self) -> f64 {
        match *self {
            Simulation::Friedman1 { noise_sd } | Simulation::Friedman3 { noise_sd } => noise_sd * noise_sd,
            Simulation::Linear { noise_var, .. } => noise_var,
            Simulation::Blobs { .. } => 0.0,
        }
    }

    /// Noiseless regression function. For blobs this is P(y = 1 | x).
    pub fn target(&self, x: &[f64]) -> f64 {
        match *self {
            Simulation::Friedman1 { .. } => {
                10.0 * (PI * x[0] * x[1]).sin()
                    + 20.0 * (x[2] - 0.5).powi(2)
                    + 10.0 * x[3]
                    + 5.0 * x[4]
            }
            Simulation::Friedman3 { .. } => ((x[1] * x[2] - 1.0 / (x[1] * x[3])) / x[0]).atan(),
            Simulation::Linear { s, interactions, .. } => {
                let mut y: f64 = x[..s].iter().sum();
                if interactions {
                    y += x[0] * x[1] + x[4] * x[5] + x[10] * x[11];
                }
                y
            }
            Simulation::Blobs {
                separation,
                label_noise,
            } => {
                // Equal-prior blobs at (±separation/2, ±separation/2) with unit covariance.
                let c = separation / 2.0;
                let d1 = (x[0] - c).powi(2) + (x[1] - c).powi(2);
                let d0 = (x[0] + c).powi(2) + (x[1] + c).powi(2);
                let p1 = 1.0 / (1.0 + (0.5 * (d1 - d0)).exp());
                label_noise + (1.0 - 2.0 * label_noise) * p1
            }
        }
    }

    fn sample_x<R: Rng>(&self, rng: &mut R, out: &mut Vec<f64>) -> Option<bool> {
        match *self {
            Simulation::Friedman1 { .. } | Simulation::Linear { .. } => {
                for _ in 0..self.n_features() {
                    out.push(rng.random::<f64>());
                }
                None
            }
            Simulation::Friedman3 { .. } => {
                let u = |rng: &mut R| -> f64 { rng.sample(Open01) };
                out.push(100.0 * u(rng));
                out.push(40.0 * PI + 520.0 * PI * u(rng));
                out.push(u(rng));
                out.push(1.0 + 10.0 * u(rng));
                None
            }
            Simulation::Blobs { separation, .. } => {
                let label = rng.random::<bool>();
                let c = if label { separation / 2.0 } else { -separation / 2.0 };
                let normal = Normal::new(0.0, 1.0).expect("unit normal");
                out.push(c + normal.sample(rng));
                out.push(c + normal.sample(rng));
                Some(label)
            }
        }
    }

    fn sample_noise<R: Rng>(&self, rng: &mut R) -> f64 {
        let (kind, var) = match *self {
            Simulation::Friedman1 { noise_sd } | Simulation::Friedman3 { noise_sd } => {
                (NoiseKind::Gaussian, noise_sd * noise_sd)
            }
            Simulation::Linear { noise, noise_var, .. } => (noise, noise_var),
            Simulation::Blobs { .. } => return 0.0,
        };
        if var == 0.0 {
            return 0.0;
        }
        match kind {
            NoiseKind::Gaussian => var.sqrt() * Normal::new(0.0, 1.0).expect("unit normal").sample(rng),
            NoiseKind::Laplacian => {
                // Inverse CDF; scale b has variance 2 b^2.
                let b = (var / 2.0).sqrt();
                let u: f64 = rng.sample::<f64, _>(Open01) - 0.5;
                -b * u.signum() * (1.0 - 2.0 * u.abs()).ln()
            }
        }
    }

    /// Draws `n` rows. A pure function of `(self, n, seed)`.
    pub fn generate(&self, n: usize, seed: u64) -> Result<Dataset, DataError> {
        self.validate()?;
        if n == 0 {
            return Err(DataError::Invalid("n must be positive".into()));
        }
        let p = self.n_features();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut features = Vec::with_capacity(n * p);
        let mut responses = Vec::with_capacity(n);
        for i in 0..n {
            let label = self.sample_x(&mut rng, &mut features);
            let x = &features[i * p..];
            let y = match (self, label) {
                (Simulation::Blobs { label_noise, .. }, Some(label)) => {
                    let flip = rng.random::<f64>() < *label_noise;
                    if label != flip {
                        1.0
                    } else {
                        0.0
                    }
                }
                _ => self.target(x) + self.sample_noise(&mut rng),
            };
            responses.push(y);
        }
        Dataset::new(features, p, responses, self.task(), default_names(p))
    }
}

pub fn gen_friedman1(n: usize, noise_sd: f64, seed: u64) -> Result<Dataset, DataError> {
    Simulation::Friedman1 { noise_sd }.generate(n, seed)
}

/// Friedman #3 with inputs x1 in (0, 100), x2 in (40π, 560π), x3 in (0, 1),
/// x4 in (1, 11); bounds are open so x1 never hits zero.
pub fn gen_friedman3(n: usize, noise_sd: f64, seed: u64) -> Result<Dataset, DataError> {
    Simulation::Friedman3 { noise_sd }.generate(n, seed)
}

pub fn gen_linear_sim(
    n: usize,
    p: usize,
    s: usize,
    noise: NoiseKind,
    noise_var: f64,
    interactions: bool,
    seed: u64,
) -> Result<Dataset, DataError> {
    Simulation::Linear {
        p,
        s,
        noise,
        noise_var,
        interactions,
    }
    .generate(n, seed)
}

pub fn gen_blobs(n: usize, separation: f64, label_noise: f64, seed: u64) -> Result<Dataset, DataError> {
    Simulation::Blobs {
        separation,
        label_noise,
    }
    .generate(n, seed)
}

/// Counts of each distinct response value; handy for stratification checks.
pub fn label_counts(ds: &Dataset) -> BTreeMap<u64, usize> {
    let mut counts = BTreeMap::new();
    for y in ds.responses() {
        *counts.entry(y.to_bits()).or_insert(0) += 1;
    }
    counts
}
