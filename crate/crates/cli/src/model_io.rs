use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use shrinkwood::data::{self, CategoricalPolicy, CsvOptions, Dataset, MissingPolicy, Task};
use shrinkwood::forest::{ForestModel, FOREST_FORMAT};
use shrinkwood::tree::{TreeModel, TREE_FORMAT};
use shrinkwood::Predictor;

use crate::CliError;

pub enum Model {
    Tree(TreeModel),
    Forest(ForestModel),
}

impl Model {
    pub fn as_predictor(&self) -> &dyn Predictor {
        match self {
            Model::Tree(t) => t,
            Model::Forest(f) => f,
        }
    }

    pub fn feature_names(&self) -> &[String] {
        match self {
            Model::Tree(t) => t.feature_names(),
            Model::Forest(f) => f.trees()[0].feature_names(),
        }
    }
}

/// Dispatches on the `format` field of a model document.
pub fn load_model(path: &Path) -> Result<Model, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let value: Value =
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: invalid JSON: {e}", path.display())))?;
    let format = value.get("format").and_then(Value::as_str).unwrap_or_default().to_string();
    let malformed = |e: serde_json::Error| CliError::Data(format!("{}: {e}", path.display()));
    match format.as_str() {
        TREE_FORMAT => Ok(Model::Tree(serde_json::from_value(value).map_err(malformed)?)),
        FOREST_FORMAT => Ok(Model::Forest(serde_json::from_value(value).map_err(malformed)?)),
        other => Err(CliError::Data(format!(
            "{}: unknown model format `{other}`",
            path.display()
        ))),
    }
}

pub fn save_model(model: &Model, output: Option<&Path>) -> Result<(), CliError> {
    match model {
        Model::Tree(t) => write_json(t, output),
        Model::Forest(f) => write_json(f, output),
    }
}

fn write_json<T: Serialize>(value: &T, output: Option<&Path>) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Invariant(e.to_string()))?;
    let mut out = open_output(output)?;
    writeln!(out, "{text}").map_err(io_err)
}

pub fn open_output(output: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match output {
        Some(path) => Box::new(std::io::BufWriter::new(
            fs::File::create(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    })
}

pub fn io_err(e: std::io::Error) -> CliError {
    CliError::Data(e.to_string())
}

#[derive(Debug, Clone, clap::Args)]
pub struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Name of the response column.
    #[arg(long)]
    pub target: String,
    /// regression or classification; defaults to the model's task, else regression.
    #[arg(long, value_parser = parse_task)]
    pub task: Option<Task>,
    /// Replace missing cells with the column median instead of failing.
    #[arg(long)]
    pub impute_median: bool,
    /// Fail on non-numeric columns instead of one-hot encoding them.
    #[arg(long)]
    pub strict_categorical: bool,
}

fn parse_task(s: &str) -> Result<Task, String> {
    s.parse()
}

impl DataArgs {
    pub fn options(&self) -> CsvOptions {
        CsvOptions {
            categorical: if self.strict_categorical {
                CategoricalPolicy::Strict
            } else {
                CategoricalPolicy::OneHot
            },
            missing: if self.impute_median {
                MissingPolicy::ImputeMedian
            } else {
                MissingPolicy::Reject
            },
        }
    }

    pub fn load(&self, default_task: Option<Task>) -> Result<Dataset, CliError> {
        let task = self.task.or(default_task).unwrap_or(Task::Regression);
        data::load_csv(&self.data, &self.target, task, self.options())
            .map_err(|e| CliError::Data(format!("{}: {e}", self.data.display())))
    }
}

/// Reads feature rows from a CSV and lines them up with `names`. One-hot
/// columns absent from the file are read as zero.
pub fn load_features(
    path: &Path,
    target: Option<&str>,
    options: CsvOptions,
    names: &[String],
) -> Result<Vec<Vec<f64>>, CliError> {
    let file = fs::File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let (values, columns, n) = data::read_feature_table(file, target, options)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let width = columns.len();
    let mut lookup = Vec::with_capacity(names.len());
    for name in names {
        match columns.iter().position(|c| c == name) {
            Some(j) => lookup.push(Some(j)),
            None if name.contains('=') => lookup.push(None),
            None => {
                return Err(CliError::Data(format!(
                    "{}: model feature `{name}` not found",
                    path.display()
                )))
            }
        }
    }
    Ok((0..n)
        .map(|i| {
            lookup
                .iter()
                .map(|j| j.map_or(0.0, |j| values[i * width + j]))
                .collect()
        })
        .collect())
}
