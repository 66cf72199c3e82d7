use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::harness::{self, Dataset, Model, TrainConfig};
use crate::metrics::MetricOptions;

use super::CliError;

/// Where the samples come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    #[serde(default)]
    pub builtin: Option<Builtin>,
    /// Resolved against the config file's directory when relative.
    #[serde(default)]
    pub csv: Option<PathBuf>,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub dim: Option<usize>,
    #[serde(default)]
    pub separation: Option<f64>,
    #[serde(default)]
    pub classes: Option<usize>,
    #[serde(default)]
    pub rank: Option<usize>,
    #[serde(default)]
    pub noise: Option<f64>,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    /// Defaults to the run seed.
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_test_fraction() -> f64 {
    0.2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Builtin {
    TwoGaussians,
    LowRankClasses,
    Iris,
}

/// Model family; sizes come from the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    LinearRegression,
    Logistic,
    Mlp { hidden: usize },
}

impl ModelSpec {
    pub fn build(&self, data: &Dataset) -> Model {
        let input_dim = data.input_dim();
        let classes = data.class_count().max(2);
        match *self {
            ModelSpec::LinearRegression => Model::LinearRegression { input_dim },
            ModelSpec::Logistic => Model::Logistic { input_dim, classes },
            ModelSpec::Mlp { hidden } => Model::Mlp { input_dim, hidden, classes },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub dataset: DatasetSpec,
    pub model: ModelSpec,
    pub train: TrainConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub metrics: MetricOptions,
    /// Also run the full-data sampler with the same settings and report the
    /// accuracy ratio against it.
    #[serde(default)]
    pub baseline: bool,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("graft-run")
}

/// Documented in `graft train --help`.
pub const CONFIG_HELP: &str = "\
Config file (JSON). Unknown keys are rejected.

  dataset.builtin       two_gaussians | low_rank_classes | iris
  dataset.csv           path to a CSV with a header and a `label` column
  dataset.n             samples for generators            [two_gaussians: 2000, low_rank_classes: 600]
  dataset.dim           input dimension                   [two_gaussians: 20, low_rank_classes: 10]
  dataset.separation    two_gaussians mean distance       [3.0]
  dataset.classes       low_rank_classes class count      [3]
  dataset.rank          low_rank_classes subspace rank    [2]
  dataset.noise         low_rank_classes noise level      [0.1]
  dataset.test_fraction held-out share                    [0.2]
  dataset.seed          generator and split seed          [run seed]
  model.kind            linear_regression | logistic | mlp
  model.hidden          mlp hidden width
  train.iterations      SGD steps T                       (required)
  train.batch_size      K                                 (required)
  train.sampler         {\"kind\": graft | graft_warm | random | full}
  train.sampler.warm_fraction                             [0.1]
  train.sampler.fraction  random subset share             (required for random)
  train.selection_period  S                               [50]
  train.rset            candidate subset sizes            [[8]]
  train.epsilon         projection-error threshold, or \"inf\" [0.1]
  train.learning_rate                                     [0.1]
  train.schedule        constant | cosine                 [constant]
  train.seed                                              [0]
  train.error_mode      normalized | absolute             [normalized]
  train.feature_source  raw_svd | variance_order | external_embedding [raw_svd]
  train.parallel_batches                                  [false]
  train.track_full_gradient                               [false]
  output_dir                                              [graft-run]
  metrics.joules_per_eval                                 [0.001]
  metrics.intensity_kg_per_kwh                            [0.366]
  metrics.reference_accuracy                              [none]
  baseline              also run the full sampler         [false]

Seed precedence: --seed, then GRAFT_SEED, then train.seed.";

/// A config key; keys without children accept any value.
struct Key {
    name: &'static str,
    children: &'static [Key],
}

const fn leaf(name: &'static str) -> Key {
    Key { name, children: &[] }
}

const ROOT: &[Key] = &[
    Key { name: "dataset", children: DATASET },
    Key { name: "model", children: &[leaf("kind"), leaf("hidden")] },
    Key { name: "train", children: TRAIN },
    leaf("output_dir"),
    Key { name: "metrics", children: &[leaf("joules_per_eval"), leaf("intensity_kg_per_kwh"), leaf("reference_accuracy")] },
    leaf("baseline"),
];

const DATASET: &[Key] = &[
    leaf("builtin"),
    leaf("csv"),
    leaf("n"),
    leaf("dim"),
    leaf("separation"),
    leaf("classes"),
    leaf("rank"),
    leaf("noise"),
    leaf("test_fraction"),
    leaf("seed"),
];

const TRAIN: &[Key] = &[
    leaf("iterations"),
    leaf("selection_period"),
    leaf("batch_size"),
    leaf("rset"),
    leaf("epsilon"),
    leaf("learning_rate"),
    leaf("schedule"),
    leaf("seed"),
    Key { name: "sampler", children: &[leaf("kind"), leaf("warm_fraction"), leaf("fraction")] },
    leaf("error_mode"),
    leaf("feature_source"),
    leaf("parallel_batches"),
    leaf("track_full_gradient"),
];

/// Dotted paths of every key not in the schema.
pub fn unknown_keys(value: &Value) -> Vec<String> {
    let mut out = Vec::new();
    walk(value, ROOT, "", &mut out);
    out
}

fn walk(value: &Value, schema: &[Key], prefix: &str, out: &mut Vec<String>) {
    let Value::Object(map) = value else { return };
    for (key, child) in map {
        let path = if prefix.is_empty() { key.clone() } else { format!("{prefix}.{key}") };
        match schema.iter().find(|k| k.name == key) {
            None => out.push(path),
            Some(k) if !k.children.is_empty() => walk(child, k.children, &path, out),
            Some(_) => {}
        }
    }
}

impl RunConfigFile {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::User(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        if let Some(csv) = &cfg.dataset.csv {
            if csv.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                cfg.dataset.csv = Some(base.join(csv));
            }
        }
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let value: Value = serde_json::from_str(text).map_err(|e| CliError::User(format!("config: {e}")))?;
        let unknown = unknown_keys(&value);
        if !unknown.is_empty() {
            return Err(CliError::User(format!("config: unknown keys: {}", unknown.join(", "))));
        }
        serde_json::from_value(value).map_err(|e| CliError::User(format!("config: {e}")))
    }

    pub fn load_dataset(&self) -> Result<Dataset, CliError> {
        let d = &self.dataset;
        let seed = d.seed.unwrap_or(self.train.seed);
        match (d.builtin, &d.csv) {
            (Some(_), Some(_)) => Err(CliError::User("config: give dataset.builtin or dataset.csv, not both".into())),
            (None, None) => Err(CliError::User("config: dataset needs builtin or csv".into())),
            (None, Some(path)) => Ok(harness::load_csv(path)
                .map_err(|e| CliError::User(e.to_string()))?
                .with_random_split(d.test_fraction, seed)),
            (Some(Builtin::Iris), None) => Ok(harness::iris(d.test_fraction, seed)),
            (Some(Builtin::TwoGaussians), None) => Ok(harness::two_gaussians(
                d.n.unwrap_or(2000),
                d.dim.unwrap_or(20),
                d.separation.unwrap_or(3.0),
                d.test_fraction,
                seed,
            )),
            (Some(Builtin::LowRankClasses), None) => Ok(harness::low_rank_classes(
                d.n.unwrap_or(600),
                d.dim.unwrap_or(10),
                d.classes.unwrap_or(3),
                d.rank.unwrap_or(2),
                d.noise.unwrap_or(0.1),
                d.test_fraction,
                seed,
            )),
        }
    }
}
