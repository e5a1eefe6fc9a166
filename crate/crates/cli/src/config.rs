use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sleepnet_core::hpo::{SearchConfig, SearchSpace, TpeConfig};
use sleepnet_core::preprocess::PreprocessConfig;
use sleepnet_core::{ModelConfig, TrainRunConfig};

/// Invalid configuration file, override or argument.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

/// Input data missing, malformed or inconsistent across files.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct DataError(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Holds one subdirectory per split, each containing record directories.
    pub raw_dir: PathBuf,
    /// Cap every training record to this many randomly chosen hours.
    pub max_train_hours: Option<f64>,
    pub cap_seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            raw_dir: PathBuf::from("data/raw"),
            max_train_hours: None,
            cap_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HpoConfig {
    pub n_trials: usize,
    pub seed: u64,
    pub record_time: bool,
    /// Number of best trials written to the ensemble member file.
    pub top_k: usize,
    /// Take the search folds from the train split instead of val/test.
    pub carve_folds: bool,
    pub fold_val_records: usize,
    pub fold_test_records: usize,
    pub tpe: TpeConfig,
    pub space: SearchSpace,
}

impl Default for HpoConfig {
    fn default() -> Self {
        let search = SearchConfig::default();
        Self {
            n_trials: search.n_trials,
            seed: search.seed,
            record_time: search.record_time,
            top_k: 5,
            carve_folds: true,
            fold_val_records: 1,
            fold_test_records: 1,
            tpe: search.tpe,
            space: SearchSpace::default(),
        }
    }
}

impl HpoConfig {
    pub fn search(&self) -> SearchConfig {
        SearchConfig {
            n_trials: self.n_trials,
            seed: self.seed,
            record_time: self.record_time,
            tpe: self.tpe.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictConfig {
    pub split: Split,
    /// Ensemble checkpoints, relative to the output directory. Empty means
    /// the search's best members if present, else the trained model.
    pub members: Vec<PathBuf>,
}

impl Default for PredictConfig {
    fn default() -> Self {
        Self {
            split: Split::Test,
            members: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub split: Split,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self { split: Split::Test }
    }
}

/// Everything one experiment needs, stored as a single TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Seeds network initialization for `train`.
    pub seed: u64,
    pub data: DataConfig,
    pub output: OutputConfig,
    pub preprocess: PreprocessConfig,
    pub model: ModelConfig,
    pub train: TrainRunConfig,
    pub hpo: HpoConfig,
    pub predict: PredictConfig,
    pub evaluate: EvaluateConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            data: DataConfig::default(),
            output: OutputConfig::default(),
            preprocess: PreprocessConfig::default(),
            model: ModelConfig::default(),
            train: TrainRunConfig {
                checkpoint_path: None,
                ..TrainRunConfig::default()
            },
            hpo: HpoConfig::default(),
            predict: PredictConfig::default(),
            evaluate: EvaluateConfig::default(),
        }
    }
}

fn to_table<T: Serialize>(value: &T) -> Result<toml::Table, ConfigError> {
    match toml::Value::try_from(value) {
        Ok(toml::Value::Table(t)) => Ok(t),
        Ok(_) => Err(ConfigError("configuration must serialize to a table".into())),
        Err(e) => Err(ConfigError(e.to_string())),
    }
}

fn merge(base: &mut toml::Table, overlay: toml::Table) {
    for (key, value) in overlay {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

/// Parses the right-hand side of `--set key=value` as a TOML value, falling
/// back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), ConfigError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| ConfigError(format!("override `{assignment}` is not of the form key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(ConfigError(format!("override key `{key}` is malformed")));
    }
    let mut node = table;
    for part in &parts[..parts.len() - 1] {
        let entry = node
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| ConfigError(format!("override key `{key}`: `{part}` is not a table")))?;
    }
    node.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

impl PipelineConfig {
    /// Defaults, then the file at `path`, then each `key=value` override.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut table = to_table(&Self::default())?;
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
            let file: toml::Table =
                toml::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
            merge(&mut table, file);
        }
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError(format!("invalid configuration: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let wrap = |e: sleepnet_core::Error| ConfigError(e.to_string());
        self.model.validate().map_err(wrap)?;
        self.train.validate().map_err(wrap)?;
        self.hpo.space.validate().map_err(wrap)?;
        self.hpo.tpe.validate().map_err(wrap)?;
        if self.train.checkpoint_path.is_some() {
            return Err(ConfigError(
                "train.checkpoint_path is not configurable; checkpoints go to the output directory".into(),
            ));
        }
        if let Some(h) = self.data.max_train_hours {
            if !(h > 0.0 && h.is_finite()) {
                return Err(ConfigError(format!("data.max_train_hours must be positive, got {h}")));
            }
        }
        if self.hpo.top_k == 0 {
            return Err(ConfigError("hpo.top_k must be >= 1".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }
}

/// Every configuration key with its default, for `--help`.
pub fn reference() -> String {
    let mut s = String::from(
        "CONFIGURATION\n\
         Keys below are shown with their defaults as a TOML file. Values are\n\
         taken from the defaults, then --config FILE, then each --set KEY=VALUE\n\
         (dotted keys, TOML values, e.g. --set model.kernel_size=7).\n\
         Relative paths resolve against the working directory.\n\n",
    );
    s.push_str(&PipelineConfig::default().to_toml());
    let _ = write!(
        s,
        "\n# Optional keys, unset by default:\n\
         # data.max_train_hours = 7.0   cap each training record to randomly chosen hours (seeded by data.cap_seed)\n"
    );
    s
}
