//! Run configuration, read from a TOML file.
//!
//! Every key is optional. The file is laid over the desk-scale defaults key
//! by key, except `[data]`, which replaces the default source as a whole.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use cellcast_core::data::{read_series_store, LoadSeries, SynthConfig};
use cellcast_core::energy::PowerParams;
use cellcast_core::experiment::{
    build_dataset, desk_finetune_config, desk_model_config, desk_train_config, fnn_train_config,
    synthetic_dataset, Dataset, DatasetConfig, FNN_HIDDEN,
};
use cellcast_core::model::ModelConfig;
use cellcast_core::prompting::{Orientation, Vocabulary};
use cellcast_core::training::TrainConfig;
use serde::{Deserialize, Serialize};

/// Where the load series come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSource {
    /// Generate series on the fly.
    Synth(SynthConfig),
    /// A series store written by `ingest` or `synth`.
    Store { path: PathBuf },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synth(SynthConfig::default())
    }
}

/// How many samples the encoder sees. Subsets are drawn deterministically
/// from `seed`; the fine-tuning subset uses `seed + 4`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sampling {
    pub train_samples: usize,
    pub validation_samples: usize,
    pub seed: u64,
}

impl Default for Sampling {
    fn default() -> Self {
        Self {
            train_samples: 8000,
            validation_samples: 500,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FnnSection {
    pub hidden: usize,
    pub train: TrainConfig,
}

impl Default for FnnSection {
    fn default() -> Self {
        Self {
            hidden: FNN_HIDDEN,
            train: fnn_train_config(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    pub orientation: Orientation,
    /// Seed of the encoder initialization.
    pub model_seed: u64,
    pub data: DataSource,
    pub dataset: DatasetConfig,
    pub sampling: Sampling,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub finetune: TrainConfig,
    pub fnn: FnnSection,
    pub power: PowerParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("runs"),
            orientation: Orientation::default(),
            model_seed: 7,
            data: DataSource::default(),
            dataset: DatasetConfig::default(),
            sampling: Sampling::default(),
            model: desk_model_config(Vocabulary::standard().len()),
            train: desk_train_config(),
            finetune: desk_finetune_config(),
            fnn: FnnSection::default(),
            power: PowerParams::default(),
        }
    }
}

impl RunConfig {
    /// Read and validate a config file. Relative data paths are resolved
    /// against the file's directory.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg =
            Self::parse(&text).with_context(|| format!("invalid config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let DataSource::Store { path } = &mut cfg.data {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let user: toml::Table = toml::from_str(text)?;
        let mut merged = toml::Table::try_from(RunConfig::default())?;
        for (key, value) in user {
            if key == "data" {
                merged.insert(key, value);
            } else {
                merge(&mut merged, key, value);
            }
        }
        Ok(merged.try_into()?)
    }

    /// Defaults when no path is given.
    pub fn load_or_default(path: Option<&Path>) -> anyhow::Result<Self> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(Self::default()),
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if let DataSource::Store { path } = &self.data {
            if !path.exists() {
                bail!("series store {} does not exist", path.display());
            }
        }
        self.model.validate()?;
        let vocab = Vocabulary::standard().len();
        if self.model.vocab_size != vocab {
            bail!(
                "model.vocab_size is {} but the prompt vocabulary has {vocab} tokens",
                self.model.vocab_size
            );
        }
        self.power.validate()?;
        for (name, t) in [
            ("train", &self.train),
            ("finetune", &self.finetune),
            ("fnn.train", &self.fnn.train),
        ] {
            t.validate().with_context(|| format!("[{name}]"))?;
        }
        if self.fnn.hidden == 0 {
            bail!("fnn.hidden must be positive");
        }
        Ok(())
    }

    pub fn series(&self) -> anyhow::Result<Vec<LoadSeries>> {
        match &self.data {
            DataSource::Synth(s) => Ok(cellcast_core::data::synth_traffic(s)?),
            DataSource::Store { path } => {
                let f = std::fs::File::open(path)
                    .with_context(|| format!("cannot open series store {}", path.display()))?;
                Ok(read_series_store(std::io::BufReader::new(f))?)
            }
        }
    }

    pub fn dataset(&self) -> anyhow::Result<Dataset> {
        let d = match &self.data {
            DataSource::Synth(s) => synthetic_dataset(s, &self.dataset)?,
            DataSource::Store { .. } => build_dataset(self.series()?, &self.dataset)?,
        };
        if d.split.train.is_empty() || d.split.test.is_empty() {
            bail!("dataset has an empty train or test split; check [dataset.split] against the series length");
        }
        Ok(d)
    }

    pub fn artifact(&self, name: &str) -> PathBuf {
        self.output_dir.join(name)
    }
}

fn merge(into: &mut toml::Table, key: String, value: toml::Value) {
    match (into.get_mut(&key), value) {
        (Some(toml::Value::Table(base)), toml::Value::Table(over)) => {
            for (k, v) in over {
                merge(base, k, v);
            }
        }
        (_, v) => {
            into.insert(key, v);
        }
    }
}
