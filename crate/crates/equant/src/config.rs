//! Run configuration: a TOML file with `[paths]`, `[corpus]`, `[model]`,
//! `[train]` and `[eval]` sections, overridden by command-line flags.
//! Unknown keys are rejected in every section.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use equant_core::corpus::BatchConfig;
use equant_core::eval::{BaselineStatistic, EvalMode};
use equant_core::model::ModelConfig;
use equant_core::train::TrainConfig;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::io::{read_text, write_atomic};

/// Environment variable naming the directory for the default cache file.
pub const CACHE_DIR_ENV: &str = "EQUANT_CACHE_DIR";
pub const DEFAULT_CACHE_NAME: &str = "equant.cache";
pub const RESOLVED_CONFIG_NAME: &str = "resolved_config.toml";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// SQuAD JSON used for training (and the `train` cache split).
    pub train_data: Option<PathBuf>,
    /// SQuAD JSON stored as the `dev` cache split.
    pub dev_data: Option<PathBuf>,
    /// Further named splits, e.g. `squad1 = "train-v1.1.json"`.
    pub extra_data: BTreeMap<String, PathBuf>,
    /// GloVe word vectors.
    pub embeddings: Option<PathBuf>,
    /// Optional character-level vectors in GloVe format.
    pub char_embeddings: Option<PathBuf>,
    pub cache: Option<PathBuf>,
    /// Trained model read by `evaluate`, `stats` and `attn-dump`.
    pub checkpoint: Option<PathBuf>,
    /// Trunk checkpoint restored before joint training.
    pub init_checkpoint: Option<PathBuf>,
    /// Checkpoint to continue from, including optimizer state.
    pub resume: Option<PathBuf>,
    /// Directory for checkpoints, logs and the resolved config.
    pub out_dir: Option<PathBuf>,
    /// Report file written by `evaluate` and `stats`.
    pub report: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    /// Cache split used by `pretrain` and `train`.
    pub train_split: String,
    pub max_context_len: usize,
    pub max_question_len: usize,
    pub max_word_len: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        let b = BatchConfig::default();
        Self {
            train_split: "train".into(),
            max_context_len: b.max_context_len,
            max_question_len: b.max_question_len,
            max_word_len: b.max_word_len,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub mode: EvalMode,
    /// Cache split evaluated when no data file is given.
    pub split: String,
    pub statistic: BaselineStatistic,
    /// `stats`: pick the accuracy-maximizing threshold instead of using
    /// the model threshold.
    pub sweep: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { mode: EvalMode::V2, split: "dev".into(), statistic: BaselineStatistic::default(), sweep: false }
    }
}

/// Fully resolved settings for one command.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: PathsConfig,
    pub corpus: CorpusConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    /// Defaults, then `file`, then `overrides` (dotted keys such as
    /// `model.hidden`). The cache path falls back to
    /// `$EQUANT_CACHE_DIR/equant.cache`, then `./equant.cache`.
    pub fn resolve(file: Option<&Path>, overrides: &[(String, Value)], cache_dir: Option<&Path>) -> Result<Self> {
        let mut table = match file {
            Some(p) => read_text(p)?
                .parse::<Table>()
                .map_err(|e| Error::Config(format!("{}: {}", p.display(), one_line(&e.to_string()))))?,
            None => Table::new(),
        };
        for (key, value) in overrides {
            set_dotted(&mut table, key, value.clone())?;
        }
        // Round-trip through text so type errors quote the offending key.
        let text = toml::to_string(&table).map_err(|e| Error::Config(e.to_string()))?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| Error::Config(one_line(&e.to_string())))?;
        if cfg.paths.cache.is_none() {
            let dir = cache_dir.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
            cfg.paths.cache = Some(dir.join(DEFAULT_CACHE_NAME));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        let b = self.batch_config();
        if b.max_context_len == 0 || b.max_question_len == 0 || b.max_word_len == 0 {
            return Err(Error::Config("corpus length caps must be positive".into()));
        }
        if self.model.equant2_pad_length < b.max_context_len && self.model.head_variant == equant_core::model::HeadVariant::Equant2 {
            return Err(Error::Config(format!(
                "model.equant2_pad_length {} is below corpus.max_context_len {}",
                self.model.equant2_pad_length, b.max_context_len
            )));
        }
        Ok(())
    }

    pub fn batch_config(&self) -> BatchConfig {
        BatchConfig {
            batch_size: self.train.batch_size,
            max_context_len: self.corpus.max_context_len,
            max_question_len: self.corpus.max_question_len,
            max_word_len: self.corpus.max_word_len,
        }
    }

    pub fn cache_path(&self) -> &Path {
        self.paths.cache.as_deref().expect("resolve fills the cache path")
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Writes the resolved config into `dir`.
    pub fn echo(&self, dir: &Path) -> Result<()> {
        write_atomic(&dir.join(RESOLVED_CONFIG_NAME), self.to_toml()?.as_bytes())
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn set_dotted(table: &mut Table, key: &str, value: Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    let (last, parents) = parts.split_last().expect("split yields one part");
    let mut cur = table;
    for p in parents {
        let entry = cur.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = match entry {
            Value::Table(t) => t,
            _ => return Err(Error::Config(format!("`{key}`: `{p}` is not a section"))),
        };
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Parses a `--set key=value` argument. The value is read as a TOML
/// literal when possible and as a bare string otherwise.
pub fn parse_assignment(arg: &str) -> Result<(String, Value)> {
    let (key, raw) = arg.split_once('=').ok_or_else(|| Error::Config(format!("`{arg}` is not key=value")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(Error::Config(format!("bad key in `{arg}`")));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    Ok((key.to_string(), value))
}
