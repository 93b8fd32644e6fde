//! Flat `section.key = value` configuration files.

use std::path::Path;

use crate::benchmark::BenchConfig;
use crate::document_pipeline::{CorpusSpec, Task};
use crate::error::{Error, Result};
use crate::fsutil::read_to_string;
use crate::transformer::{ModelConfig, TrainConfig, Variant};

/// Everything a subcommand may need. Every field has a default; a config
/// file overrides defaults and command-line flags override the file.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub corpus: CorpusSpec,
    pub bench: BenchConfig,
    /// Window size L for training and translation.
    pub window: usize,
    pub beam: usize,
    /// Whether `model.vocab_size` was given explicitly.
    pub vocab_size_set: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            corpus: CorpusSpec::default(),
            bench: BenchConfig::default(),
            window: 1,
            beam: 4,
            vocab_size_set: false,
        }
    }
}

fn usage(msg: String) -> Error {
    Error::Usage(msg)
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| usage(format!("bad value {value:?} for {key}")))
}

fn flag(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(usage(format!("bad boolean {value:?} for {key}"))),
    }
}

pub fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| num(key, s))
        .collect()
}

pub fn parse_variants(value: &str) -> Result<Vec<Variant>> {
    value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| Variant::parse(s.trim()).ok_or_else(|| usage(format!("unknown backend {s:?}"))))
        .collect()
}

impl RunConfig {
    /// Applies one `section.key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let (section, field) = key
            .split_once('.')
            .ok_or_else(|| usage(format!("config key {key:?} lacks a section prefix")))?;
        match section {
            "model" => {
                self.vocab_size_set |= field == "vocab_size";
                self.model.set(field, value).map_err(|e| usage(e.to_string()))
            }
            "train" => self.set_train(key, field, value),
            "corpus" => self.set_corpus(key, field, value),
            "bench" => self.set_bench(key, field, value),
            "run" => match field {
                "window" | "L" => {
                    self.window = num(key, value)?;
                    Ok(())
                }
                "beam" => {
                    self.beam = num(key, value)?;
                    Ok(())
                }
                _ => Err(usage(format!("unknown config key {key:?}"))),
            },
            _ => Err(usage(format!("unknown config section {section:?}"))),
        }
    }

    fn set_train(&mut self, key: &str, field: &str, value: &str) -> Result<()> {
        let t = &mut self.train;
        match field {
            "steps" => t.steps = num(key, value)?,
            "batch_size" => t.batch_size = num(key, value)?,
            "lr" | "peak_lr" => t.peak_lr = num(key, value)?,
            "warmup" => t.warmup = num(key, value)?,
            "beta1" => t.beta1 = num(key, value)?,
            "beta2" => t.beta2 = num(key, value)?,
            "eps" => t.eps = num(key, value)?,
            "eval_every" => t.eval_every = num(key, value)?,
            "patience" => t.patience = num(key, value)?,
            "seed" => t.seed = num(key, value)?,
            "resample_features" => t.resample_features = flag(key, value)?,
            _ => return Err(usage(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    fn set_corpus(&mut self, key: &str, field: &str, value: &str) -> Result<()> {
        let c = &mut self.corpus;
        match field {
            "task" => {
                c.task = Task::parse(value.trim()).ok_or_else(|| usage(format!("unknown task {value:?}")))?
            }
            "docs" | "train_docs" => c.train_docs = num(key, value)?,
            "dev_docs" => c.dev_docs = num(key, value)?,
            "test_docs" => c.test_docs = num(key, value)?,
            "min_sentences" => c.min_sentences = num(key, value)?,
            "max_sentences" => c.max_sentences = num(key, value)?,
            "min_len" => c.min_len = num(key, value)?,
            "max_len" => c.max_len = num(key, value)?,
            "vocab_size" => c.vocab_size = num(key, value)?,
            "items" | "num_items" => c.num_items = num(key, value)?,
            "seed" => c.seed = num(key, value)?,
            _ => return Err(usage(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    fn set_bench(&mut self, key: &str, field: &str, value: &str) -> Result<()> {
        let b = &mut self.bench;
        match field {
            "windows" | "L" => b.windows = parse_list(key, value)?,
            "backends" => b.backends = parse_variants(value)?,
            "batch_divisor" => b.batch_divisor = num(key, value)?,
            "reps" => b.reps = num(key, value)?,
            "warmup" => b.warmup = num(key, value)?,
            "tokens_per_sentence" => b.tokens_per_sentence = num(key, value)?,
            "profile_prefixes" => b.profile_prefixes = parse_list(key, value)?,
            "profile_bucket" => b.profile_bucket = num(key, value)?,
            "profile_reps" => b.profile_reps = num(key, value)?,
            "profile_source_len" => b.profile_source_len = num(key, value)?,
            "max_cache_bytes" => b.max_cache_bytes = Some(num(key, value)?),
            "seed" => b.seed = num(key, value)?,
            _ => return Err(usage(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Applies every setting in `text`. Blank lines and `#` comments are
    /// ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| usage(format!("config line {}: expected key = value", no + 1)))?;
            self.set(k.trim(), v)
                .map_err(|e| usage(format!("config line {}: {e}", no + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        self.apply_text(&read_to_string(path)?)
    }
}
