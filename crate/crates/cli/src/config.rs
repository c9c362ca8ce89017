//! Pipeline config file (TOML). Every field is optional; a value given on
//! the command line wins over the file, which wins over the built-in
//! default.

use std::path::Path;

use anyhow::Context;
use serde::Deserialize;

use spancal_core::corpus::FilterConfig;
use spancal_model::{ModelConfig, TrainConfig};

use crate::UsageError;

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Fallback seed for every stage without its own.
    pub seed: Option<u64>,
    pub ingest: IngestSection,
    pub synth: SynthSection,
    pub pairs: PairsSection,
    pub schedule: ScheduleSection,
    pub pretrain: TrainSection,
    pub finetune: TrainSection,
    pub predict: PredictSection,
    pub eval: EvalSection,
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// flag > stage section > global > 0
    pub fn seed(&self, flag: Option<u64>, section: Option<u64>) -> u64 {
        flag.or(section).or(self.seed).unwrap_or(0)
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSection {
    pub min_tokens: usize,
    pub max_tokens: usize,
    pub max_anchor_tokens: usize,
    pub per_page_cap: Option<usize>,
    pub seed: Option<u64>,
}

impl Default for IngestSection {
    fn default() -> Self {
        let f = FilterConfig::default();
        Self {
            min_tokens: f.min_tokens,
            max_tokens: f.max_tokens,
            max_anchor_tokens: f.max_anchor_tokens,
            per_page_cap: f.per_page_cap,
            seed: None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub phi: f64,
    pub mode: String,
    pub op_weights: [f64; 3],
    /// Append self-noise-augmented copies.
    pub sna: bool,
    pub seed: Option<u64>,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self {
            phi: 0.5,
            mode: "ner".into(),
            op_weights: [1.0; 3],
            sna: false,
            seed: None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PairsSection {
    /// Window for predictions overlapping no gold; absent means the entire
    /// sentence.
    pub n_win: Option<usize>,
    pub language: String,
}

impl Default for PairsSection {
    fn default() -> Self {
        Self {
            n_win: None,
            language: "en".into(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSection {
    pub plan: String,
    /// `lang:count`, in training order.
    pub sizes: Vec<String>,
    pub retain: f64,
    pub nested: bool,
    /// `stage:lang:count`
    pub overrides: Vec<String>,
    pub seed: Option<u64>,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        Self {
            plan: "continual".into(),
            sizes: Vec::new(),
            retain: 0.5,
            nested: true,
            overrides: Vec::new(),
            seed: None,
        }
    }
}

/// Network shape plus optimizer settings for `pretrain` / `finetune`.
#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub d_model: usize,
    pub heads: usize,
    pub d_ff: usize,
    pub blocks: usize,
    pub max_len: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub warmup: f64,
    pub cycles: usize,
    pub clip: f64,
    pub negatives: usize,
    pub mlm_rate: f64,
    /// Fine-tuning only: `ner` or `mrc` loss weights.
    pub task: String,
    /// Loss weight overrides.
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub mlm: Option<f64>,
    pub seed: Option<u64>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let m = ModelConfig::desk(0, 0);
        let t = TrainConfig::default();
        Self {
            d_model: m.d_model,
            heads: m.heads,
            d_ff: m.d_ff,
            blocks: m.blocks,
            max_len: m.max_len,
            epochs: t.epochs,
            lr: t.lr,
            batch_size: t.batch_size,
            weight_decay: t.weight_decay,
            warmup: t.warmup,
            cycles: t.cycles,
            clip: t.clip,
            negatives: t.negatives,
            mlm_rate: t.mlm_rate,
            task: "ner".into(),
            alpha: None,
            beta: None,
            gamma: None,
            mlm: None,
            seed: None,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictSection {
    pub max_span: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub task: String,
    pub language: String,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            task: "ner".into(),
            language: "en".into(),
        }
    }
}

pub fn parse_task(s: &str) -> Result<spancal_core::eval::Task, UsageError> {
    match s {
        "ner" => Ok(spancal_core::eval::Task::Ner),
        "mrc" => Ok(spancal_core::eval::Task::Mrc),
        _ => Err(UsageError(format!("unknown task `{s}` (expected ner or mrc)"))),
    }
}
