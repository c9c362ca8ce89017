//! Calibration model bundle and JSON checkpoints.

use serde::Serialize;

use spancal_core::{CalibrationExample, Span};

use crate::decode::{decode_answer, LAMBDA};
use crate::encode::{encode_example, fit_to_length, Encoded, Vocab};
use crate::encoder;
use crate::heads::{pointer_probs, LossWeights};
use crate::params::{ModelConfig, ModelParams};
use crate::tagger::Tagger;
use crate::train::{fit, EpochLog, TrainConfig};
use crate::ModelError;

#[derive(Debug, Clone, PartialEq)]
pub struct Calibrator {
    pub params: ModelParams,
    pub vocab: Vocab,
    /// Entity types, indexed by the classification head.
    pub types: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub id: String,
    /// Passage-relative calibrated span.
    pub span: Span,
    pub label: Option<String>,
    pub score: f64,
    /// No valid pair: the whole (cropped) passage was returned.
    pub fallback: bool,
}

impl Calibrator {
    /// Vocabulary and types from `examples`; `config` supplies the network
    /// shape.
    pub fn init(examples: &[CalibrationExample], mut config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        let vocab = Vocab::from_examples(examples);
        let mut types: Vec<String> = examples.iter().filter_map(|e| e.gold_type.clone()).collect();
        types.sort();
        types.dedup();
        config.vocab_size = vocab.len();
        config.n_types = types.len().max(1);
        Ok(Self {
            params: ModelParams::init(&config, seed)?,
            vocab,
            types,
        })
    }

    /// Replaces the type inventory, re-initializing the classification head
    /// when it changes (fine-tuning a model pre-trained without types).
    pub fn retype(&mut self, examples: &[CalibrationExample], seed: u64) -> Result<(), ModelError> {
        let mut types: Vec<String> = examples.iter().filter_map(|e| e.gold_type.clone()).collect();
        types.sort();
        types.dedup();
        if types == self.types {
            return Ok(());
        }
        let mut config = self.params.config.clone();
        config.n_types = types.len().max(1);
        let fresh = ModelParams::init(&config, seed)?;
        self.params.cls_w = fresh.cls_w;
        self.params.cls_b = fresh.cls_b;
        self.params.config = config;
        self.types = types;
        Ok(())
    }

    /// Crops to fit and encodes; returns the encoding and passage offset.
    pub fn encode(&self, ex: &CalibrationExample) -> Result<(Encoded, usize), ModelError> {
        let max = self.params.config.max_len;
        let (cropped, offset) =
            fit_to_length(ex, max).ok_or_else(|| ModelError::Data(format!("{}: cannot fit in {max} tokens", ex.id)))?;
        Ok((encode_example(&cropped, &self.vocab, &self.types, max)?, offset))
    }

    /// Types unknown to the classification head are an error.
    pub fn encode_all(&self, examples: &[CalibrationExample]) -> Result<Vec<Encoded>, ModelError> {
        examples.iter().map(|e| self.encode(e).map(|(enc, _)| enc)).collect()
    }

    pub fn fit(
        self,
        examples: &[CalibrationExample],
        weights: &LossWeights,
        cfg: &TrainConfig,
    ) -> Result<(Self, Vec<EpochLog>), ModelError> {
        let data = self.encode_all(examples)?;
        let (params, log) = fit(self.params, &data, weights, cfg)?;
        Ok((Self { params, ..self }, log))
    }

    pub fn predict(&self, ex: &CalibrationExample, max_span: usize) -> Result<Prediction, ModelError> {
        let (enc, offset) = self.encode(ex)?;
        let h = encoder::encode(&self.params, &enc.ids, &enc.indicator)?;
        let (ps, pe) = pointer_probs(&self.params, &h, &enc.passage);
        let ans = decode_answer(&ps, &pe, &self.params, &h, &enc.passage, max_span, LAMBDA);
        let local = enc.to_passage_span(ans.start, ans.end);
        let label = self.types.get(ans.cls).cloned();
        Ok(Prediction {
            id: ex.id.clone(),
            span: Span::new(local.start + offset, local.end + offset).with_label(label.clone()),
            label,
            score: ans.score,
            fallback: ans.fallback,
        })
    }

    pub fn to_json(&self) -> serde_json::Value {
        bundle_json("calibrator", &self.params, &self.vocab, &self.types)
    }

    pub fn from_json(doc: &serde_json::Value) -> Result<Self, ModelError> {
        let (params, vocab, types) = bundle_parts("calibrator", doc)?;
        Ok(Self { params, vocab, types })
    }
}

impl Tagger {
    pub fn to_json(&self) -> serde_json::Value {
        bundle_json("tagger", &self.params, &self.vocab, &self.labels)
    }

    pub fn from_json(doc: &serde_json::Value) -> Result<Self, ModelError> {
        let (params, vocab, labels) = bundle_parts("tagger", doc)?;
        Ok(Self { params, vocab, labels })
    }
}

fn bundle_json(kind: &str, params: &ModelParams, vocab: &Vocab, labels: &[String]) -> serde_json::Value {
    let mut doc = params.to_json();
    doc["kind"] = kind.into();
    doc["vocab"] = serde_json::to_value(vocab).expect("vocab serializes");
    doc["labels"] = labels.into();
    doc
}

fn bundle_parts(kind: &str, doc: &serde_json::Value) -> Result<(ModelParams, Vocab, Vec<String>), ModelError> {
    let bad = |m: String| ModelError::Checkpoint(m);
    if doc["kind"] != kind {
        return Err(bad(format!("expected a {kind} checkpoint, found {}", doc["kind"])));
    }
    let params = ModelParams::from_json(doc)?;
    let vocab: Vocab = serde_json::from_value(doc["vocab"].clone()).map_err(|e| bad(format!("vocab: {e}")))?;
    let labels: Vec<String> = serde_json::from_value(doc["labels"].clone()).map_err(|e| bad(format!("labels: {e}")))?;
    if vocab.len() != params.config.vocab_size {
        return Err(bad("vocabulary size does not match the config".into()));
    }
    Ok((params, vocab, labels))
}
