//! Seeded synthetic corpus for desk-scale training runs: filler words with
//! typed entity runs drawn from per-type word lists.

use rand::Rng;
use serde::{Deserialize, Serialize};

use spancal_core::corpus::Passage;
use spancal_core::rng::derive_rng;
use spancal_core::synth::{build_pbr_records, self_noise_augment, HeuristicTyper, Mode, NoisePolicy};
use spancal_core::{CalibrationExample, LabeledSentence, Span, TokenSeq};

use crate::decode::MAX_SPAN_NER;
use crate::heads::LossWeights;
use crate::params::ModelConfig;
use crate::train::{EpochLog, TrainConfig};
use crate::{Calibrator, ModelError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub passages: usize,
    /// Total word types, entity words included.
    pub vocab: usize,
    pub types: Vec<String>,
    /// Words per entity type.
    pub type_words: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub max_entity_len: usize,
    /// Filler tokens between entity runs.
    pub min_gap: usize,
    pub max_gap: usize,
    pub language: String,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            passages: 2000,
            vocab: 200,
            types: vec!["LOC".into(), "ORG".into(), "PER".into()],
            type_words: 20,
            min_len: 50,
            max_len: 64,
            max_entity_len: 4,
            min_gap: 3,
            max_gap: 16,
            language: "en".into(),
            seed: 0,
        }
    }
}

fn capitalized(t: &str) -> String {
    let mut c = t.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c.flat_map(char::to_lowercase)).collect(),
        None => String::new(),
    }
}

/// Passages with every entity run as a typed anchor. Panics if the entity
/// word lists do not fit in `vocab`.
pub fn synthetic_passages(cfg: &SyntheticConfig) -> Vec<Passage> {
    let entity_words = cfg.types.len() * cfg.type_words;
    assert!(entity_words < cfg.vocab, "entity words must leave room for filler words");
    let filler: Vec<String> = (0..cfg.vocab - entity_words).map(|i| format!("w{i:03}")).collect();
    let lexicon: Vec<Vec<String>> = cfg
        .types
        .iter()
        .map(|t| (0..cfg.type_words).map(|i| format!("{}{i:02}", capitalized(t))).collect())
        .collect();
    (0..cfg.passages)
        .map(|k| {
            let id = format!("syn{k:05}");
            let mut rng = derive_rng(cfg.seed, &id);
            let n = rng.gen_range(cfg.min_len..=cfg.max_len);
            let mut tokens: Vec<&str> = (0..n).map(|_| filler[rng.gen_range(0..filler.len())].as_str()).collect();
            let mut anchors = Vec::new();
            let mut pos = rng.gen_range(0..=cfg.max_gap.min(n));
            loop {
                let len = rng.gen_range(1..=cfg.max_entity_len);
                if pos + len > n {
                    break;
                }
                let ty = rng.gen_range(0..cfg.types.len());
                for tok in &mut tokens[pos..pos + len] {
                    *tok = lexicon[ty][rng.gen_range(0..cfg.type_words)].as_str();
                }
                anchors.push(Span::typed(pos, pos + len, cfg.types[ty].clone()));
                pos += len + rng.gen_range(cfg.min_gap..=cfg.max_gap);
            }
            Passage {
                id,
                language: cfg.language.clone(),
                text: TokenSeq::from_tokens(tokens).expect("synthetic tokens are non-empty"),
                anchors,
            }
        })
        .collect()
}

/// The same passages as BIO-labelled sentences.
pub fn as_sentences(passages: &[Passage]) -> Vec<LabeledSentence> {
    passages
        .iter()
        .map(|p| LabeledSentence::from_spans(p.text.clone(), &p.anchors).expect("anchors fit their passage"))
        .collect()
}

/// End-to-end desk run: PBR pre-training on garbled anchors (with
/// generated questions), typed fine-tuning with self-noise augmentation,
/// then exact-boundary EM on garbled held-out anchors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeskConfig {
    pub corpus: SyntheticConfig,
    /// Passages for pre-training and fine-tuning; the rest are held out.
    pub pretrain_passages: usize,
    pub finetune_passages: usize,
    pub model: ModelConfig,
    pub pretrain: TrainConfig,
    pub finetune: TrainConfig,
    pub phi: f64,
    pub seed: u64,
}

impl Default for DeskConfig {
    fn default() -> Self {
        Self {
            corpus: SyntheticConfig::default(),
            pretrain_passages: 1600,
            finetune_passages: 200,
            model: ModelConfig {
                d_model: 32,
                d_ff: 128,
                ..ModelConfig::desk(0, 0)
            },
            pretrain: TrainConfig {
                epochs: 8,
                lr: 3e-3,
                batch_size: 8,
                seed: 1,
                ..Default::default()
            },
            finetune: TrainConfig {
                epochs: 8,
                lr: 3e-3,
                batch_size: 8,
                seed: 2,
                ..Default::default()
            },
            phi: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeskReport {
    pub pretrain_records: usize,
    pub finetune_records: usize,
    pub heldout_records: usize,
    /// EM of the noisy spans themselves.
    pub floor_em: f64,
    pub pretrained_em: f64,
    pub final_em: f64,
    pub pretrain_log: Vec<EpochLog>,
    pub finetune_log: Vec<EpochLog>,
}

/// Fraction of examples whose calibrated span has the gold boundaries.
pub fn exact_boundary_em(model: &Calibrator, examples: &[CalibrationExample], max_span: usize) -> Result<f64, ModelError> {
    let mut hits = 0;
    for ex in examples {
        let p = model.predict(ex, max_span)?;
        hits += usize::from(p.span.same_bounds(&ex.gold));
    }
    Ok(hits as f64 / examples.len().max(1) as f64)
}

pub fn desk_run(cfg: &DeskConfig) -> Result<(Calibrator, DeskReport), ModelError> {
    let passages = synthetic_passages(&cfg.corpus);
    let (a, b) = (cfg.pretrain_passages, cfg.pretrain_passages + cfg.finetune_passages);
    if b >= passages.len() {
        return Err(ModelError::Config("no passages left for the held-out split".into()));
    }
    let policy = |key: &str| NoisePolicy {
        phi: cfg.phi,
        seed: derive_rng(cfg.seed, key).gen(),
        ..Default::default()
    };
    let synth = |ps: &[Passage], key: &str, mode| {
        build_pbr_records(ps, &policy(key), mode, &HeuristicTyper)
            .map(|(r, _)| r)
            .map_err(|e| ModelError::Data(e.to_string()))
    };
    let pre = synth(&passages[..a], "pretrain", Mode::Mrc)?;
    let ft = self_noise_augment(&synth(&passages[a..b], "finetune", Mode::Ner)?, &policy("sna"))
        .map_err(|e| ModelError::Data(e.to_string()))?;
    let held = synth(&passages[b..], "heldout", Mode::Ner)?;

    let floor_em = held.iter().filter(|e| e.noisy.same_bounds(&e.gold)).count() as f64 / held.len().max(1) as f64;
    let mut seen = pre.clone();
    seen.extend(ft.iter().cloned());
    let model = Calibrator::init(&seen, cfg.model.clone(), cfg.seed)?;
    let (model, pretrain_log) = model.fit(&pre, &LossWeights::pretrain(), &cfg.pretrain)?;
    let pretrained_em = exact_boundary_em(&model, &held, MAX_SPAN_NER)?;
    let (model, finetune_log) = model.fit(&ft, &LossWeights::ner(), &cfg.finetune)?;
    let final_em = exact_boundary_em(&model, &held, MAX_SPAN_NER)?;
    let report = DeskReport {
        pretrain_records: pre.len(),
        finetune_records: ft.len(),
        heldout_records: held.len(),
        floor_em,
        pretrained_em,
        final_em,
        pretrain_log,
        finetune_log,
    };
    Ok((model, report))
}
