//! Training and inference stages: `pretrain`, `finetune`, `predict`.

use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use log::{info, warn};

use spancal_core::synth::self_noise_augment;
use spancal_core::textcore::spans_from_bio;
use spancal_core::CalibrationExample;
use spancal_model::decode::{MAX_SPAN_MRC, MAX_SPAN_NER};
use spancal_model::{Calibrator, EpochLog, LossWeights, ModelConfig, ModelError, Tagger, TrainConfig};

use crate::config::{parse_task, PipelineConfig, TrainSection};
use crate::data::{noise_policy, sna_policy};
use crate::io::{emit, jsonl, read_conll, read_json, read_records, SentencePrediction};
use crate::UsageError;

/// Shape and optimizer flags shared by both training stages.
#[derive(Args, Debug)]
pub struct TrainFlags {
    /// Training data: calibration records (JSONL), or CoNLL with --tagger.
    #[arg(long)]
    pub train: PathBuf,
    /// Start from this checkpoint instead of a fresh model.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub d_model: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub d_ff: Option<usize>,
    #[arg(long)]
    pub blocks: Option<usize>,
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Per-epoch loss breakdown as JSONL.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FinetuneArgs {
    #[command(flatten)]
    pub flags: TrainFlags,
    /// Loss weights: `ner` (0.3/0.3/0.4) or `mrc` (0.5/0/0.5).
    #[arg(long)]
    pub task: Option<String>,
    /// Add self-noise-augmented copies of the training records.
    #[arg(long)]
    pub sna: bool,
    /// Noise rate for --sna.
    #[arg(long, requires = "sna")]
    pub phi: Option<f64>,
    /// Train the first-pass BIO tagger instead of the calibrator.
    #[arg(long, conflicts_with_all = ["sna", "task"])]
    pub tagger: bool,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    /// Checkpoint from `pretrain` / `finetune`.
    #[arg(long)]
    pub model: PathBuf,
    /// Calibration records for a calibrator, CoNLL for a tagger.
    #[arg(long)]
    pub input: PathBuf,
    /// Longest calibrated span; 8 for NER records and 30 for records
    /// with a question when omitted.
    #[arg(long)]
    pub max_span: Option<usize>,
}

struct Resolved {
    model: ModelConfig,
    train: TrainConfig,
    seed: u64,
}

fn resolve(f: &TrainFlags, s: &TrainSection, cfg: &PipelineConfig) -> Result<Resolved, UsageError> {
    let seed = cfg.seed(f.seed, s.seed);
    let model = ModelConfig {
        d_model: f.d_model.unwrap_or(s.d_model),
        heads: f.heads.unwrap_or(s.heads),
        d_ff: f.d_ff.unwrap_or(s.d_ff),
        blocks: f.blocks.unwrap_or(s.blocks),
        max_len: f.max_len.unwrap_or(s.max_len),
        ..ModelConfig::desk(1, 1)
    };
    model.validate().map_err(|e| UsageError(e.to_string()))?;
    let train = TrainConfig {
        epochs: f.epochs.unwrap_or(s.epochs),
        lr: f.lr.unwrap_or(s.lr),
        batch_size: f.batch_size.unwrap_or(s.batch_size),
        seed,
        weight_decay: s.weight_decay,
        warmup: s.warmup,
        cycles: s.cycles,
        clip: s.clip,
        negatives: s.negatives,
        mlm_rate: s.mlm_rate,
    };
    train.validate().map_err(|e| UsageError(e.to_string()))?;
    Ok(Resolved { model, train, seed })
}

fn weights(base: LossWeights, s: &TrainSection) -> Result<LossWeights, UsageError> {
    let w = LossWeights {
        alpha: s.alpha.unwrap_or(base.alpha),
        beta: s.beta.unwrap_or(base.beta),
        gamma: s.gamma.unwrap_or(base.gamma),
        mlm: s.mlm.unwrap_or(base.mlm),
    };
    w.validate().map_err(|e| UsageError(e.to_string()))?;
    Ok(w)
}

fn write_log(path: Option<&Path>, log: &[EpochLog]) -> anyhow::Result<()> {
    if let Some(p) = path {
        emit(Some(p), &jsonl(log))?;
    }
    Ok(())
}

fn checkpoint_text(doc: &serde_json::Value) -> String {
    let mut s = serde_json::to_string(doc).expect("checkpoint serializes");
    s.push('\n');
    s
}

/// On divergence the last finite parameters go next to the requested output.
fn save_last_good(err: &ModelError, out: Option<&Path>, bundle: impl FnOnce(&spancal_model::ModelParams) -> serde_json::Value) {
    if let (ModelError::Diverged { last_good, .. }, Some(out)) = (err, out) {
        let mut name = out.as_os_str().to_owned();
        name.push(".last_good.json");
        let path = PathBuf::from(name);
        match std::fs::write(&path, checkpoint_text(&bundle(last_good))) {
            Ok(()) => warn!("last good parameters written to {}", path.display()),
            Err(e) => warn!("could not write {}: {e}", path.display()),
        }
    }
}

fn load_calibrator(path: &Path) -> anyhow::Result<Calibrator> {
    Calibrator::from_json(&read_json(path)?).with_context(|| format!("loading {}", path.display()))
}

fn train_calibrator(
    model: Calibrator,
    records: &[CalibrationExample],
    w: &LossWeights,
    r: &Resolved,
    flags: &TrainFlags,
    out: Option<&Path>,
) -> anyhow::Result<()> {
    info!(
        "training on {} records: {} parameters, {} epochs",
        records.len(),
        model.params.param_count(),
        r.train.epochs
    );
    let (vocab, types) = (model.vocab.clone(), model.types.clone());
    let (model, log) = match model.fit(records, w, &r.train) {
        Ok(x) => x,
        Err(e) => {
            save_last_good(&e, out, |p| Calibrator { params: p.clone(), vocab, types }.to_json());
            return Err(e.into());
        }
    };
    write_log(flags.log.as_deref(), &log)?;
    emit(out, &checkpoint_text(&model.to_json()))
}

pub fn pretrain(f: &TrainFlags, cfg: &PipelineConfig, out: Option<&Path>) -> anyhow::Result<()> {
    let s = &cfg.pretrain;
    let r = resolve(f, s, cfg)?;
    let w = weights(LossWeights::pretrain(), s)?;
    let records = read_records(&f.train)?;
    let model = match &f.init {
        Some(p) => load_calibrator(p)?,
        None => Calibrator::init(&records, r.model.clone(), r.seed)?,
    };
    train_calibrator(model, &records, &w, &r, f, out)
}

pub fn finetune(a: &FinetuneArgs, cfg: &PipelineConfig, out: Option<&Path>) -> anyhow::Result<()> {
    let s = &cfg.finetune;
    let f = &a.flags;
    let r = resolve(f, s, cfg)?;
    if a.tagger {
        let sentences = read_conll(&f.train)?;
        let tagger = match &f.init {
            Some(p) => Tagger::from_json(&read_json(p)?).with_context(|| format!("loading {}", p.display()))?,
            None => Tagger::init(&sentences, r.model.clone(), r.seed)?,
        };
        info!("training tagger on {} sentences, {} epochs", sentences.len(), r.train.epochs);
        let (vocab, labels) = (tagger.vocab.clone(), tagger.labels.clone());
        let (tagger, log) = match tagger.fit(&sentences, &r.train) {
            Ok(x) => x,
            Err(e) => {
                save_last_good(&e, out, |p| Tagger { params: p.clone(), vocab, labels }.to_json());
                return Err(e.into());
            }
        };
        write_log(f.log.as_deref(), &log)?;
        return emit(out, &checkpoint_text(&tagger.to_json()));
    }
    let base = match parse_task(a.task.as_deref().unwrap_or(&s.task))? {
        spancal_core::eval::Task::Ner => LossWeights::ner(),
        spancal_core::eval::Task::Mrc => LossWeights::mrc(),
    };
    let w = weights(base, s)?;
    let mut records = read_records(&f.train)?;
    if a.sna {
        let policy = noise_policy(a.phi.unwrap_or(cfg.synth.phi), cfg.synth.op_weights, r.seed)?;
        records = self_noise_augment(&records, &sna_policy(&policy))?;
    }
    let model = match &f.init {
        Some(p) => {
            let mut m = load_calibrator(p)?;
            m.retype(&records, r.seed)?;
            m
        }
        None => Calibrator::init(&records, r.model.clone(), r.seed)?,
    };
    train_calibrator(model, &records, &w, &r, f, out)
}

pub fn predict(a: &PredictArgs, cfg: &PipelineConfig, out: Option<&Path>) -> anyhow::Result<()> {
    let doc = read_json(&a.model)?;
    let max_span = a.max_span.or(cfg.predict.max_span);
    if max_span == Some(0) {
        return Err(UsageError("--max-span must be positive".into()).into());
    }
    if doc["kind"] == "tagger" {
        let tagger = Tagger::from_json(&doc).with_context(|| format!("loading {}", a.model.display()))?;
        let sentences = read_conll(&a.input)?;
        let mut rows = Vec::with_capacity(sentences.len());
        for (i, s) in sentences.iter().enumerate() {
            let toks: Vec<&str> = s.tokens.tokens().collect();
            rows.push(SentencePrediction {
                sentence_id: i,
                spans: spans_from_bio(&tagger.tag(&toks)?),
            });
        }
        info!("tagged {} sentences", rows.len());
        return emit(out, &jsonl(&rows));
    }
    let model = load_calibrator(&a.model)?;
    let records = read_records(&a.input)?;
    let mut rows = Vec::with_capacity(records.len());
    for ex in &records {
        let limit = max_span.unwrap_or(if ex.has_question() { MAX_SPAN_MRC } else { MAX_SPAN_NER });
        rows.push(model.predict(ex, limit)?);
    }
    info!("calibrated {} records", rows.len());
    emit(out, &jsonl(&rows))
}
