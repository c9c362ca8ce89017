//! Data stages: `ingest`, `synth`, `pairs`, `schedule` and `analyze`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use log::info;
use rand::Rng;
use serde::Serialize;

use spancal_core::corpus::{corpus_stats, filter_passages, read_pages, read_passages, write_passages, CorpusStats, FilterConfig, FilterReport, Passage};
use spancal_core::pairing::{match_entities, pairs_to_examples, window_consistency_f1, MatchConfig, MatchRule};
use spancal_core::rng::derive_rng;
use spancal_core::schedule::{build_stages, Override, Plan, ScheduleConfig};
use spancal_core::synth::{build_pbr_records, self_noise_augment, HeuristicTyper, Mode, NoisePolicy, SynthReport};
use spancal_core::textcore::write_pbr_jsonl;
use spancal_core::eval::ErrorReport;
use spancal_model::synthetic::{synthetic_passages, SyntheticConfig};

use crate::config::PipelineConfig;
use crate::eval::{span_scores, SpanScores};
use crate::io::{emit, pretty, read_conll, read_json, read_sentence_predictions, read_text};
use crate::UsageError;

#[derive(Args, Debug)]
pub struct IngestArgs {
    /// Wiki pages, one `{page_id, language, wikitext}` object per line.
    #[arg(long, required_unless_present = "synthetic")]
    pub input: Option<PathBuf>,
    /// Emit this many seeded synthetic passages instead of mining pages.
    #[arg(long, conflicts_with = "input")]
    pub synthetic: Option<usize>,
    #[arg(long)]
    pub min_tokens: Option<usize>,
    #[arg(long)]
    pub max_tokens: Option<usize>,
    #[arg(long)]
    pub max_anchor_tokens: Option<usize>,
    #[arg(long)]
    pub per_page_cap: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Filter counts and corpus statistics as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Serialize)]
struct IngestReport {
    filter: Option<FilterReport>,
    corpus: CorpusStats,
}

fn filter_config(a: &IngestArgs, cfg: &PipelineConfig) -> Result<FilterConfig, UsageError> {
    let s = &cfg.ingest;
    let f = FilterConfig {
        min_tokens: a.min_tokens.unwrap_or(s.min_tokens),
        max_tokens: a.max_tokens.unwrap_or(s.max_tokens),
        max_anchor_tokens: a.max_anchor_tokens.unwrap_or(s.max_anchor_tokens),
        per_page_cap: a.per_page_cap.or(s.per_page_cap),
        seed: cfg.seed(a.seed, s.seed),
    };
    if f.min_tokens > f.max_tokens || f.max_anchor_tokens == 0 {
        return Err(UsageError(format!(
            "need min-tokens <= max-tokens and max-anchor-tokens > 0, got {}/{}/{}",
            f.min_tokens, f.max_tokens, f.max_anchor_tokens
        )));
    }
    Ok(f)
}

fn mine(path: &Path, f: &FilterConfig) -> anyhow::Result<(Vec<Passage>, FilterReport)> {
    let pages = read_pages(&read_text(path)?).with_context(|| format!("parsing pages in {}", path.display()))?;
    let (passages, report) = filter_passages(&pages, f);
    info!(
        "{} pages, {} candidates, kept {} passages",
        report.pages, report.candidates, report.kept
    );
    Ok((passages, report))
}

pub fn ingest(a: &IngestArgs, cfg: &PipelineConfig, out: Option<&Path>) -> anyhow::Result<()> {
    let f = filter_config(a, cfg)?;
    let (passages, filter) = match (&a.input, a.synthetic) {
        (Some(path), _) => {
            let (p, r) = mine(path, &f)?;
            (p, Some(r))
        }
        (None, Some(n)) => {
            let p = synthetic_passages(&SyntheticConfig { passages: n, seed: f.seed, ..Default::default() });
            info!("generated {} synthetic passages", p.len());
            (p, None)
        }
        (None, None) => unreachable!("clap requires one of --input / --synthetic"),
    };
    if let Some(r) = &a.report {
        emit(Some(r), &pretty(&IngestReport { filter, corpus: corpus_stats(&passages) }))?;
    }
    emit(out, &write_passages(&passages))
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Passages JSONL from `ingest`.
    #[arg(long)]
    pub input: PathBuf,
    /// Probability of garbling each gold span.
    #[arg(long)]
    pub phi: Option<f64>,
    /// `ner` puts [PAD] in the question slot, `mrc` generates a question.
    #[arg(long)]
    pub mode: Option<String>,
    /// Relative weights of add, delete and shift, e.g. `1,1,1`.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub op_weights: Option<Vec<f64>>,
    /// Take op weights from a measured error report (or an `eval` report).
    #[arg(long, conflicts_with = "op_weights")]
    pub empirical: Option<PathBuf>,
    /// Append self-noise-augmented copies.
    #[arg(long)]
    pub sna: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Noise tallies as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

pub fn parse_mode(s: &str) -> Result<Mode, UsageError> {
    match s {
        "ner" => Ok(Mode::Ner),
        "mrc" => Ok(Mode::Mrc),
        _ => Err(UsageError(format!("unknown mode `{s}` (expected ner or mrc)"))),
    }
}

fn empirical_report(path: &Path) -> anyhow::Result<ErrorReport> {
    let doc = read_json(path)?;
    // an `eval` report carries its error rows under `errors`
    let row = match doc.get("errors").or_else(|| doc.pointer("/calibrated/errors")) {
        Some(serde_json::Value::Array(rows)) => rows.first().cloned().unwrap_or_default(),
        Some(row) => row.clone(),
        None => doc.clone(),
    };
    serde_json::from_value(row).with_context(|| format!("{}: not an error report", path.display()))
}

pub fn noise_policy(phi: f64, weights: [f64; 3], seed: u64) -> Result<NoisePolicy, UsageError> {
    let p = NoisePolicy { phi, op_weights: weights, seed };
    p.validate().map_err(|e| UsageError(e.to_string()))?;
    Ok(p)
}

/// Seed of the self-noise stream, kept apart from the base noise stream.
pub fn sna_policy(base: &NoisePolicy) -> NoisePolicy {
    NoisePolicy {
        seed: derive_rng(base.seed, "sna").gen(),
        ..base.clone()
    }
}

pub fn synth(a: &SynthArgs, cfg: &PipelineConfig, out: Option<&Path>) -> anyhow::Result<()> {
    let s = &cfg.synth;
    let phi = a.phi.unwrap_or(s.phi);
    let seed = cfg.seed(a.seed, s.seed);
    let mode = parse_mode(a.mode.as_deref().unwrap_or(&s.mode))?;
    let policy = match (&a.empirical, &a.op_weights) {
        (Some(path), _) => {
            let report = empirical_report(path)?;
            NoisePolicy::empirical(&report, phi, seed).map_err(|e| UsageError(e.to_string()))?
        }
        (None, Some(w)) => noise_policy(phi, [w[0], w[1], w[2]], seed)?,
        (None, None) => noise_policy(phi, s.op_weights, seed)?,
    };
    let passages = read_passages(&read_text(&a.input)?).with_context(|| format!("parsing passages in {}", a.input.display()))?;
    let (mut records, report) = build_pbr_records(&passages, &policy, mode, &HeuristicTyper)?;
    if a.sna || s.sna {
        records = self_noise_augment(&records, &sna_policy(&policy))?;
    }
    info!(
        "{} records from {} passages ({} unchanged, {} add, {} delete, {} shift, {} flagged)",
        records.len(),
        passages.len(),
        report.unchanged,
        report.added,
        report.deleted,
        report.shifted,
        report.flagged
    );
    if let Some(r) = &a.report {
        emit(Some(r), &pretty(&report))?;
    }
    emit(out, &write_pbr_jsonl(&records))
}

#[derive(Args, Debug)]
pub struct PairsArgs {
    /// First-pass predictions, one `{sentence_id, spans}` object per line.
    #[arg(long)]
    pub predictions: PathBuf,
    /// Gold CoNLL; `sentence_id` is the 0-based sentence index.
    #[arg(long)]
    pub gold: PathBuf,
    /// Window (tokens) for predictions overlapping no gold; the entire
    /// sentence when omitted.
    #[arg(long)]
    pub n_win: Option<usize>,
    #[arg(long)]
    pub language: Option<String>,
    /// Rule counts and window-consistency F1 as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Serialize)]
struct PairsReport {
    sentences: usize,
    pairs: usize,
    records: usize,
    unpaired: usize,
    rules: BTreeMap<&'static str, usize>,
    window_consistency_f1: f64,
}

pub fn pairs(a: &PairsArgs, cfg: &PipelineConfig, out: Option<&Path>) -> anyhow::Result<()> {
    let gold = read_conll(&a.gold)?;
    let preds = read_sentence_predictions(&a.predictions, gold.len())?;
    let language = a.language.clone().unwrap_or_else(|| cfg.pairs.language.clone());
    let mc = MatchConfig { n_win: a.n_win.or(cfg.pairs.n_win) };
    let mut reports = Vec::with_capacity(gold.len());
    let mut records = Vec::new();
    for (i, (s, p)) in gold.iter().zip(&preds).enumerate() {
        let report = match_entities(p, &s.spans(), s.len(), &mc);
        records.extend(pairs_to_examples(&format!("sent{i:05}"), &s.tokens, &report, &language));
        reports.push(report);
    }
    let f1 = window_consistency_f1(&gold, &reports)?;
    let mut rules = BTreeMap::new();
    let mut unpaired = 0;
    for pair in reports.iter().flat_map(|r| &r.pairs) {
        let name = match pair.rule {
            MatchRule::Sequential => "sequential",
            MatchRule::Overlap => "overlap",
            MatchRule::Window => "window",
            MatchRule::WholeSentence => "whole_sentence",
        };
        *rules.entry(name).or_insert(0) += 1;
        unpaired += usize::from(pair.golds.is_empty());
    }
    info!("{} records from {} sentences, window-consistency F1 {f1:.4}", records.len(), gold.len());
    if let Some(r) = &a.report {
        let report = PairsReport {
            sentences: gold.len(),
            pairs: reports.iter().map(|r| r.pairs.len()).sum(),
            records: records.len(),
            unpaired,
            rules,
            window_consistency_f1: f1,
        };
        emit(Some(r), &pretty(&report))?;
    }
    emit(out, &write_pbr_jsonl(&records))
}

#[derive(Args, Debug)]
pub struct ScheduleArgs {
    /// `continual`, `sequential` or `mixed`.
    #[arg(long)]
    pub plan: Option<String>,
    /// Corpus sizes in training order, e.g. `en:78000,es:35000`.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Vec<String>,
    /// Fraction of an earlier language kept once a newer one arrives.
    #[arg(long)]
    pub retain: Option<f64>,
    /// Sample later stages from the previous stage's ids.
    #[arg(long)]
    pub nested: Option<bool>,
    /// Force a count: `stage:lang:count` (repeatable).
    #[arg(long = "override")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write one `stageN.json` manifest per stage here.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

fn parse_size(s: &str) -> Result<(String, usize), UsageError> {
    let bad = || UsageError(format!("size `{s}` is not of the form lang:count"));
    let (lang, n) = s.split_once(':').ok_or_else(bad)?;
    if lang.is_empty() {
        return Err(bad());
    }
    Ok((lang.to_owned(), n.parse().map_err(|_| bad())?))
}

pub fn schedule(a: &ScheduleArgs, cfg: &PipelineConfig, out: Option<&Path>) -> anyhow::Result<()> {
    let s = &cfg.schedule;
    let plan: Plan = a.plan.as_deref().unwrap_or(&s.plan).parse().map_err(UsageError)?;
    let raw_sizes = if a.sizes.is_empty() { &s.sizes } else { &a.sizes };
    if raw_sizes.is_empty() {
        return Err(UsageError("no corpus sizes given (--sizes lang:count,...)".into()).into());
    }
    let sizes = raw_sizes.iter().map(|x| parse_size(x)).collect::<Result<Vec<_>, _>>()?;
    let raw_overrides = if a.overrides.is_empty() { &s.overrides } else { &a.overrides };
    let overrides = raw_overrides
        .iter()
        .map(|o| o.parse::<Override>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| UsageError(e.to_string()))?;
    let sc = ScheduleConfig {
        retain: a.retain.unwrap_or(s.retain),
        seed: cfg.seed(a.seed, s.seed),
        nested: a.nested.unwrap_or(s.nested),
        overrides,
    };
    let stages = build_stages(&sizes, plan, &sc).map_err(|e| UsageError(e.to_string()))?;
    for st in &stages {
        let counts: Vec<String> = st.languages.iter().map(|l| format!("{} {}", l.language, l.count)).collect();
        info!("stage {}: {}", st.stage, counts.join(", "));
    }
    if let Some(dir) = &a.out_dir {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for st in &stages {
            emit(Some(&dir.join(format!("stage{}.json", st.stage))), &pretty(st))?;
        }
    }
    emit(out, &pretty(&stages))
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    /// Wiki pages JSONL; mined with the `ingest` settings.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub phi: Option<f64>,
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Serialize)]
struct AnalyzeReport {
    filter: FilterReport,
    corpus: CorpusStats,
    synth: SynthReport,
    /// Injected noisy spans scored against their gold spans.
    noise: SpanScores,
}

/// Mines pages, synthesizes noisy records and reports the boundary-error
/// profile of the injected noise.
pub fn analyze(a: &AnalyzeArgs, cfg: &PipelineConfig, out: Option<&Path>) -> anyhow::Result<()> {
    let seed = cfg.seed(a.seed, None);
    let f = FilterConfig {
        min_tokens: cfg.ingest.min_tokens,
        max_tokens: cfg.ingest.max_tokens,
        max_anchor_tokens: cfg.ingest.max_anchor_tokens,
        per_page_cap: cfg.ingest.per_page_cap,
        seed: cfg.seed(a.seed, cfg.ingest.seed),
    };
    let (passages, filter) = mine(&a.input, &f)?;
    let policy = noise_policy(a.phi.unwrap_or(cfg.synth.phi), cfg.synth.op_weights, cfg.seed(a.seed, cfg.synth.seed))?;
    let mode = parse_mode(a.mode.as_deref().unwrap_or(&cfg.synth.mode))?;
    let (records, synth) = build_pbr_records(&passages, &policy, mode, &HeuristicTyper)?;
    let noisy: Vec<_> = records.iter().map(|r| r.noisy.clone()).collect();
    let noise = span_scores(&records, &noisy)?;
    info!(
        "seed {seed}: {} passages, {} records, noisy-span EM {:.4}",
        passages.len(),
        records.len(),
        noise.exact_boundary_em
    );
    let report = AnalyzeReport {
        filter,
        corpus: corpus_stats(&passages),
        synth,
        noise,
    };
    emit(out, &pretty(&report))
}
