//! `eval`: entity F1 with oracle upper bounds for NER, span F1/EM and the
//! boundary-error table for calibration records.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use log::info;
use serde::{Deserialize, Serialize};

use spancal_core::eval::{entity_f1, error_report, oracle_upper_bounds, span_f1_em, ErrorReport, EvalError, OracleMode, Prf, Task};
use spancal_core::{CalibrationExample, Span};

use crate::config::{parse_task, PipelineConfig};
use crate::io::{emit, pretty, read_conll, read_ner_predictions, read_records, read_text};

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// `ner`: CoNLL gold, CoNLL or `{sentence_id, spans}` JSONL predictions.
    /// `mrc`: calibration-record gold, `predict` output as predictions.
    #[arg(long)]
    pub task: Option<String>,
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gold: PathBuf,
    /// Report path (defaults to --out, then stdout).
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Language tag for NER report rows.
    #[arg(long)]
    pub language: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct UpperBounds {
    pub baseline: f64,
    pub boundary_correct: f64,
    pub type_correct: f64,
}

#[derive(Debug, Serialize)]
struct NerReport {
    task: &'static str,
    sentences: usize,
    entity: Prf,
    errors: Vec<ErrorReport>,
    upper_bounds: UpperBounds,
}

/// Span-level scores of one span per record against the record's gold.
#[derive(Debug, Serialize)]
pub struct SpanScores {
    pub records: usize,
    pub exact_boundary_em: f64,
    pub span_f1: f64,
    pub span_em: f64,
    /// One row per language.
    pub errors: Vec<ErrorReport>,
}

#[derive(Debug, Serialize)]
struct MrcReport {
    task: &'static str,
    calibrated: SpanScores,
    /// The records' own noisy spans, for comparison.
    noisy: SpanScores,
    fallbacks: usize,
}

pub fn span_scores(records: &[CalibrationExample], spans: &[Span]) -> Result<SpanScores, EvalError> {
    if records.len() != spans.len() {
        return Err(EvalError::LengthMismatch { pred: spans.len(), gold: records.len() });
    }
    let (mut exact, mut f1, mut em) = (0usize, 0.0, 0.0);
    let mut by_lang: BTreeMap<&str, (Vec<Vec<Span>>, Vec<Vec<Span>>)> = BTreeMap::new();
    for (r, s) in records.iter().zip(spans) {
        exact += usize::from(s.same_bounds(&r.gold));
        let (f, e) = span_f1_em(r.passage.span_text(s), &[r.passage.span_text(&r.gold)]);
        f1 += f;
        em += e;
        let (p, g) = by_lang.entry(&r.language).or_default();
        p.push(if s.is_empty() { vec![] } else { vec![Span::new(s.start, s.end)] });
        g.push(vec![Span::new(r.gold.start, r.gold.end)]);
    }
    let n = records.len().max(1) as f64;
    let errors = by_lang
        .into_iter()
        .map(|(lang, (p, g))| error_report(Task::Mrc, &p, &g, lang))
        .collect::<Result<_, _>>()?;
    Ok(SpanScores {
        records: records.len(),
        exact_boundary_em: exact as f64 / n,
        span_f1: f1 / n,
        span_em: em / n,
        errors,
    })
}

pub fn upper_bounds(pred: &[Vec<Span>], gold: &[Vec<Span>]) -> Result<UpperBounds, EvalError> {
    Ok(UpperBounds {
        baseline: entity_f1(pred, gold)?.f1,
        boundary_correct: oracle_upper_bounds(pred, gold, OracleMode::BoundaryCorrect)?.f1,
        type_correct: oracle_upper_bounds(pred, gold, OracleMode::TypeCorrect)?.f1,
    })
}

#[derive(Deserialize)]
struct RecordPrediction {
    id: String,
    span: Span,
    #[serde(default)]
    fallback: bool,
}

fn read_record_predictions(path: &Path, records: &[CalibrationExample]) -> anyhow::Result<(Vec<Span>, usize)> {
    let index: BTreeMap<&str, usize> = records.iter().enumerate().map(|(i, r)| (r.id.as_str(), i)).collect();
    // records without a prediction count as empty answers
    let mut spans = vec![Span::new(0, 0); records.len()];
    let mut seen = vec![false; records.len()];
    let mut fallbacks = 0;
    for (i, line) in read_text(path)?.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let p: RecordPrediction = serde_json::from_str(line)
            .with_context(|| format!("{}: line {}: bad prediction record", path.display(), i + 1))?;
        let Some(&k) = index.get(p.id.as_str()) else {
            bail!("{}: line {}: no gold record `{}`", path.display(), i + 1, p.id);
        };
        if std::mem::replace(&mut seen[k], true) {
            bail!("{}: line {}: `{}` predicted twice", path.display(), i + 1, p.id);
        }
        fallbacks += usize::from(p.fallback);
        spans[k] = p.span;
    }
    Ok((spans, fallbacks))
}

pub fn eval(a: &EvalArgs, cfg: &PipelineConfig, out: Option<&Path>) -> anyhow::Result<()> {
    let task = parse_task(a.task.as_deref().unwrap_or(&cfg.eval.task))?;
    let out = a.report.as_deref().or(out);
    let text = match task {
        Task::Ner => {
            let gold_sentences = read_conll(&a.gold)?;
            let gold: Vec<Vec<Span>> = gold_sentences.iter().map(|s| s.spans()).collect();
            let pred = read_ner_predictions(&a.pred, gold.len())?;
            let language = a.language.as_deref().unwrap_or(&cfg.eval.language);
            let report = NerReport {
                task: "ner",
                sentences: gold.len(),
                entity: entity_f1(&pred, &gold)?,
                errors: vec![error_report(Task::Ner, &pred, &gold, language)?],
                upper_bounds: upper_bounds(&pred, &gold)?,
            };
            info!(
                "entity F1 {:.4}; boundary-corrected {:.4}, type-corrected {:.4}",
                report.entity.f1, report.upper_bounds.boundary_correct, report.upper_bounds.type_correct
            );
            pretty(&report)
        }
        Task::Mrc => {
            let records = read_records(&a.gold)?;
            let (spans, fallbacks) = read_record_predictions(&a.pred, &records)?;
            let noisy: Vec<Span> = records.iter().map(|r| r.noisy.clone()).collect();
            let report = MrcReport {
                task: "mrc",
                calibrated: span_scores(&records, &spans)?,
                noisy: span_scores(&records, &noisy)?,
                fallbacks,
            };
            info!(
                "exact-boundary EM {:.4} (noisy input {:.4}), span F1 {:.4}",
                report.calibrated.exact_boundary_em, report.noisy.exact_boundary_em, report.calibrated.span_f1
            );
            pretty(&report)
        }
    };
    emit(out, &text)
}
