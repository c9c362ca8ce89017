use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use spancal_core::textcore::{parse_conll, read_pbr_jsonl};
use spancal_core::{CalibrationExample, LabeledSentence, Span};

pub fn read_text(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn read_json(path: &Path) -> anyhow::Result<serde_json::Value> {
    serde_json::from_str(&read_text(path)?).with_context(|| format!("parsing JSON in {}", path.display()))
}

pub fn read_conll(path: &Path) -> anyhow::Result<Vec<LabeledSentence>> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    parse_conll(&bytes).with_context(|| format!("parsing CoNLL in {}", path.display()))
}

pub fn read_records(path: &Path) -> anyhow::Result<Vec<CalibrationExample>> {
    read_pbr_jsonl(&read_text(path)?).with_context(|| format!("parsing records in {}", path.display()))
}

/// Writes to `out`, or stdout when absent.
pub fn emit(out: Option<&Path>, content: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => fs::write(p, content).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(content.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

pub fn pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

pub fn jsonl<T: Serialize>(rows: &[T]) -> String {
    let mut out = String::new();
    for r in rows {
        out.push_str(&serde_json::to_string(r).expect("row serializes"));
        out.push('\n');
    }
    out
}

/// Per-sentence NER predictions; `sentence_id` indexes the gold file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentencePrediction {
    pub sentence_id: usize,
    pub spans: Vec<Span>,
}

/// Predictions aligned to `n` sentences; sentences without a line get none.
pub fn read_sentence_predictions(path: &Path, n: usize) -> anyhow::Result<Vec<Vec<Span>>> {
    let text = read_text(path)?;
    let mut out = vec![Vec::new(); n];
    let mut seen = vec![false; n];
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let row: SentencePrediction = serde_json::from_str(line)
            .with_context(|| format!("{}: line {}: bad prediction record", path.display(), i + 1))?;
        let id = row.sentence_id;
        if id >= n {
            bail!("{}: line {}: sentence_id {id} but the gold file has {n} sentences", path.display(), i + 1);
        }
        if std::mem::replace(&mut seen[id], true) {
            bail!("{}: line {}: sentence_id {id} repeated", path.display(), i + 1);
        }
        out[id] = row.spans;
    }
    Ok(out)
}

/// NER spans from either CoNLL or prediction JSONL, chosen by extension.
pub fn read_ner_predictions(path: &Path, n: usize) -> anyhow::Result<Vec<Vec<Span>>> {
    if path.extension().is_some_and(|e| e == "jsonl" || e == "json") {
        return read_sentence_predictions(path, n);
    }
    Ok(read_conll(path)?.iter().map(LabeledSentence::spans).collect())
}
