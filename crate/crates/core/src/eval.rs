//! Entity-level and span-level scoring, the boundary-error taxonomy and the
//! oracle upper bounds obtained by correcting boundaries or types.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pairing::{match_entities, MatchConfig};
use crate::textcore::Span;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("{pred} prediction units but {gold} gold units")]
    LengthMismatch { pred: usize, gold: usize },
    #[error("unit {unit}: at most one prediction expected for a reading-comprehension record, got {count}")]
    MultiplePredictions { unit: usize, count: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCategory {
    Exact,
    TypeOnly,
    AddingSpan,
    MissingSpan,
    CommonSpan,
    NoOverlap,
    Spurious,
    Missed,
}

/// Compares a prediction with one gold span. Labels take part only when the
/// bounds agree; an empty prediction counts as `NoOverlap`.
pub fn classify_error(pred: &Span, gold: &Span) -> ErrorCategory {
    if pred.same_bounds(gold) {
        if pred.label == gold.label {
            ErrorCategory::Exact
        } else {
            ErrorCategory::TypeOnly
        }
    } else if pred.is_empty() || !pred.intersects(gold) {
        ErrorCategory::NoOverlap
    } else if pred.contains(gold) {
        ErrorCategory::AddingSpan
    } else if gold.contains(pred) {
        ErrorCategory::MissingSpan
    } else {
        ErrorCategory::CommonSpan
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn from_counts(correct: usize, predicted: usize, gold: usize) -> Self {
        if predicted == 0 && gold == 0 {
            return Prf { precision: 1.0, recall: 1.0, f1: 1.0 };
        }
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(correct, predicted);
        let recall = ratio(correct, gold);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf { precision, recall, f1 }
    }
}

type Key<'a> = (usize, usize, Option<&'a str>);

fn key(s: &Span) -> Key<'_> {
    (s.start, s.end, s.label.as_deref())
}

/// Number of predictions matching a gold span in bounds and label, counting
/// duplicates at most as often as they occur in gold.
fn exact_hits(pred: &[Span], gold: &[Span]) -> usize {
    let mut bag: BTreeMap<Key, usize> = BTreeMap::new();
    for g in gold {
        *bag.entry(key(g)).or_default() += 1;
    }
    pred.iter()
        .filter(|p| match bag.get_mut(&key(p)) {
            Some(n) if *n > 0 => {
                *n -= 1;
                true
            }
            _ => false,
        })
        .count()
}

/// Micro-averaged entity P/R/F1 over aligned sentences.
pub fn entity_f1(pred: &[Vec<Span>], gold: &[Vec<Span>]) -> Result<Prf, EvalError> {
    check_len(pred.len(), gold.len())?;
    let (mut c, mut p, mut g) = (0, 0, 0);
    for (ps, gs) in pred.iter().zip(gold) {
        c += exact_hits(ps, gs);
        p += ps.len();
        g += gs.len();
    }
    Ok(Prf::from_counts(c, p, g))
}

fn check_len(pred: usize, gold: usize) -> Result<(), EvalError> {
    if pred == gold {
        Ok(())
    } else {
        Err(EvalError::LengthMismatch { pred, gold })
    }
}

fn remove_articles(s: &str) -> String {
    let is_word = |c: char| c.is_alphanumeric() || c == '_';
    let chars: Vec<char> = s.chars().collect();
    let mut out = String::with_capacity(s.len());
    let mut i = 0;
    while i < chars.len() {
        let at_boundary = i == 0 || !is_word(chars[i - 1]);
        let hit = at_boundary.then(|| {
            ["the", "an", "a"].iter().find_map(|art| {
                let n = art.len();
                let matches = chars.len() >= i + n
                    && chars[i..i + n].iter().copied().eq(art.chars())
                    && chars.get(i + n).is_none_or(|&c| !is_word(c));
                matches.then_some(n)
            })
        });
        match hit.flatten() {
            Some(n) => {
                out.push(' ');
                i += n;
            }
            None => {
                out.push(chars[i]);
                i += 1;
            }
        }
    }
    out
}

/// Lowercases, drops ASCII punctuation and the articles a/an/the, and
/// splits on whitespace.
pub fn normalize_answer(s: &str) -> Vec<String> {
    let lowered: String = s
        .to_lowercase()
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect();
    remove_articles(&lowered)
        .split_whitespace()
        .map(str::to_owned)
        .collect()
}

fn token_f1(pred: &[String], gold: &[String]) -> f64 {
    if pred.is_empty() || gold.is_empty() {
        return f64::from(u8::from(pred == gold));
    }
    let mut bag: BTreeMap<&str, usize> = BTreeMap::new();
    for g in gold {
        *bag.entry(g).or_default() += 1;
    }
    let mut same = 0usize;
    for p in pred {
        if let Some(n) = bag.get_mut(p.as_str()).filter(|n| **n > 0) {
            *n -= 1;
            same += 1;
        }
    }
    if same == 0 {
        return 0.0;
    }
    let precision = same as f64 / pred.len() as f64;
    let recall = same as f64 / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Token-bag F1 and exact match of one answer string, maximized over the gold
/// alternatives. No alternatives scores (0, 0).
pub fn span_f1_em(pred: &str, golds: &[&str]) -> (f64, f64) {
    let p = normalize_answer(pred);
    golds.iter().fold((0.0, 0.0), |(f, em), g| {
        let g = normalize_answer(g);
        let e = f64::from(u8::from(p == g));
        (f.max(token_f1(&p, &g)), em.max(e))
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryCounts {
    pub exact: usize,
    pub type_only: usize,
    pub no_overlap: usize,
    pub adding_span: usize,
    pub missing_span: usize,
    pub common_span: usize,
    pub spurious: usize,
    pub missed: usize,
}

impl CategoryCounts {
    pub fn add(&mut self, c: ErrorCategory) {
        let slot = match c {
            ErrorCategory::Exact => &mut self.exact,
            ErrorCategory::TypeOnly => &mut self.type_only,
            ErrorCategory::AddingSpan => &mut self.adding_span,
            ErrorCategory::MissingSpan => &mut self.missing_span,
            ErrorCategory::CommonSpan => &mut self.common_span,
            ErrorCategory::NoOverlap => &mut self.no_overlap,
            ErrorCategory::Spurious => &mut self.spurious,
            ErrorCategory::Missed => &mut self.missed,
        };
        *slot += 1;
    }

    pub fn errors(&self) -> usize {
        self.type_only
            + self.no_overlap
            + self.adding_span
            + self.missing_span
            + self.common_span
            + self.spurious
            + self.missed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Ner,
    Mrc,
}

/// One row of the boundary-error table. `test_size` counts comparison
/// units: questions for MRC; matched pairs plus unmatched predictions and
/// golds for NER.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub language: String,
    pub test_size: usize,
    pub error_cases: usize,
    #[serde(flatten)]
    pub counts: CategoryCounts,
}

fn closest<'a>(p: &Span, golds: impl Iterator<Item = (usize, &'a Span)>) -> Option<(usize, &'a Span)> {
    golds
        .filter(|(_, g)| g.overlap(p) > 0)
        .min_by_key(|(i, g)| (std::cmp::Reverse(g.overlap(p)), g.start.abs_diff(p.start), *i))
}

fn ner_categories(pred: &[Span], gold: &[Span], out: &mut CategoryCounts) {
    let mut used = vec![false; gold.len()];
    let mut pending = Vec::new();
    for p in pred {
        match (0..gold.len()).find(|&i| !used[i] && gold[i].same_bounds(p)) {
            Some(i) => {
                used[i] = true;
                out.add(classify_error(p, &gold[i]));
            }
            None => pending.push(p),
        }
    }
    for p in pending {
        let free = gold.iter().enumerate().filter(|(i, _)| !used[*i]);
        match closest(p, free) {
            Some((i, g)) => {
                used[i] = true;
                out.add(classify_error(p, g));
            }
            None => out.add(ErrorCategory::Spurious),
        }
    }
    for _ in used.iter().filter(|u| !**u) {
        out.add(ErrorCategory::Missed);
    }
}

fn mrc_category(pred: Option<&Span>, gold: &[Span]) -> ErrorCategory {
    let Some(p) = pred.filter(|p| !p.is_empty()) else {
        return ErrorCategory::NoOverlap;
    };
    let untyped = Span::new(p.start, p.end);
    if gold.iter().any(|g| g.same_bounds(p)) {
        return ErrorCategory::Exact;
    }
    match closest(p, gold.iter().enumerate()) {
        Some((_, g)) => classify_error(&untyped, &Span::new(g.start, g.end)),
        None => ErrorCategory::NoOverlap,
    }
}

/// Tallies error categories. For NER each unit is a sentence and spans are
/// aligned one-to-one (same bounds first, then largest overlap); for MRC
/// each unit is a question with at most one prediction and any number of
/// gold alternatives.
pub fn error_report(
    task: Task,
    pred: &[Vec<Span>],
    gold: &[Vec<Span>],
    language: &str,
) -> Result<ErrorReport, EvalError> {
    check_len(pred.len(), gold.len())?;
    let mut counts = CategoryCounts::default();
    for (unit, (ps, gs)) in pred.iter().zip(gold).enumerate() {
        match task {
            Task::Ner => ner_categories(ps, gs, &mut counts),
            Task::Mrc => {
                if ps.len() > 1 {
                    return Err(EvalError::MultiplePredictions { unit, count: ps.len() });
                }
                counts.add(mrc_category(ps.first(), gs));
            }
        }
    }
    let error_cases = counts.errors();
    Ok(ErrorReport {
        language: language.to_owned(),
        test_size: counts.exact + error_cases,
        error_cases,
        counts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OracleMode {
    BoundaryCorrect,
    TypeCorrect,
}

/// Entity F1 after an oracle fixes each wrong prediction. Predictions are
/// paired with golds by [`match_entities`] over the entire sentence; a
/// prediction that already matches a gold exactly is left alone.
pub fn oracle_upper_bounds(
    pred: &[Vec<Span>],
    gold: &[Vec<Span>],
    mode: OracleMode,
) -> Result<Prf, EvalError> {
    check_len(pred.len(), gold.len())?;
    let cfg = MatchConfig::default();
    let corrected: Vec<Vec<Span>> = pred
        .iter()
        .zip(gold)
        .map(|(ps, gs)| {
            let len = ps.iter().chain(gs).map(|s| s.end).max().unwrap_or(0);
            let report = match_entities(ps, gs, len, &cfg);
            ps.iter()
                .zip(&report.pairs)
                .map(|(p, pair)| {
                    if gs.contains(p) {
                        return p.clone();
                    }
                    match (mode, pair.golds.first()) {
                        (OracleMode::BoundaryCorrect, Some(g)) => {
                            Span::new(g.start, g.end).with_label(p.label.clone())
                        }
                        (OracleMode::TypeCorrect, paired) => {
                            let same = gs.iter().find(|g| g.same_bounds(p)).or(paired);
                            p.clone().with_label(same.map_or(p.label.clone(), |g| g.label.clone()))
                        }
                        (OracleMode::BoundaryCorrect, None) => p.clone(),
                    }
                })
                .collect()
        })
        .collect();
    entity_f1(&corrected, gold)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: usize, e: usize, l: &str) -> Span {
        Span::typed(s, e, l)
    }

    #[test]
    fn taxonomy_examples() {
        let u = Span::new;
        assert_eq!(classify_error(&u(3, 7), &u(4, 6)), ErrorCategory::AddingSpan);
        assert_eq!(classify_error(&u(2, 5), &u(4, 8)), ErrorCategory::CommonSpan);
        assert_eq!(classify_error(&u(0, 2), &u(5, 7)), ErrorCategory::NoOverlap);
        assert_eq!(classify_error(&u(4, 5), &u(4, 6)), ErrorCategory::MissingSpan);
        assert_eq!(classify_error(&t(4, 6, "PER"), &t(4, 6, "LOC")), ErrorCategory::TypeOnly);
        assert_eq!(classify_error(&t(4, 6, "PER"), &t(4, 6, "PER")), ErrorCategory::Exact);
        assert_eq!(classify_error(&u(4, 4), &u(3, 6)), ErrorCategory::NoOverlap);
    }

    #[test]
    fn entity_f1_examples() {
        let one = vec![vec![t(0, 2, "PER")]];
        assert_eq!(entity_f1(&one, &one).unwrap().f1, 1.0);
        let loc = vec![vec![t(0, 2, "LOC")]];
        assert_eq!(entity_f1(&one, &loc).unwrap().f1, 0.0);
        let two = vec![vec![t(0, 2, "PER"), t(3, 4, "ORG")]];
        let r = entity_f1(&two, &one).unwrap();
        assert_eq!((r.precision, r.recall), (0.5, 1.0));
        assert!((r.f1 - 2.0 / 3.0).abs() < 1e-15);
        let empty: Vec<Vec<Span>> = vec![vec![]];
        assert_eq!(entity_f1(&empty, &empty).unwrap().f1, 1.0);
        assert!(entity_f1(&empty, &[]).is_err());
    }

    #[test]
    fn duplicate_predictions_count_once() {
        let p = vec![vec![t(0, 2, "PER"), t(0, 2, "PER")]];
        let g = vec![vec![t(0, 2, "PER")]];
        assert_eq!(entity_f1(&p, &g).unwrap().precision, 0.5);
    }

    #[test]
    fn span_scores() {
        assert_eq!(span_f1_em("red cat", &["red cat"]), (1.0, 1.0));
        assert_eq!(span_f1_em("the red cat", &["red cat"]), (1.0, 1.0));
        let (f, em) = span_f1_em("the red cat", &["big red cat"]);
        assert!((f - 0.8).abs() < 1e-12);
        assert_eq!(em, 0.0);
        assert_eq!(span_f1_em("dog", &["red cat"]), (0.0, 0.0));
        assert_eq!(span_f1_em("dog", &["red cat", "Dog!"]), (1.0, 1.0));
        assert_eq!(span_f1_em("the", &["a"]), (1.0, 1.0));
        assert_eq!(span_f1_em("x", &[]), (0.0, 0.0));
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_answer("The  Cat, an apple."), ["cat", "apple"]);
        assert_eq!(normalize_answer("theatre anarchy"), ["theatre", "anarchy"]);
        assert_eq!(normalize_answer("Über—the end"), ["über—", "end"]);
    }

    #[test]
    fn ner_report() {
        let pred = vec![vec![t(0, 2, "PER"), t(4, 7, "LOC"), t(10, 11, "ORG"), t(20, 21, "PER")]];
        let gold = vec![vec![t(0, 2, "PER"), t(5, 7, "LOC"), t(10, 11, "LOC"), t(14, 15, "PER")]];
        let r = error_report(Task::Ner, &pred, &gold, "en").unwrap();
        assert_eq!(r.counts.exact, 1);
        assert_eq!(r.counts.adding_span, 1);
        assert_eq!(r.counts.type_only, 1);
        assert_eq!(r.counts.spurious, 1);
        assert_eq!(r.counts.missed, 1);
        assert_eq!((r.test_size, r.error_cases), (5, 4));
    }

    #[test]
    fn mrc_report() {
        let pred = vec![vec![Span::new(1, 3)], vec![], vec![Span::new(2, 4)], vec![Span::new(0, 1)]];
        let gold = vec![
            vec![Span::new(1, 3)],
            vec![Span::new(0, 1)],
            vec![Span::new(9, 10), Span::new(3, 6)],
            vec![Span::new(4, 5)],
        ];
        let r = error_report(Task::Mrc, &pred, &gold, "de").unwrap();
        assert_eq!(r.test_size, 4);
        assert_eq!(r.error_cases, 3);
        assert_eq!((r.counts.no_overlap, r.counts.common_span), (2, 1));
        let many = vec![vec![Span::new(0, 1), Span::new(1, 2)]];
        assert!(error_report(Task::Mrc, &many, &[vec![]], "de").is_err());
    }

    #[test]
    fn all_correct_has_no_errors() {
        let g = vec![vec![t(0, 1, "PER"), t(3, 5, "ORG")], vec![]];
        let r = error_report(Task::Ner, &g, &g, "es").unwrap();
        assert_eq!(r.error_cases, 0);
        assert_eq!(r.test_size, 2);
    }

    #[test]
    fn oracles_fix_what_they_claim() {
        let pred = vec![vec![t(0, 3, "PER"), t(5, 6, "ORG")]];
        let gold = vec![vec![t(1, 3, "PER"), t(5, 6, "LOC")]];
        let base = entity_f1(&pred, &gold).unwrap().f1;
        let b = oracle_upper_bounds(&pred, &gold, OracleMode::BoundaryCorrect).unwrap();
        let ty = oracle_upper_bounds(&pred, &gold, OracleMode::TypeCorrect).unwrap();
        assert_eq!(base, 0.0);
        assert_eq!(b.f1, 0.5);
        assert_eq!(ty.f1, 0.5);
    }
}
