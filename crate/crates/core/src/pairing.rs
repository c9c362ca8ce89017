//! Turns first-pass entity predictions into (noisy, gold) training pairs.
//!
//! Rules, applied per sentence in this order:
//! 1. no predictions: one pair whose noisy span is the whole sentence and
//!    whose targets are all gold entities;
//! 2. as many predictions as golds: the i-th prediction pairs with the i-th
//!    gold;
//! 3. otherwise each prediction takes the gold with the most common tokens,
//!    then the smallest start distance, then the earliest;
//! 4. a prediction sharing no token with any gold takes the nearest gold
//!    within `n_win` tokens of either edge (anywhere in the sentence when
//!    `n_win` is `None`), or stays unpaired.

use serde::{Deserialize, Serialize};

use crate::eval::{entity_f1, EvalError};
use crate::textcore::{CalibrationExample, LabeledSentence, Span, TokenSeq, PAD_TOKEN};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchConfig {
    pub n_win: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatchRule {
    Sequential,
    Overlap,
    Window,
    WholeSentence,
}

/// `golds` holds one span for Sequential/Overlap/Window, none for an
/// unmatched prediction, and every gold of the sentence for WholeSentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pair {
    pub noisy: Span,
    pub golds: Vec<Span>,
    pub rule: MatchRule,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchReport {
    pub pairs: Vec<Pair>,
}

impl MatchReport {
    /// Distinct gold spans reachable through some pair, in sentence order.
    pub fn reachable_golds(&self) -> Vec<Span> {
        let mut out: Vec<Span> = self.pairs.iter().flat_map(|p| p.golds.iter().cloned()).collect();
        out.sort();
        out.dedup();
        out
    }
}

fn best_overlap(p: &Span, golds: &[Span]) -> Option<Span> {
    golds
        .iter()
        .enumerate()
        .filter(|(_, g)| g.overlap(p) > 0)
        .min_by_key(|(i, g)| (std::cmp::Reverse(g.overlap(p)), g.start.abs_diff(p.start), *i))
        .map(|(_, g)| g.clone())
}

fn nearest_in_window(p: &Span, golds: &[Span], n_win: Option<usize>) -> Option<Span> {
    golds
        .iter()
        .enumerate()
        .filter(|(_, g)| n_win.is_none_or(|w| p.gap(g) < w))
        .min_by_key(|(i, g)| (p.gap(g), g.start.abs_diff(p.start), *i))
        .map(|(_, g)| g.clone())
}

/// Pairs predictions with golds inside one sentence of `sentence_len`
/// tokens. Every prediction appears in exactly one pair, in input order.
pub fn match_entities(predicted: &[Span], golden: &[Span], sentence_len: usize, cfg: &MatchConfig) -> MatchReport {
    if predicted.is_empty() {
        return MatchReport {
            pairs: vec![Pair {
                noisy: Span::new(0, sentence_len),
                golds: golden.to_vec(),
                rule: MatchRule::WholeSentence,
            }],
        };
    }
    if predicted.len() == golden.len() {
        let pairs = predicted
            .iter()
            .zip(golden)
            .map(|(p, g)| Pair {
                noisy: p.clone(),
                golds: vec![g.clone()],
                rule: MatchRule::Sequential,
            })
            .collect();
        return MatchReport { pairs };
    }
    let pairs = predicted
        .iter()
        .map(|p| match best_overlap(p, golden) {
            Some(g) => Pair {
                noisy: p.clone(),
                golds: vec![g],
                rule: MatchRule::Overlap,
            },
            None => Pair {
                noisy: p.clone(),
                golds: nearest_in_window(p, golden, cfg.n_win).into_iter().collect(),
                rule: MatchRule::Window,
            },
        })
        .collect();
    MatchReport { pairs }
}

/// Entity F1 between the golds reachable through the pairs and the original
/// gold entities, micro-averaged over sentences.
pub fn window_consistency_f1(labeled: &[LabeledSentence], reports: &[MatchReport]) -> Result<f64, EvalError> {
    if labeled.len() != reports.len() {
        return Err(EvalError::LengthMismatch {
            pred: reports.len(),
            gold: labeled.len(),
        });
    }
    let reached: Vec<Vec<Span>> = reports.iter().map(MatchReport::reachable_golds).collect();
    let gold: Vec<Vec<Span>> = labeled.iter().map(LabeledSentence::spans).collect();
    Ok(entity_f1(&reached, &gold)?.f1)
}

/// Calibration records for one sentence. A whole-sentence pair yields one
/// record per gold; unpaired predictions yield none. Ids are
/// `{sentence_id}/{k:03}`.
pub fn pairs_to_examples(
    sentence_id: &str,
    tokens: &TokenSeq,
    report: &MatchReport,
    language: &str,
) -> Vec<CalibrationExample> {
    let pad = TokenSeq::from_tokens([PAD_TOKEN]).expect("pad token is non-empty");
    report
        .pairs
        .iter()
        .flat_map(|pair| pair.golds.iter().map(move |g| (pair, g)))
        .enumerate()
        .map(|(k, (pair, g))| CalibrationExample {
            id: format!("{sentence_id}/{k:03}"),
            question: Some(pad.clone()),
            noisy: Span::new(pair.noisy.start, pair.noisy.end),
            passage: tokens.clone(),
            gold: Span::new(g.start, g.end),
            gold_type: g.label.clone(),
            language: language.to_owned(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(a: usize, b: usize) -> Span {
        Span::new(a, b)
    }

    #[test]
    fn equal_counts_pair_sequentially() {
        let r = match_entities(&[s(2, 4)], &[s(2, 4)], 10, &MatchConfig::default());
        assert_eq!(r.pairs[0].rule, MatchRule::Sequential);
        let r = match_entities(&[s(0, 1), s(8, 9)], &[s(5, 6), s(2, 3)], 10, &MatchConfig::default());
        assert_eq!(r.pairs[0].golds, [s(5, 6)]);
        assert_eq!(r.pairs[1].golds, [s(2, 3)]);
    }

    #[test]
    fn overlap_then_window() {
        let pred = [s(2, 5), s(8, 9)];
        let gold = [s(3, 5)];
        let r = match_entities(&pred, &gold, 12, &MatchConfig { n_win: Some(4) });
        assert_eq!(r.pairs[0].golds, [s(3, 5)]);
        assert_eq!(r.pairs[0].rule, MatchRule::Overlap);
        assert_eq!(r.pairs[1].golds, [s(3, 5)]);
        assert_eq!(r.pairs[1].rule, MatchRule::Window);
        let r = match_entities(&pred, &gold, 12, &MatchConfig { n_win: Some(3) });
        assert!(r.pairs[1].golds.is_empty());
        let r = match_entities(&pred, &gold, 12, &MatchConfig::default());
        assert_eq!(r.pairs[1].golds, [s(3, 5)]);
    }

    #[test]
    fn overlap_ties() {
        let r = match_entities(&[s(3, 7)], &[s(1, 4), s(6, 9)], 10, &MatchConfig::default());
        assert_eq!(r.pairs[0].golds, [s(1, 4)]);
        let r = match_entities(&[s(2, 6)], &[s(0, 3), s(5, 8)], 10, &MatchConfig::default());
        assert_eq!(r.pairs[0].golds, [s(0, 3)]);
        let r = match_entities(&[s(4, 6), s(9, 10), s(0, 1)], &[s(3, 5), s(5, 7)], 10, &MatchConfig::default());
        assert_eq!(r.pairs[0].golds, [s(3, 5)]);
        assert_eq!(r.pairs[2].golds, [s(3, 5)]);
    }

    #[test]
    fn no_predictions_take_whole_sentence() {
        let r = match_entities(&[], &[s(1, 3)], 7, &MatchConfig::default());
        assert_eq!(r.pairs.len(), 1);
        assert_eq!(r.pairs[0].noisy, s(0, 7));
        assert_eq!(r.pairs[0].golds, [s(1, 3)]);
        assert_eq!(match_entities(&[], &[], 7, &MatchConfig::default()).pairs.len(), 1);
    }

    #[test]
    fn examples_from_pairs() {
        let toks = TokenSeq::from_tokens(["a", "b", "c", "d"]).unwrap();
        let gold = [Span::typed(0, 1, "PER"), Span::typed(2, 4, "LOC")];
        let r = match_entities(&[], &gold, 4, &MatchConfig::default());
        let ex = pairs_to_examples("s7", &toks, &r, "en");
        assert_eq!(ex.len(), 2);
        assert_eq!(ex[1].id, "s7/001");
        assert_eq!(ex[1].noisy, s(0, 4));
        assert_eq!(ex[1].gold_type.as_deref(), Some("LOC"));
        assert!(!ex[0].has_question());
    }
}
