//! Token ids and input layout `[CLS] q [SEP] a [SEP] p [SEP]`.

use std::collections::{BTreeSet, HashMap};
use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use spancal_core::textcore::PAD_TOKEN;
use spancal_core::{CalibrationExample, Span, TokenSeq};

use crate::ModelError;

pub const SPECIALS: [&str; 5] = [PAD_TOKEN, "[UNK]", "[CLS]", "[SEP]", "[MASK]"];
pub const UNK: usize = 1;
pub const CLS: usize = 2;
pub const SEP: usize = 3;
pub const MASK: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocab {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens, index }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

impl Vocab {
    /// Specials first, then the distinct tokens in sorted order.
    pub fn build<'a>(tokens: impl IntoIterator<Item = &'a str>) -> Self {
        let set: BTreeSet<&str> = tokens.into_iter().filter(|t| !SPECIALS.contains(t)).collect();
        let all: Vec<String> = SPECIALS.iter().copied().chain(set).map(str::to_owned).collect();
        Self::from(all)
    }

    pub fn from_examples(examples: &[CalibrationExample]) -> Self {
        Self::build(examples.iter().flat_map(|e| {
            let q = e.question.iter().flat_map(|q| q.tokens());
            q.chain(e.passage.tokens())
        }))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn ids<'a>(&self, tokens: impl IntoIterator<Item = &'a str>) -> Vec<usize> {
        tokens.into_iter().map(|t| self.id(t)).collect()
    }
}

/// Supervision for one calibration sequence, in sequence coordinates
/// (`end` inclusive).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Target {
    pub start: usize,
    pub end: usize,
    pub cls: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Encoded {
    pub ids: Vec<usize>,
    /// 1 on passage tokens inside the noisy span, 0 elsewhere.
    pub indicator: Vec<usize>,
    pub question: Range<usize>,
    pub answer: Range<usize>,
    pub passage: Range<usize>,
    pub target: Option<Target>,
    /// Sequence positions of the gold span (for MLM exclusion).
    pub gold: Option<Range<usize>>,
    /// Non-gold `(i, j)` pairs for the span-matching loss.
    pub negatives: Vec<(usize, usize)>,
    /// `(position, original id)` for masked positions; `ids` holds the
    /// corrupted tokens there.
    pub mlm: Vec<(usize, usize)>,
}

impl Encoded {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Passage-relative span of sequence positions `i..=j`.
    pub fn to_passage_span(&self, i: usize, j: usize) -> Span {
        Span::new(i - self.passage.start, j + 1 - self.passage.start)
    }
}

/// Lays out one example. The question segment is left out when it is absent
/// or just `[PAD]`. Sequences longer than `max_len` are rejected; see
/// [`fit_to_length`].
pub fn encode_example(
    ex: &CalibrationExample,
    vocab: &Vocab,
    types: &[String],
    max_len: usize,
) -> Result<Encoded, ModelError> {
    ex.validate().map_err(|m| ModelError::Data(format!("{}: {m}", ex.id)))?;
    let mut ids = vec![CLS];
    let q_start = ids.len();
    if ex.has_question() {
        ids.extend(vocab.ids(ex.question.iter().flat_map(TokenSeq::tokens)));
        ids.push(SEP);
    }
    let question = q_start..ids.len().saturating_sub(usize::from(ex.has_question()));
    let a_start = ids.len();
    ids.extend(vocab.ids(ex.noisy_tokens()));
    let answer = a_start..ids.len();
    ids.push(SEP);
    let p_start = ids.len();
    ids.extend(vocab.ids(ex.passage.tokens()));
    let passage = p_start..ids.len();
    ids.push(SEP);
    if ids.len() > max_len {
        return Err(ModelError::Overlong { len: ids.len(), max: max_len });
    }
    let mut indicator = vec![0; ids.len()];
    for i in ex.noisy.start..ex.noisy.end {
        indicator[p_start + i] = 1;
    }
    let (target, gold) = if ex.gold.is_empty() {
        (None, None)
    } else {
        let cls = match &ex.gold_type {
            Some(t) => Some(
                types
                    .iter()
                    .position(|x| x == t)
                    .ok_or_else(|| ModelError::Data(format!("{}: unknown type `{t}`", ex.id)))?,
            ),
            None => None,
        };
        let t = Target {
            start: p_start + ex.gold.start,
            end: p_start + ex.gold.end - 1,
            cls,
        };
        (Some(t), Some(p_start + ex.gold.start..p_start + ex.gold.end))
    };
    Ok(Encoded {
        ids,
        indicator,
        question,
        answer,
        passage,
        target,
        gold,
        negatives: Vec::new(),
        mlm: Vec::new(),
    })
}

/// Crops the passage to a window around the noisy and gold spans so the
/// encoded sequence fits in `max_len`. Returns the cropped example and the
/// token offset of the window.
pub fn fit_to_length(ex: &CalibrationExample, max_len: usize) -> Option<(CalibrationExample, usize)> {
    let q = if ex.has_question() { ex.question.as_ref().map_or(0, TokenSeq::len) + 1 } else { 0 };
    let fixed = 3 + q + ex.noisy.len();
    let budget = max_len.checked_sub(fixed)?;
    let n = ex.passage.len();
    if n <= budget {
        return Some((ex.clone(), 0));
    }
    let (lo, hi) = if ex.gold.is_empty() {
        (ex.noisy.start, ex.noisy.end)
    } else {
        (ex.noisy.start.min(ex.gold.start), ex.noisy.end.max(ex.gold.end))
    };
    if hi - lo > budget {
        return None;
    }
    let slack = budget - (hi - lo);
    let start = lo.saturating_sub(slack / 2).min(n - budget);
    let end = start + budget;
    let shift = |s: &Span| {
        if s.is_empty() && (s.start < start || s.start > end) {
            Span::new(0, 0)
        } else {
            Span::new(s.start - start, s.end - start)
        }
    };
    let passage = TokenSeq::from_tokens((start..end).map(|i| ex.passage.token(i))).ok()?;
    Some((
        CalibrationExample {
            passage,
            noisy: shift(&ex.noisy),
            gold: shift(&ex.gold),
            ..ex.clone()
        },
        start,
    ))
}

/// Selects each maskable position with probability `rate`; 80% become
/// `[MASK]` and 20% a random non-special id. Returns the corrupted ids and
/// `(position, original id)` targets.
pub fn mask_for_mlm<R: Rng>(
    ids: &[usize],
    maskable: &[usize],
    vocab_size: usize,
    rate: f64,
    rng: &mut R,
) -> (Vec<usize>, Vec<(usize, usize)>) {
    let mut out = ids.to_vec();
    let mut targets = Vec::new();
    for &p in maskable {
        if !rng.gen_bool(rate) {
            continue;
        }
        targets.push((p, ids[p]));
        out[p] = if rng.gen_bool(0.8) || vocab_size <= SPECIALS.len() {
            MASK
        } else {
            rng.gen_range(SPECIALS.len()..vocab_size)
        };
    }
    (out, targets)
}

/// Passage positions outside the gold span, skipping special ids.
pub fn maskable_positions(enc: &Encoded) -> Vec<usize> {
    enc.passage
        .clone()
        .filter(|p| !enc.gold.as_ref().is_some_and(|g| g.contains(p)))
        .filter(|&p| enc.ids[p] >= SPECIALS.len())
        .collect()
}

/// `k` pairs drawn uniformly (with replacement) from all `i <= j` inside the
/// passage other than the gold pair.
pub fn sample_negatives<R: Rng>(passage: &Range<usize>, gold: (usize, usize), k: usize, rng: &mut R) -> Vec<(usize, usize)> {
    let n = passage.len();
    let total = n * (n + 1) / 2;
    let gold_in = passage.contains(&gold.0) && passage.contains(&gold.1) && gold.0 <= gold.1;
    let pool = total - usize::from(gold_in);
    if pool == 0 {
        return Vec::new();
    }
    let gold_rank = gold_in.then(|| pair_rank(n, gold.0 - passage.start, gold.1 - passage.start));
    (0..k)
        .map(|_| {
            let mut r = rng.gen_range(0..pool);
            if gold_rank.is_some_and(|g| r >= g) {
                r += 1;
            }
            let (i, j) = pair_unrank(n, r);
            (passage.start + i, passage.start + j)
        })
        .collect()
}

/// Rank of `(i, j)` in the row-major enumeration of `i <= j < n`.
fn pair_rank(n: usize, i: usize, j: usize) -> usize {
    i * n - i * i.saturating_sub(1) / 2 + (j - i)
}

fn pair_unrank(n: usize, mut r: usize) -> (usize, usize) {
    for i in 0..n {
        let row = n - i;
        if r < row {
            return (i, i + r);
        }
        r -= row;
    }
    unreachable!("rank out of range")
}

/// Fills per-epoch negatives and MLM masks.
pub fn resample<R: Rng>(enc: &Encoded, negatives: usize, mlm_rate: f64, vocab_size: usize, rng: &mut R) -> Encoded {
    let mut out = enc.clone();
    if let Some(t) = enc.target {
        out.negatives = sample_negatives(&enc.passage, (t.start, t.end), negatives, rng);
    }
    if mlm_rate > 0.0 {
        let maskable = maskable_positions(enc);
        let (ids, targets) = mask_for_mlm(&enc.ids, &maskable, vocab_size, mlm_rate, rng);
        out.ids = ids;
        out.mlm = targets;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use spancal_core::rng::derive_rng;
    use spancal_core::textcore::tokenize;

    fn example(q: Option<&str>) -> CalibrationExample {
        CalibrationExample {
            id: "x".into(),
            question: q.map(tokenize),
            noisy: Span::new(1, 3),
            passage: tokenize("a b c d e"),
            gold: Span::new(2, 4),
            gold_type: Some("LOC".into()),
            language: "en".into(),
        }
    }

    #[test]
    fn layout_and_indicator() {
        let ex = example(Some("[PAD]"));
        let vocab = Vocab::from_examples(std::slice::from_ref(&ex));
        let types = vec!["LOC".to_string(), "PER".to_string()];
        let e = encode_example(&ex, &vocab, &types, 64).unwrap();
        // [CLS] b c [SEP] a b c d e [SEP]
        assert_eq!(e.len(), 10);
        assert_eq!(e.question, 1..1);
        assert_eq!(e.answer, 1..3);
        assert_eq!(e.passage, 4..9);
        assert_eq!(e.indicator, vec![0, 0, 0, 0, 0, 1, 1, 0, 0, 0]);
        assert_eq!(e.target, Some(Target { start: 6, end: 7, cls: Some(0) }));
        assert_eq!(e.to_passage_span(6, 7), Span::new(2, 4));

        let with_q = encode_example(&example(Some("who is it ?")), &vocab, &types, 64).unwrap();
        assert_eq!(with_q.question, 1..5);
        assert_eq!(with_q.ids[5], SEP);
        assert_eq!(with_q.ids[1], UNK);
        assert!(matches!(encode_example(&ex, &vocab, &types, 9), Err(ModelError::Overlong { len: 10, max: 9 })));
    }

    #[test]
    fn cropping_keeps_spans() {
        let mut ex = example(None);
        ex.passage = tokenize(&(0..40).map(|i| format!("t{i}")).collect::<Vec<_>>().join(" "));
        ex.noisy = Span::new(20, 23);
        ex.gold = Span::new(21, 25);
        let (c, off) = fit_to_length(&ex, 16).unwrap();
        assert_eq!(c.passage.len(), 16 - 3 - 3);
        assert_eq!(c.passage.span_tokens(&c.gold), ex.passage.span_tokens(&ex.gold));
        assert_eq!(c.noisy.start + off, 20);
        assert!(fit_to_length(&ex, 8).is_none());
    }

    #[test]
    fn pair_enumeration_round_trips() {
        for n in 1..12 {
            let mut r = 0;
            for i in 0..n {
                for j in i..n {
                    assert_eq!(pair_unrank(n, r), (i, j));
                    assert_eq!(pair_rank(n, i, j), r);
                    r += 1;
                }
            }
        }
    }

    #[test]
    fn negatives_avoid_gold() {
        let mut rng = derive_rng(1, "negatives");
        for _ in 0..200 {
            let negs = sample_negatives(&(3..9), (4, 6), 8, &mut rng);
            assert_eq!(negs.len(), 8);
            assert!(negs.iter().all(|&(i, j)| (3..9).contains(&i) && i <= j && j < 9 && (i, j) != (4, 6)));
        }
        assert!(sample_negatives(&(2..3), (2, 2), 8, &mut rng).is_empty());
    }
}
