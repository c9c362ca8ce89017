//! Noisy-span synthesis (Add / Delete / Shift), template question
//! generation and calibration-record building.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Passage;
use crate::eval::ErrorReport;
use crate::rng::derive_rng;
use crate::textcore::{CalibrationExample, Span, TokenSeq, PAD_TOKEN};

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid noise policy: {0}")]
    InvalidPolicy(String),
    #[error("gold span is empty")]
    EmptyGold,
    #[error("gold span {span} outside passage of {len} tokens")]
    OutOfRange { span: String, len: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OpKind {
    Add,
    Delete,
    Shift,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoiseOp {
    NoOp,
    Add { n: usize, side: Side },
    Delete { n: usize, side: Side },
    Shift { n: usize, dir: Direction },
}

impl NoiseOp {
    pub fn n_op(&self) -> usize {
        match *self {
            NoiseOp::NoOp => 0,
            NoiseOp::Add { n, .. } | NoiseOp::Delete { n, .. } | NoiseOp::Shift { n, .. } => n,
        }
    }

    pub fn kind(&self) -> Option<OpKind> {
        match self {
            NoiseOp::NoOp => None,
            NoiseOp::Add { .. } => Some(OpKind::Add),
            NoiseOp::Delete { .. } => Some(OpKind::Delete),
            NoiseOp::Shift { .. } => Some(OpKind::Shift),
        }
    }

    /// Whether the op respects the size bounds for a gold of `gold_len`
    /// tokens (a single-token gold only admits a one-sided Add of 1).
    pub fn is_valid_for(&self, gold_len: usize) -> bool {
        let cap = gold_len / 2;
        match *self {
            NoiseOp::NoOp => true,
            NoiseOp::Add { n, side } if gold_len == 1 => n == 1 && side != Side::Both,
            NoiseOp::Add { n, side } | NoiseOp::Delete { n, side } => {
                (1..=cap).contains(&n) && (side != Side::Both || n >= 2)
            }
            NoiseOp::Shift { n, .. } => (1..=cap).contains(&n),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisePolicy {
    /// Probability that a gold span is garbled.
    pub phi: f64,
    /// Relative weights of Add, Delete and Shift.
    pub op_weights: [f64; 3],
    pub seed: u64,
}

impl Default for NoisePolicy {
    fn default() -> Self {
        Self {
            phi: 0.5,
            op_weights: [1.0, 1.0, 1.0],
            seed: 0,
        }
    }
}

impl NoisePolicy {
    pub fn validate(&self) -> Result<(), SynthError> {
        if !(self.phi > 0.0 && self.phi < 1.0) {
            return Err(SynthError::InvalidPolicy(format!("phi {} not in (0,1)", self.phi)));
        }
        if self.op_weights.iter().any(|w| !w.is_finite() || *w < 0.0) || self.op_weights.iter().sum::<f64>() <= 0.0 {
            return Err(SynthError::InvalidPolicy(format!(
                "op weights {:?} must be non-negative with a positive sum",
                self.op_weights
            )));
        }
        Ok(())
    }

    /// Weights proportional to the adding / missing / common counts of a
    /// measured error report.
    pub fn empirical(report: &ErrorReport, phi: f64, seed: u64) -> Result<Self, SynthError> {
        let c = &report.counts;
        let policy = Self {
            phi,
            op_weights: [c.adding_span as f64, c.missing_span as f64, c.common_span as f64],
            seed,
        };
        policy.validate()?;
        Ok(policy)
    }
}

fn pick_side<R: Rng>(n: usize, rng: &mut R) -> Side {
    let sides: &[Side] = if n >= 2 {
        &[Side::Left, Side::Right, Side::Both]
    } else {
        &[Side::Left, Side::Right]
    };
    sides[rng.gen_range(0..sides.len())]
}

/// Draws an op for a gold of `gold_len` tokens. The garble/keep decision is
/// drawn first, so the NoOp rate is exactly `1 - phi` in expectation.
pub fn sample_noise_op<R: Rng>(gold_len: usize, policy: &NoisePolicy, rng: &mut R) -> Result<NoiseOp, SynthError> {
    if gold_len == 0 {
        return Err(SynthError::EmptyGold);
    }
    policy.validate()?;
    if !rng.gen_bool(policy.phi) {
        return Ok(NoiseOp::NoOp);
    }
    if gold_len == 1 {
        let side = if rng.gen_bool(0.5) { Side::Left } else { Side::Right };
        return Ok(NoiseOp::Add { n: 1, side });
    }
    let kind = WeightedIndex::new(policy.op_weights)
        .map_err(|e| SynthError::InvalidPolicy(e.to_string()))?
        .sample(rng);
    let n = rng.gen_range(1..=gold_len / 2);
    Ok(match kind {
        0 => NoiseOp::Add { n, side: pick_side(n, rng) },
        1 => NoiseOp::Delete { n, side: pick_side(n, rng) },
        _ => {
            let dir = if rng.gen_bool(0.5) { Direction::Left } else { Direction::Right };
            NoiseOp::Shift { n, dir }
        }
    })
}

/// Result of applying an op near passage edges. `applied` is what was
/// actually done (after clipping or switching side/direction); `flagged`
/// marks ops that could not be applied at all and degraded to NoOp.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseOutcome {
    pub span: Span,
    pub applied: NoiseOp,
    pub flagged: bool,
}

impl NoiseOutcome {
    pub fn clipped(&self, requested: &NoiseOp) -> bool {
        self.applied != *requested
    }
}

fn split(n: usize, side: Side) -> (usize, usize) {
    match side {
        Side::Left => (n, 0),
        Side::Right => (0, n),
        Side::Both => (n.div_ceil(2), n / 2),
    }
}

fn side_of(l: usize, r: usize) -> Side {
    match (l, r) {
        (_, 0) => Side::Left,
        (0, _) => Side::Right,
        _ => Side::Both,
    }
}

fn add(gold: &Span, len: usize, n: usize, side: Side) -> Option<(Span, NoiseOp)> {
    let (room_l, room_r) = (gold.start, len - gold.end);
    let (want_l, want_r) = split(n, side);
    let (mut l, mut r) = (want_l.min(room_l), want_r.min(room_r));
    if l + r == 0 {
        match side {
            Side::Left => r = n.min(room_r),
            Side::Right => l = n.min(room_l),
            Side::Both => {}
        }
    }
    (l + r > 0).then(|| {
        let span = Span::new(gold.start - l, gold.end + r);
        (span, NoiseOp::Add { n: l + r, side: side_of(l, r) })
    })
}

fn shift(gold: &Span, len: usize, n: usize, dir: Direction) -> Option<(Span, NoiseOp)> {
    let room = |d: Direction| match d {
        Direction::Left => gold.start,
        Direction::Right => len - gold.end,
    };
    let other = match dir {
        Direction::Left => Direction::Right,
        Direction::Right => Direction::Left,
    };
    let (d, k) = if room(dir) >= n {
        (dir, n)
    } else if room(other) >= n {
        (other, n)
    } else if room(dir) >= room(other) {
        (dir, room(dir))
    } else {
        (other, room(other))
    };
    (k > 0).then(|| {
        let span = match d {
            Direction::Left => Span::new(gold.start - k, gold.end - k),
            Direction::Right => Span::new(gold.start + k, gold.end + k),
        };
        (span, NoiseOp::Shift { n: k, dir: d })
    })
}

/// Applies `op` to `gold` inside a passage of `passage_len` tokens. The
/// result is never empty and never leaves the passage.
pub fn apply_noise(passage_len: usize, gold: &Span, op: &NoiseOp) -> Result<NoiseOutcome, SynthError> {
    if gold.is_empty() {
        return Err(SynthError::EmptyGold);
    }
    if !gold.is_valid_within(passage_len) {
        return Err(SynthError::OutOfRange {
            span: gold.to_string(),
            len: passage_len,
        });
    }
    let bare = Span::new(gold.start, gold.end);
    let done = match *op {
        NoiseOp::NoOp => Some((bare.clone(), NoiseOp::NoOp)),
        NoiseOp::Add { n, side } => add(&bare, passage_len, n, side),
        NoiseOp::Delete { n, side } => {
            let n = n.min(gold.len() - 1);
            let (l, r) = split(n, side);
            (n > 0).then(|| {
                let span = Span::new(gold.start + l, gold.end - r);
                (span, NoiseOp::Delete { n, side: side_of(l, r) })
            })
        }
        NoiseOp::Shift { n, dir } => shift(&bare, passage_len, n, dir),
    };
    Ok(match done {
        Some((span, applied)) => NoiseOutcome {
            span,
            applied,
            flagged: false,
        },
        None => NoiseOutcome {
            span: bare,
            applied: NoiseOp::NoOp,
            flagged: true,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CoarseType {
    Person,
    Location,
    Date,
    Organization,
    Other,
}

impl CoarseType {
    pub fn wh_word(self) -> &'static str {
        match self {
            CoarseType::Person => "who",
            CoarseType::Location => "where",
            CoarseType::Date => "when",
            CoarseType::Organization | CoarseType::Other => "what",
        }
    }
}

/// Maps answer tokens to a coarse type; `None` falls back to "what".
pub trait EntityTyper {
    fn coarse_type(&self, answer: &[&str]) -> Option<CoarseType>;
}

impl<F> EntityTyper for F
where
    F: Fn(&[&str]) -> Option<CoarseType>,
{
    fn coarse_type(&self, answer: &[&str]) -> Option<CoarseType> {
        self(answer)
    }
}

const MONTHS: &[&str] = &[
    "january", "february", "march", "april", "may", "june", "july", "august", "september", "october",
    "november", "december", "enero", "febrero", "marzo", "abril", "mayo", "junio", "julio", "agosto",
    "septiembre", "octubre", "noviembre", "diciembre", "januar", "februar", "märz", "mai", "juni",
    "juli", "oktober", "dezember",
];

const PLACES: &[&str] = &[
    "germany", "deutschland", "alemania", "spain", "españa", "spanien", "france", "francia",
    "frankreich", "england", "italy", "italia", "italien", "europe", "europa", "america", "america",
    "china", "japan", "india", "russia", "berlin", "bonn", "munich", "münchen", "hamburg", "madrid",
    "barcelona", "sevilla", "málaga", "paris", "london", "rome", "roma", "vienna", "wien", "rhine",
    "rhein", "danube", "donau", "köln", "cologne", "new", "york",
];

const PERSON_CUES: &[&str] = &[
    "mr", "mrs", "ms", "dr", "sir", "king", "queen", "saint", "san", "herr", "frau", "don", "doña",
    "john", "mary", "james", "maría", "josé", "juan", "carlos", "hans", "peter", "karl", "anna",
];

const ORG_CUES: &[&str] = &[
    "university", "universidad", "universität", "company", "inc", "corporation", "party", "club",
    "fc", "ag", "gmbh", "sa", "bank", "institute", "council", "committee",
];

/// Gazetteer lookups plus capitalization and digit cues.
#[derive(Debug, Clone, Copy, Default)]
pub struct HeuristicTyper;

impl EntityTyper for HeuristicTyper {
    fn coarse_type(&self, answer: &[&str]) -> Option<CoarseType> {
        if answer.is_empty() {
            return None;
        }
        let lower: Vec<String> = answer.iter().map(|t| t.to_lowercase()).collect();
        let has = |list: &[&str]| lower.iter().any(|t| list.contains(&t.as_str()));
        let is_year = |t: &str| t.len() == 4 && t.parse::<u32>().is_ok_and(|y| (1000..2100).contains(&y));
        if answer.iter().any(|t| is_year(t)) || has(MONTHS) {
            return Some(CoarseType::Date);
        }
        if has(ORG_CUES) {
            return Some(CoarseType::Organization);
        }
        if has(PLACES) {
            return Some(CoarseType::Location);
        }
        if has(PERSON_CUES) {
            return Some(CoarseType::Person);
        }
        let capitalized = |t: &&str| t.chars().next().is_some_and(char::is_uppercase);
        let words: Vec<&&str> = answer.iter().filter(|t| t.chars().any(char::is_alphabetic)).collect();
        if words.len() >= 2 && words.iter().all(|t| capitalized(t) && t.chars().skip(1).all(char::is_lowercase)) {
            return Some(CoarseType::Person);
        }
        if answer.len() == 1 && answer[0].len() >= 2 && answer[0].chars().all(|c| c.is_uppercase() || c.is_ascii_digit()) {
            return Some(CoarseType::Organization);
        }
        Some(CoarseType::Other)
    }
}

const CLAUSE_END: &[&str] = &[".", "!", "?", ";"];
const MAX_CLAUSE: usize = 10;

/// Token range of the clause holding `gold`, cut to a window of
/// `MAX_CLAUSE` tokens centered on the gold when longer.
fn clause_window(passage: &TokenSeq, gold: &Span) -> (usize, usize) {
    let is_end = |i: usize| CLAUSE_END.contains(&passage.token(i));
    let start = (0..gold.start).rev().find(|&i| is_end(i)).map_or(0, |i| i + 1);
    let end = (gold.end..passage.len()).find(|&i| is_end(i)).unwrap_or(passage.len());
    if end - start <= MAX_CLAUSE {
        return (start, end);
    }
    let width = MAX_CLAUSE.max(gold.len());
    let extra = width - gold.len();
    let mut lo = gold.start.saturating_sub(extra / 2).max(start);
    let hi = (lo + width).min(end);
    lo = hi.saturating_sub(width).max(start);
    (lo, hi)
}

/// Builds "Wh + Fragment B + Fragment A + ?" where A and B are the clause
/// tokens before and after the gold.
pub fn generate_question(passage: &TokenSeq, gold: &Span, typer: &dyn EntityTyper) -> TokenSeq {
    let (lo, hi) = clause_window(passage, gold);
    let answer = passage.span_tokens(gold);
    let wh = typer.coarse_type(&answer).unwrap_or(CoarseType::Other).wh_word();
    let mut toks: Vec<&str> = vec![wh];
    toks.extend((gold.end..hi).map(|i| passage.token(i)));
    toks.extend((lo..gold.start).map(|i| passage.token(i)));
    toks.push("?");
    TokenSeq::from_tokens(toks).expect("passage tokens are non-empty")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Ner,
    Mrc,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthReport {
    pub records: usize,
    pub unchanged: usize,
    pub added: usize,
    pub deleted: usize,
    pub shifted: usize,
    pub flagged: usize,
}

impl SynthReport {
    fn count(&mut self, outcome: &NoiseOutcome) {
        self.records += 1;
        if outcome.flagged {
            self.flagged += 1;
        }
        match outcome.applied.kind() {
            None => self.unchanged += 1,
            Some(OpKind::Add) => self.added += 1,
            Some(OpKind::Delete) => self.deleted += 1,
            Some(OpKind::Shift) => self.shifted += 1,
        }
    }
}

/// One garbled copy of `gold`, drawn from the stream keyed by `key`.
pub fn garble(
    passage_len: usize,
    gold: &Span,
    policy: &NoisePolicy,
    key: &str,
) -> Result<(NoiseOp, NoiseOutcome), SynthError> {
    let mut rng = derive_rng(policy.seed, key);
    let op = sample_noise_op(gold.len(), policy, &mut rng)?;
    let outcome = apply_noise(passage_len, gold, &op)?;
    Ok((op, outcome))
}

fn pad_question() -> TokenSeq {
    TokenSeq::from_tokens([PAD_TOKEN]).expect("pad token is non-empty")
}

/// One record per anchor, id `{passage_id}#{k:03}`, sorted by id. NER mode
/// puts `[PAD]` in the question slot; MRC mode generates a question.
pub fn build_pbr_records(
    passages: &[Passage],
    policy: &NoisePolicy,
    mode: Mode,
    typer: &dyn EntityTyper,
) -> Result<(Vec<CalibrationExample>, SynthReport), SynthError> {
    policy.validate()?;
    let mut report = SynthReport::default();
    let mut out = Vec::new();
    for p in passages {
        for (k, anchor) in p.anchors.iter().enumerate() {
            let id = format!("{}#{k:03}", p.id);
            let (_, outcome) = garble(p.text.len(), anchor, policy, &id)?;
            report.count(&outcome);
            let question = match mode {
                Mode::Ner => pad_question(),
                Mode::Mrc => generate_question(&p.text, anchor, typer),
            };
            out.push(CalibrationExample {
                id,
                question: Some(question),
                noisy: outcome.span,
                passage: p.text.clone(),
                gold: Span::new(anchor.start, anchor.end),
                gold_type: anchor.label.clone(),
                language: p.language.clone(),
            });
        }
    }
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Ok((out, report))
}

pub const SNA_SUFFIX: &str = "~sna";

/// Returns the originals plus a garbled copy (id suffixed `~sna`) of each
/// example whose draw is not NoOp, sorted by id. Gold spans are never
/// modified.
pub fn self_noise_augment(train: &[CalibrationExample], policy: &NoisePolicy) -> Result<Vec<CalibrationExample>, SynthError> {
    policy.validate()?;
    let mut out = train.to_vec();
    for ex in train {
        let id = format!("{}{SNA_SUFFIX}", ex.id);
        let (_, outcome) = garble(ex.passage.len(), &ex.gold, policy, &id)?;
        if outcome.applied == NoiseOp::NoOp {
            continue;
        }
        out.push(CalibrationExample {
            id,
            noisy: outcome.span,
            ..ex.clone()
        });
    }
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{classify_error, ErrorCategory};
    use crate::textcore::tokenize;

    fn s(a: usize, b: usize) -> Span {
        Span::new(a, b)
    }

    #[test]
    fn noop_rate_near_phi() {
        let policy = NoisePolicy::default();
        let mut rng = derive_rng(7, "rate");
        let n = 100_000;
        let noop = (0..n)
            .filter(|_| sample_noise_op(4, &policy, &mut rng).unwrap() == NoiseOp::NoOp)
            .count();
        assert!((noop as f64 / n as f64 - 0.5).abs() < 0.005, "{noop}");
    }

    #[test]
    fn single_token_gold_gets_one_sided_add() {
        let policy = NoisePolicy::default();
        let mut rng = derive_rng(1, "one");
        for _ in 0..1000 {
            match sample_noise_op(1, &policy, &mut rng).unwrap() {
                NoiseOp::NoOp => {}
                NoiseOp::Add { n: 1, side } => assert_ne!(side, Side::Both),
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn op_size_bounded_by_half_length() {
        let policy = NoisePolicy::default();
        let mut rng = derive_rng(2, "six");
        for _ in 0..2000 {
            let op = sample_noise_op(6, &policy, &mut rng).unwrap();
            assert!(op.n_op() <= 3);
            assert!(op.is_valid_for(6));
        }
        assert_eq!(sample_noise_op(0, &policy, &mut rng), Err(SynthError::EmptyGold));
    }

    #[test]
    fn policy_validation() {
        let bad = NoisePolicy { phi: 1.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = NoisePolicy { op_weights: [0.0; 3], ..Default::default() };
        assert!(bad.validate().is_err());
        let only_add = NoisePolicy { op_weights: [1.0, 0.0, 0.0], ..Default::default() };
        let mut rng = derive_rng(3, "w");
        for _ in 0..500 {
            let op = sample_noise_op(4, &only_add, &mut rng).unwrap();
            assert!(matches!(op, NoiseOp::NoOp | NoiseOp::Add { .. }));
        }
    }

    #[test]
    fn apply_examples() {
        let go = |g: Span, op: NoiseOp| apply_noise(20, &g, &op).unwrap();
        assert_eq!(go(s(5, 8), NoiseOp::Shift { n: 2, dir: Direction::Right }).span, s(7, 10));
        let left = go(s(4, 6), NoiseOp::Delete { n: 1, side: Side::Left }).span;
        let right = go(s(4, 6), NoiseOp::Delete { n: 1, side: Side::Right }).span;
        assert_eq!((left, right), (s(5, 6), s(4, 5)));
        assert_eq!(go(s(3, 6), NoiseOp::Add { n: 2, side: Side::Both }).span, s(2, 7));
        assert_eq!(go(s(3, 6), NoiseOp::Add { n: 3, side: Side::Both }).span, s(1, 7));
        assert_eq!(go(s(3, 6), NoiseOp::NoOp).span, s(3, 6));
    }

    #[test]
    fn edge_fallbacks() {
        let out = apply_noise(10, &s(0, 4), &NoiseOp::Shift { n: 2, dir: Direction::Left }).unwrap();
        assert_eq!(out.span, s(2, 6));
        assert!(!out.flagged);
        let out = apply_noise(5, &s(0, 4), &NoiseOp::Shift { n: 2, dir: Direction::Left }).unwrap();
        assert_eq!(out.span, s(1, 5));
        assert_eq!(out.applied, NoiseOp::Shift { n: 1, dir: Direction::Right });
        let out = apply_noise(4, &s(0, 4), &NoiseOp::Shift { n: 2, dir: Direction::Left }).unwrap();
        assert!(out.flagged);
        assert_eq!(out.span, s(0, 4));
        let out = apply_noise(4, &s(0, 2), &NoiseOp::Add { n: 1, side: Side::Left }).unwrap();
        assert_eq!(out.span, s(0, 3));
        let out = apply_noise(3, &s(1, 3), &NoiseOp::Add { n: 2, side: Side::Both }).unwrap();
        assert_eq!(out.span, s(0, 3));
        assert_eq!(out.applied, NoiseOp::Add { n: 1, side: Side::Left });
        let out = apply_noise(2, &s(0, 2), &NoiseOp::Add { n: 1, side: Side::Right }).unwrap();
        assert!(out.flagged);
        assert!(apply_noise(3, &s(2, 4), &NoiseOp::NoOp).is_err());
    }

    #[test]
    fn taxonomy_matches_applied_op() {
        let policy = NoisePolicy::default();
        for i in 0..5000 {
            let key = format!("t{i}");
            let mut rng = derive_rng(11, &key);
            let len = rng.gen_range(1..40);
            let a = rng.gen_range(0..len);
            let b = rng.gen_range(a + 1..=len.min(a + 8));
            let gold = s(a, b);
            let (_, out) = garble(len, &gold, &policy, &key).unwrap();
            assert!(!out.span.is_empty() && out.span.is_valid_within(len));
            if out.flagged {
                continue;
            }
            let cat = classify_error(&out.span, &gold);
            let want = match out.applied {
                NoiseOp::NoOp => ErrorCategory::Exact,
                NoiseOp::Add { .. } => ErrorCategory::AddingSpan,
                NoiseOp::Delete { .. } => ErrorCategory::MissingSpan,
                NoiseOp::Shift { .. } => ErrorCategory::CommonSpan,
            };
            assert_eq!(cat, want, "{gold} {:?}", out.applied);
        }
    }

    struct Fixed(CoarseType);

    impl EntityTyper for Fixed {
        fn coarse_type(&self, _: &[&str]) -> Option<CoarseType> {
            Some(self.0)
        }
    }

    #[test]
    fn question_template() {
        let p = tokenize("A wrote B in 1990");
        let q = generate_question(&p, &s(2, 3), &Fixed(CoarseType::Other));
        assert_eq!(q.to_vec(), ["what", "in", "1990", "A", "wrote", "?"]);
        let p = tokenize("Intro . Bonn !");
        let q = generate_question(&p, &s(2, 3), &Fixed(CoarseType::Location));
        assert_eq!(q.to_vec(), ["where", "?"]);
        let q = generate_question(&p, &s(2, 3), &|_: &[&str]| None);
        assert_eq!(q.to_vec(), ["what", "?"]);
        let q = generate_question(&p, &s(2, 3), &Fixed(CoarseType::Person));
        assert_eq!(q.token(0), "who");
    }

    #[test]
    fn long_clause_is_windowed() {
        let p = tokenize("a b c d e f g h i j k l m n o p q r s t");
        let q = generate_question(&p, &s(10, 12), &Fixed(CoarseType::Other));
        assert_eq!(q.to_vec(), ["what", "m", "n", "o", "p", "g", "h", "i", "j", "?"]);
        let q = generate_question(&p, &s(0, 1), &Fixed(CoarseType::Other));
        assert_eq!(q.len(), 11);
        assert_eq!(q.token(9), "j");
    }

    #[test]
    fn heuristic_types() {
        let t = HeuristicTyper;
        assert_eq!(t.coarse_type(&["1990"]), Some(CoarseType::Date));
        assert_eq!(t.coarse_type(&["Bonn"]), Some(CoarseType::Location));
        assert_eq!(t.coarse_type(&["Angela", "Merkel"]), Some(CoarseType::Person));
        assert_eq!(t.coarse_type(&["NATO"]), Some(CoarseType::Organization));
        assert_eq!(t.coarse_type(&["banana"]), Some(CoarseType::Other));
        assert_eq!(t.coarse_type(&[]), None);
    }

    fn passage(id: &str, anchors: Vec<Span>) -> Passage {
        Passage {
            id: id.into(),
            language: "en".into(),
            text: tokenize("He was born in Bonn , Germany . Later he moved to the city of Paris ."),
            anchors,
        }
    }

    #[test]
    fn records_per_anchor() {
        let ps = vec![passage("p/001", vec![s(4, 5), s(6, 7), s(13, 16)]), passage("p/000", vec![s(0, 1)])];
        let policy = NoisePolicy { seed: 9, ..Default::default() };
        let (ner, rep) = build_pbr_records(&ps, &policy, Mode::Ner, &HeuristicTyper).unwrap();
        assert_eq!(ner.len(), 4);
        assert_eq!(rep.records, 4);
        assert_eq!(ner[0].id, "p/000#000");
        assert!(ner.iter().all(|r| r.question.as_ref().unwrap().to_vec() == [PAD_TOKEN]));
        let (mrc, _) = build_pbr_records(&ps, &policy, Mode::Mrc, &HeuristicTyper).unwrap();
        assert!(mrc.iter().all(CalibrationExample::has_question));
        let bonn = mrc.iter().find(|r| r.id == "p/001#000").unwrap();
        assert_eq!(bonn.question.as_ref().unwrap().text(), "where , Germany He was born in ?");
        for (a, b) in ner.iter().zip(&mrc) {
            assert_eq!(a.noisy, b.noisy);
        }
    }

    #[test]
    fn sna_keeps_originals_and_golds() {
        let (train, _) = build_pbr_records(
            &[passage("p", vec![s(4, 5), s(6, 7), s(13, 16)])],
            &NoisePolicy::default(),
            Mode::Ner,
            &HeuristicTyper,
        )
        .unwrap();
        let aug = self_noise_augment(&train, &NoisePolicy { seed: 4, ..Default::default() }).unwrap();
        assert!(aug.len() >= train.len() && aug.len() <= 2 * train.len());
        for t in &train {
            assert!(aug.contains(t));
        }
        for a in aug.iter().filter(|a| a.id.ends_with(SNA_SUFFIX)) {
            let orig = train.iter().find(|t| format!("{}{SNA_SUFFIX}", t.id) == a.id).unwrap();
            assert_eq!(a.gold, orig.gold);
            assert_ne!(a.noisy, a.gold);
        }
        assert!(self_noise_augment(&[], &NoisePolicy::default()).unwrap().is_empty());
    }
}
