use serde::Deserialize;
use serde_json::Value;

use spancal_core::eval::{entity_f1, error_report, oracle_upper_bounds, OracleMode, Task};
use spancal_core::pairing::{match_entities, window_consistency_f1, MatchConfig};
use spancal_core::{LabeledSentence, Span, TokenSeq};

const FIXTURE: &str = include_str!("fixtures/eval_fixture.json");
const EXPECTED: &str = include_str!("fixtures/eval.expected.json");

#[derive(Deserialize)]
struct Comparison {
    pred: Option<[usize; 2]>,
    golds: Vec<[usize; 2]>,
}

#[derive(Deserialize)]
struct Sentence {
    len: usize,
    pred: Vec<(usize, usize, String)>,
    gold: Vec<(usize, usize, String)>,
}

#[derive(Deserialize)]
struct Fixture {
    mrc_comparisons: Vec<Comparison>,
    ner_sentences: Vec<Sentence>,
    window_sentences: Vec<Sentence>,
}

fn typed(v: &[(usize, usize, String)]) -> Vec<Span> {
    v.iter().map(|(s, e, l)| Span::typed(*s, *e, l.as_str())).collect()
}

fn frac(v: &Value) -> f64 {
    v[0].as_f64().unwrap() / v[1].as_f64().unwrap()
}

fn load() -> (Fixture, Value) {
    (serde_json::from_str(FIXTURE).unwrap(), serde_json::from_str(EXPECTED).unwrap())
}

fn labeled(s: &Sentence) -> LabeledSentence {
    let toks = TokenSeq::from_tokens((0..s.len).map(|i| format!("t{i}"))).unwrap();
    LabeledSentence::from_spans(toks, &typed(&s.gold)).unwrap()
}

#[test]
fn mrc_error_tally_matches_oracle() {
    let (fx, ex) = load();
    let pred: Vec<Vec<Span>> = fx
        .mrc_comparisons
        .iter()
        .map(|c| c.pred.iter().map(|p| Span::new(p[0], p[1])).collect())
        .collect();
    let gold: Vec<Vec<Span>> = fx
        .mrc_comparisons
        .iter()
        .map(|c| c.golds.iter().map(|g| Span::new(g[0], g[1])).collect())
        .collect();
    let r = error_report(Task::Mrc, &pred, &gold, "en").unwrap();
    let want = &ex["mrc_report"];
    let got = serde_json::to_value(&r).unwrap();
    for key in ["test_size", "error_cases", "exact", "no_overlap", "adding_span", "missing_span", "common_span"] {
        assert_eq!(got[key], want[key], "{key}");
    }
    assert_eq!(r.counts.errors(), r.error_cases);
}

#[test]
fn oracle_bounds_match_oracle_script() {
    let (fx, ex) = load();
    let pred: Vec<Vec<Span>> = fx.ner_sentences.iter().map(|s| typed(&s.pred)).collect();
    let gold: Vec<Vec<Span>> = fx.ner_sentences.iter().map(|s| typed(&s.gold)).collect();
    let base = entity_f1(&pred, &gold).unwrap().f1;
    let b = oracle_upper_bounds(&pred, &gold, OracleMode::BoundaryCorrect).unwrap().f1;
    let t = oracle_upper_bounds(&pred, &gold, OracleMode::TypeCorrect).unwrap().f1;
    assert!((base - frac(&ex["ner_baseline_f1"])).abs() < 1e-12);
    assert!((b - frac(&ex["ner_boundary_oracle_f1"])).abs() < 1e-12);
    assert!((t - frac(&ex["ner_type_oracle_f1"])).abs() < 1e-12);
    assert!(b >= base && t >= base);
}

#[test]
fn window_consistency_matches_oracle_script() {
    let (fx, ex) = load();
    let labeled: Vec<LabeledSentence> = fx.window_sentences.iter().map(labeled).collect();
    for (key, n_win) in [("1", Some(1)), ("2", Some(2)), ("3", Some(3)), ("entire", None)] {
        let reports: Vec<_> = fx
            .window_sentences
            .iter()
            .map(|s| match_entities(&typed(&s.pred), &typed(&s.gold), s.len, &MatchConfig { n_win }))
            .collect();
        let f = window_consistency_f1(&labeled, &reports).unwrap();
        assert!((f - frac(&ex["window_f1"][key])).abs() < 1e-12, "{key}: {f}");
    }
}
