use spancal_core::corpus::{corpus_stats, extract_anchors, filter_passages, read_pages, FilterConfig};

const PAGES: &str = include_str!("fixtures/minidump.jsonl");
const EXPECTED: &str = include_str!("fixtures/minidump.expected.json");

#[derive(serde::Deserialize)]
struct Expected {
    id: String,
    language: String,
    tokens: usize,
    anchors: Vec<[usize; 2]>,
}

#[test]
fn minidump_yields_exactly_the_oracle_passages() {
    let pages = read_pages(PAGES).unwrap();
    assert_eq!(pages.len(), 30);
    let expected: Vec<Expected> = serde_json::from_str(EXPECTED).unwrap();
    let (passages, report) = filter_passages(&pages, &FilterConfig::default());
    assert_eq!(passages.len(), 11);
    assert_eq!(report.kept, 11);
    for (p, e) in passages.iter().zip(&expected) {
        assert_eq!(p.id, e.id);
        assert_eq!(p.language, e.language);
        assert_eq!(p.text.len(), e.tokens, "{}", p.id);
        let anchors: Vec<[usize; 2]> = p.anchors.iter().map(|a| [a.start, a.end]).collect();
        assert_eq!(anchors, e.anchors, "{}", p.id);
    }
}

#[test]
fn every_passage_satisfies_invariants() {
    let pages = read_pages(PAGES).unwrap();
    let (passages, _) = filter_passages(&pages, &FilterConfig::default());
    for p in &passages {
        assert!((50..=250).contains(&p.text.len()), "{}", p.id);
        assert!(p.anchors.len() >= 2, "{}", p.id);
        for a in &p.anchors {
            assert!((1..=8).contains(&a.len()), "{} {a}", p.id);
        }
        for w in p.anchors.windows(2) {
            assert!(w[0].end <= w[1].start, "{} overlapping anchors", p.id);
        }
    }
}

#[test]
fn filtering_is_independent_of_page_order() {
    let mut pages = read_pages(PAGES).unwrap();
    let (a, ra) = filter_passages(&pages, &FilterConfig::default());
    pages.reverse();
    pages.rotate_left(7);
    let (b, rb) = filter_passages(&pages, &FilterConfig::default());
    assert_eq!(a, b);
    assert_eq!(ra, rb);
}

#[test]
fn malformed_link_page() {
    let pages = read_pages(PAGES).unwrap();
    let page = pages.iter().find(|p| p.page_id == "es-04").unwrap();
    let ext = extract_anchors(&page.wikitext);
    assert_eq!(ext.anchors.len(), 6);
    assert_eq!(ext.skipped, 1);
}

#[test]
fn fixture_stats_match_hand_tally() {
    let pages = read_pages(PAGES).unwrap();
    let (passages, _) = filter_passages(&pages, &FilterConfig::default());
    let s = corpus_stats(&passages);
    assert_eq!((s.total.passage_count, s.total.answer_count), (11, 30));
    assert!((s.total.avg_answer_tokens - 53.0 / 30.0).abs() < 1e-12);
    assert!((s.total.avg_answers_per_passage - 30.0 / 11.0).abs() < 1e-12);
    let rows: Vec<(&str, usize, usize, f64, f64)> = vec![
        ("de", 1, 2, 1.5, 2.0),
        ("en", 5, 13, 20.0 / 13.0, 2.6),
        ("es", 5, 15, 2.0, 3.0),
    ];
    for (lang, p, a, tok, per) in rows {
        let st = s.per_language[lang];
        assert_eq!(st.passage_count, p, "{lang}");
        assert_eq!(st.answer_count, a, "{lang}");
        assert!((st.avg_answer_tokens - tok).abs() < 1e-12, "{lang}");
        assert!((st.avg_answers_per_passage - per).abs() < 1e-12, "{lang}");
        assert_eq!(st.avg_answers_per_passage, st.answer_count as f64 / st.passage_count as f64);
    }
}

mod props {
    use super::*;
    use proptest::prelude::*;

    fn word() -> impl Strategy<Value = String> {
        "[a-zA-Z]{1,8}"
    }

    proptest! {
        // Re-inserting `[[`/`]]` around the returned ranges restores
        // well-formed unpiped wikitext.
        #[test]
        fn anchors_reinsert_to_source(parts in prop::collection::vec((word(), any::<bool>()), 1..30)) {
            let src: Vec<String> = parts
                .iter()
                .map(|(w, link)| if *link { format!("[[{w}]]") } else { w.clone() })
                .collect();
            let src = src.join(" ");
            let ext = extract_anchors(&src);
            prop_assert_eq!(ext.skipped, 0);
            let mut rebuilt = String::new();
            let mut last = 0;
            for &(s, e) in &ext.anchors {
                rebuilt.push_str(&ext.text[last..s]);
                rebuilt.push_str("[[");
                rebuilt.push_str(&ext.text[s..e]);
                rebuilt.push_str("]]");
                last = e;
            }
            rebuilt.push_str(&ext.text[last..]);
            prop_assert_eq!(rebuilt, src);
        }
    }
}
