//! Passage mining from wiki pages: link display texts become untyped gold
//! answers, and passages are kept only when they meet the length and anchor
//! rules in [`FilterConfig`].

use std::collections::BTreeMap;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::derive_rng;
use crate::textcore::{tokenize, Span, TokenSeq};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WikiPage {
    pub page_id: String,
    pub language: String,
    pub wikitext: String,
}

impl WikiPage {
    pub fn validate(&self) -> Result<(), String> {
        if self.language.len() != 2 || !self.language.bytes().all(|b| b.is_ascii_lowercase()) {
            return Err(format!("page {}: language `{}` is not a two-letter code", self.page_id, self.language));
        }
        if self.wikitext.trim().is_empty() {
            return Err(format!("page {}: empty wikitext", self.page_id));
        }
        Ok(())
    }
}

/// A filtered passage with its anchor spans (untyped gold answers).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Passage {
    pub id: String,
    pub language: String,
    pub text: TokenSeq,
    pub anchors: Vec<Span>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AnchorExtraction {
    pub text: String,
    /// Byte ranges of link display texts in `text`.
    pub anchors: Vec<(usize, usize)>,
    /// Links left as raw text because they were unbalanced or empty.
    pub skipped: usize,
}

const NAMESPACES: &[&str] = &[
    "Category:", "File:", "Image:", "Template:", "Wikipedia:", "Help:", "Portal:",
    "Kategorie:", "Categoría:", "Datei:", "Archivo:",
];

fn is_section_title(line: &str) -> bool {
    let t = line.trim();
    t.len() >= 2 && t.starts_with('=') && t.ends_with('=')
}

fn push_without_emphasis(out: &mut String, s: &str) {
    let mut rest = s;
    while let Some(pos) = rest.find("''") {
        out.push_str(&rest[..pos]);
        rest = rest[pos..].trim_start_matches('\'');
    }
    out.push_str(rest);
}

/// Replaces `[[target|display]]` and `[[display]]` links by their display text
/// and returns the display ranges. Section-title lines and `''`/`'''`
/// emphasis are removed; namespace links (categories, files) are dropped.
pub fn extract_anchors(wikitext: &str) -> AnchorExtraction {
    let body: Vec<&str> = wikitext.lines().filter(|l| !is_section_title(l)).collect();
    let body = body.join("\n");
    let mut ext = AnchorExtraction::default();
    let mut rest = body.as_str();
    loop {
        let next_link = rest.find("[[");
        let next_emph = rest.find("''");
        match (next_link, next_emph) {
            (None, None) => {
                ext.text.push_str(rest);
                break;
            }
            (_, Some(e)) if next_link.is_none_or(|l| e < l) => {
                ext.text.push_str(&rest[..e]);
                rest = rest[e..].trim_start_matches('\'');
            }
            (Some(l), _) => {
                ext.text.push_str(&rest[..l]);
                let after = &rest[l + 2..];
                let close = after.find("]]");
                let nested = after.find("[[");
                let Some(close) = close.filter(|&c| nested.is_none_or(|n| n > c)) else {
                    ext.skipped += 1;
                    ext.text.push_str("[[");
                    rest = after;
                    continue;
                };
                let inner = &after[..close];
                let (target, display) = match inner.split_once('|') {
                    Some((t, d)) => (t, d),
                    None => (inner, inner),
                };
                let target = target.trim_start_matches(':');
                if NAMESPACES.iter().any(|ns| target.starts_with(ns)) {
                    rest = &after[close + 2..];
                    continue;
                }
                let mut shown = String::new();
                push_without_emphasis(&mut shown, display);
                let shown = shown.trim();
                if shown.is_empty() || shown.contains('\n') {
                    ext.skipped += 1;
                    ext.text.push_str(&rest[l..l + 2 + close + 2]);
                } else {
                    let start = ext.text.len();
                    ext.text.push_str(shown);
                    ext.anchors.push((start, ext.text.len()));
                }
                rest = &after[close + 2..];
            }
            (None, Some(_)) => unreachable!(),
        }
    }
    ext
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub min_tokens: usize,
    pub max_tokens: usize,
    pub max_anchor_tokens: usize,
    /// Keep at most this many qualifying passages per page (seeded choice).
    pub per_page_cap: Option<usize>,
    pub seed: u64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            min_tokens: 50,
            max_tokens: 250,
            max_anchor_tokens: 8,
            per_page_cap: None,
            seed: 0,
        }
    }
}

/// Why candidates were dropped; all counts are over blank-line-separated
/// candidate passages except the anchor-level ones.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub pages: usize,
    pub candidates: usize,
    pub kept: usize,
    pub too_short: usize,
    pub too_long: usize,
    pub too_few_anchors: usize,
    pub capped: usize,
    pub malformed_links: usize,
    pub unaligned_anchors: usize,
    pub long_anchors: usize,
    pub overlapping_anchors: usize,
}

fn split_blocks(wikitext: &str) -> Vec<String> {
    let mut blocks = Vec::new();
    let mut cur: Vec<&str> = Vec::new();
    for line in wikitext.lines() {
        if line.trim().is_empty() {
            if !cur.is_empty() {
                blocks.push(cur.join("\n"));
                cur.clear();
            }
        } else {
            cur.push(line);
        }
    }
    if !cur.is_empty() {
        blocks.push(cur.join("\n"));
    }
    blocks
}

fn candidate(
    page: &WikiPage,
    index: usize,
    block: &str,
    cfg: &FilterConfig,
    report: &mut FilterReport,
) -> Option<Passage> {
    report.candidates += 1;
    let ext = extract_anchors(block);
    report.malformed_links += ext.skipped;
    let text = tokenize(&ext.text);
    let mut anchors = Vec::new();
    for &(s, e) in &ext.anchors {
        match text.aligned_span(s, e) {
            Some(sp) if sp.len() > cfg.max_anchor_tokens => report.long_anchors += 1,
            Some(sp) => anchors.push(sp),
            None => report.unaligned_anchors += 1,
        }
    }
    anchors.sort();
    let mut kept: Vec<Span> = Vec::with_capacity(anchors.len());
    for a in anchors {
        match kept.last() {
            Some(prev) if a.start < prev.end => report.overlapping_anchors += 1,
            _ => kept.push(a),
        }
    }
    if text.len() < cfg.min_tokens {
        report.too_short += 1;
        return None;
    }
    if text.len() > cfg.max_tokens {
        report.too_long += 1;
        return None;
    }
    if kept.len() < 2 {
        report.too_few_anchors += 1;
        return None;
    }
    Some(Passage {
        id: format!("{}/{:03}", page.page_id, index),
        language: page.language.clone(),
        text,
        anchors: kept,
    })
}

/// Splits pages into blank-line-separated candidates and keeps those that
/// satisfy the length and anchor rules. Output is sorted by passage id and
/// does not depend on input page order.
pub fn filter_passages(pages: &[WikiPage], cfg: &FilterConfig) -> (Vec<Passage>, FilterReport) {
    let mut report = FilterReport {
        pages: pages.len(),
        ..Default::default()
    };
    let mut out = Vec::new();
    for page in pages {
        let mut qualifying: Vec<Passage> = split_blocks(&page.wikitext)
            .iter()
            .enumerate()
            .filter_map(|(i, b)| candidate(page, i, b, cfg, &mut report))
            .collect();
        if let Some(cap) = cfg.per_page_cap {
            if qualifying.len() > cap {
                let mut rng = derive_rng(cfg.seed, &page.page_id);
                let mut keep = sample(&mut rng, qualifying.len(), cap).into_vec();
                keep.sort_unstable();
                report.capped += qualifying.len() - cap;
                qualifying = keep.into_iter().map(|i| qualifying[i].clone()).collect();
            }
        }
        out.extend(qualifying);
    }
    out.sort_by(|a, b| a.id.cmp(&b.id).then_with(|| a.text.text().cmp(b.text.text())));
    report.kept = out.len();
    (out, report)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LanguageStats {
    pub passage_count: usize,
    pub answer_count: usize,
    pub avg_answer_tokens: f64,
    pub avg_answers_per_passage: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub total: LanguageStats,
    pub per_language: BTreeMap<String, LanguageStats>,
}

fn stats_of<'a>(passages: impl Iterator<Item = &'a Passage>) -> LanguageStats {
    let (mut p, mut a, mut toks) = (0usize, 0usize, 0usize);
    for psg in passages {
        p += 1;
        a += psg.anchors.len();
        toks += psg.anchors.iter().map(Span::len).sum::<usize>();
    }
    LanguageStats {
        passage_count: p,
        answer_count: a,
        avg_answer_tokens: if a == 0 { 0.0 } else { toks as f64 / a as f64 },
        avg_answers_per_passage: if p == 0 { 0.0 } else { a as f64 / p as f64 },
    }
}

pub fn corpus_stats(passages: &[Passage]) -> CorpusStats {
    let mut langs: BTreeMap<String, Vec<&Passage>> = BTreeMap::new();
    for p in passages {
        langs.entry(p.language.clone()).or_default().push(p);
    }
    CorpusStats {
        total: stats_of(passages.iter()),
        per_language: langs
            .into_iter()
            .map(|(l, ps)| (l, stats_of(ps.into_iter())))
            .collect(),
    }
}

#[derive(Serialize, Deserialize)]
struct PassageLine {
    id: String,
    language: String,
    tokens: TokenSeq,
    anchors: Vec<[usize; 2]>,
}

pub fn write_passages(passages: &[Passage]) -> String {
    let mut out = String::new();
    for p in passages {
        let line = PassageLine {
            id: p.id.clone(),
            language: p.language.clone(),
            tokens: p.text.clone(),
            anchors: p.anchors.iter().map(|a| [a.start, a.end]).collect(),
        };
        out.push_str(&serde_json::to_string(&line).expect("passage serializes"));
        out.push('\n');
    }
    out
}

pub fn read_passages(input: &str) -> Result<Vec<Passage>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let schema = |message: String| CorpusError::Schema { line: i + 1, message };
        let raw: PassageLine = serde_json::from_str(line).map_err(|e| schema(e.to_string()))?;
        let anchors: Vec<Span> = raw.anchors.iter().map(|a| Span::new(a[0], a[1])).collect();
        if let Some(bad) = anchors.iter().find(|a| !a.is_valid_within(raw.tokens.len())) {
            return Err(schema(format!("anchor {bad} outside passage {}", raw.id)));
        }
        out.push(Passage {
            id: raw.id,
            language: raw.language,
            text: raw.tokens,
            anchors,
        });
    }
    Ok(out)
}

pub fn read_pages(input: &str) -> Result<Vec<WikiPage>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let schema = |message: String| CorpusError::Schema { line: i + 1, message };
        let page: WikiPage = serde_json::from_str(line).map_err(|e| schema(e.to_string()))?;
        page.validate().map_err(schema)?;
        out.push(page);
    }
    Ok(out)
}
