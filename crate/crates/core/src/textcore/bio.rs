use std::fmt;
use std::str::FromStr;

use super::{Span, TextError};

/// One BIO tag. A bare `B`/`I` (no type suffix) carries no label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BioTag {
    Outside,
    Begin(Option<String>),
    Inside(Option<String>),
}

impl FromStr for BioTag {
    type Err = TextError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let typed = |rest: &str| -> Result<Option<String>, TextError> {
            match rest {
                "" => Ok(None),
                r => match r.strip_prefix('-') {
                    Some(t) if !t.is_empty() => Ok(Some(t.to_owned())),
                    _ => Err(TextError::UnknownTag(s.to_owned())),
                },
            }
        };
        if s == "O" {
            Ok(BioTag::Outside)
        } else if let Some(rest) = s.strip_prefix('B') {
            typed(rest).map(BioTag::Begin)
        } else if let Some(rest) = s.strip_prefix('I') {
            typed(rest).map(BioTag::Inside)
        } else {
            Err(TextError::UnknownTag(s.to_owned()))
        }
    }
}

impl fmt::Display for BioTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BioTag::Outside => f.write_str("O"),
            BioTag::Begin(None) => f.write_str("B"),
            BioTag::Begin(Some(t)) => write!(f, "B-{t}"),
            BioTag::Inside(None) => f.write_str("I"),
            BioTag::Inside(Some(t)) => write!(f, "I-{t}"),
        }
    }
}

/// Encodes non-overlapping spans as a BIO label sequence of length `len`.
pub fn emit_bio(spans: &[Span], len: usize) -> Result<Vec<String>, TextError> {
    let mut sorted: Vec<&Span> = spans.iter().collect();
    sorted.sort_by_key(|s| (s.start, s.end));
    for s in &sorted {
        if !s.is_valid_within(len) {
            return Err(TextError::SpanOutOfRange {
                start: s.start,
                end: s.end,
                len,
            });
        }
    }
    for w in sorted.windows(2) {
        if w[0].intersects(w[1]) {
            return Err(TextError::OverlappingSpans {
                first: w[0].to_string(),
                second: w[1].to_string(),
            });
        }
    }
    let mut tags = vec![BioTag::Outside; len];
    for s in sorted {
        tags[s.start] = BioTag::Begin(s.label.clone());
        for t in &mut tags[s.start + 1..s.end] {
            *t = BioTag::Inside(s.label.clone());
        }
    }
    Ok(tags.iter().map(ToString::to_string).collect())
}

/// Decodes maximal typed spans. Unknown tags read as `O`; an `I-T` that does
/// not continue an open `T` span starts a new one.
pub fn spans_from_bio<S: AsRef<str>>(labels: &[S]) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut open: Option<(usize, Option<String>)> = None;
    for (i, raw) in labels.iter().enumerate() {
        let tag = raw.as_ref().parse().unwrap_or(BioTag::Outside);
        match tag {
            BioTag::Outside => {
                if let Some((s, l)) = open.take() {
                    spans.push(Span::new(s, i).with_label(l));
                }
            }
            BioTag::Begin(l) => {
                if let Some((s, pl)) = open.take() {
                    spans.push(Span::new(s, i).with_label(pl));
                }
                open = Some((i, l));
            }
            BioTag::Inside(l) => match &open {
                Some((_, pl)) if *pl == l => {}
                _ => {
                    if let Some((s, pl)) = open.take() {
                        spans.push(Span::new(s, i).with_label(pl));
                    }
                    open = Some((i, l));
                }
            },
        }
    }
    if let Some((s, l)) = open {
        spans.push(Span::new(s, labels.len()).with_label(l));
    }
    spans
}

/// Rewrites dangling `I-T` tags as `B-T`. Tags must already parse.
pub fn repair_bio(tags: &mut [BioTag]) {
    let mut prev: Option<BioTag> = None;
    for tag in tags.iter_mut() {
        if let BioTag::Inside(l) = tag {
            let continues = matches!(&prev, Some(BioTag::Begin(p)) | Some(BioTag::Inside(p)) if p == l);
            if !continues {
                *tag = BioTag::Begin(l.clone());
            }
        }
        prev = Some(tag.clone());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn emit_examples() {
        assert_eq!(emit_bio(&[], 3).unwrap(), ["O", "O", "O"]);
        assert_eq!(
            emit_bio(&[Span::typed(0, 2, "PER")], 3).unwrap(),
            ["B-PER", "I-PER", "O"]
        );
        assert_eq!(
            emit_bio(&[Span::typed(0, 1, "LOC"), Span::typed(1, 2, "LOC")], 2).unwrap(),
            ["B-LOC", "B-LOC"]
        );
    }

    #[test]
    fn emit_rejects_overlap_naming_pair() {
        let err = emit_bio(&[Span::typed(0, 3, "PER"), Span::typed(2, 4, "ORG")], 5).unwrap_err();
        match err {
            TextError::OverlappingSpans { first, second } => {
                assert_eq!(first, "[0,3)PER");
                assert_eq!(second, "[2,4)ORG");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            emit_bio(&[Span::new(2, 4)], 3),
            Err(TextError::SpanOutOfRange { .. })
        ));
    }

    #[test]
    fn decode_examples() {
        assert_eq!(
            spans_from_bio(&["B-PER", "I-PER", "O"]),
            [Span::typed(0, 2, "PER")]
        );
        assert_eq!(spans_from_bio(&["I-ORG"]), [Span::typed(0, 1, "ORG")]);
        assert!(spans_from_bio(&["O", "O"]).is_empty());
    }

    #[test]
    fn decode_repairs_type_switch() {
        assert_eq!(
            spans_from_bio(&["B-PER", "I-LOC", "I-LOC", "O", "I-PER"]),
            [
                Span::typed(0, 1, "PER"),
                Span::typed(1, 3, "LOC"),
                Span::typed(4, 5, "PER")
            ]
        );
    }

    #[test]
    fn untyped_tags() {
        let tags = emit_bio(&[Span::new(1, 3)], 4).unwrap();
        assert_eq!(tags, ["O", "B", "I", "O"]);
        assert_eq!(spans_from_bio(&tags), [Span::new(1, 3)]);
    }

    #[test]
    fn tag_parsing() {
        assert_eq!("B-MISC".parse::<BioTag>().unwrap(), BioTag::Begin(Some("MISC".into())));
        assert!("X-PER".parse::<BioTag>().is_err());
        assert!("B-".parse::<BioTag>().is_err());
        assert!("BPER".parse::<BioTag>().is_err());
    }

    #[test]
    fn repair_rewrites_dangling_inside() {
        let mut tags: Vec<BioTag> = ["I-PER", "I-PER", "O", "I-LOC", "B-ORG", "I-PER"]
            .iter()
            .map(|t| t.parse().unwrap())
            .collect();
        repair_bio(&mut tags);
        let out: Vec<String> = tags.iter().map(ToString::to_string).collect();
        assert_eq!(out, ["B-PER", "I-PER", "O", "B-LOC", "B-ORG", "B-PER"]);
    }
}
