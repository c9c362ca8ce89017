use super::bio::{emit_bio, repair_bio, spans_from_bio, BioTag};
use super::{Span, TextError, TokenSeq};

/// A token sequence with one BIO tag per token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledSentence {
    pub tokens: TokenSeq,
    pub labels: Vec<String>,
}

impl LabeledSentence {
    pub fn new(tokens: TokenSeq, labels: Vec<String>) -> Result<Self, TextError> {
        if tokens.len() != labels.len() {
            return Err(TextError::LengthMismatch {
                tokens: tokens.len(),
                labels: labels.len(),
            });
        }
        for l in &labels {
            l.parse::<BioTag>()?;
        }
        Ok(Self { tokens, labels })
    }

    pub fn from_spans(tokens: TokenSeq, spans: &[Span]) -> Result<Self, TextError> {
        let labels = emit_bio(spans, tokens.len())?;
        Ok(Self { tokens, labels })
    }

    pub fn spans(&self) -> Vec<Span> {
        spans_from_bio(&self.labels)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Parses `token ... tag` lines with blank-line sentence separators. The first
/// column is the token and the last column the tag; `-DOCSTART-` lines are
/// skipped and dangling `I-T` tags are normalized to `B-T`.
pub fn parse_conll(input: &[u8]) -> Result<Vec<LabeledSentence>, TextError> {
    let text = std::str::from_utf8(input).map_err(|_| TextError::InvalidUtf8)?;
    let mut sentences = Vec::new();
    let mut toks: Vec<&str> = Vec::new();
    let mut tags: Vec<BioTag> = Vec::new();

    let mut flush = |toks: &mut Vec<&str>, tags: &mut Vec<BioTag>| -> Result<(), TextError> {
        if toks.is_empty() {
            return Ok(());
        }
        repair_bio(tags);
        let tokens = TokenSeq::from_tokens(toks.drain(..))?;
        let labels = tags.drain(..).map(|t| t.to_string()).collect();
        sentences.push(LabeledSentence { tokens, labels });
        Ok(())
    };

    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else {
            flush(&mut toks, &mut tags)?;
            continue;
        };
        if token == "-DOCSTART-" {
            flush(&mut toks, &mut tags)?;
            continue;
        }
        let Some(tag) = fields.last() else {
            return Err(TextError::MalformedLine {
                line: line_no,
                content: line.to_owned(),
            });
        };
        let tag = tag.parse::<BioTag>().map_err(|_| TextError::UnknownTagAt {
            line: line_no,
            tag: tag.to_owned(),
        })?;
        toks.push(token);
        tags.push(tag);
    }
    flush(&mut toks, &mut tags)?;
    Ok(sentences)
}

/// Canonical form: `token tag` per line, every sentence followed by a blank line.
pub fn emit_conll(sentences: &[LabeledSentence]) -> String {
    let mut out = String::new();
    for s in sentences {
        for (tok, tag) in s.tokens.tokens().zip(&s.labels) {
            out.push_str(tok);
            out.push(' ');
            out.push_str(tag);
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_token() {
        let s = parse_conll(b"John B-PER\n\n").unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].labels, ["B-PER"]);
        assert_eq!(s[0].tokens.to_vec(), ["John"]);
    }

    #[test]
    fn two_sentences() {
        let f = "EU B-ORG\nrejects O\nGerman B-MISC\ncall O\n\nPeter B-PER\nBlackburn I-PER\n\n";
        let s = parse_conll(f.as_bytes()).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(
            s[0].spans(),
            [Span::typed(0, 1, "ORG"), Span::typed(2, 3, "MISC")]
        );
        assert_eq!(s[1].spans(), [Span::typed(0, 2, "PER")]);
        assert_eq!(emit_conll(&s), f);
    }

    #[test]
    fn multi_column_and_tabs() {
        let f = "-DOCSTART- -X- O O\n\nEU\tNNP\tB-NP\tB-ORG\nrejects VBZ B-VP O\n";
        let s = parse_conll(f.as_bytes()).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].labels, ["B-ORG", "O"]);
    }

    #[test]
    fn missing_trailing_blank_line() {
        let s = parse_conll(b"a O\nb B-LOC").unwrap();
        assert_eq!(s[0].labels, ["O", "B-LOC"]);
    }

    #[test]
    fn dangling_inside_normalized() {
        let s = parse_conll(b"a I-LOC\nb I-LOC\nc O\n\n").unwrap();
        assert_eq!(s[0].labels, ["B-LOC", "I-LOC", "O"]);
    }

    #[test]
    fn malformed_line_reports_number() {
        let err = parse_conll(b"a O\nlonely\n").unwrap_err();
        assert!(matches!(err, TextError::MalformedLine { line: 2, .. }));
    }

    #[test]
    fn unknown_prefix_reports_number() {
        let err = parse_conll(b"a O\n\nb E-PER\n").unwrap_err();
        match err {
            TextError::UnknownTagAt { line, tag } => {
                assert_eq!(line, 3);
                assert_eq!(tag, "E-PER");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn sentence_validation() {
        let toks = TokenSeq::from_tokens(["a", "b"]).unwrap();
        assert!(LabeledSentence::new(toks.clone(), vec!["O".into()]).is_err());
        assert!(LabeledSentence::new(toks.clone(), vec!["O".into(), "Q".into()]).is_err());
        let s = LabeledSentence::from_spans(toks, &[Span::typed(1, 2, "PER")]).unwrap();
        assert_eq!(s.labels, ["O", "B-PER"]);
    }
}
