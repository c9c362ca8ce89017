use serde::{Deserialize, Serialize};

use super::{Span, TextError, TokenSeq};

/// A calibration record: an optional question, a noisy span and the gold span
/// it should be calibrated to, both over the same passage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CalibrationExample {
    pub id: String,
    pub question: Option<TokenSeq>,
    pub noisy: Span,
    pub passage: TokenSeq,
    pub gold: Span,
    pub gold_type: Option<String>,
    pub language: String,
}

impl CalibrationExample {
    pub fn validate(&self) -> Result<(), String> {
        let n = self.passage.len();
        if !self.noisy.is_valid_within(n) {
            return Err(format!("noisy span {} outside passage of {n} tokens", self.noisy));
        }
        if !self.gold.is_valid_within(n) {
            return Err(format!("gold span {} outside passage of {n} tokens", self.gold));
        }
        Ok(())
    }

    /// True when the question slot is absent or the `[PAD]` placeholder.
    pub fn has_question(&self) -> bool {
        match &self.question {
            None => false,
            Some(q) => !(q.is_empty() || (q.len() == 1 && q.token(0) == PAD_TOKEN)),
        }
    }

    pub fn noisy_tokens(&self) -> Vec<&str> {
        self.passage.span_tokens(&self.noisy)
    }
}

pub const PAD_TOKEN: &str = "[PAD]";

#[derive(Serialize, Deserialize)]
struct PbrLine {
    id: String,
    question: Option<TokenSeq>,
    noisy_answer: Vec<String>,
    passage: TokenSeq,
    noisy_span: [usize; 2],
    gold_span: [usize; 2],
    gold_type: Option<String>,
    language: String,
}

pub fn pbr_line(ex: &CalibrationExample) -> String {
    let line = PbrLine {
        id: ex.id.clone(),
        question: ex.question.clone(),
        noisy_answer: ex.noisy_tokens().into_iter().map(str::to_owned).collect(),
        passage: ex.passage.clone(),
        noisy_span: [ex.noisy.start, ex.noisy.end],
        gold_span: [ex.gold.start, ex.gold.end],
        gold_type: ex.gold_type.clone(),
        language: ex.language.clone(),
    };
    serde_json::to_string(&line).expect("pbr line serializes")
}

pub fn write_pbr_jsonl(examples: &[CalibrationExample]) -> String {
    let mut out = String::new();
    for ex in examples {
        out.push_str(&pbr_line(ex));
        out.push('\n');
    }
    out
}

/// Reads one record per non-blank line and checks that `noisy_answer`
/// matches the passage tokens under `noisy_span`.
pub fn read_pbr_jsonl(input: &str) -> Result<Vec<CalibrationExample>, TextError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let schema = |message: String| TextError::Schema {
            line: i + 1,
            message,
        };
        let raw: PbrLine = serde_json::from_str(line).map_err(|e| schema(e.to_string()))?;
        let ex = CalibrationExample {
            id: raw.id,
            question: raw.question,
            noisy: Span::new(raw.noisy_span[0], raw.noisy_span[1]),
            passage: raw.passage,
            gold: Span::new(raw.gold_span[0], raw.gold_span[1]),
            gold_type: raw.gold_type,
            language: raw.language,
        };
        ex.validate().map_err(schema)?;
        if ex.noisy_tokens() != raw.noisy_answer {
            return Err(schema(format!(
                "noisy_answer does not match passage tokens under noisy_span for {}",
                ex.id
            )));
        }
        out.push(ex);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textcore::tokenize;

    fn sample() -> CalibrationExample {
        CalibrationExample {
            id: "p1/000".into(),
            question: Some(tokenize("[PAD]")),
            noisy: Span::new(3, 5),
            passage: tokenize("He was born in Bonn , Germany ."),
            gold: Span::new(4, 5),
            gold_type: Some("LOC".into()),
            language: "en".into(),
        }
    }

    #[test]
    fn line_layout() {
        let line = pbr_line(&sample());
        assert_eq!(
            line,
            r#"{"id":"p1/000","question":["[PAD]"],"noisy_answer":["in","Bonn"],"passage":["He","was","born","in","Bonn",",","Germany","."],"noisy_span":[3,5],"gold_span":[4,5],"gold_type":"LOC","language":"en"}"#
        );
        assert!(!sample().has_question());
    }

    #[test]
    fn round_trip() {
        let text = write_pbr_jsonl(&[sample()]);
        let back = read_pbr_jsonl(&text).unwrap();
        assert_eq!(back[0].passage.to_vec(), sample().passage.to_vec());
        assert_eq!(write_pbr_jsonl(&back), text);
    }

    #[test]
    fn rejects_out_of_bounds_and_mismatch() {
        let text = write_pbr_jsonl(&[sample()]);
        let oob = text.replace("\"gold_span\":[4,5]", "\"gold_span\":[4,9]");
        assert!(matches!(read_pbr_jsonl(&oob), Err(TextError::Schema { line: 1, .. })));
        let mism = text.replace("[\"in\",\"Bonn\"]", "[\"Bonn\"]");
        assert!(read_pbr_jsonl(&mism).is_err());
    }
}
