use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{tokenize, Span, TextError, TokenSeq};

#[derive(Debug, Serialize, Deserialize)]
struct SquadFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    version: Option<String>,
    data: Vec<SquadArticle>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SquadArticle {
    #[serde(default)]
    title: String,
    paragraphs: Vec<SquadParagraph>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SquadParagraph {
    context: String,
    qas: Vec<SquadQa>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SquadQa {
    id: String,
    question: String,
    answers: Vec<SquadAnswer>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SquadAnswer {
    text: String,
    answer_start: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MrcAnswer {
    pub span: Span,
    pub text: String,
}

/// One question over one passage with its gold answers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MrcRecord {
    pub id: String,
    pub question: TokenSeq,
    pub passage: TokenSeq,
    pub answers: Vec<MrcAnswer>,
}

fn char_to_byte(text: &str, char_idx: usize) -> Option<usize> {
    if char_idx == 0 {
        return Some(0);
    }
    text.char_indices()
        .map(|(b, _)| b)
        .chain(std::iter::once(text.len()))
        .nth(char_idx)
}

fn align_answer(id: &str, passage: &TokenSeq, ans: &SquadAnswer) -> Result<MrcAnswer, TextError> {
    let misaligned = || TextError::MisalignedAnswer {
        id: id.to_owned(),
        answer_start: ans.answer_start,
    };
    let start = char_to_byte(passage.text(), ans.answer_start).ok_or_else(misaligned)?;
    let end = start + ans.text.len();
    if passage.text().get(start..end) != Some(ans.text.as_str()) {
        return Err(misaligned());
    }
    let span = passage.aligned_span(start, end).ok_or_else(misaligned)?;
    Ok(MrcAnswer {
        span,
        text: ans.text.clone(),
    })
}

/// Parses SQuAD-v1.1-shaped JSON, mapping character `answer_start` offsets to
/// token spans.
pub fn parse_mrc_json(input: &[u8]) -> Result<Vec<MrcRecord>, TextError> {
    let file: SquadFile = serde_json::from_slice(input).map_err(|e| TextError::Json(e.to_string()))?;
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for article in file.data {
        for para in article.paragraphs {
            let passage = tokenize(&para.context);
            for qa in para.qas {
                if !seen.insert(qa.id.clone()) {
                    return Err(TextError::DuplicateId(qa.id));
                }
                let answers = qa
                    .answers
                    .iter()
                    .map(|a| align_answer(&qa.id, &passage, a))
                    .collect::<Result<Vec<_>, _>>()?;
                records.push(MrcRecord {
                    question: tokenize(&qa.question),
                    passage: passage.clone(),
                    answers,
                    id: qa.id,
                });
            }
        }
    }
    Ok(records)
}

/// Emits one article; consecutive records sharing a passage text share a
/// paragraph.
pub fn emit_mrc_json(records: &[MrcRecord]) -> Vec<u8> {
    let mut paragraphs: Vec<SquadParagraph> = Vec::new();
    for r in records {
        let qa = SquadQa {
            id: r.id.clone(),
            question: r.question.text().to_owned(),
            answers: r
                .answers
                .iter()
                .map(|a| {
                    let byte = r.passage.offsets().get(a.span.start).map_or(0, |o| o.0);
                    SquadAnswer {
                        text: a.text.clone(),
                        answer_start: r.passage.text()[..byte].chars().count(),
                    }
                })
                .collect(),
        };
        match paragraphs.last_mut() {
            Some(p) if p.context == r.passage.text() => p.qas.push(qa),
            _ => paragraphs.push(SquadParagraph {
                context: r.passage.text().to_owned(),
                qas: vec![qa],
            }),
        }
    }
    let file = SquadFile {
        version: Some("1.1".into()),
        data: vec![SquadArticle {
            title: String::new(),
            paragraphs,
        }],
    };
    let mut out = serde_json::to_vec_pretty(&file).expect("squad structs serialize");
    out.push(b'\n');
    out
}
