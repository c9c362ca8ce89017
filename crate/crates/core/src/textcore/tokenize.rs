use std::fmt;

use serde::de::{self, Deserializer, SeqAccess, Visitor};
use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};

use super::{Span, TextError};

/// Tokenized text with byte-offset back-pointers into the source string.
///
/// Offsets are strictly increasing, non-overlapping and never empty. A
/// sequence built from bare tokens (CoNLL, JSONL) owns a synthesized source
/// text in which tokens are joined by single spaces.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct TokenSeq {
    text: String,
    offsets: Vec<(usize, usize)>,
}

impl TokenSeq {
    /// Builds a sequence from pre-split tokens, joining them with single spaces.
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self, TextError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut text = String::new();
        let mut offsets = Vec::new();
        for (i, tok) in tokens.into_iter().enumerate() {
            let tok = tok.as_ref();
            if tok.is_empty() {
                return Err(TextError::EmptyToken { index: i });
            }
            if !text.is_empty() {
                text.push(' ');
            }
            let start = text.len();
            text.push_str(tok);
            offsets.push((start, text.len()));
        }
        Ok(Self { text, offsets })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn offsets(&self) -> &[(usize, usize)] {
        &self.offsets
    }

    /// Panics if `i` is out of range.
    pub fn token(&self, i: usize) -> &str {
        let (s, e) = self.offsets[i];
        &self.text[s..e]
    }

    pub fn tokens(&self) -> impl ExactSizeIterator<Item = &str> + '_ {
        self.offsets.iter().map(move |&(s, e)| &self.text[s..e])
    }

    pub fn to_vec(&self) -> Vec<String> {
        self.tokens().map(str::to_owned).collect()
    }

    /// Source text covered by `span`, including inner whitespace.
    pub fn span_text(&self, span: &Span) -> &str {
        if span.start >= span.end || span.end > self.len() {
            return "";
        }
        &self.text[self.offsets[span.start].0..self.offsets[span.end - 1].1]
    }

    /// Tokens of `span` re-joined with single spaces.
    pub fn span_tokens(&self, span: &Span) -> Vec<&str> {
        (span.start..span.end.min(self.len()))
            .map(|i| self.token(i))
            .collect()
    }

    /// Index of the token starting exactly at byte `pos`.
    pub fn token_starting_at(&self, pos: usize) -> Option<usize> {
        self.offsets.binary_search_by_key(&pos, |o| o.0).ok()
    }

    /// Index of the token ending exactly at byte `pos`.
    pub fn token_ending_at(&self, pos: usize) -> Option<usize> {
        self.offsets.binary_search_by_key(&pos, |o| o.1).ok()
    }

    /// Token span covering exactly the byte range `[start, end)`, if the
    /// range is aligned to token boundaries.
    pub fn aligned_span(&self, start: usize, end: usize) -> Option<Span> {
        let s = self.token_starting_at(start)?;
        let e = self.token_ending_at(end)?;
        (s <= e).then(|| Span::new(s, e + 1))
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

/// Length in bytes of a bracketed special token (`[PAD]`, `[SEP]`, ...) at the
/// start of `s`.
fn special_token_len(s: &str) -> Option<usize> {
    let rest = s.strip_prefix('[')?;
    let inner = rest.bytes().take_while(u8::is_ascii_uppercase).count();
    (inner > 0 && rest.as_bytes().get(inner) == Some(&b']')).then_some(inner + 2)
}

/// Splits on whitespace, then separates every non-alphanumeric character into
/// its own token. Bracketed upper-case markers such as `[PAD]` stay whole.
pub fn tokenize(text: &str) -> TokenSeq {
    let mut offsets = Vec::new();
    let mut word_start: Option<usize> = None;
    let mut iter = text.char_indices().peekable();
    while let Some((i, c)) = iter.next() {
        if is_word_char(c) {
            word_start.get_or_insert(i);
            continue;
        }
        if let Some(ws) = word_start.take() {
            offsets.push((ws, i));
        }
        if c.is_whitespace() {
            continue;
        }
        if let Some(n) = special_token_len(&text[i..]) {
            offsets.push((i, i + n));
            while iter.peek().is_some_and(|&(j, _)| j < i + n) {
                iter.next();
            }
            continue;
        }
        offsets.push((i, i + c.len_utf8()));
    }
    if let Some(ws) = word_start {
        offsets.push((ws, text.len()));
    }
    TokenSeq {
        text: text.to_owned(),
        offsets,
    }
}

impl Serialize for TokenSeq {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.len()))?;
        for tok in self.tokens() {
            seq.serialize_element(tok)?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for TokenSeq {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct TokensVisitor;

        impl<'de> Visitor<'de> for TokensVisitor {
            type Value = TokenSeq;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an array of non-empty token strings")
            }

            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<TokenSeq, A::Error> {
                let mut toks: Vec<String> = Vec::with_capacity(seq.size_hint().unwrap_or(0));
                while let Some(t) = seq.next_element()? {
                    toks.push(t);
                }
                TokenSeq::from_tokens(toks).map_err(de::Error::custom)
            }
        }

        deserializer.deserialize_seq(TokensVisitor)
    }
}
