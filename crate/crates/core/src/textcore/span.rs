use std::fmt;

use serde::{Deserialize, Serialize};

/// Half-open token interval `[start, end)` with an optional type label.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Self {
            start,
            end,
            label: None,
        }
    }

    pub fn typed(start: usize, end: usize, label: impl Into<String>) -> Self {
        Self {
            start,
            end,
            label: Some(label.into()),
        }
    }

    pub fn with_label(mut self, label: Option<String>) -> Self {
        self.label = label;
        self
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    /// Number of tokens shared with `other`.
    pub fn overlap(&self, other: &Span) -> usize {
        self.end
            .min(other.end)
            .saturating_sub(self.start.max(other.start))
    }

    pub fn intersects(&self, other: &Span) -> bool {
        self.overlap(other) > 0
    }

    pub fn contains(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn same_bounds(&self, other: &Span) -> bool {
        self.start == other.start && self.end == other.end
    }

    /// Tokens strictly between the two spans; zero when they touch or overlap.
    pub fn gap(&self, other: &Span) -> usize {
        other
            .start
            .saturating_sub(self.end)
            .max(self.start.saturating_sub(other.end))
    }

    pub fn is_valid_within(&self, len: usize) -> bool {
        self.start < self.end && self.end <= len
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.label {
            Some(l) => write!(f, "[{},{}){}", self.start, self.end, l),
            None => write!(f, "[{},{})", self.start, self.end),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlap_and_gap() {
        let a = Span::new(2, 5);
        let b = Span::new(4, 8);
        assert_eq!(a.overlap(&b), 1);
        assert_eq!(a.gap(&b), 0);
        let c = Span::new(8, 9);
        assert_eq!(a.overlap(&c), 0);
        assert_eq!(a.gap(&c), 3);
        assert_eq!(c.gap(&a), 3);
        assert_eq!(Span::new(0, 2).gap(&Span::new(2, 3)), 0);
    }

    #[test]
    fn containment() {
        assert!(Span::new(3, 7).contains(&Span::new(4, 6)));
        assert!(!Span::new(4, 6).contains(&Span::new(3, 7)));
    }
}
