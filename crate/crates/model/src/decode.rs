//! Span decoding from pointer distributions and the matching head.

use std::ops::Range;

use ndarray::{s, Array1, Array2};

use crate::heads::{argmax, cls_probs};
use crate::nn;
use crate::params::ModelParams;

pub const LAMBDA: f64 = 1.0;
pub const MAX_SPAN_NER: usize = 8;
pub const MAX_SPAN_MRC: usize = 30;

/// Best pair in sequence coordinates (`j` inclusive).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decoded {
    pub start: usize,
    pub end: usize,
    pub score: f64,
}

/// Maximizes `log ps[i] + log pe[j] + lambda·log σ(a[i] + b[j] + bias)` over
/// `i <= j < i + max_len` inside `valid`. Ties keep the first pair in `(i, j)`
/// order; pairs with a non-finite score are never chosen.
#[allow(clippy::too_many_arguments)]
pub fn best_pair(
    ps: &Array1<f64>,
    pe: &Array1<f64>,
    a: &Array1<f64>,
    b: &Array1<f64>,
    bias: f64,
    valid: &Range<usize>,
    max_len: usize,
    lambda: f64,
) -> Option<Decoded> {
    let mut best: Option<Decoded> = None;
    for i in valid.clone() {
        let li = ps[i].ln();
        if li == f64::NEG_INFINITY {
            continue;
        }
        for j in i..valid.end.min(i.saturating_add(max_len)) {
            let mut score = li + pe[j].ln();
            if lambda != 0.0 {
                score += lambda * log_sigmoid(a[i] + b[j] + bias);
            }
            if score.is_finite() && best.map_or(true, |bst| score > bst.score) {
                best = Some(Decoded { start: i, end: j, score });
            }
        }
    }
    best
}

fn log_sigmoid(z: f64) -> f64 {
    -nn::bce_with_logit(z, 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Answer {
    pub start: usize,
    pub end: usize,
    pub score: f64,
    /// Type index from the classification head.
    pub cls: usize,
    /// No valid pair: the whole passage is returned.
    pub fallback: bool,
}

/// Decodes one sequence given its pointer distributions and states `h`.
pub fn decode_answer(
    ps: &Array1<f64>,
    pe: &Array1<f64>,
    params: &ModelParams,
    h: &Array2<f64>,
    passage: &Range<usize>,
    max_len: usize,
    lambda: f64,
) -> Answer {
    let d = params.config.d_model;
    let a = h.dot(&params.idx_w.slice(s![..d]));
    let b = h.dot(&params.idx_w.slice(s![d..]));
    match best_pair(ps, pe, &a, &b, params.idx_b[0], passage, max_len, lambda) {
        Some(bp) => Answer {
            start: bp.start,
            end: bp.end,
            score: bp.score,
            cls: argmax(&cls_probs(params, h, bp.start, bp.end).view()),
            fallback: false,
        },
        None => {
            let (i, j) = (passage.start, passage.end.saturating_sub(1).max(passage.start));
            Answer {
                start: i,
                end: j,
                score: f64::NEG_INFINITY,
                cls: argmax(&cls_probs(params, h, i, j).view()),
                fallback: true,
            }
        }
    }
}
