//! Calibration heads, their losses and the combined forward/backward pass.

use std::ops::Range;

use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::encode::Encoded;
use crate::encoder;
use crate::nn;
use crate::params::ModelParams;
use crate::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_position: f64,
    pub l_cls: f64,
    pub l_span: f64,
    pub l_mlm: f64,
    pub l_total: f64,
}

impl LossBreakdown {
    pub fn add(&mut self, o: &LossBreakdown) {
        self.l_position += o.l_position;
        self.l_cls += o.l_cls;
        self.l_span += o.l_span;
        self.l_mlm += o.l_mlm;
        self.l_total += o.l_total;
    }

    pub fn scaled(mut self, s: f64) -> Self {
        self.l_position *= s;
        self.l_cls *= s;
        self.l_span *= s;
        self.l_mlm *= s;
        self.l_total *= s;
        self
    }
}

/// `l_total = alpha·l_position + beta·l_cls + gamma·l_span + mlm·l_mlm`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub mlm: f64,
}

impl LossWeights {
    pub fn ner() -> Self {
        Self { alpha: 0.3, beta: 0.3, gamma: 0.4, mlm: 0.0 }
    }

    /// `½(l_position + l_span)`, no type term.
    pub fn mrc() -> Self {
        Self { alpha: 0.5, beta: 0.0, gamma: 0.5, mlm: 0.0 }
    }

    /// PBR pre-training: the MRC objective plus the MLM loss.
    pub fn pretrain() -> Self {
        Self { mlm: 1.0, ..Self::mrc() }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, value) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma), ("mlm", self.mlm)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(ModelError::Weight { name, value });
            }
        }
        Ok(())
    }
}

pub fn joint_loss(position: f64, cls: f64, span: f64, mlm: f64, w: &LossWeights) -> Result<LossBreakdown, ModelError> {
    w.validate()?;
    Ok(LossBreakdown {
        l_position: position,
        l_cls: cls,
        l_span: span,
        l_mlm: mlm,
        l_total: w.alpha * position + w.beta * cls + w.gamma * span + w.mlm * mlm,
    })
}

/// First index of the maximum.
pub fn argmax(v: &ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Softmax over `valid`, exactly zero elsewhere.
pub fn masked_softmax(logits: &Array1<f64>, valid: &Range<usize>) -> Array1<f64> {
    let mut p = Array1::zeros(logits.len());
    if !valid.is_empty() {
        p.slice_mut(s![valid.clone()]).assign(&nn::softmax(&logits.slice(s![valid.clone()])));
    }
    p
}

pub fn pointer_logits(p: &ModelParams, h: &Array2<f64>) -> (Array1<f64>, Array1<f64>) {
    (h.dot(&p.start_w) + p.start_b[0], h.dot(&p.end_w) + p.end_b[0])
}

/// Start and end distributions over the passage positions.
pub fn pointer_probs(p: &ModelParams, h: &Array2<f64>, passage: &Range<usize>) -> (Array1<f64>, Array1<f64>) {
    let (ls, le) = pointer_logits(p, h);
    (masked_softmax(&ls, passage), masked_softmax(&le, passage))
}

/// `-½(log p_start[y_start] + log p_end[y_end])`.
pub fn loss_position(ps: &Array1<f64>, pe: &Array1<f64>, ys: usize, ye: usize) -> Result<f64, ModelError> {
    let (a, b) = (ps.get(ys).copied().unwrap_or(0.0), pe.get(ye).copied().unwrap_or(0.0));
    if a <= 0.0 || b <= 0.0 {
        return Err(ModelError::Data(format!("gold position ({ys}, {ye}) is masked out")));
    }
    Ok(-0.5 * (a.ln() + b.ln()))
}

fn cls_feature(h: &Array2<f64>, i: usize, j: usize) -> Array1<f64> {
    (&h.row(i) + &h.row(j)) * 0.5
}

/// Type distribution from the averaged states at `i` and `j`.
pub fn cls_probs(p: &ModelParams, h: &Array2<f64>, i: usize, j: usize) -> Array1<f64> {
    let f = cls_feature(h, i, j);
    nn::softmax(&(f.dot(&p.cls_w) + &p.cls_b).view())
}

/// Type cross-entropy with features at the argmax start and end rows.
pub fn loss_cls(p: &ModelParams, h: &Array2<f64>, ps: &Array1<f64>, pe: &Array1<f64>, y: usize) -> f64 {
    let pc = cls_probs(p, h, argmax(&ps.view()), argmax(&pe.view()));
    -pc[y].ln()
}

/// Matching logit `W_idx · [H_i; H_j] + b_idx`.
pub fn span_logit(p: &ModelParams, h: &Array2<f64>, i: usize, j: usize) -> f64 {
    let d = p.config.d_model;
    h.row(i).dot(&p.idx_w.slice(s![..d])) + h.row(j).dot(&p.idx_w.slice(s![d..])) + p.idx_b[0]
}

/// Mean binary cross-entropy over labelled pairs.
pub fn loss_span(p: &ModelParams, h: &Array2<f64>, pairs: &[(usize, usize, bool)]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let total: f64 = pairs
        .iter()
        .map(|&(i, j, y)| nn::bce_with_logit(span_logit(p, h, i, j), f64::from(u8::from(y))))
        .sum();
    total / pairs.len() as f64
}

/// Mean cross-entropy over masked positions.
pub fn loss_mlm(p: &ModelParams, h: &Array2<f64>, targets: &[(usize, usize)]) -> f64 {
    if targets.is_empty() {
        return 0.0;
    }
    let total: f64 = targets
        .iter()
        .map(|&(pos, id)| -nn::log_softmax(&(h.row(pos).dot(&p.mlm_w) + &p.mlm_b).view())[id])
        .sum();
    total / targets.len() as f64
}

fn labelled_pairs(enc: &Encoded) -> Vec<(usize, usize, bool)> {
    let mut pairs = Vec::with_capacity(enc.negatives.len() + 1);
    if let Some(t) = enc.target {
        pairs.push((t.start, t.end, true));
    }
    pairs.extend(enc.negatives.iter().map(|&(i, j)| (i, j, false)));
    pairs
}

/// Loss of one encoded example; with `grads`, also accumulates
/// `scale · ∂l_total/∂θ`.
pub fn calibration_loss(
    p: &ModelParams,
    enc: &Encoded,
    w: &LossWeights,
    grads: Option<(&mut ModelParams, f64)>,
) -> Result<LossBreakdown, ModelError> {
    w.validate()?;
    let t = enc
        .target
        .ok_or_else(|| ModelError::Data("calibration example without a gold span".into()))?;
    let (h, cache) = encoder::forward(p, &enc.ids, &enc.indicator)?;
    let (ps, pe) = pointer_probs(p, &h, &enc.passage);
    let l_position = loss_position(&ps, &pe, t.start, t.end)?;
    let (ai, aj) = (argmax(&ps.view()), argmax(&pe.view()));
    let cls_target = t.cls.filter(|_| w.beta > 0.0);
    let pc = cls_target.map(|_| cls_probs(p, &h, ai, aj));
    let l_cls = match (cls_target, &pc) {
        (Some(y), Some(pc)) => -pc[y].ln(),
        _ => 0.0,
    };
    let pairs = if w.gamma > 0.0 { labelled_pairs(enc) } else { Vec::new() };
    let logits: Vec<f64> = pairs.iter().map(|&(i, j, _)| span_logit(p, &h, i, j)).collect();
    let l_span = if pairs.is_empty() {
        0.0
    } else {
        pairs
            .iter()
            .zip(&logits)
            .map(|(&(_, _, y), &z)| nn::bce_with_logit(z, f64::from(u8::from(y))))
            .sum::<f64>()
            / pairs.len() as f64
    };
    let mlm_targets: &[(usize, usize)] = if w.mlm > 0.0 { &enc.mlm } else { &[] };
    let mlm_logits: Vec<Array1<f64>> = mlm_targets
        .iter()
        .map(|&(pos, _)| h.row(pos).dot(&p.mlm_w) + &p.mlm_b)
        .collect();
    let l_mlm = if mlm_targets.is_empty() {
        0.0
    } else {
        mlm_targets
            .iter()
            .zip(&mlm_logits)
            .map(|(&(_, id), z)| -nn::log_softmax(&z.view())[id])
            .sum::<f64>()
            / mlm_targets.len() as f64
    };
    let out = joint_loss(l_position, l_cls, l_span, l_mlm, w)?;
    if !out.l_total.is_finite() {
        return Err(ModelError::NonFinite);
    }
    let Some((g, scale)) = grads else {
        return Ok(out);
    };

    let d = p.config.d_model;
    let mut dh = Array2::<f64>::zeros(h.dim());
    // pointer heads: d l / d logits = ½(p - onehot) on passage positions
    for (probs, y, wv, gw, gb) in [
        (&ps, t.start, &p.start_w, &mut g.start_w, &mut g.start_b),
        (&pe, t.end, &p.end_w, &mut g.end_w, &mut g.end_b),
    ] {
        let mut dz = probs.clone();
        dz[y] -= 1.0;
        dz *= 0.5 * w.alpha * scale;
        for i in enc.passage.clone() {
            let mut row = dh.row_mut(i);
            row.scaled_add(dz[i], wv);
        }
        gw.scaled_add(1.0, &h.t().dot(&dz));
        gb[0] += dz.sum();
    }
    if let (Some(y), Some(pc)) = (cls_target, pc) {
        let mut dz = pc;
        dz[y] -= 1.0;
        dz *= w.beta * scale;
        let f = cls_feature(&h, ai, aj);
        g.cls_w += &f.view().insert_axis(Axis(1)).dot(&dz.view().insert_axis(Axis(0)));
        g.cls_b += &dz;
        let df = p.cls_w.dot(&dz) * 0.5;
        dh.row_mut(ai).scaled_add(1.0, &df);
        dh.row_mut(aj).scaled_add(1.0, &df);
    }
    if !pairs.is_empty() {
        let k = w.gamma * scale / pairs.len() as f64;
        let (wa, wb) = (p.idx_w.slice(s![..d]), p.idx_w.slice(s![d..]));
        for (&(i, j, y), &z) in pairs.iter().zip(&logits) {
            let dz = (nn::sigmoid(z) - f64::from(u8::from(y))) * k;
            g.idx_w.slice_mut(s![..d]).scaled_add(dz, &h.row(i));
            g.idx_w.slice_mut(s![d..]).scaled_add(dz, &h.row(j));
            g.idx_b[0] += dz;
            dh.row_mut(i).scaled_add(dz, &wa);
            dh.row_mut(j).scaled_add(dz, &wb);
        }
    }
    if !mlm_targets.is_empty() {
        let k = w.mlm * scale / mlm_targets.len() as f64;
        for (&(pos, id), z) in mlm_targets.iter().zip(&mlm_logits) {
            let mut dz = nn::softmax(&z.view());
            dz[id] -= 1.0;
            dz *= k;
            g.mlm_w += &h.row(pos).insert_axis(Axis(1)).dot(&dz.view().insert_axis(Axis(0)));
            g.mlm_b += &dz;
            dh.row_mut(pos).scaled_add(1.0, &p.mlm_w.dot(&dz));
        }
    }
    encoder::backward(p, &cache, &dh, g);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn joint_loss_arithmetic() {
        assert_eq!(joint_loss(1.0, 2.0, 3.0, 0.0, &LossWeights::ner()).unwrap().l_total, 2.1);
        assert_eq!(joint_loss(1.0, 7.0, 3.0, 0.0, &LossWeights::mrc()).unwrap().l_total, 2.0);
        assert_eq!(joint_loss(0.0, 0.0, 0.0, 0.0, &LossWeights::ner()).unwrap().l_total, 0.0);
        assert_eq!(joint_loss(1.0, 0.0, 3.0, 4.0, &LossWeights::pretrain()).unwrap().l_total, 6.0);
        let bad = LossWeights { alpha: 1.5, ..LossWeights::ner() };
        assert!(matches!(joint_loss(1.0, 1.0, 1.0, 0.0, &bad), Err(ModelError::Weight { name: "alpha", .. })));
        let neg = LossWeights { gamma: -0.1, ..LossWeights::ner() };
        assert!(joint_loss(1.0, 1.0, 1.0, 0.0, &neg).is_err());
    }

    #[test]
    fn position_loss_cases() {
        let one = array![0.0, 1.0, 0.0];
        assert_eq!(loss_position(&one, &one, 1, 1).unwrap(), 0.0);
        let uni = Array1::from_elem(100, 0.01);
        assert!((loss_position(&uni, &uni, 3, 70).unwrap() - 100f64.ln()).abs() < 1e-9);
        let half = array![0.5, 0.5];
        assert!((loss_position(&half, &half, 0, 1).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!(loss_position(&one, &one, 0, 1).is_err());
    }

    #[test]
    fn masking_and_saturation() {
        let p = masked_softmax(&array![5.0, 1.0, 1.0, 1.0, 9.0], &(1..4));
        assert_eq!(p[0], 0.0);
        assert_eq!(p[4], 0.0);
        for i in 1..4 {
            assert!((p[i] - 1.0 / 3.0).abs() < 1e-12);
        }
        let p = masked_softmax(&array![0.0, 20.0, 0.0], &(0..3));
        assert!(p[1] > 0.999);
        assert!((p.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn argmax_prefers_first() {
        assert_eq!(argmax(&array![1.0, 3.0, 3.0].view()), 1);
        assert_eq!(argmax(&array![0.0, 0.0].view()), 0);
    }
}
