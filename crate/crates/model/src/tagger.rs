//! First-pass BIO tagger: per-token softmax over `H·W_B + b` on
//! `[CLS] s [SEP]`, trained with token cross-entropy.

use ndarray::{s, Axis};

use spancal_core::textcore::{repair_bio, BioTag};
use spancal_core::LabeledSentence;

use crate::encode::{Vocab, CLS, SEP};
use crate::encoder;
use crate::heads::{argmax, LossBreakdown};
use crate::nn;
use crate::params::{ModelConfig, ModelParams};
use crate::train::{train_loop, EpochLog, TrainConfig};
use crate::ModelError;

/// `O` first, then `B-T`, `I-T` for each type in order.
pub fn bio_labels(types: &[String]) -> Vec<String> {
    let mut out = vec!["O".to_string()];
    for t in types {
        out.push(format!("B-{t}"));
        out.push(format!("I-{t}"));
    }
    out
}

/// One training chunk: ids with `[CLS]`/`[SEP]` and a tag per inner token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagExample {
    pub ids: Vec<usize>,
    pub tags: Vec<usize>,
}

fn wrap(vocab: &Vocab, tokens: &[&str]) -> Vec<usize> {
    let mut ids = vec![CLS];
    ids.extend(vocab.ids(tokens.iter().copied()));
    ids.push(SEP);
    ids
}

/// Mean token cross-entropy; with `grads`, accumulates its gradient times
/// the scale.
pub fn tagger_loss(p: &ModelParams, ex: &TagExample, grads: Option<(&mut ModelParams, f64)>) -> Result<f64, ModelError> {
    if ex.tags.len() + 2 != ex.ids.len() {
        return Err(ModelError::Data("tag count does not match the sentence".into()));
    }
    if let Some(&t) = ex.tags.iter().find(|&&t| t >= p.config.n_tags) {
        return Err(ModelError::Data(format!("tag index {t} outside {} labels", p.config.n_tags)));
    }
    let indicator = vec![0; ex.ids.len()];
    let (h, cache) = encoder::forward(p, &ex.ids, &indicator)?;
    let n = ex.tags.len();
    if n == 0 {
        return Ok(0.0);
    }
    let inner = h.slice(s![1..=n, ..]);
    let logits = inner.dot(&p.tag_w) + &p.tag_b;
    let mut dz = logits.clone();
    let mut loss = 0.0;
    for ((mut row, z), &y) in dz.axis_iter_mut(Axis(0)).zip(logits.axis_iter(Axis(0))).zip(&ex.tags) {
        let lp = nn::log_softmax(&z);
        loss -= lp[y];
        row.assign(&lp.mapv(f64::exp));
        row[y] -= 1.0;
    }
    loss /= n as f64;
    if !loss.is_finite() {
        return Err(ModelError::NonFinite);
    }
    if let Some((g, scale)) = grads {
        dz *= scale / n as f64;
        g.tag_w += &inner.t().dot(&dz);
        g.tag_b += &dz.sum_axis(Axis(0));
        let mut dh = ndarray::Array2::zeros(h.dim());
        dh.slice_mut(s![1..=n, ..]).assign(&dz.dot(&p.tag_w.t()));
        encoder::backward(p, &cache, &dh, g);
    }
    Ok(loss)
}

/// Per-token argmax (ties to the lowest label index) followed by BIO repair.
pub fn base_tag(p: &ModelParams, vocab: &Vocab, labels: &[String], tokens: &[&str]) -> Result<Vec<String>, ModelError> {
    let window = p.config.max_len.saturating_sub(2).max(1);
    let mut raw = Vec::with_capacity(tokens.len());
    for chunk in tokens.chunks(window) {
        let ids = wrap(vocab, chunk);
        let h = encoder::encode(p, &ids, &vec![0; ids.len()])?;
        for k in 1..=chunk.len() {
            let z = h.row(k).dot(&p.tag_w) + &p.tag_b;
            raw.push(labels[argmax(&z.view())].clone());
        }
    }
    let mut tags: Vec<BioTag> = raw
        .iter()
        .map(|l| l.parse().map_err(|_| ModelError::Data(format!("bad label `{l}`"))))
        .collect::<Result<_, _>>()?;
    repair_bio(&mut tags);
    Ok(tags.iter().map(ToString::to_string).collect())
}

/// Trained base tagger with its vocabulary and label set.
#[derive(Debug, Clone, PartialEq)]
pub struct Tagger {
    pub params: ModelParams,
    pub vocab: Vocab,
    pub labels: Vec<String>,
}

impl Tagger {
    /// Splits sentences into chunks that fit the model and maps labels to
    /// indices. Unknown labels are an error.
    pub fn examples(&self, sentences: &[LabeledSentence]) -> Result<Vec<TagExample>, ModelError> {
        let window = self.params.config.max_len.saturating_sub(2).max(1);
        let mut out = Vec::new();
        for s in sentences {
            let toks: Vec<&str> = s.tokens.tokens().collect();
            for (tc, lc) in toks.chunks(window).zip(s.labels.chunks(window)) {
                let tags = lc
                    .iter()
                    .map(|l| {
                        self.labels
                            .iter()
                            .position(|x| x == l)
                            .ok_or_else(|| ModelError::Data(format!("unknown label `{l}`")))
                    })
                    .collect::<Result<_, _>>()?;
                out.push(TagExample { ids: wrap(&self.vocab, tc), tags });
            }
        }
        Ok(out)
    }

    /// Fresh tagger sized for `sentences`: vocabulary and types come from the
    /// data.
    pub fn init(sentences: &[LabeledSentence], mut config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        let vocab = Vocab::build(sentences.iter().flat_map(|s| s.tokens.tokens()));
        let mut types: Vec<String> = sentences
            .iter()
            .flat_map(|s| s.spans())
            .filter_map(|sp| sp.label)
            .collect();
        types.sort();
        types.dedup();
        let labels = bio_labels(&types);
        config.vocab_size = vocab.len();
        config.n_types = types.len().max(1);
        config.n_tags = labels.len();
        Ok(Self {
            params: ModelParams::init(&config, seed)?,
            vocab,
            labels,
        })
    }

    pub fn fit(self, sentences: &[LabeledSentence], cfg: &TrainConfig) -> Result<(Self, Vec<EpochLog>), ModelError> {
        let data = self.examples(sentences)?;
        let (params, log) = train_loop(self.params, data.len(), cfg, |p, i, _rng, g, scale| {
            let l = tagger_loss(p, &data[i], Some((g, scale)))?;
            Ok(LossBreakdown { l_total: l, ..Default::default() })
        })?;
        Ok((Self { params, ..self }, log))
    }

    pub fn tag(&self, tokens: &[&str]) -> Result<Vec<String>, ModelError> {
        base_tag(&self.params, &self.vocab, &self.labels, tokens)
    }
}
