use ndarray::{Array1, Array2, ArrayD, ArrayViewD, ArrayViewMutD, IxDyn};
use rand::Rng;
use serde::{Deserialize, Serialize};

use spancal_core::rng::derive_rng;

use crate::ModelError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub heads: usize,
    pub d_ff: usize,
    pub blocks: usize,
    pub max_len: usize,
    /// Entity types for the classification head.
    pub n_types: usize,
    /// BIO labels for the tagger head.
    pub n_tags: usize,
}

impl ModelConfig {
    pub fn desk(vocab_size: usize, n_types: usize) -> Self {
        Self {
            vocab_size,
            d_model: 64,
            heads: 4,
            d_ff: 256,
            blocks: 2,
            max_len: 128,
            n_types,
            n_tags: 1 + 2 * n_types,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Config(m.to_owned()));
        if self.d_model == 0 || self.heads == 0 || self.d_model % self.heads != 0 {
            return bad("d_model must be a positive multiple of heads");
        }
        if self.vocab_size == 0 || self.max_len == 0 || self.d_ff == 0 {
            return bad("vocab_size, max_len and d_ff must be positive");
        }
        if self.n_tags == 0 {
            return bad("n_tags must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub ln1_g: Array1<f64>,
    pub ln1_b: Array1<f64>,
    pub wq: Array2<f64>,
    pub bq: Array1<f64>,
    /// No key bias: it shifts every score in a row equally, so softmax
    /// ignores it.
    pub wk: Array2<f64>,
    pub wv: Array2<f64>,
    pub bv: Array1<f64>,
    pub wo: Array2<f64>,
    pub bo: Array1<f64>,
    pub ln2_g: Array1<f64>,
    pub ln2_b: Array1<f64>,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

/// All trainable tensors. Weight matrices map row vectors on the right
/// (`x · W`), so `wq` is `d × d` and `w1` is `d × d_ff`; head weights are
/// stored as `d × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub word_emb: Array2<f64>,
    pub pos_emb: Array2<f64>,
    pub idx_emb: Array2<f64>,
    pub blocks: Vec<Block>,
    pub lnf_g: Array1<f64>,
    pub lnf_b: Array1<f64>,
    pub start_w: Array1<f64>,
    pub start_b: Array1<f64>,
    pub end_w: Array1<f64>,
    pub end_b: Array1<f64>,
    pub cls_w: Array2<f64>,
    pub cls_b: Array1<f64>,
    pub idx_w: Array1<f64>,
    pub idx_b: Array1<f64>,
    pub mlm_w: Array2<f64>,
    pub mlm_b: Array1<f64>,
    pub tag_w: Array2<f64>,
    pub tag_b: Array1<f64>,
}

fn uniform<R: Rng>(rng: &mut R, rows: usize, cols: usize, fan_in: usize) -> Array2<f64> {
    let a = 1.0 / (fan_in as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-a..a))
}

fn uniform1<R: Rng>(rng: &mut R, n: usize, fan_in: usize) -> Array1<f64> {
    let a = 1.0 / (fan_in as f64).sqrt();
    Array1::from_shape_fn(n, |_| rng.gen_range(-a..a))
}

fn sinusoid(len: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((len, d), |(p, i)| {
        let rate = 10_000f64.powf(-((i / 2 * 2) as f64) / d as f64);
        let angle = p as f64 * rate;
        if i % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

impl ModelParams {
    /// Fan-in scaled uniform init; positions start sinusoidal and the
    /// noisy-index embedding starts at zero.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = derive_rng(seed, "init");
        let (d, f) = (config.d_model, config.d_ff);
        let blocks = (0..config.blocks)
            .map(|_| Block {
                ln1_g: Array1::ones(d),
                ln1_b: Array1::zeros(d),
                wq: uniform(&mut rng, d, d, d),
                bq: Array1::zeros(d),
                wk: uniform(&mut rng, d, d, d),
                wv: uniform(&mut rng, d, d, d),
                bv: Array1::zeros(d),
                wo: uniform(&mut rng, d, d, d),
                bo: Array1::zeros(d),
                ln2_g: Array1::ones(d),
                ln2_b: Array1::zeros(d),
                w1: uniform(&mut rng, d, f, d),
                b1: Array1::zeros(f),
                w2: uniform(&mut rng, f, d, f),
                b2: Array1::zeros(d),
            })
            .collect();
        Ok(Self {
            config: config.clone(),
            word_emb: uniform(&mut rng, config.vocab_size, d, 1),
            pos_emb: sinusoid(config.max_len, d),
            idx_emb: Array2::zeros((2, d)),
            blocks,
            lnf_g: Array1::ones(d),
            lnf_b: Array1::zeros(d),
            start_w: uniform1(&mut rng, d, d),
            start_b: Array1::zeros(1),
            end_w: uniform1(&mut rng, d, d),
            end_b: Array1::zeros(1),
            cls_w: uniform(&mut rng, d, config.n_types.max(1), d),
            cls_b: Array1::zeros(config.n_types.max(1)),
            idx_w: uniform1(&mut rng, 2 * d, 2 * d),
            idx_b: Array1::zeros(1),
            mlm_w: uniform(&mut rng, d, config.vocab_size, d),
            mlm_b: Array1::zeros(config.vocab_size),
            tag_w: uniform(&mut rng, d, config.n_tags, d),
            tag_b: Array1::zeros(config.n_tags),
        })
    }

    /// Same shapes, all zeros (gradient accumulator).
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, mut t) in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    pub fn tensors(&self) -> Vec<(String, ArrayViewD<'_, f64>)> {
        let mut v: Vec<(String, ArrayViewD<f64>)> = vec![
            ("word_emb".into(), self.word_emb.view().into_dyn()),
            ("pos_emb".into(), self.pos_emb.view().into_dyn()),
            ("idx_emb".into(), self.idx_emb.view().into_dyn()),
        ];
        for (i, b) in self.blocks.iter().enumerate() {
            let named: [(&str, ArrayViewD<f64>); 15] = [
                ("ln1_g", b.ln1_g.view().into_dyn()),
                ("ln1_b", b.ln1_b.view().into_dyn()),
                ("wq", b.wq.view().into_dyn()),
                ("bq", b.bq.view().into_dyn()),
                ("wk", b.wk.view().into_dyn()),
                ("wv", b.wv.view().into_dyn()),
                ("bv", b.bv.view().into_dyn()),
                ("wo", b.wo.view().into_dyn()),
                ("bo", b.bo.view().into_dyn()),
                ("ln2_g", b.ln2_g.view().into_dyn()),
                ("ln2_b", b.ln2_b.view().into_dyn()),
                ("w1", b.w1.view().into_dyn()),
                ("b1", b.b1.view().into_dyn()),
                ("w2", b.w2.view().into_dyn()),
                ("b2", b.b2.view().into_dyn()),
            ];
            v.extend(named.into_iter().map(|(n, t)| (format!("block{i}.{n}"), t)));
        }
        v.extend([
            ("lnf_g".into(), self.lnf_g.view().into_dyn()),
            ("lnf_b".into(), self.lnf_b.view().into_dyn()),
            ("start_w".into(), self.start_w.view().into_dyn()),
            ("start_b".into(), self.start_b.view().into_dyn()),
            ("end_w".into(), self.end_w.view().into_dyn()),
            ("end_b".into(), self.end_b.view().into_dyn()),
            ("cls_w".into(), self.cls_w.view().into_dyn()),
            ("cls_b".into(), self.cls_b.view().into_dyn()),
            ("idx_w".into(), self.idx_w.view().into_dyn()),
            ("idx_b".into(), self.idx_b.view().into_dyn()),
            ("mlm_w".into(), self.mlm_w.view().into_dyn()),
            ("mlm_b".into(), self.mlm_b.view().into_dyn()),
            ("tag_w".into(), self.tag_w.view().into_dyn()),
            ("tag_b".into(), self.tag_b.view().into_dyn()),
        ]);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, f64>)> {
        let mut v: Vec<(String, ArrayViewMutD<f64>)> = vec![
            ("word_emb".into(), self.word_emb.view_mut().into_dyn()),
            ("pos_emb".into(), self.pos_emb.view_mut().into_dyn()),
            ("idx_emb".into(), self.idx_emb.view_mut().into_dyn()),
        ];
        for (i, b) in self.blocks.iter_mut().enumerate() {
            let named: [(&str, ArrayViewMutD<f64>); 15] = [
                ("ln1_g", b.ln1_g.view_mut().into_dyn()),
                ("ln1_b", b.ln1_b.view_mut().into_dyn()),
                ("wq", b.wq.view_mut().into_dyn()),
                ("bq", b.bq.view_mut().into_dyn()),
                ("wk", b.wk.view_mut().into_dyn()),
                ("wv", b.wv.view_mut().into_dyn()),
                ("bv", b.bv.view_mut().into_dyn()),
                ("wo", b.wo.view_mut().into_dyn()),
                ("bo", b.bo.view_mut().into_dyn()),
                ("ln2_g", b.ln2_g.view_mut().into_dyn()),
                ("ln2_b", b.ln2_b.view_mut().into_dyn()),
                ("w1", b.w1.view_mut().into_dyn()),
                ("b1", b.b1.view_mut().into_dyn()),
                ("w2", b.w2.view_mut().into_dyn()),
                ("b2", b.b2.view_mut().into_dyn()),
            ];
            v.extend(named.into_iter().map(|(n, t)| (format!("block{i}.{n}"), t)));
        }
        v.extend([
            ("lnf_g".into(), self.lnf_g.view_mut().into_dyn()),
            ("lnf_b".into(), self.lnf_b.view_mut().into_dyn()),
            ("start_w".into(), self.start_w.view_mut().into_dyn()),
            ("start_b".into(), self.start_b.view_mut().into_dyn()),
            ("end_w".into(), self.end_w.view_mut().into_dyn()),
            ("end_b".into(), self.end_b.view_mut().into_dyn()),
            ("cls_w".into(), self.cls_w.view_mut().into_dyn()),
            ("cls_b".into(), self.cls_b.view_mut().into_dyn()),
            ("idx_w".into(), self.idx_w.view_mut().into_dyn()),
            ("idx_b".into(), self.idx_b.view_mut().into_dyn()),
            ("mlm_w".into(), self.mlm_w.view_mut().into_dyn()),
            ("mlm_b".into(), self.mlm_b.view_mut().into_dyn()),
            ("tag_w".into(), self.tag_w.view_mut().into_dyn()),
            ("tag_b".into(), self.tag_b.view_mut().into_dyn()),
        ]);
        v
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// `self += scale * other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &ModelParams, scale: f64) {
        for ((_, mut a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.scaled_add(scale, &b);
        }
    }

    pub fn sq_norm(&self) -> f64 {
        self.tensors().iter().map(|(_, t)| t.iter().map(|v| v * v).sum::<f64>()).sum()
    }

    pub fn scale(&mut self, s: f64) {
        for (_, mut t) in self.tensors_mut() {
            t *= s;
        }
    }

    /// Checkpoint document: format version, config and every tensor as
    /// `{shape, data}` keyed by name.
    pub fn to_json(&self) -> serde_json::Value {
        let tensors: serde_json::Map<String, serde_json::Value> = self
            .tensors()
            .into_iter()
            .map(|(n, t)| {
                let data: Vec<f64> = t.iter().copied().collect();
                (n, serde_json::json!({ "shape": t.shape(), "data": data }))
            })
            .collect();
        serde_json::json!({
            "format": CHECKPOINT_FORMAT,
            "config": self.config,
            "tensors": tensors,
        })
    }

    pub fn from_json(doc: &serde_json::Value) -> Result<Self, ModelError> {
        let bad = |m: String| ModelError::Checkpoint(m);
        let format = doc["format"].as_u64().unwrap_or(0);
        if format != CHECKPOINT_FORMAT {
            return Err(bad(format!("unsupported checkpoint format {format}")));
        }
        let config: ModelConfig = serde_json::from_value(doc["config"].clone()).map_err(|e| bad(e.to_string()))?;
        let mut params = ModelParams::init(&config, 0)?;
        let tensors = doc["tensors"].as_object().ok_or_else(|| bad("missing tensors".into()))?;
        for (name, mut t) in params.tensors_mut() {
            #[derive(Deserialize)]
            struct Raw {
                shape: Vec<usize>,
                data: Vec<f64>,
            }
            let raw: Raw = serde_json::from_value(tensors.get(&name).cloned().ok_or_else(|| bad(format!("missing tensor {name}")))?)
                .map_err(|e| bad(format!("{name}: {e}")))?;
            if raw.shape != t.shape() {
                return Err(bad(format!("{name}: shape {:?}, expected {:?}", raw.shape, t.shape())));
            }
            let arr = ArrayD::from_shape_vec(IxDyn(&raw.shape), raw.data).map_err(|e| bad(format!("{name}: {e}")))?;
            t.assign(&arr);
        }
        if !params.is_finite() {
            return Err(bad("checkpoint contains non-finite values".into()));
        }
        Ok(params)
    }
}

pub const CHECKPOINT_FORMAT: u64 = 1;
