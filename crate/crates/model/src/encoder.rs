//! Pre-LN transformer encoder: `H = LN_f(Blocks(E_W[ids] + E_P + E_I[ind]))`.

use ndarray::{Array2, Axis};

use crate::nn::{self, AttnCache, LnCache};
use crate::params::{Block, ModelParams};
use crate::ModelError;

struct BlockCache {
    ln1: LnCache,
    a: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    attn: AttnCache,
    att: Array2<f64>,
    ln2: LnCache,
    b: Array2<f64>,
    u: Array2<f64>,
    g: Array2<f64>,
}

pub struct EncoderCache {
    ids: Vec<usize>,
    indicator: Vec<usize>,
    blocks: Vec<BlockCache>,
    lnf: LnCache,
}

fn check_input(p: &ModelParams, ids: &[usize], indicator: &[usize]) -> Result<(), ModelError> {
    let c = &p.config;
    if ids.len() > c.max_len {
        return Err(ModelError::Overlong { len: ids.len(), max: c.max_len });
    }
    if let Some(&id) = ids.iter().find(|&&id| id >= c.vocab_size) {
        return Err(ModelError::BadToken { id, vocab: c.vocab_size });
    }
    if indicator.len() != ids.len() || indicator.iter().any(|&i| i > 1) {
        return Err(ModelError::Data("indicator must be 0/1 and match the ids".into()));
    }
    Ok(())
}

fn block_forward(blk: &Block, x: &mut Array2<f64>, heads: usize) -> BlockCache {
    let (a, ln1) = nn::layer_norm(x, &blk.ln1_g, &blk.ln1_b);
    let q = nn::affine(&a.view(), &blk.wq, &blk.bq);
    let k = a.dot(&blk.wk);
    let v = nn::affine(&a.view(), &blk.wv, &blk.bv);
    let (att, attn) = nn::attention(&q, &k, &v, heads);
    *x += &nn::affine(&att.view(), &blk.wo, &blk.bo);
    let (b, ln2) = nn::layer_norm(x, &blk.ln2_g, &blk.ln2_b);
    let u = nn::affine(&b.view(), &blk.w1, &blk.b1);
    let g = nn::gelu(&u);
    *x += &nn::affine(&g.view(), &blk.w2, &blk.b2);
    BlockCache { ln1, a, q, k, v, attn, att, ln2, b, u, g }
}

/// Returns `dx` given `dy` for one block, accumulating parameter gradients.
fn block_backward(blk: &Block, c: &BlockCache, dy: Array2<f64>, gb: &mut Block, heads: usize) -> Array2<f64> {
    let mut dx = dy;
    // feed-forward residual branch
    nn::acc_tn(&mut gb.w2, &c.g.view(), &dx.view());
    nn::acc_colsum(&mut gb.b2, &dx);
    let du = dx.dot(&blk.w2.t()) * nn::gelu_grad(&c.u);
    nn::acc_tn(&mut gb.w1, &c.b.view(), &du.view());
    nn::acc_colsum(&mut gb.b1, &du);
    let db = du.dot(&blk.w1.t());
    dx += &nn::layer_norm_back(&db, &blk.ln2_g, &c.ln2, &mut gb.ln2_g, &mut gb.ln2_b);
    // attention residual branch
    nn::acc_tn(&mut gb.wo, &c.att.view(), &dx.view());
    nn::acc_colsum(&mut gb.bo, &dx);
    let datt = dx.dot(&blk.wo.t());
    let (dq, dk, dv) = nn::attention_back(&datt, &c.q, &c.k, &c.v, heads, &c.attn);
    nn::acc_tn(&mut gb.wq, &c.a.view(), &dq.view());
    nn::acc_tn(&mut gb.wk, &c.a.view(), &dk.view());
    nn::acc_tn(&mut gb.wv, &c.a.view(), &dv.view());
    nn::acc_colsum(&mut gb.bq, &dq);
    nn::acc_colsum(&mut gb.bv, &dv);
    let mut da = dq.dot(&blk.wq.t());
    da += &dk.dot(&blk.wk.t());
    da += &dv.dot(&blk.wv.t());
    dx += &nn::layer_norm_back(&da, &blk.ln1_g, &c.ln1, &mut gb.ln1_g, &mut gb.ln1_b);
    dx
}

/// Contextual states `H` (`len × d`) plus the cache for [`backward`].
pub fn forward(p: &ModelParams, ids: &[usize], indicator: &[usize]) -> Result<(Array2<f64>, EncoderCache), ModelError> {
    check_input(p, ids, indicator)?;
    let d = p.config.d_model;
    let mut x = Array2::zeros((ids.len(), d));
    for (t, mut row) in x.axis_iter_mut(Axis(0)).enumerate() {
        row += &p.word_emb.row(ids[t]);
        row += &p.pos_emb.row(t);
        row += &p.idx_emb.row(indicator[t]);
    }
    let blocks = p.blocks.iter().map(|b| block_forward(b, &mut x, p.config.heads)).collect();
    let (h, lnf) = nn::layer_norm(&x, &p.lnf_g, &p.lnf_b);
    Ok((
        h,
        EncoderCache {
            ids: ids.to_vec(),
            indicator: indicator.to_vec(),
            blocks,
            lnf,
        },
    ))
}

/// `H̄` for one sequence.
pub fn encode(p: &ModelParams, ids: &[usize], indicator: &[usize]) -> Result<Array2<f64>, ModelError> {
    forward(p, ids, indicator).map(|(h, _)| h)
}

/// Back-propagates `dh` through the encoder into `grads`.
pub fn backward(p: &ModelParams, cache: &EncoderCache, dh: &Array2<f64>, grads: &mut ModelParams) {
    let mut dx = nn::layer_norm_back(dh, &p.lnf_g, &cache.lnf, &mut grads.lnf_g, &mut grads.lnf_b);
    for ((blk, c), gb) in p.blocks.iter().zip(&cache.blocks).zip(grads.blocks.iter_mut()).rev() {
        dx = block_backward(blk, c, dx, gb, p.config.heads);
    }
    for (t, row) in dx.axis_iter(Axis(0)).enumerate() {
        let mut w = grads.word_emb.row_mut(cache.ids[t]);
        w += &row;
        let mut pe = grads.pos_emb.row_mut(t);
        pe += &row;
        let mut ie = grads.idx_emb.row_mut(cache.indicator[t]);
        ie += &row;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ModelConfig;

    fn tiny() -> ModelParams {
        let c = ModelConfig {
            vocab_size: 9,
            d_model: 8,
            heads: 2,
            d_ff: 12,
            blocks: 2,
            max_len: 10,
            n_types: 2,
            n_tags: 5,
        };
        ModelParams::init(&c, 5).unwrap()
    }

    #[test]
    fn deterministic_and_shaped() {
        let p = tiny();
        let ids = [2, 5, 6, 3, 7, 8, 3];
        let ind = [0, 0, 0, 0, 1, 1, 0];
        let a = encode(&p, &ids, &ind).unwrap();
        let b = encode(&tiny(), &ids, &ind).unwrap();
        assert_eq!(a.dim(), (7, 8));
        assert_eq!(a, b);
    }

    #[test]
    fn zero_index_embedding_ignores_indicator() {
        let p = tiny();
        let ids = [2, 5, 6, 3, 7, 8, 3];
        let a = encode(&p, &ids, &[0, 0, 0, 0, 1, 1, 0]).unwrap();
        let b = encode(&p, &ids, &[0; 7]).unwrap();
        assert_eq!(a, b);
        let mut q = p.clone();
        q.idx_emb.row_mut(1).fill(0.5);
        let c = encode(&q, &ids, &[0, 0, 0, 0, 1, 1, 0]).unwrap();
        assert_eq!(c.dim(), a.dim());
        assert_ne!(c, a);
    }

    #[test]
    fn rejects_bad_input() {
        let p = tiny();
        assert!(matches!(encode(&p, &[1; 11], &[0; 11]), Err(ModelError::Overlong { .. })));
        assert!(matches!(encode(&p, &[9], &[0]), Err(ModelError::BadToken { id: 9, .. })));
        assert!(encode(&p, &[1, 2], &[0]).is_err());
    }
}
