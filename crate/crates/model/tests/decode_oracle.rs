use ndarray::{Array1, Array2};
use rand::Rng;

use spancal_core::rng::derive_rng;
use spancal_model::decode::{best_pair, decode_answer};
use spancal_model::heads::masked_softmax;
use spancal_model::params::{ModelConfig, ModelParams};

/// Scores every pair with the concatenated-state form of the matching head.
fn exhaustive(
    ps: &Array1<f64>,
    pe: &Array1<f64>,
    h: &Array2<f64>,
    w: &Array1<f64>,
    b: f64,
    passage: (usize, usize),
    max_len: usize,
    lambda: f64,
) -> Option<((usize, usize), f64)> {
    let mut best: Option<((usize, usize), f64)> = None;
    for i in passage.0..passage.1 {
        for j in i..passage.1 {
            if j >= i + max_len {
                continue;
            }
            let cat: Vec<f64> = h.row(i).iter().chain(h.row(j).iter()).copied().collect();
            let z: f64 = cat.iter().zip(w.iter()).map(|(x, y)| x * y).sum::<f64>() + b;
            let p = 1.0 / (1.0 + (-z).exp());
            let s = ps[i].ln() + pe[j].ln() + if lambda == 0.0 { 0.0 } else { lambda * p.ln() };
            if s.is_finite() && best.is_none_or(|(_, bs)| s > bs) {
                best = Some(((i, j), s));
            }
        }
    }
    best
}

#[test]
fn decode_matches_exhaustive_enumeration() {
    let mut rng = derive_rng(2024, "decode-oracle");
    let d = 4;
    let cfg = ModelConfig {
        vocab_size: 8,
        d_model: d,
        heads: 1,
        d_ff: 4,
        blocks: 0,
        max_len: 80,
        n_types: 2,
        n_tags: 3,
    };
    let mut agree = 0;
    for case in 0..500 {
        let n = rng.gen_range(1..=64);
        let lo = rng.gen_range(0..=n / 4);
        let hi = rng.gen_range(lo + 1..=n);
        let total = n + rng.gen_range(0..6);
        let sharp = rng.gen_range(0.5..6.0);
        let ls = Array1::from_shape_fn(total, |_| rng.gen_range(-sharp..sharp));
        let le = Array1::from_shape_fn(total, |_| rng.gen_range(-sharp..sharp));
        let ps = masked_softmax(&ls, &(lo..hi));
        let pe = masked_softmax(&le, &(lo..hi));
        let mut params = ModelParams::init(&cfg, case).unwrap();
        params.idx_w.mapv_inplace(|_| rng.gen_range(-2.0..2.0));
        params.idx_b[0] = rng.gen_range(-1.0..1.0);
        let h = Array2::from_shape_fn((total, d), |_| rng.gen_range(-1.5..1.5));
        let max_len = if rng.gen_bool(0.5) { rng.gen_range(1..=n) } else { 8 };
        let lambda = if rng.gen_bool(0.2) { 0.0 } else { 1.0 };

        let ans = decode_answer(&ps, &pe, &params, &h, &(lo..hi), max_len, lambda);
        let oracle = exhaustive(&ps, &pe, &h, &params.idx_w, params.idx_b[0], (lo, hi), max_len, lambda);
        let (pair, score) = oracle.expect("some pair is always valid");
        assert!(!ans.fallback);
        assert!(ans.start <= ans.end && ans.end < ans.start + max_len);
        assert!((ans.score - score).abs() < 1e-9, "case {case}: {} vs {score}", ans.score);
        if (ans.start, ans.end) == pair {
            agree += 1;
        }
    }
    // scores agree everywhere; pairs can only differ on exact ties
    assert_eq!(agree, 500);
}

#[test]
fn best_pair_handles_masked_rows() {
    let ps = Array1::from_vec(vec![0.0, 0.2, 0.8, 0.0]);
    let pe = Array1::from_vec(vec![0.0, 0.7, 0.3, 0.0]);
    let z = Array1::zeros(4);
    let d = best_pair(&ps, &pe, &z, &z, 0.0, &(0..4), 8, 0.0).unwrap();
    assert_eq!((d.start, d.end), (2, 2));
    let d = best_pair(&ps, &pe, &z, &z, 0.0, &(0..4), 1, 0.0).unwrap();
    assert_eq!((d.start, d.end), (2, 2));
}
