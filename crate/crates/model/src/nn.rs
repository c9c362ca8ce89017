//! Row-major layer primitives with hand-written backward passes.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};

pub const LN_EPS: f64 = 1e-5;

/// `acc += a^T · b`
pub fn acc_tn(acc: &mut Array2<f64>, a: &ArrayView2<f64>, b: &ArrayView2<f64>) {
    general_mat_mul(1.0, &a.t(), b, 1.0, acc);
}

/// `x · w + bias` with the bias broadcast over rows.
pub fn affine(x: &ArrayView2<f64>, w: &Array2<f64>, bias: &Array1<f64>) -> Array2<f64> {
    let mut y = x.dot(w);
    y += bias;
    y
}

pub fn acc_colsum(acc: &mut Array1<f64>, dy: &Array2<f64>) {
    *acc += &dy.sum_axis(Axis(0));
}

pub struct LnCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

pub fn layer_norm(x: &Array2<f64>, g: &Array1<f64>, b: &Array1<f64>) -> (Array2<f64>, LnCache) {
    let d = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, is) in xhat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
        let mean = row.sum() / d;
        row -= mean;
        let var = row.iter().map(|v| v * v).sum::<f64>() / d;
        *is = 1.0 / (var + LN_EPS).sqrt();
        row *= *is;
    }
    let y = &xhat * g + b;
    (y, LnCache { xhat, inv_std })
}

pub fn layer_norm_back(
    dy: &Array2<f64>,
    g: &Array1<f64>,
    cache: &LnCache,
    dg: &mut Array1<f64>,
    db: &mut Array1<f64>,
) -> Array2<f64> {
    *dg += &(dy * &cache.xhat).sum_axis(Axis(0));
    *db += &dy.sum_axis(Axis(0));
    let d = dy.ncols() as f64;
    let mut dx = dy * g;
    for ((mut row, xh), is) in dx.rows_mut().into_iter().zip(cache.xhat.rows()).zip(&cache.inv_std) {
        let mean = row.sum() / d;
        let mean_x = row.dot(&xh) / d;
        Zip::from(&mut row).and(&xh).for_each(|r, &x| *r = is * (*r - mean - x * mean_x));
    }
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4;
const GELU_K: f64 = 0.044_715;

pub fn gelu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| 0.5 * v * (1.0 + (GELU_C * (v + GELU_K * v * v * v)).tanh()))
}

pub fn gelu_grad(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| {
        let t = (GELU_C * (v + GELU_K * v * v * v)).tanh();
        0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * v * v)
    })
}

/// In-place row softmax.
pub fn softmax_rows(s: &mut Array2<f64>) {
    for mut row in s.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let z = row.sum();
        row /= z;
    }
}

pub fn log_softmax(v: &ArrayView1<f64>) -> Array1<f64> {
    let m = v.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let lse = m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
    v.mapv(|x| x - lse)
}

pub fn softmax(v: &ArrayView1<f64>) -> Array1<f64> {
    log_softmax(v).mapv(f64::exp)
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `-log sigmoid(z)` for label 1 and `-log(1 - sigmoid(z))` for label 0,
/// computed without overflow.
pub fn bce_with_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

pub struct AttnCache {
    probs: Vec<Array2<f64>>,
}

/// Multi-head scaled dot-product attention over one sequence.
pub fn attention(q: &Array2<f64>, k: &Array2<f64>, v: &Array2<f64>, heads: usize) -> (Array2<f64>, AttnCache) {
    let (t, d) = q.dim();
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut out = Array2::zeros((t, d));
    let mut probs = Vec::with_capacity(heads);
    for h in 0..heads {
        let cols = s![.., h * dh..(h + 1) * dh];
        let mut sc = q.slice(cols).dot(&k.slice(cols).t());
        sc *= scale;
        softmax_rows(&mut sc);
        general_mat_mul(1.0, &sc, &v.slice(cols), 0.0, &mut out.slice_mut(cols));
        probs.push(sc);
    }
    (out, AttnCache { probs })
}

/// Returns (dq, dk, dv).
pub fn attention_back(
    dout: &Array2<f64>,
    q: &Array2<f64>,
    k: &Array2<f64>,
    v: &Array2<f64>,
    heads: usize,
    cache: &AttnCache,
) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let (t, d) = q.dim();
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut dq = Array2::zeros((t, d));
    let mut dk = Array2::zeros((t, d));
    let mut dv = Array2::zeros((t, d));
    for (h, p) in cache.probs.iter().enumerate() {
        let cols = s![.., h * dh..(h + 1) * dh];
        let dout_h = dout.slice(cols);
        let mut dp = dout_h.dot(&v.slice(cols).t());
        general_mat_mul(1.0, &p.t(), &dout_h, 0.0, &mut dv.slice_mut(cols));
        for (mut drow, prow) in dp.rows_mut().into_iter().zip(p.rows()) {
            let inner = drow.dot(&prow);
            Zip::from(&mut drow).and(&prow).for_each(|g, &pp| *g = pp * (*g - inner) * scale);
        }
        general_mat_mul(1.0, &dp, &k.slice(cols), 0.0, &mut dq.slice_mut(cols));
        general_mat_mul(1.0, &dp.t(), &q.slice(cols), 0.0, &mut dk.slice_mut(cols));
    }
    (dq, dk, dv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn softmax_sums_to_one() {
        let p = softmax(&array![1.0, 2.0, 3.0, -50.0].view());
        assert!((p.sum() - 1.0).abs() < 1e-12);
        let p = softmax(&array![20.0, 0.0, 0.0].view());
        assert!(p[0] > 0.999);
    }

    #[test]
    fn bce_matches_definition() {
        for &z in &[-3.0, -0.2, 0.0, 0.7, 5.0] {
            let p = sigmoid(z);
            assert!((bce_with_logit(z, 1.0) + p.ln()).abs() < 1e-12);
            assert!((bce_with_logit(z, 0.0) + (1.0 - p).ln()).abs() < 1e-12);
        }
        assert!((bce_with_logit(0.0, 1.0) - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn layer_norm_rows_are_standardized() {
        let x = array![[1.0, 2.0, 3.0, 4.0], [0.5, -1.0, 2.0, 0.0]];
        let (y, _) = layer_norm(&x, &Array1::ones(4), &Array1::zeros(4));
        for row in y.rows() {
            assert!(row.sum().abs() < 1e-12);
            assert!((row.mapv(|v| v * v).sum() / 4.0 - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn gelu_grad_matches_difference() {
        let x = array![[-2.0, -0.3, 0.0, 0.4, 1.7]];
        let eps = 1e-6;
        let num = (gelu(&(&x + eps)) - gelu(&(&x - eps))) / (2.0 * eps);
        let ana = gelu_grad(&x);
        for (a, n) in ana.iter().zip(num.iter()) {
            assert!((a - n).abs() < 1e-8);
        }
    }
}
