use crate::{Error, RealMatrix, Result};

/// Layer-norm epsilon; small enough that 0.02-scale inputs normalize to unit variance.
pub const LN_EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionWeights {
    pub wq: RealMatrix,
    pub wk: RealMatrix,
    pub wv: RealMatrix,
    pub wo: RealMatrix,
}

#[inline]
pub(crate) fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

/// Row-wise layer norm with population variance.
pub fn layer_norm(x: &RealMatrix, gain: &[f64], bias: &[f64]) -> RealMatrix {
    let d = x.cols();
    let mut out = x.clone();
    for r in 0..x.rows() {
        let row = out.row_mut(r);
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let inv = 1.0 / (var + LN_EPS).sqrt();
        for ((v, g), b) in row.iter_mut().zip(gain).zip(bias) {
            *v = (*v - mean) * inv * g + b;
        }
    }
    out
}

/// Max-subtracted softmax over a slice.
pub fn softmax_in_place(xs: &mut [f64]) {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in xs.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in xs.iter_mut() {
        *v /= sum;
    }
}

/// Scaled dot-product attention per head, heads concatenated, then projected by `wo`.
///
/// Row convention: `q = x·Wq`; scores scaled by `1/√(d_model / n_heads)`.
pub fn multihead_attention(
    x: &RealMatrix,
    w: &AttentionWeights,
    n_heads: usize,
    causal: bool,
) -> Result<RealMatrix> {
    let (t, d) = x.shape();
    if n_heads == 0 || d % n_heads != 0 {
        return Err(Error::dims(format!("{n_heads} heads do not divide width {d}")));
    }
    for m in [&w.wq, &w.wk, &w.wv, &w.wo] {
        if m.shape() != (d, d) {
            return Err(Error::dims(format!(
                "attention projection is {:?}, expected {d}x{d}",
                m.shape()
            )));
        }
    }
    let q = x.matmul(&w.wq)?;
    let k = x.matmul(&w.wk)?;
    let v = x.matmul(&w.wv)?;
    let hd = d / n_heads;
    let scale = 1.0 / (hd as f64).sqrt();
    let mut mixed = RealMatrix::zeros(t, d);
    let mut scores = vec![0.0; t];
    for h in 0..n_heads {
        let cols = h * hd..(h + 1) * hd;
        for i in 0..t {
            let keys = if causal { i + 1 } else { t };
            let qi = &q.row(i)[cols.clone()];
            for (j, s) in scores.iter_mut().enumerate().take(keys) {
                let kj = &k.row(j)[cols.clone()];
                *s = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale;
            }
            softmax_in_place(&mut scores[..keys]);
            let out = &mut mixed.row_mut(i)[cols.clone()];
            for (j, &p) in scores.iter().enumerate().take(keys) {
                let vj = &v.row(j)[cols.clone()];
                for (o, vv) in out.iter_mut().zip(vj) {
                    *o += p * vv;
                }
            }
        }
    }
    mixed.matmul(&w.wo)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_sums_to_one() {
        let mut xs = vec![1000.0, 999.0, -5.0, 0.0];
        softmax_in_place(&mut xs);
        assert!((xs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(xs.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn layer_norm_moments() {
        let x = RealMatrix::from_fn(3, 64, |i, j| ((i * 13 + j * 7) % 17) as f64 * 0.002 - 0.01);
        let y = layer_norm(&x, &[1.0; 64], &[0.0; 64]);
        for r in 0..3 {
            let row = y.row(r);
            let m = row.iter().sum::<f64>() / 64.0;
            let v = row.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / 64.0;
            assert!(m.abs() < 1e-12);
            assert!((v - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn shape_errors() {
        let x = RealMatrix::zeros(2, 4);
        let w = AttentionWeights {
            wq: RealMatrix::zeros(4, 4),
            wk: RealMatrix::zeros(4, 4),
            wv: RealMatrix::zeros(4, 3),
            wo: RealMatrix::zeros(4, 4),
        };
        assert!(multihead_attention(&x, &w, 2, true).is_err());
        assert!(multihead_attention(&x, &w, 3, true).is_err());
    }
}
