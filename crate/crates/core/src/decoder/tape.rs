//! Matrix-level reverse-mode automatic differentiation.

use crate::{Error, RealMatrix, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(usize),
    MatMul(Var, Var),
    /// `a · bᵀ`
    MatMulT(Var, Var),
    Add(Var, Var),
    /// Adds a 1×n row to every row.
    AddRow(Var, Var),
    Scale(Var, f64),
    Silu(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: RealMatrix,
        inv_std: Vec<f64>,
    },
    Softmax {
        x: Var,
    },
    SliceCols {
        x: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    /// Mean of all entries, as a 1×1 value.
    Mean(Var),
    CrossEntropy {
        logits: Var,
        targets: Vec<u32>,
        probs: RealMatrix,
    },
}

#[derive(Debug)]
struct Node {
    value: RealMatrix,
    op: Op,
}

/// Records primal operations with the intermediates their gradients need.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Parameter gradients from one backward pass, indexed by parameter id.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<RealMatrix>>,
}

impl Gradients {
    /// Gradient of a parameter; errors if the parameter never entered the tape.
    pub fn get(&self, param: usize) -> Result<&RealMatrix> {
        self.grads
            .get(param)
            .and_then(Option::as_ref)
            .ok_or_else(|| Error::precondition(format!("parameter {param} was not recorded on the tape")))
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn into_vec(self) -> Vec<Option<RealMatrix>> {
        self.grads
    }
}

pub const DECODER_LN_EPS: f64 = 1e-5;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn add_into(slot: &mut Option<RealMatrix>, g: RealMatrix) {
    match slot {
        Some(acc) => {
            for (a, v) in acc.data_mut().iter_mut().zip(g.data()) {
                *a += v;
            }
        }
        None => *slot = Some(g),
    }
}

fn check_same(a: &RealMatrix, b: &RealMatrix, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::dims(format!("{what}: {:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: RealMatrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &RealMatrix {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A value that receives no gradient.
    pub fn constant(&mut self, value: RealMatrix) -> Var {
        self.push(value, Op::Constant)
    }

    /// A trainable leaf whose gradient is reported under `id`.
    pub fn param(&mut self, id: usize, value: RealMatrix) -> Var {
        self.push(value, Op::Param(id))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul_t(self.value(b))?;
        Ok(self.push(v, Op::MatMulT(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).add(self.value(b))?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let r = self.value(row);
        if r.rows() != 1 || r.cols() != self.value(x).cols() {
            return Err(Error::dims("add_row needs a 1×n row matching the columns"));
        }
        let r = r.data().to_vec();
        let mut v = self.value(x).clone();
        for i in 0..v.rows() {
            for (a, b) in v.row_mut(i).iter_mut().zip(&r) {
                *a += b;
            }
        }
        Ok(self.push(v, Op::AddRow(x, row)))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let v = self.value(x).scale(s);
        self.push(v, Op::Scale(x, s))
    }

    pub fn silu(&mut self, x: Var) -> Var {
        let mut v = self.value(x).clone();
        v.data_mut().iter_mut().for_each(|a| *a *= sigmoid(*a));
        self.push(v, Op::Silu(x))
    }

    /// Row-wise layer norm with learned 1×n gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let xv = self.value(x);
        let n = xv.cols();
        let (g, b) = (self.value(gain), self.value(bias));
        if g.shape() != (1, n) || b.shape() != (1, n) {
            return Err(Error::dims("layer norm gain/bias must be 1×n"));
        }
        let mut xhat = RealMatrix::zeros(xv.rows(), n);
        let mut inv_std = Vec::with_capacity(xv.rows());
        let mut out = RealMatrix::zeros(xv.rows(), n);
        for i in 0..xv.rows() {
            let row = xv.row(i);
            let mu = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n as f64;
            let inv = 1.0 / (var + DECODER_LN_EPS).sqrt();
            inv_std.push(inv);
            for j in 0..n {
                let h = (row[j] - mu) * inv;
                xhat.set(i, j, h);
                out.set(i, j, h * g.get(0, j) + b.get(0, j));
            }
        }
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
        ))
    }

    /// Row-wise softmax; with `causal`, entries above the diagonal are masked to 0.
    pub fn softmax(&mut self, x: Var, causal: bool) -> Var {
        let mut v = self.value(x).clone();
        for i in 0..v.rows() {
            let row = v.row_mut(i);
            let limit = if causal { (i + 1).min(row.len()) } else { row.len() };
            let max = row[..limit].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for a in row[..limit].iter_mut() {
                *a = (*a - max).exp();
                total += *a;
            }
            for a in row[..limit].iter_mut() {
                *a /= total;
            }
            row[limit..].iter_mut().for_each(|a| *a = 0.0);
        }
        self.push(v, Op::Softmax { x })
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xv = self.value(x);
        if start + len > xv.cols() {
            return Err(Error::OutOfRange {
                index: start + len,
                limit: xv.cols(),
            });
        }
        let cols: Vec<usize> = (start..start + len).collect();
        let v = xv.select_cols(&cols);
        Ok(self.push(v, Op::SliceCols { x, start }))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let blocks: Vec<&RealMatrix> = parts.iter().map(|p| self.value(*p)).collect();
        let v = RealMatrix::hstack(&blocks)?;
        Ok(self.push(v, Op::ConcatCols(parts.to_vec())))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let m = xv.data().iter().sum::<f64>() / xv.data().len().max(1) as f64;
        self.push(RealMatrix::from_fn(1, 1, |_, _| m), Op::Mean(x))
    }

    /// Mean next-token negative log-likelihood of `targets` (one per row).
    pub fn cross_entropy(&mut self, logits: Var, targets: &[u32]) -> Result<Var> {
        let lv = self.value(logits);
        if targets.is_empty() {
            return Err(Error::precondition("cross entropy over an empty target stream"));
        }
        if lv.rows() != targets.len() {
            return Err(Error::dims(format!("{} logit rows for {} targets", lv.rows(), targets.len())));
        }
        let v = lv.cols();
        let mut probs = lv.clone();
        let mut loss = 0.0;
        for (i, &t) in targets.iter().enumerate() {
            if t as usize >= v {
                return Err(Error::OutOfRange {
                    index: t as usize,
                    limit: v,
                });
            }
            let row = probs.row_mut(i);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|a| (a - max).exp()).sum::<f64>().ln();
            loss += lse - row[t as usize];
            row.iter_mut().for_each(|a| *a = (*a - lse).exp());
        }
        let mean = loss / targets.len() as f64;
        Ok(self.push(
            RealMatrix::from_fn(1, 1, |_, _| mean),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
        ))
    }

    /// Reverse pass from a 1×1 `loss`; returns gradients for `n_params` parameter ids.
    pub fn backward(&self, loss: Var, n_params: usize) -> Result<Gradients> {
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::dims("backward needs a scalar loss"));
        }
        let mut grads: Vec<Option<RealMatrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(RealMatrix::from_fn(1, 1, |_, _| 1.0));
        let mut params: Vec<Option<RealMatrix>> = (0..n_params).map(|_| None).collect();

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => {
                    let slot = params
                        .get_mut(*id)
                        .ok_or(Error::OutOfRange { index: *id, limit: n_params })?;
                    add_into(slot, g);
                }
                Op::MatMul(a, b) => {
                    let da = g.matmul_t(self.value(*b))?;
                    let db = self.value(*a).t_matmul(&g)?;
                    add_into(&mut grads[a.0], da);
                    add_into(&mut grads[b.0], db);
                }
                Op::MatMulT(a, b) => {
                    let da = g.matmul(self.value(*b))?;
                    let db = g.t_matmul(self.value(*a))?;
                    add_into(&mut grads[a.0], da);
                    add_into(&mut grads[b.0], db);
                }
                Op::Add(a, b) => {
                    check_same(&g, self.value(*a), "add gradient")?;
                    add_into(&mut grads[b.0], g.clone());
                    add_into(&mut grads[a.0], g);
                }
                Op::AddRow(x, row) => {
                    let mut dr = RealMatrix::zeros(1, g.cols());
                    for i in 0..g.rows() {
                        for (d, v) in dr.data_mut().iter_mut().zip(g.row(i)) {
                            *d += v;
                        }
                    }
                    add_into(&mut grads[row.0], dr);
                    add_into(&mut grads[x.0], g);
                }
                Op::Scale(x, s) => add_into(&mut grads[x.0], g.scale(*s)),
                Op::Silu(x) => {
                    let xv = self.value(*x);
                    let mut d = g;
                    for (dv, &a) in d.data_mut().iter_mut().zip(xv.data()) {
                        let s = sigmoid(a);
                        *dv *= s * (1.0 + a * (1.0 - s));
                    }
                    add_into(&mut grads[x.0], d);
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    xhat,
                    inv_std,
                } => {
                    let gv = self.value(*gain);
                    let n = xhat.cols();
                    let mut dg = RealMatrix::zeros(1, n);
                    let mut db = RealMatrix::zeros(1, n);
                    let mut dx = RealMatrix::zeros(xhat.rows(), n);
                    let mut dxhat = vec![0.0; n];
                    for i in 0..xhat.rows() {
                        let (gr, hr) = (g.row(i), xhat.row(i));
                        let mut sum = 0.0;
                        let mut sum_h = 0.0;
                        for j in 0..n {
                            dg.data_mut()[j] += gr[j] * hr[j];
                            db.data_mut()[j] += gr[j];
                            dxhat[j] = gr[j] * gv.get(0, j);
                            sum += dxhat[j];
                            sum_h += dxhat[j] * hr[j];
                        }
                        let scale = inv_std[i] / n as f64;
                        for (j, o) in dx.row_mut(i).iter_mut().enumerate() {
                            *o = scale * (n as f64 * dxhat[j] - sum - hr[j] * sum_h);
                        }
                    }
                    add_into(&mut grads[gain.0], dg);
                    add_into(&mut grads[bias.0], db);
                    add_into(&mut grads[x.0], dx);
                }
                Op::Softmax { x } => {
                    let p = &node.value;
                    let mut d = g;
                    for i in 0..p.rows() {
                        let dot: f64 = d.row(i).iter().zip(p.row(i)).map(|(a, b)| a * b).sum();
                        for (dv, pv) in d.row_mut(i).iter_mut().zip(p.row(i)) {
                            *dv = pv * (*dv - dot);
                        }
                    }
                    add_into(&mut grads[x.0], d);
                }
                Op::SliceCols { x, start } => {
                    let xv = self.value(*x);
                    let mut d = RealMatrix::zeros(xv.rows(), xv.cols());
                    for i in 0..g.rows() {
                        d.row_mut(i)[*start..*start + g.cols()].copy_from_slice(g.row(i));
                    }
                    add_into(&mut grads[x.0], d);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let w = self.value(*p).cols();
                        let cols: Vec<usize> = (offset..offset + w).collect();
                        add_into(&mut grads[p.0], g.select_cols(&cols));
                        offset += w;
                    }
                }
                Op::Mean(x) => {
                    let xv = self.value(*x);
                    let s = g.get(0, 0) / xv.data().len().max(1) as f64;
                    add_into(&mut grads[x.0], RealMatrix::from_fn(xv.rows(), xv.cols(), |_, _| s));
                }
                Op::CrossEntropy { logits, targets, probs } => {
                    let s = g.get(0, 0) / targets.len() as f64;
                    let mut d = probs.clone();
                    for (i, &t) in targets.iter().enumerate() {
                        let row = d.row_mut(i);
                        row[t as usize] -= 1.0;
                        row.iter_mut().for_each(|v| *v *= s);
                    }
                    add_into(&mut grads[logits.0], d);
                }
            }
        }
        Ok(Gradients { grads: params })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> RealMatrix {
        RealMatrix::from_fn(rows, cols, f)
    }

    #[test]
    fn linear_model_gradient_is_exact() {
        // loss = mean(X W); dL/dW[p, j] = colmean(X)[p] / cols
        let x = m(3, 2, |i, j| (i * 2 + j) as f64 - 1.5);
        let w = m(2, 4, |i, j| (i + j) as f64 * 0.1);
        let mut t = Tape::new();
        let xv = t.constant(x.clone());
        let wv = t.param(0, w);
        let y = t.matmul(xv, wv).unwrap();
        let loss = t.mean(y);
        let g = t.backward(loss, 1).unwrap();
        let dw = g.get(0).unwrap();
        for p in 0..2 {
            let expect = x.col(p).iter().sum::<f64>() / 12.0;
            for j in 0..4 {
                assert!((dw.get(p, j) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let mut t = Tape::new();
        let w = t.param(0, m(2, 2, |i, j| (i + j) as f64));
        let z = t.scale(w, 0.0);
        let loss = t.mean(z);
        let g = t.backward(loss, 1).unwrap();
        assert!(g.get(0).unwrap().data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn unrecorded_parameter_is_an_error() {
        let mut t = Tape::new();
        let w = t.param(0, m(1, 1, |_, _| 2.0));
        let loss = t.mean(w);
        let g = t.backward(loss, 2).unwrap();
        assert!(g.get(1).is_err());
        assert!(g.get(7).is_err());
    }

    #[test]
    fn uniform_logits_cross_entropy() {
        let mut t = Tape::new();
        let l = t.constant(RealMatrix::zeros(4, 7));
        let loss = t.cross_entropy(l, &[0, 3, 6, 2]).unwrap();
        assert!((t.value(loss).get(0, 0) - 7f64.ln()).abs() < 1e-12);
        assert!(t.cross_entropy(l, &[9, 0, 0, 0]).is_err());
    }

    #[test]
    fn causal_softmax_masks_future() {
        let mut t = Tape::new();
        let x = t.constant(m(3, 3, |i, j| (i * 3 + j) as f64));
        let p = t.softmax(x, true);
        let v = t.value(p);
        assert_eq!(v.get(0, 0), 1.0);
        assert_eq!(v.get(0, 1), 0.0);
        assert_eq!(v.get(1, 2), 0.0);
        assert!((v.row(2).iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }
}
