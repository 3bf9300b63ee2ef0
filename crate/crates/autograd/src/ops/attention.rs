use crate::error::{shape_err, Result, TensorError};
use crate::graph::{Graph, Op, Var};
use crate::ops::softmax::{softmax_row, softmax_row_backward};
use crate::real::Real;
use crate::tensor::{dims3, Tensor};

/// Attention probabilities of every row, `[H, heads, W, W]` flattened.
fn row_attention_probs<T: Real>(
    q: &[T],
    k: &[T],
    h: usize,
    w: usize,
    c: usize,
    heads: usize,
) -> Vec<T> {
    let dh = c / heads;
    let scale = T::from_usize(dh).unwrap().sqrt().recip();
    let mut probs = vec![T::zero(); h * heads * w * w];
    let mut scores = vec![T::zero(); w];
    for r in 0..h {
        for e in 0..heads {
            for i in 0..w {
                let qi = &q[(r * w + i) * c + e * dh..][..dh];
                for (j, s) in scores.iter_mut().enumerate() {
                    let kj = &k[(r * w + j) * c + e * dh..][..dh];
                    *s = qi.iter().zip(kj).map(|(&a, &b)| a * b).sum::<T>() * scale;
                }
                let dst = &mut probs[((r * heads + e) * w + i) * w..][..w];
                softmax_row(&scores, dst);
            }
        }
    }
    probs
}

impl<T: Real> Graph<T> {
    /// Multi-head scaled dot-product self-attention within each row of
    /// `[H, W, C]` maps: position `(r, i)` attends to `(r, j)` for all `j`.
    /// Rows never interact.
    pub fn row_attention(&mut self, q: Var, k: Var, v: Var, heads: usize) -> Result<Var> {
        let (h, w, c) = dims3(self.shape(q))?;
        if self.shape(k) != [h, w, c] || self.shape(v) != [h, w, c] {
            return shape_err("row_attention: q, k, v must share a shape");
        }
        if heads == 0 || c % heads != 0 {
            return Err(TensorError::Usage(format!(
                "{c} channels cannot be split into {heads} heads"
            )));
        }
        let dh = c / heads;
        let probs = row_attention_probs(
            self.value(q).data(),
            self.value(k).data(),
            h,
            w,
            c,
            heads,
        );
        let vv = self.value(v).data();
        let mut out = vec![T::zero(); h * w * c];
        for r in 0..h {
            for e in 0..heads {
                for i in 0..w {
                    let p = &probs[((r * heads + e) * w + i) * w..][..w];
                    let dst = &mut out[(r * w + i) * c + e * dh..][..dh];
                    for (j, &pj) in p.iter().enumerate() {
                        let vj = &vv[(r * w + j) * c + e * dh..][..dh];
                        for (d, &x) in dst.iter_mut().zip(vj) {
                            *d += pj * x;
                        }
                    }
                }
            }
        }
        let out = Tensor::new(&[h, w, c], out)?;
        let save = self.any_requires_grad(&[q, k, v]);
        let probs = if save { probs } else { Vec::new() };
        Ok(self.push(
            out,
            Op::RowAttention {
                q,
                k,
                v,
                heads,
                probs,
            },
            &[q, k, v],
        ))
    }
}

/// Attention probabilities `[H, heads, W, W]` for inspection.
pub fn attention_weights<T: Real>(q: &Tensor<T>, k: &Tensor<T>, heads: usize) -> Result<Tensor<T>> {
    let (h, w, c) = dims3(q.shape())?;
    if k.shape() != q.shape() || heads == 0 || c % heads != 0 {
        return shape_err("attention_weights: bad shapes or head count");
    }
    let probs = row_attention_probs(q.data(), k.data(), h, w, c, heads);
    Tensor::new(&[h, heads, w, w], probs)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn backward<T: Real>(
    graph: &Graph<T>,
    q: Var,
    k: Var,
    v: Var,
    heads: usize,
    probs: &[T],
    g: &Tensor<T>,
) -> Vec<(Var, Tensor<T>)> {
    let shape = graph.shape(q).to_vec();
    let (h, w, c) = (shape[0], shape[1], shape[2]);
    let dh = c / heads;
    let scale = T::from_usize(dh).unwrap().sqrt().recip();
    let (qv, kv, vv) = (
        graph.value(q).data(),
        graph.value(k).data(),
        graph.value(v).data(),
    );
    let gd = g.data();
    let mut dq = vec![T::zero(); qv.len()];
    let mut dk = vec![T::zero(); kv.len()];
    let mut dv = vec![T::zero(); vv.len()];
    let mut dp = vec![T::zero(); w];
    let mut ds = vec![T::zero(); w];
    for r in 0..h {
        for e in 0..heads {
            for i in 0..w {
                let p = &probs[((r * heads + e) * w + i) * w..][..w];
                let gi = &gd[(r * w + i) * c + e * dh..][..dh];
                for j in 0..w {
                    let off = (r * w + j) * c + e * dh;
                    let vj = &vv[off..off + dh];
                    dp[j] = gi.iter().zip(vj).map(|(&a, &b)| a * b).sum();
                    for (d, &gx) in dv[off..off + dh].iter_mut().zip(gi) {
                        *d += p[j] * gx;
                    }
                }
                softmax_row_backward(p, &dp, &mut ds);
                let qoff = (r * w + i) * c + e * dh;
                for j in 0..w {
                    let s = ds[j] * scale;
                    let koff = (r * w + j) * c + e * dh;
                    for t in 0..dh {
                        dq[qoff + t] += s * kv[koff + t];
                        dk[koff + t] += s * qv[qoff + t];
                    }
                }
            }
        }
    }
    let t = |var: Var, data: Vec<T>| (var, Tensor::new(&shape, data).unwrap());
    vec![t(q, dq), t(k, dk), t(v, dv)]
}
