use crate::error::{shape_err, Result};
use crate::graph::{Graph, Op, Var};
use crate::real::Real;
use crate::tensor::Tensor;

impl<T: Real> Graph<T> {
    /// Normalizes every position over the trailing (channel) dim using the
    /// population variance: `gamma * (x - mean) / sqrt(var + eps) + beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: T) -> Result<Var> {
        let c = self.value(x).last_dim();
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return shape_err(format!(
                "layer_norm affine params must be [{c}], got {:?} and {:?}",
                self.shape(gamma),
                self.shape(beta)
            ));
        }
        let xv = self.value(x);
        let gv = self.value(gamma).data();
        let bv = self.value(beta).data();
        let rows = xv.numel() / c;
        let cf = T::from_usize(c).unwrap();
        let mut out = vec![T::zero(); xv.numel()];
        let mut means = Vec::with_capacity(rows);
        let mut rstds = Vec::with_capacity(rows);
        for (row, dst) in xv.data().chunks_exact(c).zip(out.chunks_exact_mut(c)) {
            let mean = row.iter().copied().sum::<T>() / cf;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / cf;
            let rstd = (var + eps).sqrt().recip();
            for (((d, &v), &g), &b) in dst.iter_mut().zip(row).zip(gv).zip(bv) {
                *d = g * (v - mean) * rstd + b;
            }
            means.push(mean);
            rstds.push(rstd);
        }
        let out = Tensor::new(xv.shape(), out)?;
        let save = self.any_requires_grad(&[x, gamma, beta]);
        let op = Op::LayerNorm {
            x,
            gamma,
            beta,
            mean: if save { means } else { Vec::new() },
            rstd: if save { rstds } else { Vec::new() },
        };
        Ok(self.push(out, op, &[x, gamma, beta]))
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn backward<T: Real>(
    graph: &Graph<T>,
    x: Var,
    gamma: Var,
    beta: Var,
    mean: &[T],
    rstd: &[T],
    g: &Tensor<T>,
) -> Vec<(Var, Tensor<T>)> {
    let xv = graph.value(x);
    let gv = graph.value(gamma).data();
    let c = xv.last_dim();
    let cf = T::from_usize(c).unwrap();
    let mut dx = vec![T::zero(); xv.numel()];
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    let mut xhat = vec![T::zero(); c];
    let mut dxhat = vec![T::zero(); c];
    for (r, ((row, grow), dst)) in xv
        .data()
        .chunks_exact(c)
        .zip(g.data().chunks_exact(c))
        .zip(dx.chunks_exact_mut(c))
        .enumerate()
    {
        let (mu, rs) = (mean[r], rstd[r]);
        let mut sum_d = T::zero();
        let mut sum_dx = T::zero();
        for j in 0..c {
            xhat[j] = (row[j] - mu) * rs;
            dxhat[j] = grow[j] * gv[j];
            sum_d += dxhat[j];
            sum_dx += dxhat[j] * xhat[j];
            dgamma[j] += grow[j] * xhat[j];
            dbeta[j] += grow[j];
        }
        let (md, mdx) = (sum_d / cf, sum_dx / cf);
        for j in 0..c {
            dst[j] = rs * (dxhat[j] - md - xhat[j] * mdx);
        }
    }
    vec![
        (x, Tensor::new(xv.shape(), dx).unwrap()),
        (gamma, Tensor::new(&[c], dgamma).unwrap()),
        (beta, Tensor::new(&[c], dbeta).unwrap()),
    ]
}
