use crate::graph::{Graph, Op, Var};
use crate::real::Real;
use crate::tensor::Tensor;

/// Max-subtracted softmax of one row, written into `dst`.
pub(crate) fn softmax_row<T: Real>(src: &[T], dst: &mut [T]) {
    let max = src.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = (s - max).exp();
        total += *d;
    }
    let inv = total.recip();
    for d in dst.iter_mut() {
        *d *= inv;
    }
}

/// `dx = y * (g - <g, y>)` for one row.
pub(crate) fn softmax_row_backward<T: Real>(y: &[T], g: &[T], dx: &mut [T]) {
    let dot: T = y.iter().zip(g).map(|(&a, &b)| a * b).sum();
    for ((d, &yv), &gv) in dx.iter_mut().zip(y).zip(g) {
        *d = yv * (gv - dot);
    }
}

impl<T: Real> Graph<T> {
    /// Softmax over the trailing dim.
    pub fn softmax(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let l = xv.last_dim();
        let mut out = vec![T::zero(); xv.numel()];
        for (src, dst) in xv.data().chunks_exact(l).zip(out.chunks_exact_mut(l)) {
            softmax_row(src, dst);
        }
        let out = Tensor::new(xv.shape(), out).unwrap();
        self.push(out, Op::Softmax(x), &[x])
    }
}

pub(crate) fn backward<T: Real>(x: Var, out: &Tensor<T>, g: &Tensor<T>) -> Vec<(Var, Tensor<T>)> {
    let l = out.last_dim();
    let mut dx = vec![T::zero(); out.numel()];
    for ((y, gr), d) in out
        .data()
        .chunks_exact(l)
        .zip(g.data().chunks_exact(l))
        .zip(dx.chunks_exact_mut(l))
    {
        softmax_row_backward(y, gr, d);
    }
    vec![(x, Tensor::new(out.shape(), dx).unwrap())]
}
