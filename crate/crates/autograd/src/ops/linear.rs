use crate::error::{shape_err, Result};
use crate::graph::{Graph, Op, Var};
use crate::real::Real;
use crate::tensor::Tensor;

impl<T: Real> Graph<T> {
    /// `y[..., o] = sum_i x[..., i] * w[o, i] + b[o]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        let [c_out, c_in] = ws[..] else {
            return shape_err(format!("linear weight must be 2-d, got {ws:?}"));
        };
        if *xs.last().unwrap() != c_in {
            return shape_err(format!(
                "linear: input last dim {} does not match weight in-dim {c_in}",
                xs.last().unwrap()
            ));
        }
        if let Some(b) = b {
            if self.shape(b) != [c_out] {
                return shape_err(format!(
                    "linear bias shape {:?}, expected [{c_out}]",
                    self.shape(b)
                ));
            }
        }
        let rows = self.value(x).numel() / c_in;
        let mut y = vec![T::zero(); rows * c_out];
        let beta = match b {
            Some(b) => {
                let bias = self.value(b).data();
                for row in y.chunks_exact_mut(c_out) {
                    row.copy_from_slice(bias);
                }
                T::one()
            }
            None => T::zero(),
        };
        T::gemm(
            rows,
            c_in,
            c_out,
            T::one(),
            self.value(x).data(),
            c_in as isize,
            1,
            self.value(w).data(),
            1,
            c_in as isize,
            beta,
            &mut y,
            c_out as isize,
            1,
        );
        let mut shape = xs;
        *shape.last_mut().unwrap() = c_out;
        let out = Tensor::new(&shape, y)?;
        let inputs: Vec<Var> = [Some(x), Some(w), b].into_iter().flatten().collect();
        Ok(self.push(out, Op::Linear { x, w, b }, &inputs))
    }
}

pub(crate) fn backward<T: Real>(
    graph: &Graph<T>,
    x: Var,
    w: Var,
    b: Option<Var>,
    g: &Tensor<T>,
) -> Vec<(Var, Tensor<T>)> {
    let xv = graph.value(x);
    let wv = graph.value(w);
    let (c_out, c_in) = (wv.shape()[0], wv.shape()[1]);
    let rows = xv.numel() / c_in;
    let mut res = Vec::with_capacity(3);
    if graph.requires_grad(x) {
        let mut dx = vec![T::zero(); rows * c_in];
        T::gemm(
            rows,
            c_out,
            c_in,
            T::one(),
            g.data(),
            c_out as isize,
            1,
            wv.data(),
            c_in as isize,
            1,
            T::zero(),
            &mut dx,
            c_in as isize,
            1,
        );
        res.push((x, Tensor::new(xv.shape(), dx).unwrap()));
    }
    if graph.requires_grad(w) {
        let mut dw = vec![T::zero(); c_out * c_in];
        T::gemm(
            c_out,
            rows,
            c_in,
            T::one(),
            g.data(),
            1,
            c_out as isize,
            xv.data(),
            c_in as isize,
            1,
            T::zero(),
            &mut dw,
            c_in as isize,
            1,
        );
        res.push((w, Tensor::new(wv.shape(), dw).unwrap()));
    }
    if let Some(b) = b.filter(|&b| graph.requires_grad(b)) {
        let mut db = vec![T::zero(); c_out];
        for row in g.data().chunks_exact(c_out) {
            for (acc, &v) in db.iter_mut().zip(row) {
                *acc += v;
            }
        }
        res.push((b, Tensor::new(&[c_out], db).unwrap()));
    }
    res
}
