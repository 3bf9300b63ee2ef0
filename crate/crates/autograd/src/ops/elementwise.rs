use crate::error::{shape_err, Result};
use crate::graph::{Graph, Op, Var};
use crate::real::Real;
use crate::tensor::Tensor;

fn zip_map<T: Real>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape(), data).expect("shapes checked by caller")
}

impl<T: Real> Graph<T> {
    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return shape_err(format!(
                "{what}: {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            ));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let out = zip_map(self.value(a), self.value(b), |x, y| x + y);
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let out = zip_map(self.value(a), self.value(b), |x, y| x - y);
        Ok(self.push(out, Op::Sub(a, b), &[a, b]))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let out = zip_map(self.value(a), self.value(b), |x, y| x * y);
        Ok(self.push(out, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, factor: T) -> Var {
        let out = self.value(a).map(|x| x * factor);
        self.push(out, Op::Scale(a, factor), &[a])
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).map(T::exp);
        self.push(out, Op::Exp(a), &[a])
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(a).clone().reshape(shape)?;
        Ok(self.push(out, Op::Reshape(a), &[a]))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        self.push(out, Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let n = T::from_usize(t.numel()).unwrap();
        let out = Tensor::scalar(t.sum() / n);
        self.push(out, Op::Mean(a), &[a])
    }

    /// Mean squared error over all elements.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        self.same_shape(pred, target, "mse")?;
        let (p, t) = (self.value(pred), self.value(target));
        let n = T::from_usize(p.numel()).unwrap();
        let total: T = p
            .data()
            .iter()
            .zip(t.data())
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum();
        Ok(self.push(Tensor::scalar(total / n), Op::Mse(pred, target), &[pred, target]))
    }
}

pub(crate) fn backward<T: Real>(
    graph: &Graph<T>,
    op: &Op<T>,
    out: &Tensor<T>,
    g: &Tensor<T>,
) -> Vec<(Var, Tensor<T>)> {
    let mut res = Vec::new();
    match *op {
        Op::Add(a, b) => {
            res.push((a, g.clone()));
            res.push((b, g.clone()));
        }
        Op::Sub(a, b) => {
            res.push((a, g.clone()));
            if graph.requires_grad(b) {
                res.push((b, g.map(|v| -v)));
            }
        }
        Op::Mul(a, b) => {
            if graph.requires_grad(a) {
                res.push((a, zip_map(g, graph.value(b), |x, y| x * y)));
            }
            if graph.requires_grad(b) {
                res.push((b, zip_map(g, graph.value(a), |x, y| x * y)));
            }
        }
        Op::Scale(a, f) => res.push((a, g.map(|v| v * f))),
        Op::Exp(a) => res.push((a, zip_map(g, out, |x, y| x * y))),
        Op::Reshape(a) => {
            let shape = graph.shape(a).to_vec();
            res.push((a, g.clone().reshape(&shape).expect("same numel")));
        }
        Op::Sum(a) => {
            let g0 = g.data()[0];
            res.push((a, Tensor::full(graph.shape(a), g0)));
        }
        Op::Mean(a) => {
            let n = T::from_usize(graph.value(a).numel()).unwrap();
            res.push((a, Tensor::full(graph.shape(a), g.data()[0] / n)));
        }
        Op::Mse(p, t) => {
            let (pv, tv) = (graph.value(p), graph.value(t));
            let n = T::from_usize(pv.numel()).unwrap();
            let two = T::from_f64_lossy(2.0);
            let k = two * g.data()[0] / n;
            let dp = zip_map(pv, tv, |a, b| k * (a - b));
            if graph.requires_grad(t) {
                res.push((t, dp.map(|v| -v)));
            }
            res.push((p, dp));
        }
        _ => unreachable!("not an elementwise op"),
    }
    res
}
