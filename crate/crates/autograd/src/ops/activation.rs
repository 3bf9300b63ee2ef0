use crate::graph::{Graph, Op, Var};
use crate::real::Real;
use crate::tensor::Tensor;

/// Pointwise nonlinearities.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    /// `x * sigmoid(x)`.
    Silu,
    /// Tanh approximation `0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))`.
    Gelu,
    /// `ln(1 + e^x)`.
    Softplus,
}

const GELU_COEF: f64 = 0.044715;

#[inline]
fn sigmoid<T: Real>(x: T) -> T {
    // For very negative x the exponential saturates (f32 clamps, f64 goes to
    // infinity) and the reciprocal still lands on the correct tiny value.
    (T::one() + (-x).exp_fast()).recip()
}

#[inline]
fn gelu_arg<T: Real>(x: T) -> T {
    let k = T::from_f64_lossy((2.0 / std::f64::consts::PI).sqrt());
    let c = T::from_f64_lossy(GELU_COEF);
    k * (x + c * x * x * x)
}

impl Activation {
    #[inline]
    pub fn apply<T: Real>(self, x: T) -> T {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Silu => x * sigmoid(x),
            // 0.5 (1 + tanh(u)) == sigmoid(2u); the sigmoid form avoids
            // cancellation in the negative tail.
            Activation::Gelu => x * sigmoid(gelu_arg(x) + gelu_arg(x)),
            Activation::Softplus => {
                if x > T::from_f64_lossy(20.0) {
                    x
                } else {
                    x.exp().ln_1p()
                }
            }
        }
    }

    #[inline]
    pub fn derivative<T: Real>(self, x: T) -> T {
        match self {
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (T::one() - s)
            }
            Activation::Silu => {
                let s = sigmoid(x);
                s * (T::one() + x * (T::one() - s))
            }
            Activation::Gelu => {
                let k = T::from_f64_lossy((2.0 / std::f64::consts::PI).sqrt());
                let c = T::from_f64_lossy(GELU_COEF);
                let two = T::from_f64_lossy(2.0);
                let three = T::from_f64_lossy(3.0);
                let s = sigmoid(two * gelu_arg(x));
                s + x * s * (T::one() - s) * two * k * (T::one() + three * c * x * x)
            }
            Activation::Softplus => sigmoid(x),
        }
    }
}

impl<T: Real> Graph<T> {
    pub fn activation(&mut self, x: Var, kind: Activation) -> Var {
        let out = self.value(x).map(|v| kind.apply(v));
        self.push(out, Op::Activation { x, kind }, &[x])
    }

    pub fn silu(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Silu)
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Gelu)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Sigmoid)
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Softplus)
    }
}

pub(crate) fn backward<T: Real>(
    graph: &Graph<T>,
    x: Var,
    kind: Activation,
    g: &Tensor<T>,
) -> Vec<(Var, Tensor<T>)> {
    let xv = graph.value(x);
    let dx = xv
        .data()
        .iter()
        .zip(g.data())
        .map(|(&v, &gv)| gv * kind.derivative(v))
        .collect();
    vec![(x, Tensor::new(xv.shape(), dx).unwrap())]
}
