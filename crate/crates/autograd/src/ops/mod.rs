mod activation;
mod attention;
mod conv;
mod elementwise;
mod linear;
mod norm;
mod scan;
mod shape;
mod softmax;

pub use activation::Activation;
pub use attention::attention_weights;
pub use conv::Axis;
pub(crate) use conv::ConvGeom;
pub use scan::ScanInputs;
pub use shape::{pixel_shuffle_w, pixel_unshuffle_w};

use crate::graph::{Graph, Node, Op, Var};
use crate::real::Real;
use crate::tensor::Tensor;

/// Adjoint contributions of one node to its inputs.
pub(crate) fn backward<T: Real>(
    graph: &Graph<T>,
    node: &Node<T>,
    g: &Tensor<T>,
) -> Vec<(Var, Tensor<T>)> {
    match &node.op {
        Op::Leaf => Vec::new(),
        op @ (Op::Add(..)
        | Op::Sub(..)
        | Op::Mul(..)
        | Op::Scale(..)
        | Op::Exp(..)
        | Op::Reshape(..)
        | Op::Sum(..)
        | Op::Mean(..)
        | Op::Mse(..)) => elementwise::backward(graph, op, &node.value, g),
        Op::Linear { x, w, b } => linear::backward(graph, *x, *w, *b, g),
        Op::Conv2d { x, w, b, geom } => conv::backward(graph, *x, *w, *b, geom, g),
        Op::LayerNorm {
            x,
            gamma,
            beta,
            mean,
            rstd,
        } => norm::backward(graph, *x, *gamma, *beta, mean, rstd, g),
        Op::Activation { x, kind } => activation::backward(graph, *x, *kind, g),
        Op::Softmax(x) => softmax::backward(*x, &node.value, g),
        Op::SelectiveScan {
            inputs,
            reverse,
            states,
            decays,
        } => scan::backward(graph, inputs, *reverse, states, decays, g),
        Op::RowAttention {
            q,
            k,
            v,
            heads,
            probs,
        } => attention::backward(graph, *q, *k, *v, *heads, probs, g),
        Op::PixelShuffleW { x, factor } => shape::backward(*x, *factor, g),
    }
}
