//! Dense tensors with reverse-mode automatic differentiation.
//!
//! A [`Graph`] records primitives as they execute and replays their adjoints
//! in reverse from a scalar loss. Feature maps use a channels-last `[H, W, C]`
//! layout throughout; `Tensor::chw_to_hwc` converts from planar data.
//!
//! ```
//! use assan_autograd::{Graph, Tensor};
//!
//! let mut g = Graph::<f64>::new();
//! let x = g.leaf(Tensor::new(&[3], vec![1.0, -2.0, 0.5]).unwrap(), true);
//! let sq = g.mul(x, x).unwrap();
//! let half = g.scale(sq, 0.5);
//! let loss = g.sum(half);
//! g.backward(loss).unwrap();
//! assert_eq!(g.grad(x).unwrap().data(), &[1.0, -2.0, 0.5]);
//! ```

mod error;
mod graph;
mod gradcheck;
pub mod ops;
mod real;
mod tensor;

pub use error::{Result, TensorError};
pub use gradcheck::{check_gradients, finite_diff_grad_check, GradCheckConfig, GradCheckReport};
pub use graph::{Graph, Var};
pub use ops::{Activation, Axis, ScanInputs};
pub use real::Real;
pub use tensor::Tensor;
