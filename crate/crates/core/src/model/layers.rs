//! Parameterized building blocks. Each holds [`ParamId`]s into the model's
//! store and runs on any [`Graph`] precision given the attached handles.

use assan_autograd::{Axis, Graph, Real, Var};

use super::params::{Builder, ParamId};
use crate::error::Result;

/// Bound parameter handles, indexed by [`ParamId`].
pub type Bound<'a> = &'a [Var];

pub(crate) fn at(p: Bound, id: ParamId) -> Var {
    p[id.0]
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub c_in: usize,
    pub c_out: usize,
}

impl Linear {
    pub fn new(b: &mut Builder, name: &str, c_in: usize, c_out: usize, bias: bool) -> Self {
        Self {
            weight: b.weight(&format!("{name}.weight"), &[c_out, c_in]),
            bias: bias.then(|| b.bias(&format!("{name}.bias"), c_out)),
            c_in,
            c_out,
        }
    }

    /// Final projection of a residual branch.
    pub fn output(b: &mut Builder, name: &str, c_in: usize, c_out: usize, bias: bool) -> Self {
        let weight = b.output_weight(&format!("{name}.weight"), &[c_out, c_in]);
        let bias = bias.then(|| {
            if b.init.zero_residual_outputs {
                b.output_weight(&format!("{name}.bias"), &[c_out])
            } else {
                b.bias(&format!("{name}.bias"), c_out)
            }
        });
        Self {
            weight,
            bias,
            c_in,
            c_out,
        }
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: Bound, x: Var) -> Result<Var> {
        Ok(g.linear(x, at(p, self.weight), self.bias.map(|b| at(p, b)))?)
    }

    pub fn param_count(c_in: usize, c_out: usize, bias: bool) -> usize {
        c_in * c_out + if bias { c_out } else { 0 }
    }
}

/// Square 2-d convolution with bias.
#[derive(Clone, Debug)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub depthwise: bool,
}

impl Conv2d {
    pub fn new(b: &mut Builder, name: &str, c_in: usize, c_out: usize, k: usize) -> Self {
        Self {
            weight: b.weight(&format!("{name}.weight"), &[c_out, c_in, k, k]),
            bias: b.bias(&format!("{name}.bias"), c_out),
            depthwise: false,
        }
    }

    pub fn output(b: &mut Builder, name: &str, c_in: usize, c_out: usize, k: usize) -> Self {
        Self {
            weight: b.output_weight(&format!("{name}.weight"), &[c_out, c_in, k, k]),
            bias: if b.init.zero_residual_outputs {
                b.output_weight(&format!("{name}.bias"), &[c_out])
            } else {
                b.bias(&format!("{name}.bias"), c_out)
            },
            depthwise: false,
        }
    }

    pub fn depthwise(b: &mut Builder, name: &str, c: usize, k: usize) -> Self {
        Self {
            weight: b.weight(&format!("{name}.weight"), &[c, 1, k, k]),
            bias: b.bias(&format!("{name}.bias"), c),
            depthwise: true,
        }
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: Bound, x: Var) -> Result<Var> {
        Ok(g.conv2d(x, at(p, self.weight), Some(at(p, self.bias)), self.depthwise)?)
    }

    pub fn param_count(c_in: usize, c_out: usize, k: usize) -> usize {
        c_out * c_in * k * k + c_out
    }
}

/// Depthwise 1-d convolution along one axis, with bias.
#[derive(Clone, Debug)]
pub struct DwConv1d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub axis: Axis,
}

impl DwConv1d {
    pub fn new(b: &mut Builder, name: &str, c: usize, k: usize, axis: Axis) -> Self {
        Self {
            weight: b.weight(&format!("{name}.weight"), &[c, 1, k]),
            bias: b.bias(&format!("{name}.bias"), c),
            axis,
        }
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: Bound, x: Var) -> Result<Var> {
        Ok(g.conv1d(
            x,
            self.axis,
            at(p, self.weight),
            Some(at(p, self.bias)),
            true,
        )?)
    }

    pub fn param_count(c: usize, k: usize) -> usize {
        c * k + c
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new(b: &mut Builder, name: &str, c: usize, eps: f64) -> Self {
        let (gamma, beta) = if b.init.zero_residual_outputs {
            (
                b.constant(&format!("{name}.gamma"), assan_autograd::Tensor::ones(&[c])),
                b.constant(&format!("{name}.beta"), assan_autograd::Tensor::zeros(&[c])),
            )
        } else {
            // Randomized mode: perturb around the identity affine map.
            let g = b.weight(&format!("{name}.gamma"), &[c]);
            b.store.get_mut(g).data_mut().iter_mut().for_each(|v| *v += 1.0);
            (g, b.weight(&format!("{name}.beta"), &[c]))
        };
        Self { gamma, beta, eps }
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: Bound, x: Var) -> Result<Var> {
        Ok(g.layer_norm(
            x,
            at(p, self.gamma),
            at(p, self.beta),
            T::from_f64_lossy(self.eps),
        )?)
    }

    pub fn param_count(c: usize) -> usize {
        2 * c
    }
}
