use crate::error::{shape_err, Result, TensorError};
use crate::graph::{Graph, Op, Var};
use crate::real::Real;
use crate::tensor::{dims3, Tensor};

/// Width pixel shuffle on a channels-last map:
/// `[H, W, C * r]` to `[H, W * r, C]` with `out[d, j*r + s, c] = x[d, j, c*r + s]`.
pub fn pixel_shuffle_w<T: Real>(x: &Tensor<T>, factor: usize) -> Result<Tensor<T>> {
    let (h, w, cr) = dims3(x.shape())?;
    if factor == 0 || cr % factor != 0 {
        return Err(TensorError::Usage(format!(
            "{cr} channels are not divisible by shuffle factor {factor}"
        )));
    }
    let c = cr / factor;
    let src = x.data();
    let mut out = vec![T::zero(); src.len()];
    for d in 0..h {
        for j in 0..w {
            for ch in 0..c {
                for s in 0..factor {
                    out[(d * w * factor + j * factor + s) * c + ch] =
                        src[(d * w + j) * cr + ch * factor + s];
                }
            }
        }
    }
    Tensor::new(&[h, w * factor, c], out)
}

/// Exact inverse of [`pixel_shuffle_w`].
pub fn pixel_unshuffle_w<T: Real>(x: &Tensor<T>, factor: usize) -> Result<Tensor<T>> {
    let (h, wr, c) = dims3(x.shape())?;
    if factor == 0 || wr % factor != 0 {
        return shape_err(format!("width {wr} is not divisible by {factor}"));
    }
    let w = wr / factor;
    let src = x.data();
    let mut out = vec![T::zero(); src.len()];
    for d in 0..h {
        for j in 0..w {
            for ch in 0..c {
                for s in 0..factor {
                    out[(d * w + j) * c * factor + ch * factor + s] =
                        src[(d * wr + j * factor + s) * c + ch];
                }
            }
        }
    }
    Tensor::new(&[h, w, c * factor], out)
}

impl<T: Real> Graph<T> {
    pub fn pixel_shuffle_w(&mut self, x: Var, factor: usize) -> Result<Var> {
        let out = pixel_shuffle_w(self.value(x), factor)?;
        Ok(self.push(out, Op::PixelShuffleW { x, factor }, &[x]))
    }
}

pub(crate) fn backward<T: Real>(x: Var, factor: usize, g: &Tensor<T>) -> Vec<(Var, Tensor<T>)> {
    vec![(x, pixel_unshuffle_w(g, factor).expect("shape recorded at forward"))]
}
