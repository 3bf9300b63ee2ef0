//! Stride-1 "same" convolutions on channels-last `[H, W, C]` feature maps.
//!
//! Kernels are stored `[C_out, C_in / groups, kh, kw]`. Zero padding puts
//! `k / 2` taps before each position and `k - 1 - k / 2` after, so even
//! kernels lean left (`k = 4` pads 2 before and 1 after).

use crate::error::{shape_err, Result, TensorError};
use crate::graph::{Graph, Op, Var};
use crate::real::Real;
use crate::tensor::{dims3, Tensor};

/// Axis of a `[H, W, C]` map along which a 1-d convolution slides.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    /// Depth (rows).
    H,
    /// Width (columns).
    W,
}

impl Axis {
    pub fn from_index(i: usize) -> Result<Self> {
        match i {
            0 => Ok(Axis::H),
            1 => Ok(Axis::W),
            _ => Err(TensorError::Usage(format!(
                "conv axis must be 0 (H) or 1 (W), got {i}"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub h: usize,
    pub w: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub kh: usize,
    pub kw: usize,
    pub depthwise: bool,
}

impl ConvGeom {
    fn pad_h(&self) -> isize {
        (self.kh / 2) as isize
    }

    fn pad_w(&self) -> isize {
        (self.kw / 2) as isize
    }

    /// Output columns `[x0, x1)` for which tap `kx` reads inside the input.
    fn x_range(&self, kx: usize) -> (usize, usize) {
        let shift = kx as isize - self.pad_w();
        let x0 = (-shift).max(0) as usize;
        let x1 = (self.w as isize - shift).min(self.w as isize).max(0) as usize;
        (x0, x1.max(x0))
    }

    fn src_row(&self, y: usize, ky: usize) -> Option<usize> {
        let sy = y as isize + ky as isize - self.pad_h();
        (0..self.h as isize).contains(&sy).then_some(sy as usize)
    }
}

/// `[C_out, C_in, kh, kw]` to `[kh, kw, C_in, C_out]`.
fn taps_major<T: Real>(w: &[T], c_out: usize, c_in: usize, kh: usize, kw: usize) -> Vec<T> {
    let mut out = vec![T::zero(); w.len()];
    for o in 0..c_out {
        for i in 0..c_in {
            for ky in 0..kh {
                for kx in 0..kw {
                    out[((ky * kw + kx) * c_in + i) * c_out + o] =
                        w[((o * c_in + i) * kh + ky) * kw + kx];
                }
            }
        }
    }
    out
}

fn taps_minor<T: Real>(wt: &[T], c_out: usize, c_in: usize, kh: usize, kw: usize) -> Vec<T> {
    let mut out = vec![T::zero(); wt.len()];
    for o in 0..c_out {
        for i in 0..c_in {
            for ky in 0..kh {
                for kx in 0..kw {
                    out[((o * c_in + i) * kh + ky) * kw + kx] =
                        wt[((ky * kw + kx) * c_in + i) * c_out + o];
                }
            }
        }
    }
    out
}

impl<T: Real> Graph<T> {
    /// 2-d convolution of a `[H, W, C_in]` map. `depthwise` uses one kernel
    /// per channel (`w: [C, 1, kh, kw]`), otherwise `w: [C_out, C_in, kh, kw]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, depthwise: bool) -> Result<Var> {
        let (h, wd, c_in) = dims3(self.shape(x))?;
        let ws = self.shape(w).to_vec();
        let [c_out, c_in_g, kh, kw] = ws[..] else {
            return shape_err(format!("conv kernel must be 4-d, got {ws:?}"));
        };
        if depthwise {
            if c_in_g != 1 || c_out != c_in {
                return shape_err(format!(
                    "depthwise kernel must be [{c_in}, 1, kh, kw], got {ws:?}"
                ));
            }
        } else if c_in_g != c_in {
            return shape_err(format!(
                "conv kernel expects {c_in_g} input channels, map has {c_in}"
            ));
        }
        if let Some(b) = b {
            if self.shape(b) != [c_out] {
                return shape_err(format!("conv bias shape {:?}", self.shape(b)));
            }
        }
        let geom = ConvGeom {
            h,
            w: wd,
            c_in,
            c_out,
            kh,
            kw,
            depthwise,
        };
        let mut out = vec![T::zero(); h * wd * c_out];
        if let Some(b) = b {
            let bias = self.value(b).data();
            for px in out.chunks_exact_mut(c_out) {
                px.copy_from_slice(bias);
            }
        }
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        if depthwise {
            depthwise_forward(&geom, xv, wv, &mut out);
        } else {
            dense_forward(&geom, xv, wv, &mut out);
        }
        let out = Tensor::new(&[h, wd, c_out], out)?;
        let inputs: Vec<Var> = [Some(x), Some(w), b].into_iter().flatten().collect();
        Ok(self.push(out, Op::Conv2d { x, w, b, geom }, &inputs))
    }

    /// 1-d convolution along one axis of a `[H, W, C]` map with kernel
    /// `[C_out, C_in / groups, k]`.
    pub fn conv1d(
        &mut self,
        x: Var,
        axis: Axis,
        kernel: Var,
        bias: Option<Var>,
        depthwise: bool,
    ) -> Result<Var> {
        let ks = self.shape(kernel).to_vec();
        let [c_out, c_in_g, k] = ks[..] else {
            return shape_err(format!("conv1d kernel must be 3-d, got {ks:?}"));
        };
        let shape = match axis {
            Axis::H => [c_out, c_in_g, k, 1],
            Axis::W => [c_out, c_in_g, 1, k],
        };
        let kernel4 = self.reshape(kernel, &shape)?;
        self.conv2d(x, kernel4, bias, depthwise)
    }
}

fn dense_forward<T: Real>(geom: &ConvGeom, x: &[T], w: &[T], out: &mut [T]) {
    let ConvGeom {
        h,
        w: wd,
        c_in,
        c_out,
        kh,
        kw,
        ..
    } = *geom;
    let wt = taps_major(w, c_out, c_in, kh, kw);
    for ky in 0..kh {
        for kx in 0..kw {
            let (x0, x1) = geom.x_range(kx);
            if x1 == x0 {
                continue;
            }
            let tap = &wt[(ky * kw + kx) * c_in * c_out..][..c_in * c_out];
            let shift = kx as isize - geom.pad_w();
            for y in 0..h {
                let Some(sy) = geom.src_row(y, ky) else {
                    continue;
                };
                let src0 = (sy * wd) as isize + x0 as isize + shift;
                T::gemm(
                    x1 - x0,
                    c_in,
                    c_out,
                    T::one(),
                    &x[src0 as usize * c_in..],
                    c_in as isize,
                    1,
                    tap,
                    c_out as isize,
                    1,
                    T::one(),
                    &mut out[(y * wd + x0) * c_out..],
                    c_out as isize,
                    1,
                );
            }
        }
    }
}

fn depthwise_forward<T: Real>(geom: &ConvGeom, x: &[T], w: &[T], out: &mut [T]) {
    let ConvGeom {
        h, w: wd, c_in: c, kh, kw, ..
    } = *geom;
    // [kh, kw, C]
    let wt = taps_major(w, c, 1, kh, kw);
    for ky in 0..kh {
        for kx in 0..kw {
            let (x0, x1) = geom.x_range(kx);
            let tap = &wt[(ky * kw + kx) * c..][..c];
            let shift = kx as isize - geom.pad_w();
            for y in 0..h {
                let Some(sy) = geom.src_row(y, ky) else {
                    continue;
                };
                for xo in x0..x1 {
                    let sx = (xo as isize + shift) as usize;
                    let src = &x[(sy * wd + sx) * c..][..c];
                    let dst = &mut out[(y * wd + xo) * c..][..c];
                    for ((d, &s), &k) in dst.iter_mut().zip(src).zip(tap) {
                        *d += s * k;
                    }
                }
            }
        }
    }
}

pub(crate) fn backward<T: Real>(
    graph: &Graph<T>,
    x: Var,
    w: Var,
    b: Option<Var>,
    geom: &ConvGeom,
    g: &Tensor<T>,
) -> Vec<(Var, Tensor<T>)> {
    let xv = graph.value(x).data();
    let wv = graph.value(w).data();
    let gd = g.data();
    let need_x = graph.requires_grad(x);
    let need_w = graph.requires_grad(w);
    let ConvGeom {
        h,
        w: wd,
        c_in,
        c_out,
        kh,
        kw,
        depthwise,
    } = *geom;
    let mut dx = need_x.then(|| vec![T::zero(); xv.len()]);
    let mut res = Vec::with_capacity(3);

    if depthwise {
        let c = c_in;
        let wt = taps_major(wv, c, 1, kh, kw);
        let mut dwt = vec![T::zero(); wt.len()];
        for ky in 0..kh {
            for kx in 0..kw {
                let (x0, x1) = geom.x_range(kx);
                let shift = kx as isize - geom.pad_w();
                let tap = &wt[(ky * kw + kx) * c..][..c];
                for y in 0..h {
                    let Some(sy) = geom.src_row(y, ky) else {
                        continue;
                    };
                    for xo in x0..x1 {
                        let sx = (xo as isize + shift) as usize;
                        let src = (sy * wd + sx) * c;
                        let gp = &gd[(y * wd + xo) * c..][..c];
                        if let Some(dx) = dx.as_mut() {
                            for ((d, &gv), &k) in dx[src..src + c].iter_mut().zip(gp).zip(tap) {
                                *d += gv * k;
                            }
                        }
                        if need_w {
                            let dtap = &mut dwt[(ky * kw + kx) * c..][..c];
                            for ((d, &gv), &s) in dtap.iter_mut().zip(gp).zip(&xv[src..src + c]) {
                                *d += gv * s;
                            }
                        }
                    }
                }
            }
        }
        if need_w {
            let dw = taps_minor(&dwt, c, 1, kh, kw);
            res.push((w, Tensor::new(graph.shape(w), dw).unwrap()));
        }
    } else {
        let wt = taps_major(wv, c_out, c_in, kh, kw);
        let mut dwt = vec![T::zero(); wt.len()];
        for ky in 0..kh {
            for kx in 0..kw {
                let (x0, x1) = geom.x_range(kx);
                if x1 == x0 {
                    continue;
                }
                let n = x1 - x0;
                let shift = kx as isize - geom.pad_w();
                let toff = (ky * kw + kx) * c_in * c_out;
                for y in 0..h {
                    let Some(sy) = geom.src_row(y, ky) else {
                        continue;
                    };
                    let src0 = ((sy * wd) as isize + x0 as isize + shift) as usize;
                    let gslice = &gd[(y * wd + x0) * c_out..];
                    if let Some(dx) = dx.as_mut() {
                        // dX[src, i] += g[y, x, o] * wt[tap, i, o]
                        T::gemm(
                            n,
                            c_out,
                            c_in,
                            T::one(),
                            gslice,
                            c_out as isize,
                            1,
                            &wt[toff..toff + c_in * c_out],
                            1,
                            c_out as isize,
                            T::one(),
                            &mut dx[src0 * c_in..],
                            c_in as isize,
                            1,
                        );
                    }
                    if need_w {
                        // dwt[tap, i, o] += x[src, i] * g[y, x, o]
                        T::gemm(
                            c_in,
                            n,
                            c_out,
                            T::one(),
                            &xv[src0 * c_in..],
                            1,
                            c_in as isize,
                            gslice,
                            c_out as isize,
                            1,
                            T::one(),
                            &mut dwt[toff..toff + c_in * c_out],
                            c_out as isize,
                            1,
                        );
                    }
                }
            }
        }
        if need_w {
            let dw = taps_minor(&dwt, c_out, c_in, kh, kw);
            res.push((w, Tensor::new(graph.shape(w), dw).unwrap()));
        }
    }
    if let Some(dx) = dx {
        res.push((x, Tensor::new(graph.shape(x), dx).unwrap()));
    }
    if let Some(b) = b.filter(|&b| graph.requires_grad(b)) {
        let mut db = vec![T::zero(); c_out];
        for px in gd.chunks_exact(c_out) {
            for (acc, &v) in db.iter_mut().zip(px) {
                *acc += v;
            }
        }
        res.push((b, Tensor::new(&[c_out], db).unwrap()));
    }
    res
}
