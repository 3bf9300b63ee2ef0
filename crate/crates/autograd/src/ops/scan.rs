//! Selective state-space scan along the depth axis of `[H, W, C]` maps.
//!
//! Every column `w` and channel `c` runs an independent recurrence over
//! `t = 0..H` (or `H-1..=0` when reversed):
//!
//! ```text
//! h_t = exp(delta_t * A[c]) * h_{t-1} + delta_t * B_t * u_t     (h_{-1} = 0)
//! y_t = <C_t, h_t> + D[c] * u_t
//! ```
//!
//! `B_t` and `C_t` are shared by all channels of one position; `delta`
//! must already be positive.

use crate::error::{shape_err, Result};
use crate::graph::{Graph, Op, Var};
use crate::real::Real;
use crate::tensor::{dims3, Tensor};

/// Operands of [`Graph::selective_scan`].
#[derive(Clone, Copy, Debug)]
pub struct ScanInputs {
    /// `[H, W, C]` input sequence.
    pub u: Var,
    /// `[H, W, C]` positive step sizes.
    pub delta: Var,
    /// `[C, N]` state decay rates (negative).
    pub a: Var,
    /// `[H, W, N]` input-dependent input projection.
    pub b: Var,
    /// `[H, W, N]` input-dependent readout.
    pub c: Var,
    /// `[C]` skip weight.
    pub d: Var,
}

impl ScanInputs {
    fn vars(&self) -> [Var; 6] {
        [self.u, self.delta, self.a, self.b, self.c, self.d]
    }
}

/// `[rows, cols]` to `[cols, rows]`.
fn transpose<T: Real>(m: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = m[r * cols + c];
        }
    }
    out
}

/// Dot product with eight independent partial sums.
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: T = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(&x, &y)| x * y)
        .sum();
    for (xa, xb) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] += xa[i] * xb[i];
        }
    }
    acc.iter().copied().sum::<T>() + tail
}

fn order(h: usize, reverse: bool) -> Box<dyn Iterator<Item = usize>> {
    if reverse {
        Box::new((0..h).rev())
    } else {
        Box::new(0..h)
    }
}

impl<T: Real> Graph<T> {
    pub fn selective_scan(&mut self, inputs: ScanInputs, reverse: bool) -> Result<Var> {
        let (h, w, c) = dims3(self.shape(inputs.u))?;
        let n = match *self.shape(inputs.a) {
            [ca, n] if ca == c => n,
            ref s => return shape_err(format!("scan A must be [{c}, N], got {s:?}")),
        };
        if self.shape(inputs.delta) != [h, w, c] {
            return shape_err("scan delta must match u");
        }
        for (name, v) in [("B", inputs.b), ("C", inputs.c)] {
            if self.shape(v) != [h, w, n] {
                return shape_err(format!(
                    "scan {name} must be [{h}, {w}, {n}], got {:?}",
                    self.shape(v)
                ));
            }
        }
        if self.shape(inputs.d) != [c] {
            return shape_err(format!("scan D must be [{c}]"));
        }
        let save = self.any_requires_grad(&inputs.vars());
        let u = self.value(inputs.u).data();
        let delta = self.value(inputs.delta).data();
        let a = self.value(inputs.a).data();
        let bm = self.value(inputs.b).data();
        let cm = self.value(inputs.c).data();
        let d = self.value(inputs.d).data();

        // Internally states run state-major, `[N, C]` per position, so every
        // inner loop is over channels.
        let at = transpose(a, c, n);
        let mut y = vec![T::zero(); h * w * c];
        // Saved per (column, step) in visiting order.
        let saved = if save { h * w * c * n } else { 0 };
        let mut states = Vec::with_capacity(saved);
        let mut decays = Vec::with_capacity(saved);
        let mut state = vec![T::zero(); n * c];
        let mut decay = vec![T::zero(); n * c];
        let mut dtx = vec![T::zero(); c];
        for col in 0..w {
            state.iter_mut().for_each(|s| *s = T::zero());
            for t in order(h, reverse) {
                let pos = t * w + col;
                let dt = &delta[pos * c..][..c];
                let x = &u[pos * c..][..c];
                let yrow = &mut y[pos * c..][..c];
                for ch in 0..c {
                    dtx[ch] = dt[ch] * x[ch];
                    yrow[ch] = d[ch] * x[ch];
                }
                for k in 0..n {
                    let (bk, ck) = (bm[pos * n + k], cm[pos * n + k]);
                    let e = &mut decay[k * c..][..c];
                    let hs = &mut state[k * c..][..c];
                    let ak = &at[k * c..][..c];
                    for ch in 0..c {
                        e[ch] = (dt[ch] * ak[ch]).exp_fast();
                        hs[ch] = e[ch] * hs[ch] + dtx[ch] * bk;
                        yrow[ch] += ck * hs[ch];
                    }
                }
                if save {
                    states.extend_from_slice(&state);
                    decays.extend_from_slice(&decay);
                }
            }
        }
        let out = Tensor::new(&[h, w, c], y)?;
        Ok(self.push(
            out,
            Op::SelectiveScan {
                inputs,
                reverse,
                states,
                decays,
            },
            &inputs.vars(),
        ))
    }
}

pub(crate) fn backward<T: Real>(
    graph: &Graph<T>,
    inputs: &ScanInputs,
    reverse: bool,
    states: &[T],
    decays: &[T],
    g: &Tensor<T>,
) -> Vec<(Var, Tensor<T>)> {
    let shape = graph.shape(inputs.u).to_vec();
    let (h, w, c) = (shape[0], shape[1], shape[2]);
    let n = graph.shape(inputs.a)[1];
    let u = graph.value(inputs.u).data();
    let delta = graph.value(inputs.delta).data();
    let a = graph.value(inputs.a).data();
    let bm = graph.value(inputs.b).data();
    let cm = graph.value(inputs.c).data();
    let d = graph.value(inputs.d).data();
    let gy = g.data();

    let at = transpose(a, c, n);
    let mut du = vec![T::zero(); u.len()];
    let mut ddelta = vec![T::zero(); delta.len()];
    let mut dat = vec![T::zero(); a.len()];
    let mut db = vec![T::zero(); bm.len()];
    let mut dc = vec![T::zero(); cm.len()];
    let mut dd = vec![T::zero(); c];

    // carry[k, c] = dL/dh_t flowing back from step t+1, i.e. abar_{t+1} * g_{t+1}
    let mut carry = vec![T::zero(); n * c];
    let zeros = vec![T::zero(); n * c];
    let mut gh = vec![T::zero(); c];
    let mut dtx = vec![T::zero(); c];
    let steps: Vec<usize> = order(h, reverse).collect();
    for col in 0..w {
        carry.iter_mut().for_each(|s| *s = T::zero());
        for (i, &t) in steps.iter().enumerate().rev() {
            let pos = t * w + col;
            let slot = (col * h + i) * n * c;
            let h_prev = match i {
                0 => &zeros[..],
                _ => &states[slot - n * c..][..n * c],
            };
            let ht = &states[slot..][..n * c];
            let abar = &decays[slot..][..n * c];
            let dt = &delta[pos * c..][..c];
            let x = &u[pos * c..][..c];
            let dy = &gy[pos * c..][..c];
            let ddt = &mut ddelta[pos * c..][..c];
            let dx = &mut du[pos * c..][..c];
            for ch in 0..c {
                dtx[ch] = dt[ch] * x[ch];
                dd[ch] += dy[ch] * x[ch];
                dx[ch] = dy[ch] * d[ch];
            }
            for k in 0..n {
                let (bk, ck) = (bm[pos * n + k], cm[pos * n + k]);
                let e = &abar[k * c..][..c];
                let hp = &h_prev[k * c..][..c];
                let ak = &at[k * c..][..c];
                let dak = &mut dat[k * c..][..c];
                let carry_k = &mut carry[k * c..][..c];
                for ch in 0..c {
                    let g = dy[ch] * ck + carry_k[ch];
                    let dabar = g * hp[ch] * e[ch];
                    ddt[ch] += dabar * ak[ch] + g * bk * x[ch];
                    dak[ch] += dabar * dt[ch];
                    dx[ch] += g * dt[ch] * bk;
                    carry_k[ch] = g * e[ch];
                    gh[ch] = g;
                }
                dc[pos * n + k] += dot(dy, &ht[k * c..][..c]);
                db[pos * n + k] += dot(&gh, &dtx);
            }
        }
    }
    let da = transpose(&dat, n, c);
    let t = |v: Var, data: Vec<T>| (v, Tensor::new(graph.shape(v), data).unwrap());
    vec![
        t(inputs.u, du),
        t(inputs.delta, ddelta),
        t(inputs.a, da),
        t(inputs.b, db),
        t(inputs.c, dc),
        t(inputs.d, dd),
    ]
}
