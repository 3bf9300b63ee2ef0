//! A-line state space block: a bidirectional selective scan down every
//! column of the feature map.

use assan_autograd::{Activation, Axis, Graph, Real, ScanInputs, Tensor, Var};
use rand::Rng;

use super::config::ModelConfig;
use super::layers::{at, Bound, DwConv1d, LayerNorm, Linear};
use super::params::{Builder, ParamId, ParamStore};
use crate::error::Result;

/// One scan direction: the input-dependent step, input and readout
/// projections plus the state decay and skip weights.
#[derive(Clone, Debug)]
pub struct SsmDirection {
    pub x_dt: Linear,
    pub x_b: Linear,
    pub x_c: Linear,
    pub dt_proj: Linear,
    pub a_log: ParamId,
    pub d: ParamId,
}

fn inverse_softplus(y: f64) -> f64 {
    y + (-(-y).exp_m1()).ln()
}

impl SsmDirection {
    pub fn new(b: &mut Builder, name: &str, ci: usize, n: usize, rank: usize) -> Self {
        let x_dt = Linear::new(b, &format!("{name}.x_dt"), ci, rank, false);
        let x_b = Linear::new(b, &format!("{name}.x_b"), ci, n, false);
        let x_c = Linear::new(b, &format!("{name}.x_c"), ci, n, false);
        let dt_proj = Linear::new(b, &format!("{name}.dt_proj"), rank, ci, true);
        // Step-size bias: softplus^-1 of a log-uniform draw in [1e-3, 0.1].
        let bias = dt_proj.bias.expect("dt_proj has a bias");
        let (lo, hi) = (1e-3f64.ln(), 0.1f64.ln());
        for v in b.store.get_mut(bias).data_mut() {
            let dt = b.rng.gen_range(lo..hi).exp();
            *v = inverse_softplus(dt) as f32;
        }
        let a_log = b.constant(
            &format!("{name}.a_log"),
            Tensor::from_fn(&[ci, n], |i| ((i % n + 1) as f32).ln()),
        );
        let d = b.constant(&format!("{name}.d"), Tensor::ones(&[ci]));
        Self {
            x_dt,
            x_b,
            x_c,
            dt_proj,
            a_log,
            d,
        }
    }

    pub fn param_count(ci: usize, n: usize, rank: usize) -> usize {
        Linear::param_count(ci, rank, false)
            + 2 * Linear::param_count(ci, n, false)
            + Linear::param_count(rank, ci, true)
            + ci * n
            + ci
    }

    /// Positive step sizes `softplus(dt_proj(x_dt(u)))`, `[H, W, Ci]`.
    pub fn delta<T: Real>(&self, g: &mut Graph<T>, p: Bound, u: Var) -> Result<Var> {
        let low = self.x_dt.forward(g, p, u)?;
        let dt = self.dt_proj.forward(g, p, low)?;
        Ok(g.softplus(dt))
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: Bound, u: Var, reverse: bool) -> Result<Var> {
        let delta = self.delta(g, p, u)?;
        let bm = self.x_b.forward(g, p, u)?;
        let cm = self.x_c.forward(g, p, u)?;
        let a = g.exp(at(p, self.a_log));
        let a = g.scale(a, -T::one());
        let inputs = ScanInputs {
            u,
            delta,
            a,
            b: bm,
            c: cm,
            d: at(p, self.d),
        };
        Ok(g.selective_scan(inputs, reverse)?)
    }

    /// Plain copies of the direction's weights for the sequential oracle.
    pub fn params_f64(&self, store: &ParamStore<f64>) -> SsmParams {
        let data = |id: ParamId| store.get(id).data().to_vec();
        let shape = store.get(self.a_log).shape();
        SsmParams {
            ci: shape[0],
            n: shape[1],
            rank: self.x_dt.c_out,
            x_dt: data(self.x_dt.weight),
            x_b: data(self.x_b.weight),
            x_c: data(self.x_c.weight),
            dt_w: data(self.dt_proj.weight),
            dt_b: data(self.dt_proj.bias.unwrap()),
            a: store
                .get(self.a_log)
                .data()
                .iter()
                .map(|v| -v.exp())
                .collect(),
            d: data(self.d),
        }
    }
}

/// Explicit selective-scan weights, row-major `[out, in]` matrices.
#[derive(Clone, Debug)]
pub struct SsmParams {
    pub ci: usize,
    pub n: usize,
    pub rank: usize,
    pub x_dt: Vec<f64>,
    pub x_b: Vec<f64>,
    pub x_c: Vec<f64>,
    pub dt_w: Vec<f64>,
    pub dt_b: Vec<f64>,
    /// `[Ci, N]` state matrix, already negative.
    pub a: Vec<f64>,
    pub d: Vec<f64>,
}

fn matvec(m: &[f64], x: &[f64], rows: usize) -> Vec<f64> {
    let cols = x.len();
    (0..rows)
        .map(|r| m[r * cols..][..cols].iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

/// Reference selective scan over one sequence `x[t][c]`, written as the
/// textbook per-step loop.
pub fn selective_scan_sequential(x: &[Vec<f64>], params: &SsmParams) -> Vec<Vec<f64>> {
    let (ci, n) = (params.ci, params.n);
    let mut h = vec![0.0; ci * n];
    let mut out = Vec::with_capacity(x.len());
    for xt in x {
        let low = matvec(&params.x_dt, xt, params.rank);
        let pre = matvec(&params.dt_w, &low, ci);
        let bt = matvec(&params.x_b, xt, n);
        let ct = matvec(&params.x_c, xt, n);
        let mut yt = vec![0.0; ci];
        for c in 0..ci {
            let dt = Activation::Softplus.apply(pre[c] + params.dt_b[c]);
            let mut acc = 0.0;
            for k in 0..n {
                let abar = (dt * params.a[c * n + k]).exp();
                h[c * n + k] = abar * h[c * n + k] + dt * bt[k] * xt[c];
                acc += ct[k] * h[c * n + k];
            }
            yt[c] = acc + params.d[c] * xt[c];
        }
        out.push(yt);
    }
    out
}

/// `y = LN(scan_fwd(u) + scan_bwd(u))` wrapped in the gated projections:
///
/// ```text
/// X1 = SiLU(Linear(X))
/// X2 = LN(A-SS(SiLU(DConv_H(Linear(X)))))
/// out = Linear(X1 * X2)
/// ```
#[derive(Clone, Debug)]
pub struct ASsBlock {
    pub in_x: Linear,
    pub in_z: Linear,
    pub dconv: DwConv1d,
    pub fwd: SsmDirection,
    pub bwd: SsmDirection,
    pub out_norm: LayerNorm,
    pub out_proj: Linear,
}

impl ASsBlock {
    pub fn new(b: &mut Builder, name: &str, cfg: &ModelConfig) -> Self {
        let (c, ci, n, r) = (
            cfg.embed_dim,
            cfg.inner_dim(),
            cfg.ssm_state_dim,
            cfg.dt_rank(),
        );
        Self {
            in_x: Linear::new(b, &format!("{name}.in_x"), c, ci, false),
            in_z: Linear::new(b, &format!("{name}.in_z"), c, ci, false),
            dconv: DwConv1d::new(b, &format!("{name}.dconv"), ci, cfg.dconv_kernel, Axis::H),
            fwd: SsmDirection::new(b, &format!("{name}.fwd"), ci, n, r),
            bwd: SsmDirection::new(b, &format!("{name}.bwd"), ci, n, r),
            out_norm: LayerNorm::new(b, &format!("{name}.out_norm"), ci, cfg.ln_eps),
            out_proj: Linear::output(b, &format!("{name}.out_proj"), ci, c, false),
        }
    }

    pub fn param_count(cfg: &ModelConfig) -> usize {
        let (c, ci, n, r) = (
            cfg.embed_dim,
            cfg.inner_dim(),
            cfg.ssm_state_dim,
            cfg.dt_rank(),
        );
        2 * Linear::param_count(c, ci, false)
            + DwConv1d::param_count(ci, cfg.dconv_kernel)
            + 2 * SsmDirection::param_count(ci, n, r)
            + LayerNorm::param_count(ci)
            + Linear::param_count(ci, c, false)
    }

    /// Sum of the top-down and bottom-up scans of every column.
    pub fn scan<T: Real>(&self, g: &mut Graph<T>, p: Bound, u: Var) -> Result<Var> {
        let f = self.fwd.forward(g, p, u, false)?;
        let r = self.bwd.forward(g, p, u, true)?;
        Ok(g.add(f, r)?)
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: Bound, x: Var) -> Result<Var> {
        let z = self.in_z.forward(g, p, x)?;
        let x1 = g.silu(z);
        let xs = self.in_x.forward(g, p, x)?;
        let xs = self.dconv.forward(g, p, xs)?;
        let u = g.silu(xs);
        let y = self.scan(g, p, u)?;
        let x2 = self.out_norm.forward(g, p, y)?;
        let gated = g.mul(x1, x2)?;
        self.out_proj.forward(g, p, gated)
    }
}
