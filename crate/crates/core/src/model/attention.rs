//! B-line gated attention block.

use assan_autograd::{Axis, Graph, Real, Var};

use super::config::ModelConfig;
use super::layers::{Bound, DwConv1d, Linear};
use super::params::Builder;
use crate::error::Result;

/// Multi-head self-attention within each row (B-line) of the map. No
/// positional encoding; the preceding depthwise convolution supplies
/// locality.
#[derive(Clone, Debug)]
pub struct BSa {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub out: Linear,
    pub heads: usize,
}

impl BSa {
    pub fn new(b: &mut Builder, name: &str, c: usize, heads: usize) -> Self {
        Self {
            q: Linear::new(b, &format!("{name}.q"), c, c, true),
            k: Linear::new(b, &format!("{name}.k"), c, c, true),
            v: Linear::new(b, &format!("{name}.v"), c, c, true),
            out: Linear::new(b, &format!("{name}.out"), c, c, true),
            heads,
        }
    }

    pub fn param_count(c: usize) -> usize {
        4 * Linear::param_count(c, c, true)
    }

    /// Query and key maps, exposed for inspecting attention weights.
    pub fn queries_keys<T: Real>(&self, g: &mut Graph<T>, p: Bound, x: Var) -> Result<(Var, Var)> {
        Ok((self.q.forward(g, p, x)?, self.k.forward(g, p, x)?))
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: Bound, x: Var) -> Result<Var> {
        let (q, k) = self.queries_keys(g, p, x)?;
        let v = self.v.forward(g, p, x)?;
        let a = g.row_attention(q, k, v, self.heads)?;
        self.out.forward(g, p, a)
    }
}

/// ```text
/// X1 = SiLU(Linear(X))
/// X2 = Linear(B-SA(DConv_W(Linear(X))))
/// out = Linear(X1 * X2)
/// ```
///
/// Without the gate the block computes `Linear(X2)`.
#[derive(Clone, Debug)]
pub struct BGaBlock {
    pub gate: Option<Linear>,
    pub in_proj: Linear,
    pub dconv: DwConv1d,
    pub attn: BSa,
    pub post: Linear,
    pub out_proj: Linear,
}

impl BGaBlock {
    pub fn new(b: &mut Builder, name: &str, cfg: &ModelConfig) -> Self {
        let c = cfg.embed_dim;
        Self {
            gate: cfg
                .gate_enabled
                .then(|| Linear::new(b, &format!("{name}.gate"), c, c, true)),
            in_proj: Linear::new(b, &format!("{name}.in_proj"), c, c, true),
            dconv: DwConv1d::new(b, &format!("{name}.dconv"), c, cfg.dconv_kernel, Axis::W),
            attn: BSa::new(b, &format!("{name}.attn"), c, cfg.attention_heads),
            post: Linear::new(b, &format!("{name}.post"), c, c, true),
            out_proj: Linear::output(b, &format!("{name}.out_proj"), c, c, true),
        }
    }

    pub fn param_count(cfg: &ModelConfig) -> usize {
        let c = cfg.embed_dim;
        let gate = if cfg.gate_enabled {
            Linear::param_count(c, c, true)
        } else {
            0
        };
        gate + 3 * Linear::param_count(c, c, true)
            + DwConv1d::param_count(c, cfg.dconv_kernel)
            + BSa::param_count(c)
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: Bound, x: Var) -> Result<Var> {
        let t = self.in_proj.forward(g, p, x)?;
        let t = self.dconv.forward(g, p, t)?;
        let t = self.attn.forward(g, p, t)?;
        let x2 = self.post.forward(g, p, t)?;
        let mixed = match &self.gate {
            Some(gate) => {
                let s = gate.forward(g, p, x)?;
                let x1 = g.silu(s);
                g.mul(x1, x2)?
            }
            None => x2,
        };
        self.out_proj.forward(g, p, mixed)
    }
}
