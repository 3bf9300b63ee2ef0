//! Position-wise feedforward variants.

use assan_autograd::{Axis, Graph, Real, Var};

use super::config::{FfnKind, ModelConfig};
use super::layers::{Bound, Conv2d, DwConv1d, Linear};
use super::params::Builder;
use crate::error::Result;

#[derive(Clone, Debug)]
pub enum Local {
    /// Depthwise `k x 1` then `1 x k`.
    Factorized(DwConv1d, DwConv1d),
    Square(Conv2d),
    None,
}

/// `Linear -> GELU -> [local convs -> GELU] -> Linear`; the bracketed stage
/// depends on [`FfnKind`].
#[derive(Clone, Debug)]
pub struct Ffn {
    pub fc1: Linear,
    pub local: Local,
    pub fc2: Linear,
}

impl Ffn {
    /// `None` for [`FfnKind::None`], where the layer has no feedforward stage.
    pub fn new(b: &mut Builder, name: &str, cfg: &ModelConfig) -> Option<Self> {
        let (c, k) = (cfg.embed_dim, cfg.lefn_kernel);
        let hidden = cfg.lefn_expand * c;
        if cfg.ffn_kind == FfnKind::None {
            return None;
        }
        let fc1 = Linear::new(b, &format!("{name}.fc1"), c, hidden, true);
        let local = match cfg.ffn_kind {
            FfnKind::Lefn => Local::Factorized(
                DwConv1d::new(b, &format!("{name}.conv_h"), hidden, k, Axis::H),
                DwConv1d::new(b, &format!("{name}.conv_w"), hidden, k, Axis::W),
            ),
            FfnKind::Lefn2d => {
                Local::Square(Conv2d::depthwise(b, &format!("{name}.conv"), hidden, k))
            }
            FfnKind::Mlp | FfnKind::None => Local::None,
        };
        let fc2 = Linear::output(b, &format!("{name}.fc2"), hidden, c, true);
        Some(Self { fc1, local, fc2 })
    }

    pub fn param_count(cfg: &ModelConfig) -> usize {
        let (c, k) = (cfg.embed_dim, cfg.lefn_kernel);
        let hidden = cfg.lefn_expand * c;
        let mlp = Linear::param_count(c, hidden, true) + Linear::param_count(hidden, c, true);
        match cfg.ffn_kind {
            FfnKind::None => 0,
            FfnKind::Mlp => mlp,
            FfnKind::Lefn => mlp + 2 * DwConv1d::param_count(hidden, k),
            FfnKind::Lefn2d => mlp + hidden * k * k + hidden,
        }
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: Bound, x: Var) -> Result<Var> {
        let h = self.fc1.forward(g, p, x)?;
        let mut h = g.gelu(h);
        match &self.local {
            Local::Factorized(ch, cw) => {
                let t = ch.forward(g, p, h)?;
                let t = cw.forward(g, p, t)?;
                h = g.gelu(t);
            }
            Local::Square(conv) => {
                let t = conv.forward(g, p, h)?;
                h = g.gelu(t);
            }
            Local::None => {}
        }
        self.fc2.forward(g, p, h)
    }
}
