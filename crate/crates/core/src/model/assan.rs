use assan_autograd::{Graph, Real, Tensor, Var};

use super::attention::BGaBlock;
use super::config::{BlockOrder, ModelConfig};
use super::ffn::Ffn;
use super::layers::{Bound, Conv2d, LayerNorm};
use super::params::{Builder, InitConfig, ParamStore};
use super::ssm::ASsBlock;
use crate::error::{Error, Result};

/// Pre-norm residual layer:
///
/// ```text
/// x1 = x  + ass(LN(x))
/// x2 = x1 + bga(LN(x1))
/// y  = x2 + ffn(LN(x2))
/// ```
///
/// with the first two swapped under [`BlockOrder::BThenA`].
#[derive(Clone, Debug)]
pub struct Assal {
    pub norm_a: LayerNorm,
    pub ass: ASsBlock,
    pub norm_b: LayerNorm,
    pub bga: BGaBlock,
    pub ffn: Option<(LayerNorm, Ffn)>,
    pub order: BlockOrder,
}

impl Assal {
    pub fn new(b: &mut Builder, name: &str, cfg: &ModelConfig) -> Self {
        let (c, eps) = (cfg.embed_dim, cfg.ln_eps);
        let norm_a = LayerNorm::new(b, &format!("{name}.norm_a"), c, eps);
        let ass = ASsBlock::new(b, &format!("{name}.ass"), cfg);
        let norm_b = LayerNorm::new(b, &format!("{name}.norm_b"), c, eps);
        let bga = BGaBlock::new(b, &format!("{name}.bga"), cfg);
        let ffn = if cfg.ffn_kind == super::FfnKind::None {
            None
        } else {
            let norm = LayerNorm::new(b, &format!("{name}.norm_f"), c, eps);
            Ffn::new(b, &format!("{name}.ffn"), cfg).map(|f| (norm, f))
        };
        Self {
            norm_a,
            ass,
            norm_b,
            bga,
            ffn,
            order: cfg.block_order,
        }
    }

    pub fn param_count(cfg: &ModelConfig) -> usize {
        let c = cfg.embed_dim;
        let ffn = match Ffn::param_count(cfg) {
            0 => 0,
            n => n + LayerNorm::param_count(c),
        };
        2 * LayerNorm::param_count(c) + ASsBlock::param_count(cfg) + BGaBlock::param_count(cfg) + ffn
    }

    fn apply_a<T: Real>(&self, g: &mut Graph<T>, p: Bound, x: Var) -> Result<Var> {
        let n = self.norm_a.forward(g, p, x)?;
        let y = self.ass.forward(g, p, n)?;
        Ok(g.add(x, y)?)
    }

    fn apply_b<T: Real>(&self, g: &mut Graph<T>, p: Bound, x: Var) -> Result<Var> {
        let n = self.norm_b.forward(g, p, x)?;
        let y = self.bga.forward(g, p, n)?;
        Ok(g.add(x, y)?)
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: Bound, x: Var) -> Result<Var> {
        let x = match self.order {
            BlockOrder::AThenB => {
                let x = self.apply_a(g, p, x)?;
                self.apply_b(g, p, x)?
            }
            BlockOrder::BThenA => {
                let x = self.apply_b(g, p, x)?;
                self.apply_a(g, p, x)?
            }
        };
        match &self.ffn {
            Some((norm, ffn)) => {
                let n = norm.forward(g, p, x)?;
                let y = ffn.forward(g, p, n)?;
                Ok(g.add(x, y)?)
            }
            None => Ok(x),
        }
    }
}

/// `y = x + Conv3x3(layers(x))`.
#[derive(Clone, Debug)]
pub struct Assag {
    pub layers: Vec<Assal>,
    pub conv: Conv2d,
}

impl Assag {
    pub fn new(b: &mut Builder, name: &str, cfg: &ModelConfig) -> Self {
        let layers = (0..cfg.layers_per_group)
            .map(|l| Assal::new(b, &format!("{name}.layers.{l}"), cfg))
            .collect();
        let c = cfg.embed_dim;
        Self {
            layers,
            conv: Conv2d::output(b, &format!("{name}.conv"), c, c, 3),
        }
    }

    pub fn param_count(cfg: &ModelConfig) -> usize {
        let c = cfg.embed_dim;
        cfg.layers_per_group * Assal::param_count(cfg) + Conv2d::param_count(c, c, 3)
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: Bound, x: Var) -> Result<Var> {
        let mut h = x;
        for layer in &self.layers {
            h = layer.forward(g, p, h)?;
        }
        let y = self.conv.forward(g, p, h)?;
        Ok(g.add(x, y)?)
    }
}

/// The full network:
///
/// ```text
/// X0 = Conv(X_in)             2 -> C
/// Xg = ASSAG_g(X_{g-1})
/// V  = B-PS(Head(X0 + Conv(X_G)))   Head: C -> delta, B-PS: delta -> 1
/// ```
#[derive(Clone, Debug)]
pub struct Assan {
    pub config: ModelConfig,
    pub params: ParamStore<f32>,
    pub embed: Conv2d,
    pub groups: Vec<Assag>,
    pub body: Conv2d,
    pub head: Conv2d,
}

/// Channels of the network input: normalized log-magnitude and phase.
pub const INPUT_CHANNELS: usize = 2;

impl Assan {
    pub fn new(config: ModelConfig, init: InitConfig) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::default();
        let mut b = Builder::new(&mut params, init);
        let c = config.embed_dim;
        let embed = Conv2d::new(&mut b, "embed", INPUT_CHANNELS, c, 3);
        let groups = (0..config.groups)
            .map(|i| Assag::new(&mut b, &format!("groups.{i}"), &config))
            .collect();
        let body = Conv2d::new(&mut b, "body", c, c, 3);
        let head = Conv2d::new(&mut b, "head", c, config.delta, 3);
        Ok(Self {
            config,
            params,
            embed,
            groups,
            body,
            head,
        })
    }

    /// Closed-form parameter count of a configuration.
    pub fn param_count(cfg: &ModelConfig) -> usize {
        let c = cfg.embed_dim;
        Conv2d::param_count(INPUT_CHANNELS, c, 3)
            + cfg.groups * Assag::param_count(cfg)
            + Conv2d::param_count(c, c, 3)
            + Conv2d::param_count(c, cfg.delta, 3)
    }

    /// Channels-last forward: `[D, W', 2]` to `[D, W' * delta, 1]`.
    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: Bound, x: Var) -> Result<Var> {
        let shape = g.shape(x).to_vec();
        if shape.len() != 3 || shape[2] != INPUT_CHANNELS || shape[0] == 0 || shape[1] == 0 {
            return Err(Error::Usage(format!(
                "network input must be [D, W', {INPUT_CHANNELS}] with D, W' > 0, got {shape:?}"
            )));
        }
        let x0 = self.embed.forward(g, p, x)?;
        let mut h = x0;
        for group in &self.groups {
            h = group.forward(g, p, h)?;
        }
        let body = self.body.forward(g, p, h)?;
        let sum = g.add(x0, body)?;
        let head = self.head.forward(g, p, sum)?;
        Ok(g.pixel_shuffle_w(head, self.config.delta)?)
    }

    /// Records the planar `[2, D, W']` input and returns the planar
    /// `[1, D, W' * delta]` prediction.
    pub fn forward_planar<T: Real>(
        &self,
        g: &mut Graph<T>,
        p: Bound,
        input: &Tensor<T>,
    ) -> Result<Var> {
        if input.ndim() != 3 || input.shape()[0] != INPUT_CHANNELS {
            return Err(Error::Usage(format!(
                "network input must be [{INPUT_CHANNELS}, D, W'], got {:?}",
                input.shape()
            )));
        }
        let x = g.constant(input.chw_to_hwc()?);
        let y = self.forward(g, p, x)?;
        let (d, w) = (g.shape(y)[0], g.shape(y)[1]);
        // One output channel, so channels-last and planar layouts coincide.
        Ok(g.reshape(y, &[1, d, w])?)
    }

    /// Inference without gradient tracking.
    pub fn predict(&self, input: &Tensor<f32>) -> Result<Tensor<f32>> {
        let mut g = Graph::<f32>::new();
        let p = self.params.attach(&mut g, false);
        let y = self.forward_planar(&mut g, &p, input)?;
        Ok(g.value(y).clone())
    }
}
