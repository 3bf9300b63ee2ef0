use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Order of the two token mixers inside a layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockOrder {
    /// A-line state space block, then B-line gated attention.
    AThenB,
    BThenA,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FfnKind {
    /// Factorized depthwise convolutions along depth and width.
    Lefn,
    Mlp,
    /// One square depthwise convolution.
    Lefn2d,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub groups: usize,
    pub layers_per_group: usize,
    pub embed_dim: usize,
    /// B-line sampling stride the head upsamples by.
    pub delta: usize,
    pub ssm_state_dim: usize,
    pub ssm_expand: usize,
    /// Rank of the step-size projection; `None` means `ceil(C / 16)`.
    #[serde(default)]
    pub dt_rank: Option<usize>,
    pub dconv_kernel: usize,
    pub attention_heads: usize,
    pub lefn_kernel: usize,
    pub lefn_expand: usize,
    pub block_order: BlockOrder,
    pub gate_enabled: bool,
    pub ffn_kind: FfnKind,
    #[serde(default = "default_eps")]
    pub ln_eps: f64,
}

fn default_eps() -> f64 {
    1e-6
}

impl ModelConfig {
    /// Full-size network: 4 groups of 6 layers, 60 channels.
    pub fn paper(delta: usize) -> Self {
        Self {
            groups: 4,
            layers_per_group: 6,
            embed_dim: 60,
            delta,
            ssm_state_dim: 16,
            ssm_expand: 2,
            dt_rank: None,
            dconv_kernel: 4,
            attention_heads: 6,
            lefn_kernel: 5,
            lefn_expand: 2,
            block_order: BlockOrder::AThenB,
            gate_enabled: true,
            ffn_kind: FfnKind::Lefn,
            ln_eps: default_eps(),
        }
    }

    /// CPU-sized network used for the experiments in this repository.
    pub fn desk(delta: usize) -> Self {
        Self {
            groups: 2,
            layers_per_group: 2,
            embed_dim: 16,
            ssm_state_dim: 8,
            attention_heads: 4,
            ..Self::paper(delta)
        }
    }

    /// Smallest sensible network, for gradient checks and unit tests.
    pub fn tiny(delta: usize) -> Self {
        Self {
            groups: 1,
            layers_per_group: 1,
            embed_dim: 8,
            ssm_state_dim: 4,
            attention_heads: 2,
            lefn_kernel: 3,
            ..Self::desk(delta)
        }
    }

    pub fn inner_dim(&self) -> usize {
        self.ssm_expand * self.embed_dim
    }

    pub fn dt_rank(&self) -> usize {
        self.dt_rank.unwrap_or_else(|| self.embed_dim.div_ceil(16))
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("groups", self.groups),
            ("layers_per_group", self.layers_per_group),
            ("embed_dim", self.embed_dim),
            ("delta", self.delta),
            ("ssm_state_dim", self.ssm_state_dim),
            ("ssm_expand", self.ssm_expand),
            ("dt_rank", self.dt_rank()),
            ("dconv_kernel", self.dconv_kernel),
            ("attention_heads", self.attention_heads),
            ("lefn_kernel", self.lefn_kernel),
            ("lefn_expand", self.lefn_expand),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.embed_dim % self.attention_heads != 0 {
            return Err(Error::Config(format!(
                "embed_dim {} is not divisible by {} attention heads",
                self.embed_dim, self.attention_heads
            )));
        }
        if !(self.ln_eps > 0.0) {
            return Err(Error::Config("ln_eps must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for d in [1, 2, 4] {
            ModelConfig::paper(d).validate().unwrap();
            ModelConfig::desk(d).validate().unwrap();
            ModelConfig::tiny(d).validate().unwrap();
        }
        let p = ModelConfig::paper(4);
        assert_eq!((p.groups, p.layers_per_group, p.embed_dim), (4, 6, 60));
        assert_eq!(p.dt_rank(), 4);
    }

    #[test]
    fn head_mismatch_is_config_error() {
        let mut c = ModelConfig::desk(2);
        c.attention_heads = 5;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn json_round_trip() {
        let c = ModelConfig::desk(4);
        let s = serde_json::to_string(&c).unwrap();
        assert!(s.contains("\"a_then_b\""));
        assert_eq!(serde_json::from_str::<ModelConfig>(&s).unwrap(), c);
    }
}
