//! The reconstruction network and its building blocks.
//!
//! Feature maps are channels-last `[D, W, C]`: depth (A-line) rows, width
//! (B-line) columns.

pub mod assan;
pub mod attention;
pub mod config;
pub mod ffn;
pub mod layers;
pub mod params;
pub mod ssm;

pub use assan::{Assag, Assal, Assan, INPUT_CHANNELS};
pub use attention::{BGaBlock, BSa};
pub use config::{BlockOrder, FfnKind, ModelConfig};
pub use ffn::Ffn;
pub use params::{Builder, InitConfig, ParamId, ParamStore};
pub use ssm::{selective_scan_sequential, ASsBlock, SsmDirection, SsmParams};
