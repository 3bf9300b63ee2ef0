//! Sparse optical Doppler tomography reconstruction.
//!
//! A phantom generator synthesizes raw spectral B-scans with programmed flow,
//! [`signal`] turns them into phase-difference flow maps, and [`model::Assan`]
//! restores full B-line resolution from scans sampled every `delta` A-scans.
//!
//! ```no_run
//! use assan::model::{Assan, InitConfig, ModelConfig};
//! use assan::phantom::{synthesize_raw_bscan, SceneSampler};
//! use assan::signal::{preprocess, sparse_downsample, PipelineConfig};
//!
//! let scene = SceneSampler::default().sample(1)?;
//! let sparse = sparse_downsample(&synthesize_raw_bscan(&scene)?, 4)?;
//! let (_, input) = preprocess(&sparse, &PipelineConfig::default())?;
//! let net = Assan::new(ModelConfig::desk(4), InitConfig::standard(0))?;
//! let flow = net.predict(&input.tensor)?;
//! assert_eq!(flow.shape(), &[1, 128, 256]);
//! # Ok::<(), assan::Error>(())
//! ```

mod error;
pub mod cli;
pub mod io;
pub mod model;
pub mod phantom;
pub mod signal;
pub mod train;

pub use error::{Error, Result};
