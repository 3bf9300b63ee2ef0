//! Desk-scale runs: synthesize phantoms, train, score against the
//! interpolation baseline.

use serde::{Deserialize, Serialize};

use super::eval::{evaluate, Baseline, EvalConfig, InterpKind, MetricReport};
use super::{train, RunDir, TrainConfig};
use crate::error::Result;
use crate::model::{Assan, InitConfig, ModelConfig};
use crate::phantom::{Dataset, SceneSampler};
use crate::signal::PipelineConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub sampler: SceneSampler,
    pub pipeline: PipelineConfig,
    pub n_train: usize,
    pub n_test: usize,
    /// Seed of the phantom set; the training seed also drives weight init.
    pub data_seed: u64,
}

impl ExperimentConfig {
    /// Desk network and schedule on 32 training and 8 test phantoms.
    pub fn desk(delta: usize, seed: u64) -> Self {
        Self {
            model: ModelConfig::desk(delta),
            train: TrainConfig::desk(seed),
            sampler: SceneSampler::default(),
            pipeline: PipelineConfig::default(),
            n_train: 32,
            n_test: 8,
            data_seed: 2024,
        }
    }

    pub fn dataset(&self) -> Result<Dataset> {
        let n = self.n_train + self.n_test;
        Dataset::generate(
            n,
            self.model.delta,
            &self.sampler,
            self.data_seed,
            self.n_test as f64 / n as f64,
            &self.pipeline,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub losses: Vec<f32>,
    pub initial_smoothed: f64,
    pub final_smoothed: f64,
    pub assan: MetricReport,
    pub baseline: MetricReport,
}

impl ExperimentResult {
    /// ASSAN mean PSNR minus baseline mean PSNR, in dB.
    pub fn psnr_margin(&self) -> f64 {
        self.assan.psnr.mean - self.baseline.psnr.mean
    }

    pub fn ssim_margin(&self) -> f64 {
        self.assan.ssim.mean - self.baseline.ssim.mean
    }
}

/// Trains on `data` (generated from `cfg` if absent) and evaluates the final
/// weights and the linear baseline on the held-out scans.
pub fn run_experiment(cfg: &ExperimentConfig, data: Option<&Dataset>, out: Option<&RunDir>) -> Result<ExperimentResult> {
    let owned;
    let data = match data {
        Some(d) => d,
        None => {
            owned = cfg.dataset()?;
            &owned
        }
    };
    let mut model = Assan::new(cfg.model.clone(), InitConfig::standard(cfg.train.seed))?;
    let report = train(&mut model, &data.train(), &cfg.train, out)?;
    let eval_cfg = EvalConfig::for_pipeline(&cfg.pipeline);
    let test = data.test();
    let assan = evaluate(&model, &test, &eval_cfg)?;
    let baseline = Baseline {
        kind: InterpKind::Linear,
        delta: cfg.model.delta,
        pipeline: cfg.pipeline.clone(),
    };
    let baseline = evaluate(&baseline, &test, &eval_cfg)?;
    Ok(ExperimentResult {
        losses: report.losses,
        initial_smoothed: report.initial_smoothed,
        final_smoothed: report.final_smoothed,
        assan,
        baseline,
    })
}

/// Index of the median of three or more values (lower median for even counts).
pub fn median_index(values: &[f64]) -> Option<usize> {
    if values.is_empty() {
        return None;
    }
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    Some(idx[(values.len() - 1) / 2])
}
