//! Evaluation on held-out scans, interpolation baselines and en-face
//! projections.

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use super::metrics::{psnr, ssim};
use crate::error::{Error, Result};
use crate::model::Assan;
use crate::phantom::Sample;
use crate::signal::{bline_resize, flow_from_raw, magnitude_mask, FlowMap, PipelineConfig, RawBScan};

/// Anything that turns a test sample into a full-width flow map `(D, W)`.
pub trait Reconstructor {
    fn name(&self) -> String;
    fn reconstruct(&self, sample: &Sample) -> Result<Array2<f32>>;
}

impl Reconstructor for Assan {
    fn name(&self) -> String {
        "assan".into()
    }

    fn reconstruct(&self, sample: &Sample) -> Result<Array2<f32>> {
        let y = self.predict(&sample.input)?;
        let (d, w) = (y.shape()[1], y.shape()[2]);
        Ok(Array2::from_shape_vec((d, w), y.into_data()).expect("shape checked by predict"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterpKind {
    Nearest,
    Linear,
}

impl std::str::FromStr for InterpKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nearest" => Ok(Self::Nearest),
            "linear" => Ok(Self::Linear),
            _ => Err(Error::Usage(format!("unknown baseline {s:?}; expected nearest or linear"))),
        }
    }
}

/// Classical chain on the sparse scan, then width upsampling by `delta`.
///
/// The sparse phase difference spans `delta` dense A-scans, so it is divided
/// by `delta` before upsampling. Sparse column `j` summarizes dense columns
/// `j delta .. (j + 1) delta`, which is exactly the half-pixel alignment of
/// [`bline_resize`].
pub fn interp_baseline(
    sparse: &RawBScan,
    delta: usize,
    kind: InterpKind,
    pipeline: &PipelineConfig,
) -> Result<FlowMap> {
    if delta == 0 {
        return Err(Error::Usage("stride must be positive".into()));
    }
    let (_, flow) = flow_from_raw(sparse, pipeline)?;
    let per_step = FlowMap(flow.0.mapv(|v| v / delta as f32));
    let (d, w) = per_step.0.dim();
    match kind {
        InterpKind::Linear => bline_resize(&per_step, w * delta),
        InterpKind::Nearest => Ok(FlowMap(Array2::from_shape_fn((d, w * delta), |(r, c)| {
            per_step.0[(r, c / delta)]
        }))),
    }
}

/// Interpolation baseline as a [`Reconstructor`].
#[derive(Clone, Debug)]
pub struct Baseline {
    pub kind: InterpKind,
    pub delta: usize,
    pub pipeline: PipelineConfig,
}

impl Reconstructor for Baseline {
    fn name(&self) -> String {
        match self.kind {
            InterpKind::Nearest => "nearest".into(),
            InterpKind::Linear => "linear".into(),
        }
    }

    fn reconstruct(&self, sample: &Sample) -> Result<Array2<f32>> {
        Ok(interp_baseline(&sample.sparse, self.delta, self.kind, &self.pipeline)?.0)
    }
}

/// Returns the dense target itself: the ceiling no sparse method can pass.
#[derive(Clone, Copy, Debug, Default)]
pub struct DenseOracle;

impl Reconstructor for DenseOracle {
    fn name(&self) -> String {
        "dense".into()
    }

    fn reconstruct(&self, sample: &Sample) -> Result<Array2<f32>> {
        Ok(sample.target.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Fraction of depth kept from the top.
    pub keep_depth_fraction: f64,
    pub mask_k: f64,
    pub image_width: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self::for_pipeline(&PipelineConfig::default())
    }
}

impl EvalConfig {
    /// Mask and display width taken from the chain that produced the data.
    pub fn for_pipeline(pipeline: &PipelineConfig) -> Self {
        Self {
            keep_depth_fraction: 0.8,
            mask_k: pipeline.mask_k,
            image_width: pipeline.image_width,
        }
    }
}

mod inf_as_string {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str(if v.is_nan() { "nan" } else { "-inf" })
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanMetrics {
    pub id: String,
    /// On the resized image `I`.
    #[serde(with = "inf_as_string")]
    pub psnr: f64,
    pub ssim: f64,
    /// On the full-width map `V`.
    #[serde(with = "inf_as_string")]
    pub psnr_full: f64,
    pub ssim_full: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    #[serde(with = "inf_as_string")]
    pub mean: f64,
    #[serde(with = "inf_as_string")]
    pub std: f64,
}

impl Summary {
    fn of(values: impl Iterator<Item = f64> + Clone) -> Self {
        let n = values.clone().count().max(1) as f64;
        let mean = values.clone().sum::<f64>() / n;
        let std = if mean.is_finite() {
            (values.map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub method: String,
    pub config: EvalConfig,
    pub scans: Vec<ScanMetrics>,
    pub psnr: Summary,
    pub ssim: Summary,
    pub psnr_full: Summary,
    pub ssim_full: Summary,
}

/// Maps signed flow to `[0, 1]` using the target's largest magnitude, so the
/// target spans at most the unit interval and zero flow sits at 0.5.
fn normalize(x: &Array2<f32>, scale: f32) -> Array2<f32> {
    x.mapv(|v| 0.5 + 0.5 * v / scale)
}

fn crop_top(x: &Array2<f32>, fraction: f64) -> Array2<f32> {
    let d = x.nrows();
    let keep = ((d as f64 * fraction).round() as usize).clamp(1, d);
    x.slice(s![..keep, ..]).to_owned()
}

fn compare(pred: &Array2<f32>, target: &Array2<f32>, fraction: f64) -> Result<(f64, f64)> {
    let scale = target.iter().fold(0.0f32, |m, v| m.max(v.abs()));
    let scale = if scale > 0.0 { scale } else { std::f32::consts::PI };
    let p = normalize(&crop_top(pred, fraction), scale);
    let t = normalize(&crop_top(target, fraction), scale);
    Ok((psnr(&p, &t, 1.0)?, ssim(&p, &t)?))
}

/// Scores a reconstructor on `samples`.
///
/// Prediction and target both get the dense-magnitude mask and the B-line
/// resize, then the deep part of the image is cropped away and both are
/// normalized by the target's peak magnitude.
pub fn evaluate(rec: &dyn Reconstructor, samples: &[&Sample], cfg: &EvalConfig) -> Result<MetricReport> {
    if !(cfg.keep_depth_fraction > 0.0 && cfg.keep_depth_fraction <= 1.0) {
        return Err(Error::Config("keep_depth_fraction must lie in (0, 1]".into()));
    }
    let mut scans = Vec::with_capacity(samples.len());
    for s in samples {
        let pred = rec.reconstruct(s)?;
        if pred.dim() != s.target.dim() {
            return Err(Error::Usage(format!(
                "{} produced {:?} for {}, target is {:?}",
                rec.name(),
                pred.dim(),
                s.id,
                s.target.dim()
            )));
        }
        if pred.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("{} produced non-finite values on {}", rec.name(), s.id)));
        }
        let pred = magnitude_mask(&FlowMap(pred), &s.magnitude, cfg.mask_k)?;
        let target = magnitude_mask(&FlowMap(s.target.clone()), &s.magnitude, cfg.mask_k)?;
        let (psnr_full, ssim_full) = compare(&pred.0, &target.0, cfg.keep_depth_fraction)?;
        let pi = bline_resize(&pred, cfg.image_width)?;
        let ti = bline_resize(&target, cfg.image_width)?;
        let (psnr, ssim) = compare(&pi.0, &ti.0, cfg.keep_depth_fraction)?;
        scans.push(ScanMetrics {
            id: s.id.clone(),
            psnr,
            ssim,
            psnr_full,
            ssim_full,
        });
    }
    Ok(MetricReport {
        method: rec.name(),
        config: cfg.clone(),
        psnr: Summary::of(scans.iter().map(|m| m.psnr)),
        ssim: Summary::of(scans.iter().map(|m| m.ssim)),
        psnr_full: Summary::of(scans.iter().map(|m| m.psnr_full)),
        ssim_full: Summary::of(scans.iter().map(|m| m.ssim_full)),
        scans,
    })
}

/// En-face maximum intensity projection: pixel `(slice, w)` is the largest
/// `|flow|` along depth of B-scan `slice`.
pub fn mip_project(volume: &[Array2<f32>]) -> Result<Array2<f32>> {
    let first = volume
        .first()
        .ok_or_else(|| Error::Usage("a projection needs at least one B-scan".into()))?;
    let w = first.ncols();
    let mut out = Array2::zeros((volume.len(), w));
    for (i, b) in volume.iter().enumerate() {
        if b.ncols() != w {
            return Err(Error::Usage(format!("B-scan {i} has width {}, expected {w}", b.ncols())));
        }
        for (c, col) in b.columns().into_iter().enumerate() {
            out[(i, c)] = col.iter().fold(0.0f32, |m, v| m.max(v.abs()));
        }
    }
    Ok(out)
}
