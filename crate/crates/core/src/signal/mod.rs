//! Classical Doppler OCT processing of raw spectral B-scans.
//!
//! ```text
//! raw B-scan --IFFT per A-scan--> complex depth profiles --> magnitude / phase
//!     phase --difference of successive A-scans--> flow map V'
//!     V' --magnitude mask--> V --B-line resize--> image I
//! ```
//!
//! Arrays are indexed `(depth, a_scan)`; the second axis is the B-line.

pub mod fft;

use assan_autograd::Tensor;
use ndarray::{s, Array2, Axis};
use num_complex::{Complex32, Complex64};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Provenance carried alongside a raw B-scan.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanMeta {
    /// Cumulative B-line sampling stride (1 = dense).
    pub delta: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub scan_id: String,
}

impl ScanMeta {
    pub fn dense(scan_id: impl Into<String>) -> Self {
        Self {
            delta: 1,
            seed: None,
            scan_id: scan_id.into(),
        }
    }
}

/// Spectral-domain B-scan: one complex spectrum per A-scan, shape `(K, W)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RawBScan {
    spectra: Array2<Complex32>,
    pub meta: ScanMeta,
}

impl RawBScan {
    pub fn new(spectra: Array2<Complex32>, meta: ScanMeta) -> Result<Self> {
        let (k, w) = spectra.dim();
        if !k.is_power_of_two() {
            return Err(Error::format(
                0,
                format!("spectral length {k} is not a power of two"),
            ));
        }
        if w < 2 {
            return Err(Error::Usage(format!(
                "a B-scan needs at least two A-scans, got {w}"
            )));
        }
        if meta.delta == 0 {
            return Err(Error::Usage("sampling stride must be positive".into()));
        }
        Ok(Self { spectra, meta })
    }

    pub fn spectra(&self) -> &Array2<Complex32> {
        &self.spectra
    }

    pub fn spectral_len(&self) -> usize {
        self.spectra.nrows()
    }

    pub fn width(&self) -> usize {
        self.spectra.ncols()
    }
}

/// Magnitude (`>= 0`) and wrapped phase planes, shape `(D, W)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MagPhasePair {
    pub magnitude: Array2<f32>,
    pub phase: Array2<f32>,
}

/// Inter-A-scan phase shift in radians, shape `(D, W)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowMap(pub Array2<f32>);

impl FlowMap {
    pub fn zeros(depth: usize, width: usize) -> Self {
        Self(Array2::zeros((depth, width)))
    }

    pub fn depth(&self) -> usize {
        self.0.nrows()
    }

    pub fn width(&self) -> usize {
        self.0.ncols()
    }

    pub fn values(&self) -> &Array2<f32> {
        &self.0
    }

    pub fn max_abs(&self) -> f32 {
        self.0.iter().fold(0.0f32, |m, v| m.max(v.abs()))
    }
}

/// Wraps an angle into `[-pi, pi)`.
pub fn wrap_phase(x: f64) -> f64 {
    use std::f64::consts::PI;
    let r = x - 2.0 * PI * ((x + PI) / (2.0 * PI)).floor();
    if r >= PI {
        r - 2.0 * PI
    } else if r < -PI {
        r + 2.0 * PI
    } else {
        r
    }
}

/// [`wrap_phase`] followed by rounding to `f32`, clamped so the result stays
/// in `[-pi_f32, pi_f32)`.
pub fn wrap_phase_f32(x: f64) -> f32 {
    let v = wrap_phase(x) as f32;
    if v >= std::f32::consts::PI {
        -std::f32::consts::PI
    } else {
        v
    }
}

/// Inverse FFT of every A-scan, keeping the first `keep_depth` samples.
pub fn ifft_ascan(raw: &RawBScan, keep_depth: usize) -> Result<Array2<Complex64>> {
    let (k, w) = raw.spectra.dim();
    if keep_depth == 0 || keep_depth > k {
        return Err(Error::Usage(format!(
            "keep_depth {keep_depth} must lie in 1..={k}"
        )));
    }
    let mut out = Array2::zeros((keep_depth, w));
    let mut column = vec![Complex64::new(0.0, 0.0); k];
    for (i, spectrum) in raw.spectra.axis_iter(Axis(1)).enumerate() {
        for (dst, src) in column.iter_mut().zip(spectrum.iter()) {
            *dst = Complex64::new(src.re as f64, src.im as f64);
        }
        fft::ifft(&mut column)?;
        for (d, v) in column[..keep_depth].iter().enumerate() {
            out[(d, i)] = *v;
        }
    }
    Ok(out)
}

pub fn to_mag_phase(plane: &Array2<Complex64>) -> MagPhasePair {
    MagPhasePair {
        magnitude: plane.mapv(|z| z.norm() as f32),
        phase: plane.mapv(|z| wrap_phase_f32(z.arg())),
    }
}

/// Doppler flow estimate: wrapped phase difference of successive A-scans.
///
/// Column `i < W - 1` holds `wrap(phase[:, i + 1] - phase[:, i])`; the last
/// column repeats column `W - 2` so the map keeps the input width.
pub fn phase_difference(pair: &MagPhasePair) -> Result<FlowMap> {
    let (d, w) = pair.phase.dim();
    if w < 2 {
        return Err(Error::Usage(format!(
            "phase difference needs at least two A-scans, got {w}"
        )));
    }
    let mut out = Array2::zeros((d, w));
    for row in 0..d {
        for i in 0..w - 1 {
            let diff = pair.phase[(row, i + 1)] as f64 - pair.phase[(row, i)] as f64;
            out[(row, i)] = wrap_phase_f32(diff);
        }
        out[(row, w - 1)] = out[(row, w - 2)];
    }
    Ok(FlowMap(out))
}

/// Threshold `mean(mag) + k * std(mag)` over the whole B-scan.
pub fn mask_threshold(mag: &Array2<f32>, k: f64) -> f64 {
    if k == f64::INFINITY {
        return f64::INFINITY;
    }
    if k == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let n = mag.len() as f64;
    let mean = mag.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = mag.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    mean + k * var.sqrt()
}

/// Zeroes flow wherever the structural magnitude falls below
/// [`mask_threshold`].
pub fn magnitude_mask(flow: &FlowMap, mag: &Array2<f32>, k: f64) -> Result<FlowMap> {
    if flow.0.dim() != mag.dim() {
        return Err(Error::Usage(format!(
            "mask shape {:?} does not match flow {:?}",
            mag.dim(),
            flow.0.dim()
        )));
    }
    let tau = mask_threshold(mag, k);
    let mut out = flow.0.clone();
    ndarray::Zip::from(&mut out).and(mag).for_each(|v, &m| {
        if (m as f64) < tau {
            *v = 0.0;
        }
    });
    Ok(FlowMap(out))
}

/// Keeps A-scans `0, delta, 2 delta, ...`.
pub fn sparse_downsample(raw: &RawBScan, delta: usize) -> Result<RawBScan> {
    let w = raw.width();
    if delta == 0 || w % delta != 0 {
        return Err(Error::Usage(format!(
            "stride {delta} does not divide B-scan width {w}"
        )));
    }
    let spectra = raw.spectra.slice(s![.., ..;delta]).to_owned();
    let meta = ScanMeta {
        delta: raw.meta.delta * delta,
        ..raw.meta.clone()
    };
    if spectra.ncols() < 2 {
        return Err(Error::Usage(format!(
            "stride {delta} leaves fewer than two A-scans"
        )));
    }
    RawBScan::new(spectra, meta)
}

/// Linear interpolation of one row with half-pixel alignment.
pub(crate) fn resize_row(src: &[f32], dst: &mut [f32]) {
    let (w, tw) = (src.len(), dst.len());
    let ratio = w as f64 / tw as f64;
    for (x, out) in dst.iter_mut().enumerate() {
        let pos = ((x as f64 + 0.5) * ratio - 0.5).clamp(0.0, (w - 1) as f64);
        let i0 = pos.floor() as usize;
        let i1 = (i0 + 1).min(w - 1);
        let t = pos - i0 as f64;
        *out = ((1.0 - t) * src[i0] as f64 + t * src[i1] as f64) as f32;
    }
}

/// Resamples the B-line (width) of a flow map; depth is untouched.
pub fn bline_resize(v: &FlowMap, target_w: usize) -> Result<FlowMap> {
    if target_w == 0 {
        return Err(Error::Usage("target width must be positive".into()));
    }
    let d = v.depth();
    let mut out = Array2::zeros((d, target_w));
    for (src, mut dst) in v.0.rows().into_iter().zip(out.rows_mut()) {
        let src = src.to_vec();
        resize_row(&src, dst.as_slice_mut().expect("row-major"));
    }
    Ok(FlowMap(out))
}

/// Network input assembled from a magnitude/phase pair.
#[derive(Clone, Debug)]
pub struct NetworkInput {
    /// `[2, D, W]`: normalized log-magnitude, then phase / pi.
    pub tensor: Tensor<f32>,
    /// `min` and `max` of `ln(1 + magnitude)` before normalization.
    pub log_mag_range: (f32, f32),
    pub degenerate_magnitude: bool,
}

pub fn build_network_input(pair: &MagPhasePair) -> Result<NetworkInput> {
    let (d, w) = pair.magnitude.dim();
    if pair.phase.dim() != (d, w) {
        return Err(Error::Usage("magnitude and phase shapes differ".into()));
    }
    let logm = pair.magnitude.mapv(|m| m.ln_1p());
    let (lo, hi) = logm
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let degenerate = hi <= lo;
    if degenerate {
        log::warn!("magnitude plane is constant; magnitude channel set to 0.5");
    }
    let mut data = Vec::with_capacity(2 * d * w);
    if degenerate {
        data.extend(std::iter::repeat(0.5f32).take(d * w));
    } else {
        let span = hi - lo;
        data.extend(logm.iter().map(|&v| ((v - lo) / span).clamp(0.0, 1.0)));
    }
    let inv_pi = std::f32::consts::FRAC_1_PI;
    data.extend(pair.phase.iter().map(|&p| p * inv_pi));
    Ok(NetworkInput {
        tensor: Tensor::new(&[2, d, w], data)?,
        log_mag_range: (lo, hi),
        degenerate_magnitude: degenerate,
    })
}

/// Settings of the classical processing chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Retained depth; `None` keeps half the spectral length.
    pub keep_depth: Option<usize>,
    /// Mask threshold is `mean + mask_k * std` of the magnitude.
    pub mask_k: f64,
    /// Width of the displayed image after B-line resize.
    pub image_width: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            keep_depth: None,
            mask_k: 0.0,
            image_width: 128,
        }
    }
}

impl PipelineConfig {
    pub fn depth_for(&self, spectral_len: usize) -> usize {
        self.keep_depth.unwrap_or(spectral_len / 2)
    }
}

/// Products of [`classical_dense_pipeline`].
#[derive(Clone, Debug)]
pub struct DenseProducts {
    pub pair: MagPhasePair,
    /// Masked full-width flow map (the training target).
    pub flow: FlowMap,
    /// `flow` resized to the display width.
    pub image: FlowMap,
}

/// IFFT, magnitude/phase, Doppler phase difference and magnitude mask, shared
/// by the dense and the sparse chains.
pub fn flow_from_raw(raw: &RawBScan, cfg: &PipelineConfig) -> Result<(MagPhasePair, FlowMap)> {
    let depth = cfg.depth_for(raw.spectral_len());
    let pair = to_mag_phase(&ifft_ascan(raw, depth)?);
    let diff = phase_difference(&pair)?;
    let flow = magnitude_mask(&diff, &pair.magnitude, cfg.mask_k)?;
    Ok((pair, flow))
}

/// The traditional dense-scan reconstruction.
pub fn classical_dense_pipeline(raw: &RawBScan, cfg: &PipelineConfig) -> Result<DenseProducts> {
    if raw.meta.delta != 1 {
        return Err(Error::Usage(format!(
            "dense pipeline expects stride 1, scan has stride {}",
            raw.meta.delta
        )));
    }
    let (pair, flow) = flow_from_raw(raw, cfg)?;
    let image = bline_resize(&flow, cfg.image_width)?;
    Ok(DenseProducts { pair, flow, image })
}

/// Magnitude/phase of a (possibly sparse) raw scan followed by
/// [`build_network_input`].
pub fn preprocess(raw: &RawBScan, cfg: &PipelineConfig) -> Result<(MagPhasePair, NetworkInput)> {
    let depth = cfg.depth_for(raw.spectral_len());
    let pair = to_mag_phase(&ifft_ascan(raw, depth)?);
    let input = build_network_input(&pair)?;
    Ok((pair, input))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn raw_from_profiles(profiles: &Array2<Complex64>, k: usize) -> RawBScan {
        let (d, w) = profiles.dim();
        let mut spectra = Array2::zeros((k, w));
        for i in 0..w {
            let mut col = vec![Complex64::new(0.0, 0.0); k];
            for j in 0..d {
                col[j] = profiles[(j, i)];
            }
            fft::fft(&mut col).unwrap();
            for (j, v) in col.iter().enumerate() {
                spectra[(j, i)] = Complex32::new(v.re as f32, v.im as f32);
            }
        }
        RawBScan::new(spectra, ScanMeta::dense("t")).unwrap()
    }

    #[test]
    fn ifft_recovers_known_profile() {
        let profiles = Array2::from_shape_fn((8, 3), |(d, i)| {
            Complex64::from_polar(1.0 + d as f64 * 0.1, 0.3 * i as f64 - d as f64)
        });
        let raw = raw_from_profiles(&profiles, 16);
        let back = ifft_ascan(&raw, 8).unwrap();
        let err = back
            .iter()
            .zip(profiles.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn ifft_of_constant_spectrum_is_delta() {
        let spectra = Array2::from_elem((8, 2), Complex32::new(1.0, 0.0));
        let raw = RawBScan::new(spectra, ScanMeta::dense("c")).unwrap();
        let out = ifft_ascan(&raw, 8).unwrap();
        for i in 0..2 {
            assert!((out[(0, i)] - Complex64::new(1.0, 0.0)).norm() < 1e-12);
            assert!((1..8).all(|d| out[(d, i)].norm() < 1e-12));
        }
    }

    #[test]
    fn raw_scan_rejects_bad_shapes() {
        let spectra = Array2::from_elem((12, 4), Complex32::new(0.0, 0.0));
        assert!(matches!(
            RawBScan::new(spectra, ScanMeta::dense("x")),
            Err(Error::Format { .. })
        ));
        let spectra = Array2::from_elem((8, 1), Complex32::new(0.0, 0.0));
        assert!(RawBScan::new(spectra, ScanMeta::dense("x")).is_err());
    }

    #[test]
    fn polar_examples() {
        let plane = Array2::from_shape_vec(
            (1, 2),
            vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, -2.0)],
        )
        .unwrap();
        let mp = to_mag_phase(&plane);
        assert_eq!(mp.magnitude[(0, 0)], 1.0);
        assert_eq!(mp.phase[(0, 0)], 0.0);
        assert_eq!(mp.magnitude[(0, 1)], 2.0);
        assert!((mp.phase[(0, 1)] as f64 + PI / 2.0).abs() < 1e-6);
    }

    #[test]
    fn phase_difference_examples() {
        let constant = MagPhasePair {
            magnitude: Array2::ones((3, 5)),
            phase: Array2::from_elem((3, 5), 1.2),
        };
        assert!(phase_difference(&constant).unwrap().0.iter().all(|&v| v == 0.0));

        let ramp = MagPhasePair {
            magnitude: Array2::ones((2, 6)),
            phase: Array2::from_shape_fn((2, 6), |(_, i)| wrap_phase_f32(i as f64 * 0.3)),
        };
        let v = phase_difference(&ramp).unwrap();
        assert!(v.0.iter().all(|&x| (x - 0.3).abs() < 1e-6));

        let narrow = MagPhasePair {
            magnitude: Array2::ones((2, 1)),
            phase: Array2::zeros((2, 1)),
        };
        assert!(matches!(phase_difference(&narrow), Err(Error::Usage(_))));
    }

    #[test]
    fn phase_difference_ignores_global_offset() {
        let base = Array2::from_shape_fn((4, 7), |(d, i)| {
            wrap_phase_f32(d as f64 * 0.7 + i as f64 * (0.2 + d as f64 * 0.4))
        });
        let shifted = base.mapv(|p| wrap_phase_f32(p as f64 + 2.1));
        let mk = |phase| MagPhasePair {
            magnitude: Array2::ones((4, 7)),
            phase,
        };
        let a = phase_difference(&mk(base)).unwrap();
        let b = phase_difference(&mk(shifted)).unwrap();
        for (x, y) in a.0.iter().zip(b.0.iter()) {
            let d = wrap_phase((*x - *y) as f64);
            assert!(d.abs() < 1e-5);
        }
    }

    #[test]
    fn mask_examples() {
        let flow = FlowMap(Array2::from_elem((2, 4), 0.7));
        let mag = Array2::from_shape_fn((2, 4), |(r, _)| if r == 0 { 5.0 } else { 0.1 });
        assert_eq!(magnitude_mask(&flow, &mag, f64::NEG_INFINITY).unwrap(), flow);
        assert!(magnitude_mask(&flow, &mag, f64::INFINITY)
            .unwrap()
            .0
            .iter()
            .all(|&v| v == 0.0));
        let m = magnitude_mask(&flow, &mag, 0.0).unwrap();
        assert!(m.0.row(0).iter().all(|&v| v == 0.7));
        assert!(m.0.row(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn downsample_examples() {
        let spectra = Array2::from_shape_fn((4, 8), |(_, i)| Complex32::new(i as f32, 0.0));
        let raw = RawBScan::new(spectra, ScanMeta::dense("d")).unwrap();
        assert_eq!(sparse_downsample(&raw, 1).unwrap(), raw);
        let s4 = sparse_downsample(&raw, 4).unwrap();
        assert_eq!(s4.width(), 2);
        assert_eq!(s4.spectra()[(0, 0)].re, 0.0);
        assert_eq!(s4.spectra()[(0, 1)].re, 4.0);
        assert_eq!(s4.meta.delta, 4);
        let s22 = sparse_downsample(&sparse_downsample(&raw, 2).unwrap(), 2).unwrap();
        assert_eq!(s22, s4);
        assert!(matches!(sparse_downsample(&raw, 3), Err(Error::Usage(_))));
    }

    #[test]
    fn resize_examples() {
        let v = FlowMap(Array2::from_shape_fn((3, 5), |(d, i)| (d * 5 + i) as f32));
        let same = bline_resize(&v, 5).unwrap();
        assert!(same.0.iter().zip(v.0.iter()).all(|(a, b)| (a - b).abs() < 1e-6));
        let c = FlowMap(Array2::from_elem((2, 9), 0.25));
        assert!(bline_resize(&c, 4).unwrap().0.iter().all(|&x| (x - 0.25).abs() < 1e-7));
        let r = FlowMap(Array2::from_shape_vec((1, 2), vec![0.0, 1.0]).unwrap());
        let up = bline_resize(&r, 3).unwrap();
        let row: Vec<f32> = up.0.row(0).to_vec();
        assert!(row.windows(2).all(|p| p[0] <= p[1]), "{row:?}");
    }

    #[test]
    fn network_input_examples() {
        let pair = MagPhasePair {
            magnitude: Array2::from_shape_fn((3, 4), |(d, i)| (d + i) as f32),
            phase: Array2::zeros((3, 4)),
        };
        let inp = build_network_input(&pair).unwrap();
        let t = inp.tensor.data();
        assert!(t[12..].iter().all(|&v| v == 0.0));
        let ch0 = &t[..12];
        assert_eq!(ch0.iter().copied().fold(f32::INFINITY, f32::min), 0.0);
        assert_eq!(ch0.iter().copied().fold(0.0, f32::max), 1.0);

        let flat = MagPhasePair {
            magnitude: Array2::from_elem((2, 2), 3.0),
            phase: Array2::from_elem((2, 2), -std::f32::consts::PI),
        };
        let inp = build_network_input(&flat).unwrap();
        assert!(inp.degenerate_magnitude);
        assert!(inp.tensor.data()[..4].iter().all(|&v| v == 0.5));
        assert!(inp.tensor.data()[4..].iter().all(|&v| v == -1.0));
    }

    #[test]
    fn wrap_is_idempotent_and_bounded() {
        for i in -2000..2000 {
            let x = i as f64 * 0.0173;
            let w = wrap_phase(x);
            assert!((-PI..PI).contains(&w));
            assert_eq!(wrap_phase(w), w);
            let w32 = wrap_phase_f32(x);
            assert!((-std::f32::consts::PI..std::f32::consts::PI).contains(&w32));
        }
        assert_eq!(wrap_phase(PI), -PI);
    }
}
