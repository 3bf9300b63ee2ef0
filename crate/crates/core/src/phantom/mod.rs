//! Synthetic B-scans with programmed vessels and flow.
//!
//! Each A-scan `i` carries the depth profile `m(d, i) exp(j Phi(d, i))`. The
//! phase starts from a random per-depth offset and advances by the programmed
//! flow shift at every A-scan, so the Doppler difference of successive
//! A-scans returns the shift exactly. Profiles are zero-padded, transformed
//! to the spectral domain, and complex Gaussian noise is added there.

mod dataset;
mod volume;

pub use dataset::{
    make_dataset, scene_seed, Dataset, Manifest, ManifestEntry, Sample, SceneSampler, Split,
};
pub use volume::{Tube, VolumeScene};

use ndarray::Array2;
use num_complex::{Complex32, Complex64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{fft, FlowMap, RawBScan, ScanMeta};

/// Largest programmed shift; keeps ground truth clear of the wrap point.
pub const MAX_SHIFT: f64 = 0.9 * std::f64::consts::PI;

/// Vessel magnitude relative to the tissue background.
pub const VESSEL_CONTRAST: f64 = 1.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// `peak * (1 - r^2)`.
    Parabolic,
    Flat,
}

/// Elliptic vessel cross-section; `r^2 = ((d - cd) / rd)^2 + ((w - cw) / rw)^2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vessel {
    pub center_d: f64,
    pub center_w: f64,
    pub radius_d: f64,
    pub radius_w: f64,
    /// Inter-A-scan phase shift at the vessel axis, radians.
    pub peak_shift: f64,
    pub profile: Profile,
}

impl Vessel {
    fn r2(&self, d: usize, w: usize) -> f64 {
        let a = (d as f64 - self.center_d) / self.radius_d;
        let b = (w as f64 - self.center_w) / self.radius_w;
        a * a + b * b
    }

    /// Whether pixel `(d, w)` lies strictly inside the ellipse.
    pub fn contains(&self, d: usize, w: usize) -> bool {
        self.r2(d, w) < 1.0
    }

    /// Programmed shift at `(d, w)`, zero outside.
    pub fn shift_at(&self, d: usize, w: usize) -> f64 {
        let r2 = self.r2(d, w);
        if r2 >= 1.0 {
            return 0.0;
        }
        match self.profile {
            Profile::Parabolic => self.peak_shift * (1.0 - r2),
            Profile::Flat => self.peak_shift,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomScene {
    pub depth: usize,
    pub width: usize,
    pub background: f64,
    pub vessels: Vec<Vessel>,
    /// Weight `s` of the speckle factor `1 - s + s R`, with `R` unit-mean
    /// Rayleigh.
    pub speckle: f64,
    /// Standard deviation of each real and imaginary noise component in the
    /// spectral domain.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl PhantomScene {
    pub fn empty(depth: usize, width: usize, seed: u64) -> Self {
        Self {
            depth,
            width,
            background: 1.0,
            vessels: Vec::new(),
            speckle: 0.0,
            noise_sigma: 0.0,
            seed,
        }
    }

    /// Spectral samples per A-scan: the next power of two at or above `2 D`.
    pub fn spectral_len(&self) -> usize {
        (2 * self.depth).next_power_of_two()
    }

    /// Vessels must stay clear of the last two A-scans: the Doppler map
    /// repeats its second-to-last column into the last one.
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.width < 2 {
            return Err(Error::Usage(format!(
                "scene must be at least 1 x 2, got {} x {}",
                self.depth, self.width
            )));
        }
        if !(self.background > 0.0) || !(0.0..=1.0).contains(&self.speckle) || !(self.noise_sigma >= 0.0) {
            return Err(Error::Usage(
                "background must be positive, speckle in [0, 1], noise non-negative".into(),
            ));
        }
        let (d, w) = (self.depth as f64, self.width as f64);
        for (i, v) in self.vessels.iter().enumerate() {
            let inside = v.radius_d > 0.0
                && v.radius_w > 0.0
                && v.center_d - v.radius_d >= 0.0
                && v.center_d + v.radius_d <= d - 1.0
                && v.center_w - v.radius_w >= 0.0
                && v.center_w + v.radius_w <= w - 2.0;
            if !inside {
                return Err(Error::Usage(format!("vessel {i} leaves the grid")));
            }
            if v.peak_shift.abs() > MAX_SHIFT {
                return Err(Error::Usage(format!(
                    "vessel {i} shift {} exceeds {MAX_SHIFT:.4}",
                    v.peak_shift
                )));
            }
        }
        Ok(())
    }

    /// Index of the vessel covering `(d, w)` whose shift has the largest
    /// magnitude.
    fn dominant(&self, d: usize, w: usize) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, v) in self.vessels.iter().enumerate() {
            if v.contains(d, w) {
                let s = v.shift_at(d, w);
                if best.map_or(true, |(_, b)| s.abs() > b.abs()) {
                    best = Some((i, s));
                }
            }
        }
        best
    }

    /// Pixels covered by at least one vessel.
    pub fn vessel_mask(&self) -> Array2<bool> {
        Array2::from_shape_fn((self.depth, self.width), |(d, w)| {
            self.vessels.iter().any(|v| v.contains(d, w))
        })
    }
}

/// Programmed per-pixel phase shift; overlapping vessels keep the larger
/// magnitude.
pub fn render_flow_field(scene: &PhantomScene) -> FlowMap {
    FlowMap(Array2::from_shape_fn((scene.depth, scene.width), |(d, w)| {
        scene.dominant(d, w).map_or(0.0, |(_, s)| s as f32)
    }))
}

/// Unit-mean Rayleigh draw.
fn rayleigh<R: Rng>(rng: &mut R) -> f64 {
    let u: f64 = rng.gen_range(f64::EPSILON..1.0);
    (-2.0 * u.ln()).sqrt() * (2.0 / std::f64::consts::PI).sqrt()
}

/// Structural magnitude of every pixel.
pub fn render_magnitude<R: Rng>(scene: &PhantomScene, rng: &mut R) -> Array2<f64> {
    let s = scene.speckle;
    Array2::from_shape_fn((scene.depth, scene.width), |(d, w)| {
        let speckle = 1.0 - s + s * rayleigh(rng);
        if scene.vessels.iter().any(|v| v.contains(d, w)) {
            VESSEL_CONTRAST * scene.background
        } else {
            scene.background * speckle
        }
    })
}

/// Dense raw B-scan of `scene`.
pub fn synthesize_raw_bscan(scene: &PhantomScene) -> Result<RawBScan> {
    scene.validate()?;
    let (depth, width) = (scene.depth, scene.width);
    let k = scene.spectral_len();
    let mut rng = ChaCha8Rng::seed_from_u64(scene.seed);
    let magnitude = render_magnitude(scene, &mut rng);
    let shift = render_flow_field(scene);
    let pi = std::f64::consts::PI;
    let mut phase: Vec<f64> = (0..depth).map(|_| rng.gen_range(-pi..pi)).collect();
    let noise = Normal::new(0.0, scene.noise_sigma.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Usage(e.to_string()))?;
    let mut spectra = Array2::zeros((k, width));
    let mut column = vec![Complex64::new(0.0, 0.0); k];
    for i in 0..width {
        column.fill(Complex64::new(0.0, 0.0));
        for d in 0..depth {
            column[d] = Complex64::from_polar(magnitude[(d, i)], phase[d]);
            phase[d] += shift.0[(d, i)] as f64;
        }
        fft::fft(&mut column)?;
        for (j, z) in column.iter().enumerate() {
            let z = if scene.noise_sigma > 0.0 {
                z + Complex64::new(noise.sample(&mut rng), noise.sample(&mut rng))
            } else {
                *z
            };
            spectra[(j, i)] = Complex32::new(z.re as f32, z.im as f32);
        }
    }
    let meta = ScanMeta {
        delta: 1,
        seed: Some(scene.seed),
        scan_id: format!("scene-{:016x}", scene.seed),
    };
    RawBScan::new(spectra, meta)
}
