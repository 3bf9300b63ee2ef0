//! Stacks of B-scans cut through straight vessels, for en-face projections.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{PhantomScene, Profile, Vessel};
use crate::error::Result;

/// A straight vessel at fixed depth whose B-line position drifts linearly
/// from slice to slice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tube {
    pub center_d: f64,
    /// B-line position in slice 0.
    pub start_w: f64,
    /// B-line drift per slice.
    pub slope: f64,
    pub radius_d: f64,
    pub radius_w: f64,
    pub peak_shift: f64,
    pub profile: Profile,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeScene {
    pub depth: usize,
    pub width: usize,
    pub slices: usize,
    pub tubes: Vec<Tube>,
    pub background: f64,
    pub speckle: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl VolumeScene {
    /// `n_tubes` random tubes crossing the volume.
    pub fn random(depth: usize, width: usize, slices: usize, n_tubes: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (d, w) = (depth as f64, width as f64);
        let tubes = (0..n_tubes)
            .map(|_| {
                let radius_d = rng.gen_range(2.0..=(d / 10.0).max(2.0));
                let radius_w = rng.gen_range(3.0..=(w / 12.0).max(3.0));
                Tube {
                    center_d: rng.gen_range(radius_d..=d - 1.0 - radius_d),
                    start_w: rng.gen_range(radius_w..=w - 2.0 - radius_w),
                    slope: rng.gen_range(-1.0..=1.0) * w / (2.0 * slices.max(1) as f64),
                    radius_d,
                    radius_w,
                    peak_shift: rng.gen_range(0.5..=2.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 },
                    profile: Profile::Parabolic,
                }
            })
            .collect();
        Self {
            depth,
            width,
            slices,
            tubes,
            background: 1.0,
            speckle: 0.5,
            noise_sigma: 0.0,
            seed,
        }
    }

    /// Cross-section at slice `s`; tubes that have drifted off the grid are
    /// left out of that slice.
    pub fn slice(&self, s: usize) -> PhantomScene {
        let vessels = self
            .tubes
            .iter()
            .map(|t| Vessel {
                center_d: t.center_d,
                center_w: t.start_w + t.slope * s as f64,
                radius_d: t.radius_d,
                radius_w: t.radius_w,
                peak_shift: t.peak_shift,
                profile: t.profile,
            })
            .filter(|v| v.center_w - v.radius_w >= 0.0 && v.center_w + v.radius_w <= self.width as f64 - 2.0)
            .collect();
        PhantomScene {
            depth: self.depth,
            width: self.width,
            background: self.background,
            vessels,
            speckle: self.speckle,
            noise_sigma: self.noise_sigma,
            seed: super::dataset::scene_seed(self.seed, s),
        }
    }

    pub fn slice_scenes(&self) -> Result<Vec<PhantomScene>> {
        (0..self.slices)
            .map(|s| {
                let scene = self.slice(s);
                scene.validate()?;
                Ok(scene)
            })
            .collect()
    }

    /// `(slice, width)` pixels whose A-scan crosses any vessel.
    pub fn footprint(&self) -> Array2<bool> {
        let mut out = Array2::from_elem((self.slices, self.width), false);
        for s in 0..self.slices {
            let mask = self.slice(s).vessel_mask();
            for (w, col) in mask.columns().into_iter().enumerate() {
                out[(s, w)] = col.iter().any(|&v| v);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slices_are_valid_scenes() {
        let v = VolumeScene::random(32, 64, 10, 3, 4);
        assert_eq!(v.slice_scenes().unwrap().len(), 10);
        assert!(v.footprint().iter().any(|&x| x));
    }
}
