//! Random scenes and paired sparse/dense datasets.

use std::path::{Path, PathBuf};

use assan_autograd::Tensor;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{synthesize_raw_bscan, PhantomScene, Profile, Vessel, MAX_SHIFT};
use crate::error::{Error, Result};
use crate::io::odtr::{read_f32_2d, read_raw_bscan, write_f32_2d, write_raw_bscan};
use crate::io::{read_json, write_json};
use crate::signal::{
    classical_dense_pipeline, preprocess, sparse_downsample, PipelineConfig, RawBScan,
};

/// Distribution of random scenes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSampler {
    pub depth: usize,
    pub width: usize,
    pub min_vessels: usize,
    pub max_vessels: usize,
    pub radius_d: (f64, f64),
    pub radius_w: (f64, f64),
    /// Range of `|peak shift|`; the sign is a coin flip.
    pub shift: (f64, f64),
    pub parabolic_fraction: f64,
    pub background: f64,
    pub speckle: f64,
    pub noise_sigma: f64,
}

impl Default for SceneSampler {
    fn default() -> Self {
        Self {
            depth: 128,
            width: 256,
            min_vessels: 1,
            max_vessels: 4,
            radius_d: (3.0, 10.0),
            radius_w: (4.0, 20.0),
            shift: (0.1, 0.75),
            parabolic_fraction: 0.5,
            background: 1.0,
            speckle: 0.5,
            noise_sigma: 0.4,
        }
    }
}

impl SceneSampler {
    /// Scene drawn deterministically from `seed`.
    pub fn sample(&self, seed: u64) -> Result<PhantomScene> {
        let (d, w) = (self.depth as f64, self.width as f64);
        let max_rd = self.radius_d.1.min((d - 1.0) / 2.0);
        let max_rw = self.radius_w.1.min((w - 2.0) / 2.0);
        if self.min_vessels > self.max_vessels
            || self.radius_d.0 <= 0.0
            || self.radius_w.0 <= 0.0
            || self.radius_d.0 > max_rd
            || self.radius_w.0 > max_rw
            || self.shift.0 > self.shift.1
            || self.shift.1 > MAX_SHIFT
        {
            return Err(Error::Usage(format!("scene sampler does not fit the grid: {self:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let count = rng.gen_range(self.min_vessels..=self.max_vessels);
        let vessels = (0..count)
            .map(|_| {
                let radius_d = rng.gen_range(self.radius_d.0..=max_rd);
                let radius_w = rng.gen_range(self.radius_w.0..=max_rw);
                let magnitude = rng.gen_range(self.shift.0..=self.shift.1);
                let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                let profile = if rng.gen_bool(self.parabolic_fraction) {
                    Profile::Parabolic
                } else {
                    Profile::Flat
                };
                Vessel {
                    center_d: rng.gen_range(radius_d..=d - 1.0 - radius_d),
                    center_w: rng.gen_range(radius_w..=w - 2.0 - radius_w),
                    radius_d,
                    radius_w,
                    peak_shift: sign * magnitude,
                    profile,
                }
            })
            .collect();
        let scene = PhantomScene {
            depth: self.depth,
            width: self.width,
            background: self.background,
            vessels,
            speckle: self.speckle,
            noise_sigma: self.noise_sigma,
            seed: rng.gen(),
        };
        scene.validate()?;
        Ok(scene)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of scene `index` in a dataset seeded by `seed`; distinct indices give
/// distinct seeds.
pub fn scene_seed(seed: u64, index: usize) -> u64 {
    splitmix64(splitmix64(seed).wrapping_add((index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub split: Split,
    pub scene_seed: u64,
    /// Sparse raw B-scan (complex64 ODTR).
    pub sparse: PathBuf,
    /// Dense masked flow map `V` (f32 ODTR).
    pub target: PathBuf,
    /// Dense magnitude plane (f32 ODTR).
    pub magnitude: PathBuf,
    pub scene: PhantomScene,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub delta: usize,
    pub seed: u64,
    pub test_fraction: f64,
    pub sampler: SceneSampler,
    pub pipeline: PipelineConfig,
    pub entries: Vec<ManifestEntry>,
}

/// One training or test pair, ready for the network.
#[derive(Clone, Debug)]
pub struct Sample {
    pub id: String,
    pub split: Split,
    pub scene: PhantomScene,
    pub sparse: RawBScan,
    /// `[2, D, W / delta]` network input.
    pub input: Tensor<f32>,
    /// Dense masked flow map, `(D, W)`.
    pub target: Array2<f32>,
    /// Dense magnitude, `(D, W)`.
    pub magnitude: Array2<f32>,
}

impl Sample {
    pub fn from_sparse(
        id: String,
        split: Split,
        scene: PhantomScene,
        sparse: RawBScan,
        target: Array2<f32>,
        magnitude: Array2<f32>,
        pipeline: &PipelineConfig,
    ) -> Result<Self> {
        let (_, input) = preprocess(&sparse, pipeline)?;
        Ok(Self {
            id,
            split,
            scene,
            sparse,
            input: input.tensor,
            target,
            magnitude,
        })
    }
}

/// In-memory dataset.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub delta: usize,
    pub pipeline: PipelineConfig,
    pub samples: Vec<Sample>,
}

/// Indices of the test scenes: a seeded shuffle, first `round(n f)` taken.
fn test_indices(n: usize, fraction: f64, seed: u64) -> Result<Vec<bool>> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Usage(format!("test fraction {fraction} outside [0, 1]")));
    }
    let n_test = ((n as f64) * fraction).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(splitmix64(seed ^ 0x5EED)));
    let mut is_test = vec![false; n];
    for &i in &order[..n_test] {
        is_test[i] = true;
    }
    Ok(is_test)
}

impl Dataset {
    /// Synthesizes `n` scenes, `round(n * test_fraction)` of them held out.
    pub fn generate(
        n: usize,
        delta: usize,
        sampler: &SceneSampler,
        seed: u64,
        test_fraction: f64,
        pipeline: &PipelineConfig,
    ) -> Result<Self> {
        if sampler.width % delta != 0 {
            return Err(Error::Usage(format!(
                "stride {delta} does not divide scene width {}",
                sampler.width
            )));
        }
        let is_test = test_indices(n, test_fraction, seed)?;
        let mut samples = Vec::with_capacity(n);
        for (i, &test) in is_test.iter().enumerate() {
            let scene = sampler.sample(scene_seed(seed, i))?;
            let dense = synthesize_raw_bscan(&scene)?;
            let products = classical_dense_pipeline(&dense, pipeline)?;
            let sparse = sparse_downsample(&dense, delta)?;
            let split = if test { Split::Test } else { Split::Train };
            samples.push(Sample::from_sparse(
                format!("scan{i:04}"),
                split,
                scene,
                sparse,
                products.flow.0,
                products.pair.magnitude,
                pipeline,
            )?);
        }
        Ok(Self {
            delta,
            pipeline: pipeline.clone(),
            samples,
        })
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Sample> {
        self.samples.iter().filter(move |s| s.split == split)
    }

    pub fn train(&self) -> Vec<&Sample> {
        self.split(Split::Train).collect()
    }

    pub fn test(&self) -> Vec<&Sample> {
        self.split(Split::Test).collect()
    }

    /// Writes every sample and `manifest.json` under `dir`.
    pub fn save(&self, dir: &Path, sampler: &SceneSampler, seed: u64, test_fraction: f64) -> Result<Manifest> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut entries = Vec::with_capacity(self.samples.len());
        for (i, s) in self.samples.iter().enumerate() {
            let entry = ManifestEntry {
                id: s.id.clone(),
                split: s.split,
                scene_seed: scene_seed(seed, i),
                sparse: format!("{}.sparse.odtr", s.id).into(),
                target: format!("{}.target.odtr", s.id).into(),
                magnitude: format!("{}.magnitude.odtr", s.id).into(),
                scene: s.scene.clone(),
            };
            let meta = serde_json::json!({ "scan_id": s.id, "delta": 1, "seed": s.scene.seed });
            write_raw_bscan(&dir.join(&entry.sparse), &s.sparse)?;
            write_f32_2d(&dir.join(&entry.target), &s.target, meta.clone())?;
            write_f32_2d(&dir.join(&entry.magnitude), &s.magnitude, meta)?;
            entries.push(entry);
        }
        let manifest = Manifest {
            delta: self.delta,
            seed,
            test_fraction,
            sampler: sampler.clone(),
            pipeline: self.pipeline.clone(),
            entries,
        };
        write_json(&dir.join("manifest.json"), &manifest)?;
        Ok(manifest)
    }

    /// Reads a dataset written by [`make_dataset`].
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: Manifest = read_json(&dir.join("manifest.json"))?;
        let mut samples = Vec::with_capacity(manifest.entries.len());
        for e in &manifest.entries {
            let sparse = read_raw_bscan(&dir.join(&e.sparse))?;
            if sparse.meta.delta != manifest.delta {
                return Err(Error::format(
                    0,
                    format!("{}: stride {} but manifest says {}", e.sparse.display(), sparse.meta.delta, manifest.delta),
                ));
            }
            let (target, _) = read_f32_2d(&dir.join(&e.target))?;
            let (magnitude, _) = read_f32_2d(&dir.join(&e.magnitude))?;
            samples.push(Sample::from_sparse(
                e.id.clone(),
                e.split,
                e.scene.clone(),
                sparse,
                target,
                magnitude,
                &manifest.pipeline,
            )?);
        }
        Ok(Self {
            delta: manifest.delta,
            pipeline: manifest.pipeline,
            samples,
        })
    }
}

/// Generates `n` scenes at stride `delta` and writes them to `dir`.
pub fn make_dataset(
    dir: &Path,
    n: usize,
    delta: usize,
    sampler: &SceneSampler,
    seed: u64,
    test_fraction: f64,
    pipeline: &PipelineConfig,
) -> Result<Manifest> {
    Dataset::generate(n, delta, sampler, seed, test_fraction, pipeline)?.save(dir, sampler, seed, test_fraction)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SceneSampler {
        SceneSampler {
            depth: 16,
            width: 32,
            radius_d: (2.0, 4.0),
            radius_w: (2.0, 6.0),
            ..Default::default()
        }
    }

    #[test]
    fn scene_seeds_are_distinct() {
        let mut seen: Vec<u64> = (0..1000).map(|i| scene_seed(7, i)).collect();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 1000);
    }

    #[test]
    fn sampled_scenes_are_valid_and_seeded() {
        let s = small();
        for seed in 0..50 {
            let a = s.sample(seed).unwrap();
            assert!(a.validate().is_ok());
            assert!((1..=4).contains(&a.vessels.len()));
            assert_eq!(a, s.sample(seed).unwrap());
        }
    }

    #[test]
    fn split_sizes_and_shapes() {
        let ds = Dataset::generate(5, 2, &small(), 3, 0.2, &PipelineConfig::default()).unwrap();
        assert_eq!(ds.train().len(), 4);
        assert_eq!(ds.test().len(), 1);
        for s in &ds.samples {
            assert_eq!(s.input.shape(), &[2, 16, 16]);
            assert_eq!(s.target.dim(), (16, 32));
            assert_eq!(s.sparse.meta.delta, 2);
        }
    }

    #[test]
    fn rejects_stride_not_dividing_width() {
        let err = Dataset::generate(2, 3, &small(), 0, 0.5, &PipelineConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Usage(_)));
    }
}
