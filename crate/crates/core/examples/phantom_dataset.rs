//! Generate a small phantom dataset, write it to disk and read it back.

use assan::phantom::{make_dataset, Dataset, SceneSampler};
use assan::signal::PipelineConfig;

fn main() -> assan::Result<()> {
    let dir = std::env::temp_dir().join("assan_phantom_example");
    let sampler = SceneSampler {
        depth: 64,
        width: 128,
        ..SceneSampler::default()
    };
    let manifest = make_dataset(&dir, 6, 2, &sampler, 42, 0.34, &PipelineConfig::default())?;
    for e in &manifest.entries {
        println!("{} {:?} {} vessels", e.id, e.split, e.scene.vessels.len());
    }
    let data = Dataset::load(&dir)?;
    println!(
        "{} train / {} test, input {:?}, target {:?}",
        data.train().len(),
        data.test().len(),
        data.samples[0].input.shape(),
        data.samples[0].target.dim()
    );
    println!("written to {}", dir.display());
    Ok(())
}
