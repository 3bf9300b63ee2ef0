//! Slice a volume of straight vessels, reconstruct each B-scan densely and
//! project the stack en face.

use assan::io::image::save_image;
use assan::phantom::{synthesize_raw_bscan, VolumeScene};
use assan::signal::{classical_dense_pipeline, PipelineConfig};
use assan::train::eval::mip_project;

fn main() -> assan::Result<()> {
    let mut vol = VolumeScene::random(64, 128, 48, 4, 11);
    vol.noise_sigma = 0.2;
    let pipe = PipelineConfig::default();
    let stack = vol
        .slice_scenes()?
        .iter()
        .map(|s| Ok(classical_dense_pipeline(&synthesize_raw_bscan(s)?, &pipe)?.flow.0))
        .collect::<assan::Result<Vec<_>>>()?;
    let mip = mip_project(&stack)?;
    let footprint = vol.footprint();
    let hits = mip.iter().zip(footprint.iter()).filter(|(v, &f)| f && **v > 0.1).count();
    println!(
        "en-face {:?}: {hits} of {} footprint pixels lit",
        mip.dim(),
        footprint.iter().filter(|&&f| f).count()
    );
    let path = std::env::temp_dir().join("assan_mip.png");
    save_image(&path, &mip, 0.0, mip.iter().fold(1e-6, |m: f32, &v| m.max(v)))?;
    println!("written to {}", path.display());
    Ok(())
}
