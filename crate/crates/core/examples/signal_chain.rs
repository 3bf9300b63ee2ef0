//! Synthesize one phantom B-scan and run the classical Doppler chain on it,
//! densely and at stride 4.

use assan::phantom::{render_flow_field, synthesize_raw_bscan, SceneSampler};
use assan::signal::{classical_dense_pipeline, preprocess, sparse_downsample, PipelineConfig};

fn main() -> assan::Result<()> {
    let sampler = SceneSampler {
        noise_sigma: 0.0,
        ..SceneSampler::default()
    };
    let scene = sampler.sample(7)?;
    let raw = synthesize_raw_bscan(&scene)?;
    let pipe = PipelineConfig::default();
    let dense = classical_dense_pipeline(&raw, &pipe)?;
    let truth = render_flow_field(&scene);

    let mut worst = 0.0f32;
    for ((idx, &m), &t) in scene.vessel_mask().indexed_iter().zip(truth.0.iter()) {
        if m {
            worst = worst.max((dense.flow.0[idx] - t).abs());
        }
    }
    println!(
        "raw {:?} -> flow {}x{}, image width {}",
        raw.spectra().dim(),
        dense.flow.depth(),
        dense.flow.width(),
        dense.image.width()
    );
    println!("{} vessels, worst in-vessel error {worst:.2e} rad", scene.vessels.len());

    let sparse = sparse_downsample(&raw, 4)?;
    let (_, input) = preprocess(&sparse, &pipe)?;
    println!("stride-4 network input {:?}", input.tensor.shape());
    Ok(())
}
