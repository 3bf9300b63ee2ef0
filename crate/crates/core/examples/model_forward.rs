//! Build the desk network and push one sparse scan through it.

use assan::model::{Assan, InitConfig, ModelConfig};
use assan::phantom::{synthesize_raw_bscan, SceneSampler};
use assan::signal::{preprocess, sparse_downsample, PipelineConfig};

fn main() -> assan::Result<()> {
    let cfg = ModelConfig::desk(4);
    let net = Assan::new(cfg.clone(), InitConfig::standard(0))?;
    println!("desk ASSAN, delta {}: {} parameters", cfg.delta, net.params.count());
    println!("paper-size network would have {}", Assan::param_count(&ModelConfig::paper(4)));

    let scene = SceneSampler::default().sample(1)?;
    let sparse = sparse_downsample(&synthesize_raw_bscan(&scene)?, cfg.delta)?;
    let (_, input) = preprocess(&sparse, &PipelineConfig::default())?;
    let y = net.predict(&input.tensor)?;
    println!("input {:?} -> prediction {:?}", input.tensor.shape(), y.shape());
    Ok(())
}
