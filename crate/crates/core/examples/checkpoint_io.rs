//! Save a network and a flow map, reload both and confirm nothing changed.

use assan::io::checkpoint::{checkpoint_load, checkpoint_save};
use assan::io::image::{save_image, symmetric_range};
use assan::io::odtr::{read_flow, write_flow};
use assan::model::{Assan, InitConfig, ModelConfig};
use assan::phantom::{synthesize_raw_bscan, SceneSampler};
use assan::signal::{classical_dense_pipeline, PipelineConfig};

fn main() -> assan::Result<()> {
    let dir = std::env::temp_dir().join("assan_io_example");
    std::fs::create_dir_all(&dir).expect("temporary directory is writable");

    let net = Assan::new(ModelConfig::desk(2), InitConfig::randomized(3, 0.1))?;
    checkpoint_save(&dir.join("net.ckpt"), &net)?;
    let back = checkpoint_load(&dir.join("net.ckpt"))?;
    let same = back.params.tensors().iter().zip(net.params.tensors()).all(|(a, b)| a.data() == b.data());
    println!("checkpoint: {} tensors, identical {same}", back.params.len());

    let scene = SceneSampler::default().sample(5)?;
    let flow = classical_dense_pipeline(&synthesize_raw_bscan(&scene)?, &PipelineConfig::default())?.image;
    write_flow(&dir.join("flow.odtr"), &flow, serde_json::json!({ "scan_id": "example" }))?;
    println!("flow map identical {}", read_flow(&dir.join("flow.odtr"))? == flow);
    let (lo, hi) = symmetric_range(&flow.0);
    save_image(&dir.join("flow.png"), &flow.0, lo, hi)?;
    println!("written to {}", dir.display());
    Ok(())
}
