//! Score nearest and linear interpolation against the dense reconstruction
//! on held-out phantoms, at strides 2 and 4.

use assan::phantom::{Dataset, SceneSampler};
use assan::signal::PipelineConfig;
use assan::train::eval::{evaluate, Baseline, EvalConfig, InterpKind};

fn main() -> assan::Result<()> {
    let pipeline = PipelineConfig::default();
    let cfg = EvalConfig::for_pipeline(&pipeline);
    for delta in [2, 4] {
        let data = Dataset::generate(12, delta, &SceneSampler::default(), 3, 0.5, &pipeline)?;
        for kind in [InterpKind::Nearest, InterpKind::Linear] {
            let b = Baseline {
                kind,
                delta,
                pipeline: pipeline.clone(),
            };
            let r = evaluate(&b, &data.test(), &cfg)?;
            println!(
                "delta {delta} {:<8} PSNR {:.2} +- {:.2} dB  SSIM {:.4}",
                r.method, r.psnr.mean, r.psnr.std, r.ssim.mean
            );
        }
    }
    Ok(())
}
