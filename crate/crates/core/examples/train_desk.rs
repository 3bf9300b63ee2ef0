//! Short training run on synthetic phantoms; pass an iteration count to
//! train longer (the desk schedule is 2000).

use assan::model::{Assan, InitConfig, ModelConfig};
use assan::train::experiment::ExperimentConfig;
use assan::train::{train, RunDir};

fn main() -> assan::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let iterations = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    let mut cfg = ExperimentConfig::desk(2, 0);
    cfg.n_train = 8;
    cfg.n_test = 2;
    cfg.train.iterations = iterations;
    cfg.train.log_every = 50;
    cfg.train.smooth_window = cfg.train.smooth_window.min(iterations);
    let data = cfg.dataset()?;
    let mut net = Assan::new(ModelConfig::desk(2), InitConfig::standard(cfg.train.seed))?;
    let out = RunDir(std::env::temp_dir().join("assan_train_example"));
    let report = train(&mut net, &data.train(), &cfg.train, Some(&out))?;
    println!(
        "smoothed loss {:.3e} -> {:.3e}; checkpoints in {}",
        report.initial_smoothed,
        report.final_smoothed,
        out.0.display()
    );
    Ok(())
}
