//! The `odt` command line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::checkpoint::checkpoint_load;
use crate::io::image::{save_image, symmetric_range};
use crate::io::odtr::{odtr_write, read_f32_2d, read_raw_bscan, write_f32_2d, write_raw_bscan, OdtrData, OdtrFile};
use crate::io::{read_json, write_json};
use crate::model::{Assan, InitConfig, ModelConfig};
use crate::phantom::{make_dataset, synthesize_raw_bscan, Dataset, SceneSampler, Split, VolumeScene};
use crate::signal::{bline_resize, classical_dense_pipeline, preprocess, sparse_downsample, FlowMap, PipelineConfig};
use crate::train::eval::{evaluate, mip_project, Baseline, EvalConfig, InterpKind, MetricReport, Reconstructor};
use crate::train::{train, RunDir, TrainConfig};

#[derive(Parser, Debug)]
#[command(name = "odt", version, about = "Sparse Doppler OCT reconstruction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Synthesize a phantom dataset, or a B-scan stack with --volume.
    Gen(GenArgs),
    /// Magnitude, phase and network input of a raw B-scan.
    Preprocess(PreprocessArgs),
    /// Train a network on a generated dataset.
    Train(TrainArgs),
    /// Predict the full-width flow map of a sparse raw B-scan.
    Reconstruct(ReconstructArgs),
    /// Score a checkpoint and/or an interpolation baseline on a dataset.
    Eval(EvalArgs),
    /// En-face maximum intensity projection of a stack of flow maps.
    Mip(MipArgs),
}

#[derive(Args, Debug)]
struct GenArgs {
    /// Number of scenes, or of slices with --volume.
    #[arg(long)]
    scenes: usize,
    #[arg(long, default_value_t = 1)]
    delta: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.25)]
    test_fraction: f64,
    #[arg(long, default_value_t = 128)]
    depth: usize,
    #[arg(long, default_value_t = 256)]
    width: usize,
    /// Spectral noise standard deviation per component.
    #[arg(long)]
    noise: Option<f64>,
    /// Write a stack of slices through straight vessels instead of
    /// independent scenes.
    #[arg(long)]
    volume: bool,
    /// Vessels crossing the stack.
    #[arg(long, default_value_t = 4)]
    tubes: usize,
}

#[derive(Args, Debug)]
struct PreprocessArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Preset {
    Paper,
    Desk,
    Tiny,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// JSON with `model` and `train` sections; a preset is used otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Preset::Desk)]
    preset: Preset,
    /// Overrides the training seed of the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Run directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ReconstructArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also write the resized image (.png or .pgm).
    #[arg(long)]
    png: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    ckpt: Option<PathBuf>,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_parser = parse_interp)]
    baseline: Option<InterpKind>,
    #[arg(long)]
    report: PathBuf,
    /// Fraction of depth kept from the top.
    #[arg(long, default_value_t = 0.8)]
    keep_depth: f64,
    /// Evaluate every scan rather than the held-out ones.
    #[arg(long)]
    all: bool,
}

#[derive(Args, Debug)]
struct MipArgs {
    /// Directory of f32 flow maps, taken in file name order.
    #[arg(long)]
    volume: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn parse_interp(s: &str) -> std::result::Result<InterpKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Model and optimizer settings read by `odt train`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Weight initialization seed; the training seed when absent.
    #[serde(default)]
    pub init_seed: Option<u64>,
}

/// Written next to the metric reports of `odt eval`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOutput {
    pub data: PathBuf,
    pub delta: usize,
    pub scans: usize,
    pub reports: Vec<MetricReport>,
}

fn gen(a: &GenArgs) -> Result<()> {
    let pipeline = PipelineConfig::default();
    if a.volume {
        let mut vol = VolumeScene::random(a.depth, a.width, a.scenes, a.tubes, a.seed);
        if let Some(n) = a.noise {
            vol.noise_sigma = n;
        }
        let sparse_dir = a.out.join("sparse");
        std::fs::create_dir_all(&sparse_dir).map_err(|e| Error::io(&sparse_dir, e))?;
        for (s, scene) in vol.slice_scenes()?.iter().enumerate() {
            let dense = synthesize_raw_bscan(scene)?;
            let flow = classical_dense_pipeline(&dense, &pipeline)?.flow;
            let meta = serde_json::json!({ "scan_id": format!("slice{s:04}"), "delta": 1, "seed": scene.seed });
            write_f32_2d(&a.out.join(format!("slice{s:04}.odtr")), &flow.0, meta)?;
            write_raw_bscan(&sparse_dir.join(format!("slice{s:04}.odtr")), &sparse_downsample(&dense, a.delta)?)?;
        }
        return write_json(&a.out.join("volume.json"), &vol);
    }
    let mut sampler = SceneSampler {
        depth: a.depth,
        width: a.width,
        ..SceneSampler::default()
    };
    if let Some(n) = a.noise {
        sampler.noise_sigma = n;
    }
    let m = make_dataset(&a.out, a.scenes, a.delta, &sampler, a.seed, a.test_fraction, &pipeline)?;
    log::info!("wrote {} scans to {}", m.entries.len(), a.out.display());
    Ok(())
}

fn preprocess_cmd(a: &PreprocessArgs) -> Result<()> {
    let raw = read_raw_bscan(&a.input)?;
    let (pair, input) = preprocess(&raw, &PipelineConfig::default())?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let meta = serde_json::to_value(&raw.meta)?;
    write_f32_2d(&a.out.join("magnitude.odtr"), &pair.magnitude, meta.clone())?;
    write_f32_2d(&a.out.join("phase.odtr"), &pair.phase, meta.clone())?;
    let mut meta = meta;
    meta["log_mag_range"] = serde_json::json!([input.log_mag_range.0, input.log_mag_range.1]);
    let data = ndarray::ArrayD::from_shape_vec(input.tensor.shape().to_vec(), input.tensor.data().to_vec())
        .expect("tensor shape and data agree");
    odtr_write(
        &a.out.join("input.odtr"),
        &OdtrFile {
            data: OdtrData::F32(data),
            meta,
        },
    )
}

fn run_config(a: &TrainArgs, delta: usize) -> Result<RunConfig> {
    let mut cfg = match &a.config {
        Some(p) => read_json::<RunConfig>(p)?,
        None => {
            let (model, train) = match a.preset {
                Preset::Paper => (ModelConfig::paper(delta), TrainConfig::paper(0)),
                Preset::Desk => (ModelConfig::desk(delta), TrainConfig::desk(0)),
                Preset::Tiny => (ModelConfig::tiny(delta), TrainConfig::desk(0)),
            };
            RunConfig {
                model,
                train,
                init_seed: None,
            }
        }
    };
    if let Some(s) = a.seed {
        cfg.train.seed = s;
    }
    if cfg.model.delta != delta {
        return Err(Error::Config(format!(
            "model stride {} does not match dataset stride {delta}",
            cfg.model.delta
        )));
    }
    Ok(cfg)
}

fn train_cmd(a: &TrainArgs) -> Result<()> {
    let data = Dataset::load(&a.data)?;
    let cfg = run_config(a, data.delta)?;
    let mut model = Assan::new(cfg.model.clone(), InitConfig::standard(cfg.init_seed.unwrap_or(cfg.train.seed)))?;
    let dir = RunDir(a.out.clone());
    let report = train(&mut model, &data.train(), &cfg.train, Some(&dir))?;
    write_json(&a.out.join("config.json"), &cfg)?;
    log::info!(
        "smoothed loss {:.4e} -> {:.4e}, best at step {}",
        report.initial_smoothed,
        report.final_smoothed,
        report.best_step
    );
    Ok(())
}

fn reconstruct_cmd(a: &ReconstructArgs) -> Result<()> {
    let model = checkpoint_load(&a.ckpt)?;
    let raw = read_raw_bscan(&a.input)?;
    if raw.meta.delta != model.config.delta {
        return Err(Error::Incompatible(format!(
            "scan has stride {}, checkpoint was trained for {}",
            raw.meta.delta, model.config.delta
        )));
    }
    let pipeline = PipelineConfig::default();
    let (_, input) = preprocess(&raw, &pipeline)?;
    let y = model.predict(&input.tensor)?;
    let (d, w) = (y.shape()[1], y.shape()[2]);
    let v = ndarray::Array2::from_shape_vec((d, w), y.into_data()).expect("prediction shape");
    let meta = serde_json::json!({ "scan_id": raw.meta.scan_id, "delta": 1, "source_delta": raw.meta.delta });
    write_f32_2d(&a.out, &v, meta)?;
    if let Some(img) = &a.png {
        let i = bline_resize(&FlowMap(v), pipeline.image_width)?;
        let (lo, hi) = symmetric_range(&i.0);
        save_image(img, &i.0, lo, hi)?;
    }
    Ok(())
}

fn eval_cmd(a: &EvalArgs) -> Result<()> {
    if a.ckpt.is_none() && a.baseline.is_none() {
        return Err(Error::Usage("eval needs --ckpt, --baseline or both".into()));
    }
    let data = Dataset::load(&a.data)?;
    let samples: Vec<_> = if a.all {
        data.samples.iter().collect()
    } else {
        data.split(Split::Test).collect()
    };
    if samples.is_empty() {
        return Err(Error::Usage(format!("{} has no scans to evaluate", a.data.display())));
    }
    let cfg = EvalConfig {
        keep_depth_fraction: a.keep_depth,
        ..EvalConfig::for_pipeline(&data.pipeline)
    };
    let mut methods: Vec<Box<dyn Reconstructor>> = Vec::new();
    if let Some(p) = &a.ckpt {
        let model = checkpoint_load(p)?;
        if model.config.delta != data.delta {
            return Err(Error::Incompatible(format!(
                "dataset has stride {}, checkpoint was trained for {}",
                data.delta, model.config.delta
            )));
        }
        methods.push(Box::new(model));
    }
    if let Some(kind) = a.baseline {
        methods.push(Box::new(Baseline {
            kind,
            delta: data.delta,
            pipeline: data.pipeline.clone(),
        }));
    }
    let reports = methods
        .iter()
        .map(|m| evaluate(m.as_ref(), &samples, &cfg))
        .collect::<Result<Vec<_>>>()?;
    for r in &reports {
        println!(
            "{:<8} PSNR {:.3} +- {:.3} dB  SSIM {:.4} +- {:.4}",
            r.method, r.psnr.mean, r.psnr.std, r.ssim.mean, r.ssim.std
        );
    }
    write_json(
        &a.report,
        &EvalOutput {
            data: a.data.clone(),
            delta: data.delta,
            scans: samples.len(),
            reports,
        },
    )
}

/// f32 ODTR files directly inside `dir`, in file name order.
pub fn read_flow_stack(dir: &Path) -> Result<Vec<ndarray::Array2<f32>>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "odtr"))
        .collect();
    paths.sort();
    paths.iter().map(|p| Ok(read_f32_2d(p)?.0)).collect()
}

fn mip_cmd(a: &MipArgs) -> Result<()> {
    let stack = read_flow_stack(&a.volume)?;
    let mip = mip_project(&stack)?;
    let hi = mip.iter().fold(0.0f32, |m, &v| m.max(v));
    save_image(&a.out, &mip, 0.0, if hi > 0.0 { hi } else { 1.0 })
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Gen(a) => gen(a),
        Command::Preprocess(a) => preprocess_cmd(a),
        Command::Train(a) => train_cmd(a),
        Command::Reconstruct(a) => reconstruct_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Mip(a) => mip_cmd(a),
    }
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit status. Diagnostics go to standard error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("odt: {e}");
            e.exit_code()
        }
    }
}

/// Entry point of the `odt` binary; `RUST_LOG` sets the verbosity.
pub fn main() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    run(std::env::args_os())
}
