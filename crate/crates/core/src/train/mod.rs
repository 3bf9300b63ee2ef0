//! Training loop, optimizer, metrics and evaluation.

pub mod eval;
pub mod experiment;
pub mod metrics;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use assan_autograd::{Graph, Tensor, TensorError, Var};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::checkpoint::checkpoint_save;
use crate::io::{write_atomic, write_json};
use crate::model::{Assan, ParamStore};
use crate::phantom::Sample;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    /// Patch depth.
    pub patch_depth: usize,
    /// Patch width in sparse A-scans; the target patch is `delta` times wider.
    pub patch_width: usize,
    pub lr_max: f64,
    pub lr_min: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    /// Loss CSV row cadence, in iterations.
    pub log_every: usize,
    /// Window of the moving-average loss used for the best checkpoint and
    /// the start/end comparison.
    pub smooth_window: usize,
}

impl TrainConfig {
    /// 200K iterations of batch 8 on 512 x 64 patches.
    pub fn paper(seed: u64) -> Self {
        Self {
            iterations: 200_000,
            batch_size: 8,
            patch_depth: 512,
            patch_width: 64,
            lr_max: 2e-4,
            lr_min: 1e-6,
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-8,
            seed,
            log_every: 100,
            smooth_window: 1000,
        }
    }

    pub fn desk(seed: u64) -> Self {
        Self {
            iterations: 2000,
            batch_size: 4,
            patch_depth: 64,
            patch_width: 16,
            lr_max: 1e-3,
            log_every: 10,
            smooth_window: 100,
            ..Self::paper(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.batch_size == 0 || self.patch_depth == 0 || self.patch_width == 0 {
            return Err(Error::Config("iterations, batch size and patch extents must be positive".into()));
        }
        if !(self.lr_max >= self.lr_min && self.lr_min >= 0.0) {
            return Err(Error::Config("need lr_max >= lr_min >= 0".into()));
        }
        if self.smooth_window == 0 || self.log_every == 0 {
            return Err(Error::Config("smooth_window and log_every must be positive".into()));
        }
        Ok(())
    }
}

/// Cosine annealing from `lr_max` at `t = 0` to `lr_min` at `t = total`;
/// later steps stay at `lr_min`.
pub fn cosine_lr(t: usize, total: usize, lr_max: f64, lr_min: f64) -> f64 {
    if t >= total {
        return lr_min;
    }
    let c = (std::f64::consts::PI * t as f64 / total as f64).cos();
    lr_min + 0.5 * (lr_max - lr_min) * (1.0 + c)
}

/// Mean squared error between prediction and target.
pub fn l2_loss(g: &mut Graph<f32>, pred: Var, target: Var) -> Result<Var> {
    Ok(g.mse(pred, target)?)
}

/// Adam with bias correction and no weight decay.
#[derive(Clone, Debug)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl Adam {
    pub fn new<T>(params: &ParamStore<T>, beta1: f64, beta2: f64, eps: f64) -> Self
    where
        T: assan_autograd::Real,
    {
        let zeros: Vec<Vec<f32>> = params.tensors().iter().map(|t| vec![0.0; t.numel()]).collect();
        Self {
            beta1,
            beta2,
            eps,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// One update of every tensor in `params` from the matching gradient.
    pub fn update(&mut self, params: &mut ParamStore<f32>, grads: &[Vec<f32>], lr: f64) {
        self.step += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        for (((p, g), m), v) in params
            .tensors_mut()
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for (((w, &g), m), v) in p.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                let g = g as f64;
                let mn = b1 * *m as f64 + (1.0 - b1) * g;
                let vn = b2 * *v as f64 + (1.0 - b2) * g * g;
                *m = mn as f32;
                *v = vn as f32;
                let upd = lr * (mn / c1) / ((vn / c2).sqrt() + self.eps);
                *w = (*w as f64 - upd) as f32;
            }
        }
    }
}

/// Aligned random crop: input `[2, dp, wp]` at `(d0, j0)` and target
/// `[1, dp, wp * delta]` at `(d0, j0 * delta)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    pub input: Tensor<f32>,
    pub target: Tensor<f32>,
    pub depth_offset: usize,
    pub width_offset: usize,
}

pub fn sample_patch<R: Rng>(
    input: &Tensor<f32>,
    target: &Array2<f32>,
    delta: usize,
    patch_depth: usize,
    patch_width: usize,
    rng: &mut R,
) -> Result<Patch> {
    let (c, d, w) = match input.shape() {
        &[c, d, w] => (c, d, w),
        s => return Err(Error::Usage(format!("input must be [C, D, W], got {s:?}"))),
    };
    if target.dim() != (d, w * delta) {
        return Err(Error::Usage(format!(
            "target {:?} does not match input {d} x {w} at stride {delta}",
            target.dim()
        )));
    }
    if patch_depth > d || patch_width > w {
        return Err(Error::Usage(format!(
            "scan {d} x {w} is smaller than patch {patch_depth} x {patch_width}"
        )));
    }
    let d0 = rng.gen_range(0..=d - patch_depth);
    let j0 = rng.gen_range(0..=w - patch_width);
    let src = input.data();
    let mut xin = Vec::with_capacity(c * patch_depth * patch_width);
    for ch in 0..c {
        for r in d0..d0 + patch_depth {
            let row = (ch * d + r) * w;
            xin.extend_from_slice(&src[row + j0..row + j0 + patch_width]);
        }
    }
    let tw = patch_width * delta;
    let mut tgt = Vec::with_capacity(patch_depth * tw);
    for r in d0..d0 + patch_depth {
        tgt.extend(target.row(r).iter().skip(j0 * delta).take(tw));
    }
    Ok(Patch {
        input: Tensor::new(&[c, patch_depth, patch_width], xin)?,
        target: Tensor::new(&[1, patch_depth, tw], tgt)?,
        depth_offset: d0,
        width_offset: j0,
    })
}

/// Moving averages of `losses` over `window` steps, one per full window.
pub fn smoothed(losses: &[f32], window: usize) -> Vec<f64> {
    if losses.len() < window || window == 0 {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(losses.len() - window + 1);
    let mut acc: f64 = losses[..window].iter().map(|&l| l as f64).sum();
    out.push(acc / window as f64);
    for i in window..losses.len() {
        acc += losses[i] as f64 - losses[i - window] as f64;
        out.push(acc / window as f64);
    }
    out
}

/// Loss curve and summary of a run.
#[derive(Clone, Debug)]
pub struct TrainReport {
    pub losses: Vec<f32>,
    pub lrs: Vec<f64>,
    /// Mean loss of the first and last `smooth_window` iterations.
    pub initial_smoothed: f64,
    pub final_smoothed: f64,
    /// Step at which the smoothed loss was lowest, and that value.
    pub best_step: usize,
    pub best_smoothed: f64,
    pub best_params: ParamStore<f32>,
}

impl TrainReport {
    /// `step,lr,loss` rows every `every` steps, plus the last step.
    pub fn csv(&self, every: usize) -> String {
        let mut s = String::from("step,lr,loss\n");
        let last = self.losses.len().saturating_sub(1);
        for (i, (lr, loss)) in self.lrs.iter().zip(&self.losses).enumerate() {
            if i % every.max(1) == 0 || i == last {
                let _ = writeln!(s, "{i},{lr:e},{loss:e}");
            }
        }
        s
    }
}

#[derive(Serialize)]
struct NanSnapshot<'a> {
    step: usize,
    lr: f64,
    sample: &'a str,
    depth_offset: usize,
    width_offset: usize,
    message: String,
}

/// Where a run writes its artifacts.
#[derive(Clone, Debug)]
pub struct RunDir(pub PathBuf);

impl RunDir {
    pub fn final_checkpoint(&self) -> PathBuf {
        self.0.join("final.ckpt")
    }
    pub fn best_checkpoint(&self) -> PathBuf {
        self.0.join("best.ckpt")
    }
    pub fn loss_log(&self) -> PathBuf {
        self.0.join("loss.csv")
    }
}

/// Forward, L2 loss and backward for one patch; returns the loss and the
/// parameter gradients.
pub fn loss_and_grads(model: &Assan, patch: &Patch) -> Result<(f32, Vec<Tensor<f32>>)> {
    let mut g = Graph::<f32>::new();
    let p = model.params.attach(&mut g, true);
    let pred = model.forward_planar(&mut g, &p, &patch.input)?;
    let target = g.constant(patch.target.clone());
    let loss = l2_loss(&mut g, pred, target)?;
    let value = g.value(loss).data()[0];
    g.backward(loss)?;
    let grads = p
        .iter()
        .zip(model.params.tensors())
        .map(|(&v, t)| g.take_grad(v).unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();
    Ok((value, grads))
}

/// Runs `cfg.iterations` Adam steps on random patches of `samples`.
///
/// Each iteration averages the loss gradient over `batch_size` patches.
/// A non-finite loss aborts with [`Error::Numeric`]; when `out` is given a
/// snapshot of the weights and the offending patch is written first.
pub fn train(model: &mut Assan, samples: &[&Sample], cfg: &TrainConfig, out: Option<&RunDir>) -> Result<TrainReport> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::Usage("training set is empty".into()));
    }
    if cfg.smooth_window > cfg.iterations {
        return Err(Error::Config(format!(
            "smooth_window {} exceeds {} iterations",
            cfg.smooth_window, cfg.iterations
        )));
    }
    let delta = model.config.delta;
    if let Some(dir) = out {
        std::fs::create_dir_all(&dir.0).map_err(|e| Error::io(&dir.0, e))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(&model.params, cfg.beta1, cfg.beta2, cfg.eps);
    let mut losses = Vec::with_capacity(cfg.iterations);
    let mut lrs = Vec::with_capacity(cfg.iterations);
    let mut best = (0usize, f64::INFINITY, model.params.clone());
    let mut window_sum = 0.0f64;
    let scale = 1.0 / cfg.batch_size as f32;
    for step in 0..cfg.iterations {
        let lr = cosine_lr(step, cfg.iterations, cfg.lr_max, cfg.lr_min);
        let mut acc: Vec<Vec<f32>> = model.params.tensors().iter().map(|t| vec![0.0; t.numel()]).collect();
        let mut batch_loss = 0.0f32;
        for _ in 0..cfg.batch_size {
            let s = samples[rng.gen_range(0..samples.len())];
            let patch = sample_patch(&s.input, &s.target, delta, cfg.patch_depth, cfg.patch_width, &mut rng)?;
            let (loss, grads) = match loss_and_grads(model, &patch) {
                Err(Error::Tensor(TensorError::NonFinite(msg))) => {
                    let message = format!("non-finite loss at step {step} on {}: {msg}", s.id);
                    if let Some(dir) = out {
                        checkpoint_save(&dir.0.join("nan_snapshot.ckpt"), model)?;
                        write_json(
                            &dir.0.join("nan_snapshot.json"),
                            &NanSnapshot {
                                step,
                                lr,
                                sample: &s.id,
                                depth_offset: patch.depth_offset,
                                width_offset: patch.width_offset,
                                message: message.clone(),
                            },
                        )?;
                    }
                    return Err(Error::Numeric(message));
                }
                other => other?,
            };
            batch_loss += loss * scale;
            for (a, g) in acc.iter_mut().zip(&grads) {
                for (x, &y) in a.iter_mut().zip(g.data()) {
                    *x += y * scale;
                }
            }
        }
        adam.update(&mut model.params, &acc, lr);
        losses.push(batch_loss);
        lrs.push(lr);
        window_sum += batch_loss as f64;
        if step >= cfg.smooth_window {
            window_sum -= losses[step - cfg.smooth_window] as f64;
        }
        if step + 1 >= cfg.smooth_window {
            let avg = window_sum / cfg.smooth_window as f64;
            if avg < best.1 {
                best = (step, avg, model.params.clone());
            }
        }
        if step % cfg.log_every == 0 || step + 1 == cfg.iterations {
            log::info!("step {step:>6}  lr {lr:.3e}  loss {batch_loss:.5e}");
        }
    }
    let sm = smoothed(&losses, cfg.smooth_window);
    let report = TrainReport {
        initial_smoothed: sm[0],
        final_smoothed: *sm.last().unwrap(),
        best_step: best.0,
        best_smoothed: best.1,
        best_params: best.2,
        losses,
        lrs,
    };
    if let Some(dir) = out {
        checkpoint_save(&dir.final_checkpoint(), model)?;
        let mut best_model = model.clone();
        best_model.params = report.best_params.clone();
        checkpoint_save(&dir.best_checkpoint(), &best_model)?;
        write_atomic(&dir.loss_log(), report.csv(cfg.log_every).as_bytes())?;
    }
    Ok(report)
}

/// Loads `step,lr,loss` rows written by [`train`].
pub fn read_loss_log(path: &Path) -> Result<Vec<(usize, f64, f32)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .skip(1)
        .enumerate()
        .map(|(i, line)| {
            let bad = || Error::format(i as u64 + 1, format!("bad loss log row: {line}"));
            let mut it = line.split(',');
            let step = it.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?;
            let lr = it.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?;
            let loss = it.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?;
            Ok((step, lr, loss))
        })
        .collect()
}
