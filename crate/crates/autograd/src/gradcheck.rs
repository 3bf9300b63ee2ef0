//! Central finite-difference oracle for analytic gradients.

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Result, TensorError};
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    /// Finite-difference step `h`.
    pub step: f64,
    /// Inputs with more elements than this are probed along random
    /// directions instead of coordinate by coordinate.
    pub probe_threshold: usize,
    pub probes: usize,
    pub seed: u64,
    /// Denominator floor so that near-zero gradients compare absolutely.
    pub abs_floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-5,
            probe_threshold: 10_000,
            probes: 64,
            seed: 0x5eed,
            abs_floor: 1e-6,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// Max relative error per input, in input order.
    pub per_input: Vec<f64>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.per_input.iter().copied().fold(0.0, f64::max)
    }
}

fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

fn eval<F>(f: &F, inputs: &[Tensor<f64>]) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone(), false)).collect();
    let out = f(&mut g, &vars)?;
    let v = g.value(out);
    if v.numel() != 1 {
        return Err(TensorError::Usage("grad check function must return a scalar".into()));
    }
    Ok(v.data()[0])
}

/// Compares the analytic gradient of `f` with respect to every input
/// against central differences `(f(x + h e) - f(x - h e)) / 2h`.
pub fn check_gradients<F>(
    f: F,
    inputs: &[Tensor<f64>],
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone(), true)).collect();
    let loss = f(&mut g, &vars)?;
    g.backward(loss)?;
    let analytic: Vec<Tensor<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| {
            g.grad(v)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(t.shape()))
        })
        .collect();

    let h = cfg.step;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    let mut per_input = Vec::with_capacity(inputs.len());
    for (idx, grad) in analytic.iter().enumerate() {
        let n = inputs[idx].numel();
        let mut worst = 0.0f64;
        if n <= cfg.probe_threshold {
            for i in 0..n {
                let orig = inputs[idx].data()[i];
                work[idx].data_mut()[i] = orig + h;
                let plus = eval(&f, &work)?;
                work[idx].data_mut()[i] = orig - h;
                let minus = eval(&f, &work)?;
                work[idx].data_mut()[i] = orig;
                let numeric = (plus - minus) / (2.0 * h);
                worst = worst.max(rel_err(grad.data()[i], numeric, cfg.abs_floor));
            }
        } else {
            for _ in 0..cfg.probes {
                let dir: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
                let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
                let dir: Vec<f64> = dir.iter().map(|v| v / norm).collect();
                let analytic_dd: f64 = dir.iter().zip(grad.data()).map(|(a, b)| a * b).sum();
                let shifted = |sign: f64| {
                    let mut t = inputs[idx].clone();
                    for (x, d) in t.data_mut().iter_mut().zip(&dir) {
                        *x += sign * h * d;
                    }
                    t
                };
                work[idx] = shifted(1.0);
                let plus = eval(&f, &work)?;
                work[idx] = shifted(-1.0);
                let minus = eval(&f, &work)?;
                work[idx] = inputs[idx].clone();
                let numeric = (plus - minus) / (2.0 * h);
                worst = worst.max(rel_err(analytic_dd, numeric, cfg.abs_floor));
            }
        }
        per_input.push(worst);
    }
    Ok(GradCheckReport { per_input })
}

/// Single-input form of [`check_gradients`]; returns the max relative error.
pub fn finite_diff_grad_check<F>(f: F, x: &Tensor<f64>, h: f64) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, Var) -> Result<Var>,
{
    let cfg = GradCheckConfig {
        step: h,
        ..GradCheckConfig::default()
    };
    let report = check_gradients(|g, v| f(g, v[0]), std::slice::from_ref(x), &cfg)?;
    Ok(report.max_rel_error())
}
