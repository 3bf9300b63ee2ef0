#![allow(dead_code)]

use assan::model::{
    ASsBlock, Assal, Assan, BGaBlock, BSa, Builder, Ffn, FfnKind, InitConfig, ModelConfig, ParamStore,
    SsmDirection,
};
use assan::phantom::{synthesize_raw_bscan, SceneSampler};
use assan::signal::{classical_dense_pipeline, PipelineConfig};
use assan_autograd::{
    check_gradients, Activation, Axis, GradCheckConfig, Graph, Result as TResult, Tensor, TensorError, Var,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const GRAD_TOL: f64 = 1e-3;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn lift<T>(r: assan::Result<T>) -> TResult<T> {
    r.map_err(|e| TensorError::Usage(e.to_string()))
}

fn probe_loss(g: &mut Graph<f64>, y: Var, seed: u64) -> TResult<Var> {
    let r = g.constant(Tensor::randn(g.shape(y), 1.0, &mut rng(seed)));
    let prod = g.mul(y, r)?;
    Ok(g.sum(prod))
}

fn max_err(f: impl Fn(&mut Graph<f64>, &[Var]) -> TResult<Var>, inputs: &[Tensor<f64>]) -> f64 {
    check_gradients(f, inputs, &GradCheckConfig::default())
        .expect("gradient check runs")
        .max_rel_error()
}

/// Builds a block with random weights and checks the gradient of a probe
/// loss with respect to the input and every parameter.
fn block_check<B>(
    seed: u64,
    x_shape: &[usize],
    build: impl Fn(&mut Builder) -> B,
    fwd: impl Fn(&B, &mut Graph<f64>, &[Var], Var) -> assan::Result<Var>,
) -> f64 {
    let mut store = ParamStore::<f32>::default();
    let block = {
        let mut b = Builder::new(&mut store, InitConfig::randomized(seed, 0.3));
        build(&mut b)
    };
    let params: ParamStore<f64> = store.cast();
    let mut inputs = vec![Tensor::randn(x_shape, 1.0, &mut rng(seed + 1))];
    inputs.extend(params.tensors().iter().cloned());
    max_err(
        |g, v| {
            let y = lift(fwd(&block, g, &v[1..], v[0]))?;
            probe_loss(g, y, seed + 2)
        },
        &inputs,
    )
}

/// Max relative finite-difference error per component, 64-bit, `h = 1e-5`.
pub fn gradient_suite() -> Vec<(&'static str, f64)> {
    let mut out = Vec::new();
    let mut r = rng(1);

    let inputs = [
        Tensor::randn(&[3, 4, 5], 1.0, &mut r),
        Tensor::randn(&[6, 5], 0.5, &mut r),
        Tensor::randn(&[6], 0.5, &mut r),
    ];
    out.push((
        "linear",
        max_err(
            |g, v| {
                let y = g.linear(v[0], v[1], Some(v[2]))?;
                probe_loss(g, y, 3)
            },
            &inputs,
        ),
    ));

    for (name, axis) in [("conv1d depth", Axis::H), ("conv1d width", Axis::W)] {
        for depthwise in [false, true] {
            let (c_out, c_in_g) = if depthwise { (3, 1) } else { (4, 3) };
            let inputs = [
                Tensor::randn(&[6, 5, 3], 1.0, &mut r),
                Tensor::randn(&[c_out, c_in_g, 4], 0.5, &mut r),
                Tensor::randn(&[c_out], 0.5, &mut r),
            ];
            let err = max_err(
                |g, v| {
                    let y = g.conv1d(v[0], axis, v[1], Some(v[2]), depthwise)?;
                    probe_loss(g, y, 4)
                },
                &inputs,
            );
            out.push((name, err));
        }
    }

    let inputs = [
        Tensor::randn(&[4, 3, 6], 1.0, &mut r),
        Tensor::randn(&[6], 1.0, &mut r),
        Tensor::randn(&[6], 1.0, &mut r),
    ];
    out.push((
        "layer_norm",
        max_err(
            |g, v| {
                let y = g.layer_norm(v[0], v[1], v[2], 1e-6)?;
                probe_loss(g, y, 5)
            },
            &inputs,
        ),
    ));

    for (name, act) in [
        ("silu", Activation::Silu),
        ("gelu", Activation::Gelu),
        ("sigmoid", Activation::Sigmoid),
        ("softplus", Activation::Softplus),
    ] {
        let inputs = [Tensor::randn(&[5, 7], 2.0, &mut r)];
        out.push((
            name,
            max_err(
                |g, v| {
                    let y = g.activation(v[0], act);
                    probe_loss(g, y, 6)
                },
                &inputs,
            ),
        ));
    }

    let inputs = [Tensor::randn(&[4, 6], 1.5, &mut r)];
    out.push((
        "softmax",
        max_err(
            |g, v| {
                let y = g.softmax(v[0]);
                probe_loss(g, y, 7)
            },
            &inputs,
        ),
    ));

    let cfg = ModelConfig::tiny(2);
    out.push((
        "A-SS block",
        block_check(10, &[6, 3, cfg.embed_dim], |b| ASsBlock::new(b, "a", &cfg), |m, g, p, x| m.forward(g, p, x)),
    ));
    out.push((
        "B-SA",
        block_check(
            20,
            &[3, 5, cfg.embed_dim],
            |b| BSa::new(b, "s", cfg.embed_dim, cfg.attention_heads),
            |m, g, p, x| m.forward(g, p, x),
        ),
    ));
    out.push((
        "B-GA block",
        block_check(30, &[3, 5, cfg.embed_dim], |b| BGaBlock::new(b, "b", &cfg), |m, g, p, x| m.forward(g, p, x)),
    ));
    out.push((
        "LEFN",
        block_check(
            40,
            &[5, 6, cfg.embed_dim],
            |b| Ffn::new(b, "f", &cfg).expect("lefn"),
            |m, g, p, x| m.forward(g, p, x),
        ),
    ));
    out.push(("tiny ASSAN + L2", full_network_check(&cfg, 50)));
    out
}

/// Gradient of the L2 loss of the whole network against a random target.
pub fn full_network_check(cfg: &ModelConfig, seed: u64) -> f64 {
    let net = Assan::new(cfg.clone(), InitConfig::randomized(seed, 0.1)).expect("tiny network");
    let params: ParamStore<f64> = net.params.cast();
    let (d, w) = (5, 3);
    let mut inputs = vec![Tensor::randn(&[d, w, 2], 1.0, &mut rng(seed + 1))];
    inputs.extend(params.tensors().iter().cloned());
    let target = Tensor::randn(&[d, w * cfg.delta, 1], 1.0, &mut rng(seed + 2));
    max_err(
        |g, v| {
            let y = lift(net.forward(g, &v[1..], v[0]))?;
            let t = g.constant(target.clone());
            g.mse(y, t)
        },
        &inputs,
    )
}

/// Layer with every residual branch and gate forced on, for structural tests.
pub fn randomized_layer(cfg: &ModelConfig, seed: u64) -> (Assal, ParamStore<f32>) {
    let mut store = ParamStore::<f32>::default();
    let layer = {
        let mut b = Builder::new(&mut store, InitConfig::randomized(seed, 0.3));
        Assal::new(&mut b, "l", cfg)
    };
    (layer, store)
}

/// Largest deviation between the production scan and the sequential
/// oracle over `cases` random problems with `T <= 512`, `C <= 16`, `N <= 16`.
pub fn scan_oracle_max_error(cases: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for case in 0..cases {
        let t = r.gen_range(1..=512);
        let ci = r.gen_range(1..=16);
        let n = r.gen_range(1..=16);
        let rank = r.gen_range(1..=4);
        let mut store = ParamStore::<f32>::default();
        let dir = {
            let mut b = Builder::new(&mut store, InitConfig::randomized(seed + case as u64, 0.5));
            SsmDirection::new(&mut b, "s", ci, n, rank)
        };
        let params: ParamStore<f64> = store.cast();
        let oracle = dir.params_f64(&params);
        let x = Tensor::<f64>::randn(&[t, 1, ci], 1.0, &mut r);
        let reverse = r.gen_bool(0.5);

        let mut g = Graph::<f64>::new();
        let p = params.attach(&mut g, false);
        let xv = g.constant(x.clone());
        let y = dir.forward(&mut g, &p, xv, reverse).expect("scan");
        let y = g.value(y).data().to_vec();

        let mut seq: Vec<Vec<f64>> = (0..t).map(|i| x.data()[i * ci..(i + 1) * ci].to_vec()).collect();
        if reverse {
            seq.reverse();
        }
        let mut expect = assan::model::selective_scan_sequential(&seq, &oracle);
        if reverse {
            expect.reverse();
        }
        for (i, row) in expect.iter().enumerate() {
            for (c, &e) in row.iter().enumerate() {
                worst = worst.max((y[i * ci + c] - e).abs());
            }
        }
    }
    worst
}

/// Noise-free phantoms through the dense chain: largest error of the
/// recovered phase step inside vessels, and largest `|V|` outside.
pub fn closure_errors(scenes: usize, seed: u64) -> (f64, f64) {
    let sampler = SceneSampler {
        noise_sigma: 0.0,
        ..SceneSampler::default()
    };
    let pipe = PipelineConfig::default();
    let (mut inside, mut outside) = (0.0f64, 0.0f64);
    for i in 0..scenes {
        let scene = sampler.sample(assan::phantom::scene_seed(seed, i)).expect("scene");
        let raw = synthesize_raw_bscan(&scene).expect("synthesis");
        let v = classical_dense_pipeline(&raw, &pipe).expect("pipeline").flow;
        let truth = assan::phantom::render_flow_field(&scene).0;
        let mask = scene.vessel_mask();
        for ((idx, &m), &t) in mask.indexed_iter().zip(truth.iter()) {
            let got = v.0[idx] as f64;
            if m {
                inside = inside.max((got - t as f64).abs());
            } else {
                outside = outside.max(got.abs());
            }
        }
    }
    (inside, outside)
}

pub fn ffn_kinds() -> [FfnKind; 3] {
    [FfnKind::Lefn, FfnKind::Mlp, FfnKind::Lefn2d]
}
