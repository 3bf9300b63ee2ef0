use assan_autograd::{
    check_gradients, finite_diff_grad_check, Activation, Axis, GradCheckConfig, Graph, Result,
    ScanInputs, Tensor, Var,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-4;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `sum(y * r)` for a fixed pseudo-random `r`, so every output element
/// carries a distinct weight into the loss.
fn probe_loss(g: &mut Graph<f64>, y: Var, seed: u64) -> Result<Var> {
    let r = Tensor::randn(g.shape(y), 1.0, &mut rng(seed));
    let r = g.constant(r);
    let prod = g.mul(y, r)?;
    Ok(g.sum(prod))
}

fn check(f: impl Fn(&mut Graph<f64>, &[Var]) -> Result<Var>, inputs: &[Tensor<f64>]) -> f64 {
    let report = check_gradients(f, inputs, &GradCheckConfig::default()).unwrap();
    report.max_rel_error()
}

#[test]
fn linear_gradients() {
    let mut r = rng(1);
    let inputs = [
        Tensor::randn(&[3, 4, 5], 1.0, &mut r),
        Tensor::randn(&[6, 5], 0.5, &mut r),
        Tensor::randn(&[6], 0.5, &mut r),
    ];
    let err = check(
        |g, v| {
            let y = g.linear(v[0], v[1], Some(v[2]))?;
            probe_loss(g, y, 7)
        },
        &inputs,
    );
    assert!(err < TOL, "linear rel err {err}");
}

#[test]
fn conv_gradients_both_axes_and_modes() {
    let mut r = rng(2);
    let x = Tensor::randn(&[7, 6, 3], 1.0, &mut r);
    for axis in [Axis::H, Axis::W] {
        for k in [3, 4, 5] {
            let dw = Tensor::randn(&[3, 1, k], 0.5, &mut r);
            let b = Tensor::randn(&[3], 0.5, &mut r);
            let err = check(
                |g, v| {
                    let y = g.conv1d(v[0], axis, v[1], Some(v[2]), true)?;
                    probe_loss(g, y, 11)
                },
                &[x.clone(), dw, b],
            );
            assert!(err < TOL, "depthwise {axis:?} k={k}: {err}");

            let full = Tensor::randn(&[4, 3, k], 0.5, &mut r);
            let err = check(
                |g, v| {
                    let y = g.conv1d(v[0], axis, v[1], None, false)?;
                    probe_loss(g, y, 12)
                },
                &[x.clone(), full],
            );
            assert!(err < TOL, "dense {axis:?} k={k}: {err}");
        }
    }
    let w2 = Tensor::randn(&[2, 3, 3, 3], 0.5, &mut r);
    let b2 = Tensor::randn(&[2], 0.5, &mut r);
    let err = check(
        |g, v| {
            let y = g.conv2d(v[0], v[1], Some(v[2]), false)?;
            probe_loss(g, y, 13)
        },
        &[x.clone(), w2, b2],
    );
    assert!(err < TOL, "conv2d 3x3: {err}");
    let dw2 = Tensor::randn(&[3, 1, 5, 5], 0.5, &mut r);
    let err = check(
        |g, v| {
            let y = g.conv2d(v[0], v[1], None, true)?;
            probe_loss(g, y, 14)
        },
        &[x, dw2],
    );
    assert!(err < TOL, "depthwise 5x5: {err}");
}

#[test]
fn layer_norm_gradients() {
    let mut r = rng(3);
    let inputs = [
        Tensor::randn(&[4, 3, 6], 2.0, &mut r),
        Tensor::randn(&[6], 1.0, &mut r),
        Tensor::randn(&[6], 1.0, &mut r),
    ];
    let err = check(
        |g, v| {
            let y = g.layer_norm(v[0], v[1], v[2], 1e-6)?;
            probe_loss(g, y, 21)
        },
        &inputs,
    );
    assert!(err < TOL, "layer_norm rel err {err}");
}

#[test]
fn activation_gradients() {
    let x = Tensor::uniform(&[64], -6.0, 6.0, &mut rng(4));
    for kind in [
        Activation::Gelu,
        Activation::Silu,
        Activation::Sigmoid,
        Activation::Softplus,
    ] {
        let err = check(
            |g, v| {
                let y = g.activation(v[0], kind);
                probe_loss(g, y, 31)
            },
            std::slice::from_ref(&x),
        );
        assert!(err < TOL, "{kind:?} rel err {err}");
    }
}

#[test]
fn softmax_and_elementwise_gradients() {
    let mut r = rng(5);
    let inputs = [
        Tensor::randn(&[3, 5], 2.0, &mut r),
        Tensor::randn(&[3, 5], 1.0, &mut r),
    ];
    let err = check(
        |g, v| {
            let s = g.softmax(v[0]);
            let e = g.exp(v[1]);
            let m = g.mul(s, e)?;
            let d = g.sub(m, v[1])?;
            let a = g.add(d, v[0])?;
            let sc = g.scale(a, -0.7);
            probe_loss(g, sc, 41)
        },
        &inputs,
    );
    assert!(err < TOL, "softmax/elementwise rel err {err}");
}

#[test]
fn mse_gradient_is_twice_residual_over_n() {
    let p = Tensor::new(&[4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let t = Tensor::new(&[4], vec![0.5, 2.5, 3.0, 3.0]).unwrap();
    let mut g = Graph::<f64>::new();
    let pv = g.leaf(p.clone(), true);
    let tv = g.constant(t.clone());
    let loss = g.mse(pv, tv).unwrap();
    g.backward(loss).unwrap();
    let expected: Vec<f64> = p
        .data()
        .iter()
        .zip(t.data())
        .map(|(a, b)| 2.0 * (a - b) / 4.0)
        .collect();
    assert_eq!(g.grad(pv).unwrap().data(), &expected[..]);
    let err = finite_diff_grad_check(
        |g, x| {
            let tv = g.constant(t.clone());
            g.mse(x, tv)
        },
        &p,
        1e-5,
    )
    .unwrap();
    assert!(err < TOL);
}

#[test]
fn selective_scan_gradients() {
    let mut r = rng(6);
    let (h, w, c, n) = (6, 2, 3, 4);
    for reverse in [false, true] {
        let inputs = [
            Tensor::randn(&[h, w, c], 1.0, &mut r),
            Tensor::uniform(&[h, w, c], 0.05, 0.8, &mut r),
            Tensor::uniform(&[c, n], -2.0, -0.2, &mut r),
            Tensor::randn(&[h, w, n], 1.0, &mut r),
            Tensor::randn(&[h, w, n], 1.0, &mut r),
            Tensor::randn(&[c], 1.0, &mut r),
        ];
        let err = check(
            |g, v| {
                let y = g.selective_scan(
                    ScanInputs {
                        u: v[0],
                        delta: v[1],
                        a: v[2],
                        b: v[3],
                        c: v[4],
                        d: v[5],
                    },
                    reverse,
                )?;
                probe_loss(g, y, 51)
            },
            &inputs,
        );
        assert!(err < TOL, "scan reverse={reverse}: {err}");
    }
}

#[test]
fn row_attention_gradients() {
    let mut r = rng(7);
    let shape = [3, 5, 4];
    let inputs = [
        Tensor::randn(&shape, 1.0, &mut r),
        Tensor::randn(&shape, 1.0, &mut r),
        Tensor::randn(&shape, 1.0, &mut r),
    ];
    let err = check(
        |g, v| {
            let y = g.row_attention(v[0], v[1], v[2], 2)?;
            probe_loss(g, y, 61)
        },
        &inputs,
    );
    assert!(err < TOL, "attention rel err {err}");
}

#[test]
fn pixel_shuffle_gradient() {
    let x = Tensor::randn(&[2, 3, 4], 1.0, &mut rng(8));
    let err = finite_diff_grad_check(
        |g, x| {
            let y = g.pixel_shuffle_w(x, 2)?;
            probe_loss(g, y, 71)
        },
        &x,
        1e-5,
    )
    .unwrap();
    assert!(err < TOL);
}

#[test]
fn oracle_is_exact_on_linear_functions() {
    let x = Tensor::randn(&[20], 1.0, &mut rng(9));
    let err = finite_diff_grad_check(|g, x| Ok(g.sum(x)), &x, 1e-5).unwrap();
    assert!(err < 1e-10, "{err}");
}

#[test]
fn oracle_confirms_half_square_norm() {
    let x = Tensor::new(&[1], vec![3.0]).unwrap();
    let f = |g: &mut Graph<f64>, x: Var| -> Result<Var> {
        let sq = g.mul(x, x)?;
        let h = g.scale(sq, 0.5);
        Ok(g.sum(h))
    };
    let mut g = Graph::new();
    let v = g.leaf(x.clone(), true);
    let loss = f(&mut g, v).unwrap();
    g.backward(loss).unwrap();
    assert!((g.grad(v).unwrap().data()[0] - 3.0).abs() < 1e-12);
    assert!(finite_diff_grad_check(f, &x, 1e-5).unwrap() < 1e-8);
}

#[test]
fn directional_probes_cover_large_inputs() {
    let x = Tensor::randn(&[12_000], 0.3, &mut rng(10));
    let cfg = GradCheckConfig {
        probes: 8,
        ..GradCheckConfig::default()
    };
    let report = check_gradients(
        |g, v| {
            let y = g.gelu(v[0]);
            probe_loss(g, y, 81)
        },
        std::slice::from_ref(&x),
        &cfg,
    )
    .unwrap();
    assert!(report.max_rel_error() < TOL);
}
