mod common;

use assan::io::checkpoint::{checkpoint_load, checkpoint_save, decode, encode};
use assan::io::odtr::{self, odtr_read, odtr_write, OdtrData, OdtrFile};
use assan::model::{Assan, InitConfig, ModelConfig};
use assan::phantom::{Dataset, SceneSampler};
use assan::signal::PipelineConfig;
use assan::Error;
use assan_autograd::Tensor;
use ndarray::{ArrayD, IxDyn};
use num_complex::Complex32;
use proptest::prelude::*;

fn small_sampler() -> SceneSampler {
    SceneSampler {
        depth: 32,
        width: 32,
        ..SceneSampler::default()
    }
}

/// Bit patterns, so NaN payloads and signed zeros count.
fn bits(a: &ArrayD<f32>) -> Vec<u32> {
    a.iter().map(|v| v.to_bits()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn odtr_f32_round_trip_is_bit_exact(
        dims in prop::collection::vec(1usize..5, 1..4),
        raw in prop::collection::vec(any::<u32>(), 64),
        key in "[a-z]{1,8}",
    ) {
        let n: usize = dims.iter().product();
        let data: Vec<f32> = (0..n).map(|i| f32::from_bits(raw[i % raw.len()])).collect();
        let a = ArrayD::from_shape_vec(IxDyn(&dims), data).unwrap();
        let file = OdtrFile { data: OdtrData::F32(a.clone()), meta: serde_json::json!({ key: n }) };
        let back = odtr::decode(&odtr::encode(&file).unwrap()).unwrap();
        prop_assert_eq!(&back.meta, &file.meta);
        let OdtrData::F32(b) = back.data else { panic!("dtype changed") };
        prop_assert_eq!(b.shape(), a.shape());
        prop_assert_eq!(bits(&b), bits(&a));
    }

    #[test]
    fn odtr_complex_round_trip_is_exact(
        rows in 1usize..6, cols in 1usize..6,
        re in prop::collection::vec(-1e6f32..1e6, 36),
        im in prop::collection::vec(-1e6f32..1e6, 36),
    ) {
        let a = ArrayD::from_shape_fn(IxDyn(&[rows, cols]), |i| {
            let k = i[0] * cols + i[1];
            Complex32::new(re[k], im[k])
        });
        let file = OdtrFile { data: OdtrData::Complex64(a), meta: serde_json::Value::Null };
        prop_assert_eq!(odtr::decode(&odtr::encode(&file).unwrap()).unwrap(), file);
    }

    #[test]
    fn truncated_odtr_is_a_format_error(cut in 0usize..40) {
        let file = OdtrFile {
            data: OdtrData::F32(ArrayD::zeros(IxDyn(&[2, 3]))),
            meta: serde_json::json!({ "a": 1 }),
        };
        let bytes = odtr::encode(&file).unwrap();
        let cut = cut.min(bytes.len() - 1);
        let bad = matches!(odtr::decode(&bytes[..cut]), Err(Error::Format { .. }));
        prop_assert!(bad);
    }
}

#[test]
fn odtr_files_round_trip_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.odtr");
    let file = OdtrFile {
        data: OdtrData::F32(ArrayD::from_shape_fn(IxDyn(&[1, 3, 4]), |i| (i[1] * 4 + i[2]) as f32)),
        meta: serde_json::json!({ "scan_id": "x" }),
    };
    odtr_write(&path, &file).unwrap();
    assert_eq!(odtr_read(&path).unwrap(), file);
    let (flat, meta) = odtr::read_f32_2d(&path).unwrap();
    assert_eq!(flat.shape(), &[3, 4]);
    assert_eq!(meta["scan_id"], "x");
}

#[test]
fn checkpoint_reload_gives_bit_identical_forward() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let net = Assan::new(ModelConfig::desk(2), InitConfig::randomized(8, 0.2)).unwrap();
    checkpoint_save(&path, &net).unwrap();
    let back = checkpoint_load(&path).unwrap();
    assert_eq!(back.config, net.config);
    assert_eq!(back.params.names(), net.params.names());
    for (a, b) in back.params.tensors().iter().zip(net.params.tensors()) {
        assert_eq!(a.data(), b.data());
    }
    assert_eq!(encode(&back).unwrap(), encode(&net).unwrap());

    let x = Tensor::<f32>::randn(&[2, 16, 8], 1.0, &mut common::rng(3));
    let y0 = net.predict(&x).unwrap();
    let y1 = back.predict(&x).unwrap();
    let b0: Vec<u32> = y0.data().iter().map(|v| v.to_bits()).collect();
    let b1: Vec<u32> = y1.data().iter().map(|v| v.to_bits()).collect();
    assert_eq!(b0, b1);
}

#[test]
fn corrupted_checkpoint_is_rejected() {
    let net = Assan::new(ModelConfig::tiny(2), InitConfig::standard(0)).unwrap();
    let mut bytes = encode(&net).unwrap();
    assert!(decode(&bytes).is_ok());
    let n = bytes.len();
    bytes[n - 10] ^= 0x40;
    assert!(matches!(decode(&bytes), Err(Error::Format { .. })));
    assert!(matches!(decode(b"ODTR\x01\0\0\0"), Err(Error::Format { .. })));
}

#[test]
fn dataset_save_and_load_reproduce_samples() {
    let dir = tempfile::tempdir().unwrap();
    let sampler = small_sampler();
    let pipe = PipelineConfig::default();
    let data = Dataset::generate(4, 2, &sampler, 11, 0.25, &pipe).unwrap();
    let manifest = data.save(dir.path(), &sampler, 11, 0.25).unwrap();
    assert_eq!(manifest.entries.len(), 4);
    let back = Dataset::load(dir.path()).unwrap();
    assert_eq!(back.delta, 2);
    assert_eq!(back.test().len(), 1);
    for (a, b) in data.samples.iter().zip(&back.samples) {
        assert_eq!(a.id, b.id);
        assert_eq!(a.split, b.split);
        assert_eq!(a.scene, b.scene);
        assert_eq!(a.sparse, b.sparse);
        assert_eq!(a.target, b.target);
        assert_eq!(a.magnitude, b.magnitude);
        assert_eq!(a.input.data(), b.input.data());
    }
}
