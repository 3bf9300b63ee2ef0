mod common;

use common::{gradient_suite, scan_oracle_max_error, GRAD_TOL};

#[test]
fn every_block_passes_finite_differences() {
    for (name, err) in gradient_suite() {
        assert!(err < GRAD_TOL, "{name}: relative error {err:e}");
    }
}

#[test]
fn production_scan_matches_sequential_oracle() {
    let err = scan_oracle_max_error(25, 77);
    assert!(err < 1e-10, "max deviation {err:e}");
}

#[test]
fn full_network_gradient_over_seeds() {
    let cfg = assan::model::ModelConfig::tiny(2);
    for seed in 0..3 {
        let err = common::full_network_check(&cfg, 100 + seed);
        assert!(err < GRAD_TOL, "seed {seed}: {err:e}");
    }
}
