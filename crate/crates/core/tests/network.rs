mod common;

use common::*;
use deeprft::blocks::{BlockKind, ConvKind};
use deeprft::metrics::flops_count;
use deeprft::network::{Model, NetworkConfig};
use deeprft::{Error, Shape, Tensor};

#[test]
fn parameter_counts_match_published_sizes() {
    for (name, cfg, want) in param_targets() {
        let got = Model::<f32>::build(cfg).unwrap().param_count() as f64;
        assert!((got / want - 1.0).abs() <= 0.05, "{name}: {got} vs {want}");
    }
}

#[test]
fn layer_table_agrees_with_built_stores() {
    let cfg = NetworkConfig { levels: 2, blocks_per_stage: 2, base_channels: 8, ..NetworkConfig::deeprft() };
    let m = Model::<f32>::build(cfg).unwrap();
    assert_eq!(m.stored_param_count(), m.training_param_count());
    let folded = m.fold_for_inference().unwrap();
    assert!(folded.is_folded() && !m.is_folded());
    assert_eq!(folded.stored_param_count(), m.param_count());
}

#[test]
fn macs_match_published_flops() {
    for (name, cfg, want) in mac_targets() {
        let got = flops_count(&cfg, 256, 256).total_macs as f64;
        assert!((got / want - 1.0).abs() <= 0.10, "{name}: {got} vs {want}");
    }
}

#[test]
fn macs_scale_with_area() {
    let cfg = NetworkConfig::deeprft_small();
    let a = flops_count(&cfg, 128, 128).total_macs as f64;
    let b = flops_count(&cfg, 256, 256).total_macs as f64;
    assert!((b / a - 4.0).abs() < 0.05);
}

#[test]
fn doconv_fold_matches_feature_composition() {
    let e = doconv_fold_error(FOLD_CASES, 3);
    assert!(e <= FOLD_TOL, "{e:.3e}");
}

#[test]
fn folded_network_preserves_outputs() {
    let small = NetworkConfig { levels: 3, blocks_per_stage: 2, base_channels: 8, ..NetworkConfig::deeprft() };
    assert!(network_fold_error(small, 32, 1) <= FOLD_TOL);
    assert!(network_fold_error(NetworkConfig::deeprft_small(), 16, 2) <= FOLD_TOL);
}

#[test]
fn zero_heads_make_a_fresh_model_the_identity() {
    let m = Model::<f32>::build(NetworkConfig { levels: 3, blocks_per_stage: 1, base_channels: 4, ..NetworkConfig::deeprft() }).unwrap();
    let x: Tensor<f32> = uniform(Shape::new(1, 3, 16, 24), 0.0, 1.0, 4);
    let outs = m.forward(&x).unwrap();
    assert_eq!(outs.len(), 3);
    assert_eq!(outs[0], x);
    assert_eq!(outs[1].shape(), Shape::new(1, 3, 8, 12));
    assert_eq!(outs[2].shape(), Shape::new(1, 3, 4, 6));
}

#[test]
fn rejects_indivisible_inputs_and_unknown_blocks() {
    let cfg = NetworkConfig { levels: 3, blocks_per_stage: 1, base_channels: 4, block_kind: BlockKind::ResBlock, conv_kind: ConvKind::Plain, ..NetworkConfig::deeprft() };
    let m = Model::<f32>::build(cfg).unwrap();
    assert!(matches!(m.forward(&Tensor::zeros(Shape::new(1, 3, 18, 16))), Err(Error::Shape { .. })));
    assert!(m.forward(&Tensor::zeros(Shape::new(1, 1, 16, 16))).is_err());
    let err = m.forward_tapped(&Tensor::zeros(Shape::new(1, 3, 16, 16)), "enc9.0").unwrap_err();
    assert!(err.to_string().contains("enc0.0"), "{err}");
}

#[test]
fn same_seed_same_weights() {
    let cfg = NetworkConfig { levels: 2, blocks_per_stage: 1, base_channels: 4, seed: 11, ..NetworkConfig::deeprft() };
    assert_eq!(Model::<f32>::build(cfg.clone()).unwrap(), Model::<f32>::build(cfg.clone()).unwrap());
    assert_ne!(Model::<f32>::build(cfg.clone()).unwrap(), Model::<f32>::build(NetworkConfig { seed: 12, ..cfg }).unwrap());
}
