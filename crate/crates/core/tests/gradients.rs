mod common;

use common::{check_gradients, mini_example, mini_model};
use pse_core::model::VariantKind;
use pse_core::train::{example_gradient, LossWeights};

fn run(weights: LossWeights, variant: VariantKind) {
    let model = mini_model(variant, 12);
    let ex = mini_example(&model, 3);
    let r = check_gradients(&model, &ex, &weights, 3, 1e-5);
    assert!(r.resolvable >= 20, "only {} resolvable coordinates", r.resolvable);
    assert_eq!(r.floor_violations, 0);
    assert!(r.worst < 1e-3, "{weights:?} {variant}: worst relative error {}", r.worst);
    for kind in ["conv2d", "grouped-linear", "gru-cell"] {
        assert!(r.kinds.contains(&kind));
    }
}

#[test]
fn spectral_term_gradients() {
    run(LossWeights { spec: 1.0, mr: 0.0, os: 0.0 }, VariantKind::Unified);
}

#[test]
fn multires_term_gradients() {
    run(LossWeights { spec: 0.0, mr: 1.0, os: 0.0 }, VariantKind::DualBoth);
}

#[test]
fn oversuppression_term_gradients() {
    run(LossWeights { spec: 0.0, mr: 0.0, os: 1.0 }, VariantKind::DualErb);
}

#[test]
fn combined_objective_gradients() {
    run(LossWeights::default(), VariantKind::Baseline);
}

#[test]
fn scaling_the_loss_scales_the_gradient() {
    let model = mini_model(VariantKind::Unified, 1);
    let ex = mini_example(&model, 1);
    let w = LossWeights::default();
    let w3 = LossWeights { spec: 3e3, mr: 1.5e3, os: 1.5e3 };
    let (l1, g1) = example_gradient(&model, &ex, &w).unwrap();
    let (l3, g3) = example_gradient(&model, &ex, &w3).unwrap();
    assert!((l3 - 3.0 * l1).abs() <= 1e-12 * l3.abs());
    for (a, b) in g1.tensors().flatten().zip(g3.tensors().flatten()) {
        assert!((3.0 * a - b).abs() <= 1e-9 * b.abs().max(1e-12));
    }
}
