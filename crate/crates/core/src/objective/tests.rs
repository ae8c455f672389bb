use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::adcore::gradcheck;
use crate::nets::{init_mlp, OutputActivation};
use crate::sparsity::binomial;

fn half_discriminator() -> MlpModel {
    // Zero weights and bias: sigmoid(0) = 1/2 everywhere.
    let mut d = init_mlp(&[2, 4, 1], OutputActivation::Sigmoid, 1).unwrap();
    for p in d.params_mut() {
        p.data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    d
}

fn batch(rows: &[[f64; 2]]) -> Tensor {
    Tensor::from_rows(rows)
}

#[test]
fn uninformative_discriminator_losses() {
    let disc = half_discriminator();
    let gen = init_mlp(&[2, 8, 2], OutputActivation::Identity, 3).unwrap();
    let mut g = Graph::new();
    let gb = gen.bind(&mut g);
    let db = disc.bind(&mut g);
    let x = batch(&[[0.1, 0.2], [-0.4, 0.9], [0.0, 0.0]]);
    let y = batch(&[[1.0, 1.0], [0.5, -0.5]]);
    let (dl, gl) = gan_losses(&mut g, &gb, &db, &x, &y).unwrap();
    let ln2 = std::f64::consts::LN_2;
    assert!((g.value(dl).item() - 2.0 * ln2).abs() < 1e-12);
    assert!((g.value(gl).item() - ln2).abs() < 1e-12);
}

#[test]
fn saturated_discriminator_stays_finite() {
    // Huge output bias drives sigmoid to exactly 1 in f64; the clamp keeps
    // log(1 - d) finite.
    let mut disc = half_discriminator();
    disc.params_mut().last().unwrap().data_mut()[0] = 800.0;
    let mut g = Graph::new();
    let db = disc.bind(&mut g);
    let real = g.input(batch(&[[0.0, 0.0]]));
    let fake = g.input(batch(&[[1.0, 1.0]]));
    let dl = discriminator_loss(&mut g, &db, real, fake).unwrap();
    let expected = -(1e-7f64).ln();
    assert!((g.value(dl).item() - expected).abs() < 1e-6);
}

#[test]
fn empty_batch_is_an_error() {
    let disc = half_discriminator();
    let gen = init_mlp(&[2, 4, 2], OutputActivation::Identity, 3).unwrap();
    let mut g = Graph::new();
    let gb = gen.bind(&mut g);
    let db = disc.bind(&mut g);
    let err = gan_losses(&mut g, &gb, &db, &Tensor::zeros(0, 2), &batch(&[[0.0, 0.0]]));
    assert!(matches!(err, Err(ObjectiveError::EmptyBatch)));
}

#[test]
fn gan_losses_pass_gradcheck() {
    let gen = init_mlp(&[2, 5, 2], OutputActivation::Identity, 11).unwrap();
    let disc = init_mlp(&[2, 6, 1], OutputActivation::Sigmoid, 12).unwrap();
    let x = batch(&[[0.3, -0.2], [0.7, 0.1], [-0.5, 0.6]]);
    let y = batch(&[[0.2, 0.4], [-0.9, 0.3]]);
    for pick_disc in [true, false] {
        let mut g = Graph::new();
        let gb = gen.bind(&mut g);
        let db = disc.bind(&mut g);
        let (dl, gl) = gan_losses(&mut g, &gb, &db, &x, &y).unwrap();
        let root = if pick_disc { dl } else { gl };
        let report = gradcheck(&mut g, root, 1e-6, 1e-5).unwrap();
        assert!(report.passed, "{report:?}");
    }
}

fn linear_gen(w: [[f64; 2]; 2], b: [f64; 2]) -> MlpModel {
    MlpModel::linear(
        Tensor::from_rows(&[w[0], w[1]]),
        Tensor::row(&b),
    )
    .unwrap()
}

#[test]
fn anchor_loss_single_anchor() {
    // g(x) = x + (3, 4); anchor (0,0) -> (0,0) gives 9 + 16.
    let gen = linear_gen([[1.0, 0.0], [0.0, 1.0]], [3.0, 4.0]);
    let mut g = Graph::new();
    let gb = gen.bind(&mut g);
    let anchors = AnchorSet::new(vec![(vec![0.0, 0.0], vec![0.0, 0.0])]);
    let l = anchor_loss(&mut g, &gb, &anchors).unwrap();
    assert!((g.value(l).item() - 25.0).abs() < 1e-12);
}

#[test]
fn anchor_loss_is_a_mean() {
    // Both anchors have residual (2, 3), so the mean is 4 + 9.
    let gen = linear_gen([[1.0, 0.0], [0.0, 1.0]], [2.0, 3.0]);
    let mut g = Graph::new();
    let gb = gen.bind(&mut g);
    let anchors = AnchorSet::new(vec![
        (vec![0.0, 0.0], vec![0.0, 0.0]),
        (vec![1.0, 1.0], vec![1.0, 1.0]),
    ]);
    let l = anchor_loss(&mut g, &gb, &anchors).unwrap();
    assert!((g.value(l).item() - 13.0).abs() < 1e-12);
}

#[test]
fn anchor_loss_requires_anchors() {
    let gen = linear_gen([[1.0, 0.0], [0.0, 1.0]], [0.0, 0.0]);
    let mut g = Graph::new();
    let gb = gen.bind(&mut g);
    assert!(matches!(
        anchor_loss(&mut g, &gb, &AnchorSet::default()),
        Err(ObjectiveError::NoAnchors)
    ));
    let bad = AnchorSet::new(vec![(vec![0.0], vec![0.0, 0.0])]);
    assert!(matches!(
        anchor_loss(&mut g, &gb, &bad),
        Err(ObjectiveError::AnchorShape { .. })
    ));
}

#[test]
fn inv_loss_uses_l1() {
    // g = identity, f = shift by (0.5, -0.5): |0.5| + |-0.5| = 1.
    let gen = linear_gen([[1.0, 0.0], [0.0, 1.0]], [0.0, 0.0]);
    let rec = linear_gen([[1.0, 0.0], [0.0, 1.0]], [0.5, -0.5]);
    let mut g = Graph::new();
    let gb = gen.bind(&mut g);
    let rb = rec.bind(&mut g);
    let x = batch(&[[0.2, 0.1], [-1.0, 3.0]]);
    let l = inv_loss(&mut g, &gb, &rb, &x).unwrap();
    assert!((g.value(l).item() - 1.0).abs() < 1e-12);
}

#[test]
fn inv_and_anchor_pass_gradcheck() {
    let gen = init_mlp(&[2, 5, 2], OutputActivation::Identity, 21).unwrap();
    let rec = init_mlp(&[2, 5, 2], OutputActivation::Identity, 22).unwrap();
    let x = batch(&[[0.3, -0.2], [0.7, 0.1]]);
    let anchors = AnchorSet::new(vec![(vec![0.1, 0.2], vec![0.4, -0.3])]);
    let mut g = Graph::new();
    let gb = gen.bind(&mut g);
    let rb = rec.bind(&mut g);
    let inv = inv_loss(&mut g, &gb, &rb, &x).unwrap();
    let anch = anchor_loss(&mut g, &gb, &anchors).unwrap();
    let both = g.add(inv, anch).unwrap();
    let report = gradcheck(&mut g, both, 1e-6, 1e-5).unwrap();
    assert!(report.passed, "{report:?}");
}

#[test]
fn weighted_total() {
    let mut g = Graph::new();
    let parts = LossParts {
        adversarial: g.parameter(Tensor::scalar(0.2)),
        anchor: Some(g.parameter(Tensor::scalar(0.3))),
        sparsity: Some(g.parameter(Tensor::scalar(0.4))),
        inv: Some(g.parameter(Tensor::scalar(0.5))),
    };
    let w = LossWeights::new(1.0, 1.0, 1.0).unwrap();
    let t = total_generator_loss(&mut g, &parts, &w).unwrap();
    assert!((g.value(t).item() - 1.4).abs() < 1e-12);

    let w = LossWeights::new(2.0, 0.0, 0.5).unwrap();
    let t = total_generator_loss(&mut g, &parts, &w).unwrap();
    assert!((g.value(t).item() - (0.2 + 0.6 + 0.25)).abs() < 1e-12);
}

#[test]
fn missing_weighted_part_is_an_error() {
    let mut g = Graph::new();
    let parts = LossParts {
        adversarial: g.parameter(Tensor::scalar(0.2)),
        anchor: None,
        sparsity: None,
        inv: None,
    };
    let w = LossWeights::new(1.0, 0.0, 0.0).unwrap();
    assert!(matches!(
        total_generator_loss(&mut g, &parts, &w),
        Err(ObjectiveError::MissingPart("anchor"))
    ));
    let none = LossWeights::new(0.0, 0.0, 0.0).unwrap();
    let t = total_generator_loss(&mut g, &parts, &none).unwrap();
    assert_eq!(t, parts.adversarial);
}

#[test]
fn negative_weight_rejected() {
    assert!(LossWeights::new(-1.0, 0.0, 0.0).is_err());
    assert!(LossWeights::new(0.0, f64::NAN, 0.0).is_err());
}

/// `E_r E_ε ||J (r ⊙ ε)||_1` for unit Gaussians: each row is a centred normal
/// with standard deviation `sqrt(sum_{j in r} J_ij^2)`, and `E|N(0, s^2)| =
/// s sqrt(2/π)`. Averaged over all masks of size `s`.
fn expected_fd_l1(j: &Tensor, s: usize) -> f64 {
    let d = j.rows();
    let mut total = 0.0;
    for bits in 0u32..(1 << d) {
        if bits.count_ones() as usize != s {
            continue;
        }
        for i in 0..d {
            let var: f64 = (0..d)
                .filter(|c| bits >> c & 1 == 1)
                .map(|c| j.get(i, c).powi(2))
                .sum();
            total += var.sqrt() * (2.0 / std::f64::consts::PI).sqrt();
        }
    }
    total / binomial(d, s)
}

#[test]
fn masked_fd_matches_gaussian_expectation_on_linear_map() {
    let jt = Tensor::from_rows(&[
        [1.0, 0.0, -2.0, 0.0],
        [0.5, 3.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.25],
        [0.0, -1.0, 0.0, 2.0],
    ]);
    // Row convention: g(x) = x W so J = W^T.
    let model = MlpModel::linear(jt.transpose(), Tensor::zeros(1, 4)).unwrap();
    let s = 2;
    let spec = ProbeSpec::new(4, s, 1e-3, 40_000).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut g = Graph::new();
    let bound = model.bind(&mut g);
    let x = Tensor::row(&[0.1, -0.2, 0.3, 0.0]);
    let l = sparsity_loss(&mut g, &model, &bound, &x, &spec, SparsityMode::MaskedFiniteDifference, &mut rng)
        .unwrap();
    let expected = expected_fd_l1(&jt, s);
    let got = g.value(l).item();
    assert!((got - expected).abs() / expected < 0.02, "{got} vs {expected}");
}

#[test]
fn exact_mode_on_linear_map_is_entrywise_l1() {
    let w = Tensor::from_rows(&[[1.0, -2.0], [0.5, 0.0]]);
    let model = MlpModel::linear(w, Tensor::zeros(1, 2)).unwrap();
    let spec = ProbeSpec::new(2, 1, 1e-3, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut g = Graph::new();
    let bound = model.bind(&mut g);
    let x = batch(&[[0.0, 0.0], [1.0, 1.0]]);
    let l = sparsity_loss(&mut g, &model, &bound, &x, &spec, SparsityMode::ExactJacobianL1, &mut rng)
        .unwrap();
    assert!((g.value(l).item() - 3.5).abs() < 1e-12);
}

#[test]
fn masked_fd_rejects_dimension_mismatch() {
    let model = init_mlp(&[2, 4, 2], OutputActivation::Identity, 0).unwrap();
    let spec = ProbeSpec::new(3, 1, 1e-3, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut g = Graph::new();
    let bound = model.bind(&mut g);
    let r = sparsity_loss(
        &mut g,
        &model,
        &bound,
        &batch(&[[0.0, 0.0]]),
        &spec,
        SparsityMode::MaskedFiniteDifference,
        &mut rng,
    );
    assert!(r.is_err());
}

#[test]
fn mode_names_round_trip() {
    for m in [SparsityMode::ExactJacobianL1, SparsityMode::MaskedFiniteDifference] {
        assert_eq!(SparsityMode::from_name(m.name()), Some(m));
    }
    assert_eq!(SparsityMode::from_name("l0"), None);
}
