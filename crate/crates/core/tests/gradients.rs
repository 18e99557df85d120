//! Analytic BPTT gradients against central finite differences.

use ndarray::Array2;
use pmugan::gan::{d_loss_from_logits, d_loss_grad, g_loss_from_logits, g_loss_grad};
use pmugan::nn::{gradient_check, time_major, Architecture, Network, Parameters};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const W: usize = 5;
const HIDDEN: usize = 4;
const FEATURES: usize = 3;
const NOISE: usize = 2;
const BATCH: usize = 3;
const STEP: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn small_nets(seed: u64) -> (Network, Network, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = Network::init(
        &Architecture {
            input_dim: FEATURES,
            hidden: vec![HIDDEN, HIDDEN],
            output_dim: 1,
            activation: pmugan::nn::Activation::Sigmoid,
        },
        &mut rng,
    )
    .unwrap();
    let g = Network::init(
        &Architecture {
            input_dim: NOISE,
            hidden: vec![HIDDEN, HIDDEN],
            output_dim: FEATURES,
            activation: pmugan::nn::Activation::Tanh,
        },
        &mut rng,
    )
    .unwrap();
    (d, g, rng)
}

fn steps(rng: &mut impl Rng, width: usize, scale: f64) -> Vec<Array2<f64>> {
    (0..W)
        .map(|_| Array2::from_shape_fn((BATCH, width), |_| scale * rng.gen_range(-1.0..1.0)))
        .collect()
}

#[test]
fn discriminator_loss_gradients_match_finite_differences() {
    for seed in 0..20 {
        let (d, _, mut rng) = small_nets(seed);
        let real = steps(&mut rng, FEATURES, 1.5);
        let fake = steps(&mut rng, FEATURES, 1.0);
        let (_, analytic) = d_loss_grad(&d, &real, &fake).unwrap();
        let loss = |net: &Network| {
            let r = net.disc_forward(&real).unwrap().logits;
            let f = net.disc_forward(&fake).unwrap().logits;
            d_loss_from_logits(&r, &f).unwrap()
        };
        let report = gradient_check(&d, &analytic, loss, STEP, TOL);
        assert!(report.passed, "seed {seed}: {report:?}");
        assert_eq!(report.checked, d.num_params());
    }
}

#[test]
fn generator_loss_gradients_through_composition() {
    for non_saturating in [false, true] {
        for seed in 100..120 {
            let (d, g, mut rng) = small_nets(seed);
            let z = steps(&mut rng, NOISE, 1.0);
            let (_, analytic) = g_loss_grad(&d, &g, &z, non_saturating).unwrap();
            let loss = |net: &Network| {
                let out = net.gen_forward(&z).unwrap().out;
                g_loss_from_logits(&d.disc_forward(&out).unwrap().logits, non_saturating).unwrap()
            };
            let report = gradient_check(&g, &analytic, loss, STEP, TOL);
            assert!(report.passed, "seed {seed} ns={non_saturating}: {report:?}");
        }
    }
}

#[test]
fn loss_independent_parameter_has_zero_gradient() {
    // Discriminator output only reads h_T through the head; a head bias on
    // a zero-weight head still has gradient, but with a zero head weight
    // matrix the lstm parameters receive none.
    let (mut d, _, mut rng) = small_nets(7);
    d.head.w.fill(0.0);
    let real = steps(&mut rng, FEATURES, 1.0);
    let fake = steps(&mut rng, FEATURES, 1.0);
    let (_, grads) = d_loss_grad(&d, &real, &fake).unwrap();
    for layer in &grads.lstm {
        assert!(layer.w_x.iter().chain(layer.w_h.iter()).chain(layer.b.iter()).all(|&v| v == 0.0));
    }
    assert!(grads.head.b[0] != 0.0);
}

#[test]
fn corrupted_gate_gradient_is_caught() {
    let (d, _, mut rng) = small_nets(3);
    let real = steps(&mut rng, FEATURES, 1.0);
    let fake = steps(&mut rng, FEATURES, 1.0);
    let (_, mut analytic) = d_loss_grad(&d, &real, &fake).unwrap();
    // perturb the forget-gate bias gradient of the first layer
    let h = d.lstm[0].hidden_dim;
    analytic.lstm[0].b[h] = analytic.lstm[0].b[h] * 1.01 + 1e-4;
    let loss = |net: &Network| {
        let r = net.disc_forward(&real).unwrap().logits;
        let f = net.disc_forward(&fake).unwrap().logits;
        d_loss_from_logits(&r, &f).unwrap()
    };
    let report = gradient_check(&d, &analytic, &loss, STEP, TOL);
    assert!(!report.passed);
    assert_eq!(report.worst, Some(("lstm0.b".to_string(), h)));

    let lenient = gradient_check(&d, &analytic, &loss, STEP, f64::INFINITY);
    assert!(lenient.passed);
}

#[test]
fn single_block_score_matches_batched_forward() {
    let (d, _, mut rng) = small_nets(11);
    let blocks: Vec<Array2<f64>> = (0..4)
        .map(|_| Array2::from_shape_fn((W, FEATURES), |_| rng.gen_range(-1.0..1.0)))
        .collect();
    let refs: Vec<&Array2<f64>> = blocks.iter().collect();
    let batched = d.disc_forward(&time_major(&refs)).unwrap().scores();
    for (b, s) in blocks.iter().zip(batched.iter()) {
        assert!((d.score(b).unwrap() - s).abs() < 1e-15);
    }
}
