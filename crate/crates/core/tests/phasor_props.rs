use std::f64::consts::PI;

use num_complex::Complex64;
use pmugan::phasor::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_frame(rng: &mut impl Rng, ts: u64) -> PhasorFrame {
    let mut f = PhasorFrame {
        timestamp: ts,
        v_mag: [0.0; 3],
        v_ang: [0.0; 3],
        i_mag: [0.0; 3],
        i_ang: [0.0; 3],
    };
    for p in 0..3 {
        f.v_mag[p] = rng.gen_range(100.0..20_000.0);
        f.i_mag[p] = rng.gen_range(0.1..800.0);
        // half-open (-pi, pi]
        f.v_ang[p] = PI - rng.gen_range(0.0..2.0 * PI);
        f.i_ang[p] = PI - rng.gen_range(0.0..2.0 * PI);
    }
    f
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

#[test]
fn features_match_complex_power_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for ts in 0..10_000 {
        let f = random_frame(&mut rng, ts);
        let s = derive_features(&f);
        for p in PHASES {
            let k = p.index();
            // S = V * conj(I)
            let v = Complex64::from_polar(f.v_mag[k], f.v_ang[k]);
            let i = Complex64::from_polar(f.i_mag[k], f.i_ang[k]);
            let power = v * i.conj();
            let vi = f.v_mag[k] * f.i_mag[k];
            assert_eq!(s.v(p), f.v_mag[k]);
            assert_eq!(s.i(p), f.i_mag[k]);
            // relative to |S|: a component near zero has no meaningful own scale
            worst = worst.max((s.p(p) - power.re).abs() / vi);
            worst = worst.max((s.q(p) - power.im).abs() / vi);
        }
    }
    assert!(worst < 1e-12, "worst relative error {worst:e}");
}

#[test]
fn lagging_current_gives_positive_reactive_power() {
    let f = PhasorFrame {
        timestamp: 0,
        v_mag: [1.0; 3],
        v_ang: [0.0; 3],
        i_mag: [1.0; 3],
        i_ang: [-PI / 6.0; 3],
    };
    let s = derive_features(&f);
    assert!(rel(s.p(Phase::A), (PI / 6.0).cos()) < 1e-15);
    assert!(rel(s.q(Phase::A), 0.5) < 1e-15);
}

fn frame_strategy() -> impl Strategy<Value = PhasorFrame> {
    (
        prop::array::uniform3(0.0f64..1e5),
        prop::array::uniform3(-PI + 1e-12..=PI),
        prop::array::uniform3(0.0f64..1e4),
        prop::array::uniform3(-PI + 1e-12..=PI),
    )
        .prop_map(|(v_mag, v_ang, i_mag, i_ang)| PhasorFrame {
            timestamp: 0,
            v_mag,
            v_ang,
            i_mag,
            i_ang,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn apparent_power_bound(f in frame_strategy()) {
        let s = derive_features(&f);
        for p in PHASES {
            let vi = s.v(p) * s.i(p);
            prop_assert!(s.p(p).powi(2) + s.q(p).powi(2) <= vi * vi * (1.0 + 1e-9));
        }
    }

    #[test]
    fn wrapped_angles_stay_in_range(theta in -100.0f64..100.0) {
        let w = wrap_angle(theta);
        prop_assert!(w > -PI && w <= PI);
        prop_assert!(((theta - w) / (2.0 * PI) - ((theta - w) / (2.0 * PI)).round()).abs() < 1e-9);
    }

    #[test]
    fn normalizer_round_trip(
        rows in prop::collection::vec(prop::array::uniform12(-1e6f64..1e6), 2..40),
        probe in prop::array::uniform12(-2e6f64..2e6),
    ) {
        let samples: Vec<FeatureSample> = rows.into_iter().map(FeatureSample).collect();
        let n = fit_normalizer(&samples).unwrap();
        let x = FeatureSample(probe);
        let back = n.denormalize(&n.normalize(&x));
        for k in 0..NUM_FEATURES {
            let scale = n.hi[k] - n.lo[k];
            prop_assert!((back.0[k] - x.0[k]).abs() <= 1e-9 * (scale + x.0[k].abs()));
        }
        // training data lands inside [-1, 1]
        for s in &samples {
            for &v in &n.normalize(s).0 {
                prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&v));
            }
        }
    }

    #[test]
    fn window_count_formula(len in 0usize..2000, size in 1usize..100, stride_frac in 0.01f64..=1.0) {
        let stride = ((size as f64 * stride_frac).ceil() as usize).clamp(1, size);
        let samples = vec![FeatureSample([0.0; NUM_FEATURES]); len];
        let blocks = window_stream(&samples, size, stride).unwrap();
        let expected = if len >= size { (len - size) / stride + 1 } else { 0 };
        prop_assert_eq!(blocks.len(), expected);
        prop_assert_eq!(window_count(len, size, stride), expected);
        for (k, b) in blocks.iter().enumerate() {
            prop_assert_eq!(b.start_index, k * stride);
            prop_assert_eq!(b.features.nrows(), size);
        }
    }
}

#[test]
fn constant_feature_gets_epsilon_floor() {
    let samples = vec![FeatureSample([3.0; NUM_FEATURES]); 5];
    let n = fit_normalizer(&samples).unwrap();
    for k in 0..NUM_FEATURES {
        assert_eq!(n.hi[k] - n.lo[k], (3.0 + NORMALIZER_EPS) - 3.0);
    }
    let out = n.normalize(&FeatureSample([3.0; NUM_FEATURES]));
    assert!(out.0.iter().all(|v| *v == -1.0));
}

#[test]
fn projections_pick_voltage_and_the_rest() {
    let samples: Vec<FeatureSample> = (0..40)
        .map(|t| FeatureSample(std::array::from_fn(|k| (100 * t + k) as f64)))
        .collect();
    let block = &window_stream(&samples, 40, 20).unwrap()[0];
    let v = block.project(FeatureSet::V3).unwrap();
    let ipq = block.project(FeatureSet::Ipq9).unwrap();
    assert_eq!(v.features.ncols(), 3);
    assert_eq!(ipq.features.ncols(), 9);
    assert_eq!(v.features[[7, 2]], 702.0);
    assert_eq!(ipq.features[[7, 0]], 703.0);
    assert_eq!(ipq.features[[7, 8]], 711.0);
    assert!(v.project(FeatureSet::Ipq9).is_err());
}
