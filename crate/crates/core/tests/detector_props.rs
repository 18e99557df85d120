mod common;

use ndarray::Array2;
use pmugan::detector::*;
use pmugan::phasor::{FeatureBlock, FeatureSet, NUM_FEATURES};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn dist_strategy() -> impl Strategy<Value = ScoreDistribution> {
    (0.0f64..1.0, 1e-6f64..0.3).prop_map(|(mean, std)| ScoreDistribution { mean, std })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn larger_z_never_adds_flags(d in dist_strategy(), s in 0.0f64..1.0, z1 in 0.1f64..6.0, dz in 0.0f64..4.0) {
        let z2 = z1 + dz;
        if d.is_event(s, z2) {
            prop_assert!(d.is_event(s, z1));
        }
    }

    #[test]
    fn interval_endpoints_flag(d in dist_strategy(), z in 0.1f64..6.0) {
        let half = z * d.std;
        prop_assert!(d.is_event(d.mean + half, z));
        prop_assert!(d.is_event(d.mean - half, z));
        prop_assert!(!d.is_event(d.mean, z));
    }

    #[test]
    fn merged_intervals_are_sorted_disjoint_and_cover_flags(
        flags in prop::collection::vec(any::<bool>(), 0..200),
        window in 1usize..60,
        stride_frac in 0.05f64..=1.0,
        offset in 0usize..1000,
    ) {
        let stride = ((window as f64 * stride_frac).ceil() as usize).clamp(1, window);
        let windows: Vec<(usize, bool)> = flags.iter().enumerate().map(|(k, &f)| (offset + k * stride, f)).collect();
        let merged = merge_flags(&windows, window);
        for w in merged.windows(2) {
            prop_assert!(w[0].1 < w[1].0, "not disjoint and separated: {:?}", w);
        }
        for &(s, e) in &merged {
            prop_assert!(s < e);
        }
        // union of flagged windows equals union of intervals
        let span = offset + flags.len() * stride + window + 1;
        let mut expected = vec![false; span];
        for &(s, f) in &windows {
            if f {
                expected[s..s + window].iter_mut().for_each(|x| *x = true);
            }
        }
        let mut got = vec![false; span];
        for &(s, e) in &merged {
            got[s..e].iter_mut().for_each(|x| *x = true);
        }
        prop_assert_eq!(got, expected);
    }
}

#[test]
fn enhanced_flags_are_a_superset_of_each_component() {
    let (gan_ipq, _) = common::tiny_model(FeatureSet::Ipq9, 3);
    let (gan_v, _) = common::tiny_model(FeatureSet::V3, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let frames = common::clean_frames(5, 5.0);
    let samples: Vec<_> = frames.iter().map(pmugan::phasor::derive_features).collect();
    for case in 0..1000 {
        let dist_ipq = ScoreDistribution {
            mean: rng.gen_range(0.3..0.7),
            std: rng.gen_range(1e-5..0.05),
        };
        let dist_v = ScoreDistribution {
            mean: rng.gen_range(0.3..0.7),
            std: rng.gen_range(1e-5..0.05),
        };
        let det = EnhancedDetector {
            gan_ipq: gan_ipq.clone(),
            dist_ipq,
            gan_v: gan_v.clone(),
            dist_v,
            cfg: DetectorConfig::default(),
        };
        // a real window with a random multiplicative disturbance
        let start = rng.gen_range(0..samples.len() - 40);
        let scale = 1.0 + rng.gen_range(-0.2..0.2);
        let block = FeatureBlock {
            features: Array2::from_shape_fn((40, NUM_FEATURES), |(r, c)| {
                samples[start + r].0[c] * if c >= 3 && r >= 20 { scale } else { 1.0 }
            }),
            start_index: start,
            feature_set: FeatureSet::All12,
        };
        let (flag, s1, s2) = detect_enhanced(&det, &block).unwrap();
        let ipq_alone = dist_ipq.is_event(s1, 3.0);
        let v_alone = dist_v.is_event(s2, 3.0);
        assert!(!ipq_alone || flag, "case {case}");
        assert!(!v_alone || flag, "case {case}");
        assert_eq!(flag, ipq_alone || v_alone);
    }
}

#[test]
fn score_fit_matches_sampling_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let normal = Normal::new(0.5, 0.01).unwrap();
    let scores: Vec<f64> = (0..100_000).map(|_| normal.sample(&mut rng)).collect();
    let d = fit_score_distribution(&scores).unwrap();
    assert!((d.mean - 0.5).abs() < 1.5e-4, "mean {}", d.mean);
    assert!((d.std - 0.01).abs() < 1.5e-4, "std {}", d.std);
    // unvectorized two-pass oracle
    let mut sum = 0.0;
    for s in &scores {
        sum += s;
    }
    let mean = sum / scores.len() as f64;
    let mut ss = 0.0;
    for s in &scores {
        ss += (s - mean) * (s - mean);
    }
    let std = (ss / (scores.len() - 1) as f64).sqrt();
    assert!((d.mean - mean).abs() < 1e-12);
    assert!((d.std - std).abs() < 1e-12);
}

#[test]
fn constant_scores_get_floored_std() {
    let d = fit_score_distribution(&[0.42; 10]).unwrap();
    assert_eq!(d.std, STD_FLOOR);
    assert!(d.is_event(0.42 + 1e-6, 3.0));
    assert!(!d.is_event(0.42, 3.0));
}

#[test]
fn identical_blocks_score_identically() {
    let (gan, dist) = common::tiny_model(FeatureSet::All12, 1);
    let frames = common::clean_frames(8, 2.0);
    let det = BasicDetector {
        gan,
        dist,
        cfg: DetectorConfig::default(),
    };
    let a = run_stream(&det, &frames).unwrap();
    let b = run_stream(&det, &frames).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.windows.len(), (frames.len() - 40) / 20 + 1);
}

#[test]
fn stream_rejects_gaps_and_disorder() {
    let (gan, dist) = common::tiny_model(FeatureSet::All12, 2);
    let det = BasicDetector {
        gan,
        dist,
        cfg: DetectorConfig::default(),
    };
    let mut frames = common::clean_frames(8, 1.0);
    let mut proc = StreamProcessor::new(&det);
    for f in &frames[..10] {
        proc.push(f).unwrap();
    }
    assert!(matches!(proc.push(&frames[5]), Err(pmugan::Error::Unordered { .. })));
    frames[20].timestamp += 1;
    let mut proc = StreamProcessor::new(&det);
    let err = frames[..21].iter().try_for_each(|f| proc.push(f).map(|_| ())).unwrap_err();
    assert!(matches!(err, pmugan::Error::InvalidFrame { row: 20, .. }), "{err}");
}

#[test]
fn basic_detector_refuses_partial_models() {
    let (gan, dist) = common::tiny_model(FeatureSet::V3, 6);
    let det = BasicDetector {
        gan,
        dist,
        cfg: DetectorConfig::default(),
    };
    let frames = common::clean_frames(1, 1.0);
    assert!(matches!(run_stream(&det, &frames), Err(pmugan::Error::FeatureSetMismatch { .. })));
}
