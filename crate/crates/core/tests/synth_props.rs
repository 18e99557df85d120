use pmugan::phasor::{derive_features, Phase, PHASES, SAMPLE_RATE};
use pmugan::synth::*;
use proptest::prelude::*;

fn cfg(seed: u64, seconds: f64) -> FeederConfig {
    FeederConfig {
        seed,
        duration_s: seconds,
        ..FeederConfig::default()
    }
}

fn phase_set() -> impl Strategy<Value = Vec<Phase>> {
    (1u8..8).prop_map(|m| PHASES.into_iter().filter(|p| m & (1 << p.index()) != 0).collect())
}

fn spec_strategy(len: usize) -> impl Strategy<Value = EventSpec> {
    (0usize..7, 0usize..len - 1, phase_set(), 0.001f64..0.5, 0.5f64..8.0)
        .prop_flat_map(move |(k, start, phases, m, f)| {
            (1usize..=(len - start)).prop_map(move |dur| {
                let mut s = EventSpec::new(EventKind::ALL[k], start, dur, &phases, m);
                s.freq_hz = f;
                s
            })
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn injection_is_local(spec in spec_strategy(600), seed in 0u64..50) {
        let clean = generate_normal(&cfg(seed, 5.0)).unwrap();
        let mut stream = clean.clone();
        inject_event(&mut stream, &spec).unwrap();
        for (t, (a, b)) in clean.iter().zip(&stream).enumerate() {
            let inside = t >= spec.t_start && t < spec.t_end();
            for p in 0..3 {
                let touched = inside && spec.phases.iter().any(|q| q.index() == p);
                if !touched {
                    prop_assert_eq!(a.v_mag[p], b.v_mag[p]);
                    prop_assert_eq!(a.i_mag[p], b.i_mag[p]);
                    prop_assert_eq!(a.v_ang[p], b.v_ang[p]);
                    prop_assert_eq!(a.i_ang[p], b.i_ang[p]);
                }
            }
            prop_assert_eq!(a.timestamp, b.timestamp);
        }
    }

    #[test]
    fn kinds_touch_the_expected_quantities(spec in spec_strategy(600)) {
        let clean = generate_normal(&cfg(9, 5.0)).unwrap();
        let mut stream = clean.clone();
        inject_event(&mut stream, &spec).unwrap();
        for t in spec.t_start..spec.t_end() {
            let (a, b) = (derive_features(&clean[t]), derive_features(&stream[t]));
            for &p in &spec.phases {
                match spec.kind {
                    EventKind::VoltageSag | EventKind::VoltageDampedOsc => {
                        prop_assert_eq!(a.i(p), b.i(p));
                    }
                    EventKind::IpqSmall => {
                        // in-phase current leaves Q unchanged up to rounding
                        let s = b.v(p) * b.i(p);
                        prop_assert!((a.q(p) - b.q(p)).abs() <= 1e-12 * s);
                        prop_assert_eq!(a.v(p), b.v(p));
                    }
                    EventKind::Inrush | EventKind::Oscillation | EventKind::LongTransient => {
                        prop_assert_eq!(a.v(p), b.v(p));
                    }
                    EventKind::CapBank => {}
                }
            }
        }
    }
}

#[test]
fn frame_count_and_timestamps() {
    for secs in [0.5, 1.0, 7.25, 60.0] {
        let s = generate_normal(&cfg(1, secs)).unwrap();
        assert_eq!(s.len(), (secs * SAMPLE_RATE as f64).round() as usize);
        assert!(s.iter().enumerate().all(|(k, f)| f.timestamp == k as u64));
    }
}

#[test]
fn random_plans_are_disjoint_and_gapped() {
    let feeder = FeederConfig::default();
    for seed in 0..50 {
        let (specs, len) = random_event_plan(&feeder, &default_kind_plan(), 4, 8.0, seed);
        assert_eq!(specs.len(), 28);
        let gap = 8 * SAMPLE_RATE;
        assert!(specs[0].t_start >= gap);
        for w in specs.windows(2) {
            assert!(w[1].t_start >= w[0].t_end() + gap, "seed {seed}");
        }
        assert!(len >= specs.last().unwrap().t_end() + gap);
        for kind in EventKind::ALL {
            assert_eq!(specs.iter().filter(|s| s.kind == kind).count(), 4);
        }
    }
}

#[test]
fn corpus_is_deterministic_and_labels_match() {
    let feeder = cfg(3, 0.0);
    let (specs, len) = random_event_plan(&feeder, &default_kind_plan(), 2, 8.0, 11);
    let feeder = cfg(3, len as f64 / SAMPLE_RATE as f64);
    let (a, ta) = build_corpus(&feeder, &specs).unwrap();
    let (b, tb) = build_corpus(&feeder, &specs).unwrap();
    assert_eq!(a, b);
    assert_eq!(ta, tb);
    assert_eq!(ta.len(), specs.len());
    for (ev, spec) in ta.events.iter().zip(&specs) {
        assert_eq!((ev.kind, ev.t_start, ev.t_end), (spec.kind, spec.t_start, spec.t_end()));
    }
}

#[test]
fn overlapping_specs_are_rejected() {
    let a = EventSpec::new(EventKind::VoltageSag, 100, 50, &[Phase::A], 0.01);
    let b = EventSpec::new(EventKind::Inrush, 149, 10, &[Phase::B], 0.5);
    assert!(build_corpus(&cfg(0, 5.0), &[a, b]).is_err());
}

#[test]
fn out_of_range_events_are_rejected() {
    let mut s = generate_normal(&cfg(0, 1.0)).unwrap();
    let spec = EventSpec::new(EventKind::VoltageSag, 100, 21, &[Phase::A], 0.01);
    assert!(inject_event(&mut s, &spec).is_err());
    let spec = EventSpec::new(EventKind::VoltageSag, 100, 20, &[], 0.01);
    assert!(inject_event(&mut s, &spec).is_err());
}

#[test]
fn contamination_hits_the_requested_share() {
    let feeder = FeederConfig::default();
    let len = 216_000;
    for share in [0.005, 0.02, 0.05] {
        let specs = contamination_plan(&feeder, len, 30, share, 4);
        let covered: usize = specs.iter().map(|s| s.duration).sum();
        let got = covered as f64 / len as f64;
        assert!((got - share).abs() <= 30.0 / len as f64, "share {share}: got {got}");
        for w in specs.windows(2) {
            assert!(w[1].t_start >= w[0].t_end());
        }
        assert!(specs.last().unwrap().t_end() <= len);
    }
}

#[test]
fn small_tier_magnitudes_scale_with_noise() {
    use rand::SeedableRng;
    let feeder = FeederConfig::default();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    for _ in 0..1000 {
        let v = draw_magnitude(EventKind::VoltageSag, Tier::Small, &feeder, &mut rng);
        assert!((feeder.noise_v..3.0 * feeder.noise_v).contains(&v));
        let i = draw_magnitude(EventKind::IpqSmall, Tier::Small, &feeder, &mut rng);
        assert!((feeder.noise_i..3.0 * feeder.noise_i).contains(&i));
        let big = draw_magnitude(EventKind::Oscillation, Tier::Large, &feeder, &mut rng);
        assert!(big >= 10.0 * feeder.noise_i);
    }
}
