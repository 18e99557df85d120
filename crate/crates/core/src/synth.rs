//! Synthetic 120 Hz feeder streams with labeled event injection.
//!
//! Normal operation is a slow sinusoidal load drift plus i.i.d. Gaussian
//! measurement noise. Events are parametric envelopes applied in place to
//! magnitudes (and, for reactive/active current injections, to the current
//! phasor) over a labeled interval.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::phasor::{wrap_angle, Phase, PhasorFrame, SAMPLE_RATE};

#[derive(Debug, Clone, PartialEq)]
pub struct FeederConfig {
    pub seed: u64,
    pub duration_s: f64,
    /// Nominal per-phase voltage magnitude, volts.
    pub base_v: f64,
    /// Per-phase load current, amperes.
    pub base_i: [f64; 3],
    /// Relative std-dev of voltage magnitude noise.
    pub noise_v: f64,
    /// Relative std-dev of current magnitude noise.
    pub noise_i: f64,
    /// Std-dev of the current angle jitter, radians.
    pub noise_ang: f64,
    pub load_drift_period_s: f64,
    /// Relative amplitude of the load (current) drift.
    pub load_drift_depth: f64,
    /// Fraction of the load drift seen, with opposite sign, on voltage.
    pub v_drift_coupling: f64,
    /// Power-factor angle (voltage leads current), radians.
    pub pf_base: f64,
}

impl Default for FeederConfig {
    fn default() -> Self {
        FeederConfig {
            seed: 0,
            duration_s: 600.0,
            base_v: 7200.0,
            base_i: [200.0, 180.0, 220.0],
            noise_v: 0.001,
            noise_i: 0.005,
            noise_ang: 0.002,
            load_drift_period_s: 300.0,
            load_drift_depth: 0.0,
            v_drift_coupling: 0.1,
            pf_base: 0.3,
        }
    }
}

impl FeederConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return bad("duration_s must be > 0");
        }
        if !(self.base_v > 0.0) || self.base_i.iter().any(|&i| !(i > 0.0)) {
            return bad("base magnitudes must be > 0");
        }
        if [self.noise_v, self.noise_i, self.noise_ang, self.load_drift_depth]
            .iter()
            .any(|&x| !(x >= 0.0))
        {
            return bad("noise levels and drift depth must be >= 0");
        }
        if !(self.load_drift_period_s > 0.0) {
            return bad("load_drift_period_s must be > 0");
        }
        Ok(())
    }

    pub fn num_frames(&self) -> usize {
        (self.duration_s * SAMPLE_RATE as f64).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EventKind {
    Inrush,
    CapBank,
    IpqSmall,
    Oscillation,
    LongTransient,
    VoltageSag,
    VoltageDampedOsc,
}

impl EventKind {
    pub const ALL: [EventKind; 7] = [
        EventKind::Inrush,
        EventKind::CapBank,
        EventKind::IpqSmall,
        EventKind::Oscillation,
        EventKind::LongTransient,
        EventKind::VoltageSag,
        EventKind::VoltageDampedOsc,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Inrush => "INRUSH",
            EventKind::CapBank => "CAP_BANK",
            EventKind::IpqSmall => "IPQ_SMALL",
            EventKind::Oscillation => "OSCILLATION",
            EventKind::LongTransient => "LONG_TRANSIENT",
            EventKind::VoltageSag => "VOLTAGE_SAG",
            EventKind::VoltageDampedOsc => "VOLTAGE_DAMPED_OSC",
        }
    }

    /// Whether the event's primary signature is in voltage magnitude.
    pub fn is_voltage(self) -> bool {
        matches!(self, EventKind::VoltageSag | EventKind::VoltageDampedOsc)
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EventKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown event kind {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventSpec {
    pub kind: EventKind,
    pub t_start: usize,
    /// Length in samples.
    pub duration: usize,
    pub phases: Vec<Phase>,
    /// Relative amplitude; meaning depends on `kind`.
    pub magnitude: f64,
    /// Oscillation frequency for oscillatory kinds, Hz.
    pub freq_hz: f64,
    /// Envelope decay rate for damped kinds, 1/s.
    pub damping: f64,
}

impl EventSpec {
    pub fn new(kind: EventKind, t_start: usize, duration: usize, phases: &[Phase], magnitude: f64) -> Self {
        EventSpec {
            kind,
            t_start,
            duration,
            phases: phases.to_vec(),
            magnitude,
            freq_hz: 2.0,
            damping: 1.0,
        }
    }

    /// Exclusive end sample.
    pub fn t_end(&self) -> usize {
        self.t_start + self.duration
    }
}

/// A labeled event interval `[t_start, t_end)` in sample indices.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledEvent {
    pub kind: EventKind,
    pub t_start: usize,
    pub t_end: usize,
    pub phases: Vec<Phase>,
    pub magnitude: f64,
}

/// Sorted, non-overlapping ground-truth events.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruth {
    pub events: Vec<LabeledEvent>,
}

impl GroundTruth {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Number of samples covered by any event.
    pub fn labeled_samples(&self) -> usize {
        self.events.iter().map(|e| e.t_end - e.t_start).sum()
    }
}

/// Clean feeder stream, deterministic in `cfg.seed`.
pub fn generate_normal(cfg: &FeederConfig) -> Result<Vec<PhasorFrame>> {
    cfg.validate()?;
    let n = cfg.num_frames();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let drift_phase: f64 = rng.gen_range(0.0..2.0 * PI);
    let nominal = [0.0, -2.0 * PI / 3.0, 2.0 * PI / 3.0];
    let mut gauss = move || -> f64 { rng.sample(StandardNormal) };

    let mut frames = Vec::with_capacity(n);
    for k in 0..n {
        let t = k as f64 / SAMPLE_RATE as f64;
        let drift =
            cfg.load_drift_depth * (2.0 * PI * t / cfg.load_drift_period_s + drift_phase).sin();
        let mut f = PhasorFrame {
            timestamp: k as u64,
            v_mag: [0.0; 3],
            v_ang: [0.0; 3],
            i_mag: [0.0; 3],
            i_ang: [0.0; 3],
        };
        for p in 0..3 {
            f.v_mag[p] = cfg.base_v * (1.0 - cfg.v_drift_coupling * drift + cfg.noise_v * gauss());
            f.i_mag[p] = cfg.base_i[p] * (1.0 + drift + cfg.noise_i * gauss());
            f.v_ang[p] = wrap_angle(nominal[p]);
            f.i_ang[p] = wrap_angle(nominal[p] - cfg.pf_base + cfg.noise_ang * gauss());
            f.v_mag[p] = f.v_mag[p].max(0.0);
            f.i_mag[p] = f.i_mag[p].max(0.0);
        }
        frames.push(f);
    }
    Ok(frames)
}

/// Adds a current phasor of `delta` amperes at `rotation` radians relative to
/// the voltage angle.
fn add_current(frame: &mut PhasorFrame, p: usize, delta: f64, rotation: f64) {
    let (mut re, mut im) = (
        frame.i_mag[p] * frame.i_ang[p].cos(),
        frame.i_mag[p] * frame.i_ang[p].sin(),
    );
    let ang = frame.v_ang[p] + rotation;
    re += delta * ang.cos();
    im += delta * ang.sin();
    frame.i_mag[p] = re.hypot(im);
    frame.i_ang[p] = wrap_angle(im.atan2(re));
}

/// Trapezoid: linear rise over the first quarter, flat, linear fall over the last quarter.
fn trapezoid(k: usize, duration: usize) -> f64 {
    let x = (k as f64 + 0.5) / duration as f64;
    (4.0 * x).min(4.0 * (1.0 - x)).clamp(0.0, 1.0)
}

/// Applies one event in place. Samples outside `[t_start, t_end)` and phases
/// not listed in the spec are left untouched.
pub fn inject_event(stream: &mut [PhasorFrame], spec: &EventSpec) -> Result<()> {
    if spec.duration == 0 || spec.t_end() > stream.len() {
        return Err(Error::IntervalOutOfBounds {
            start: spec.t_start,
            end: spec.t_end(),
            len: stream.len(),
        });
    }
    if spec.phases.is_empty() {
        return Err(Error::Config("event must list at least one phase".into()));
    }
    let m = spec.magnitude;
    let dur_s = spec.duration as f64 / SAMPLE_RATE as f64;
    let base = stream[spec.t_start];

    for (k, frame) in stream[spec.t_start..spec.t_end()].iter_mut().enumerate() {
        let tau = k as f64 / SAMPLE_RATE as f64;
        for phase in &spec.phases {
            let p = phase.index();
            match spec.kind {
                EventKind::Inrush => {
                    let decay = 5.0 / dur_s;
                    frame.i_mag[p] *= 1.0 + m * (-decay * tau).exp();
                }
                EventKind::CapBank => {
                    // leading reactive current plus a small voltage rise
                    add_current(frame, p, -m * base.i_mag[p], -PI / 2.0);
                    frame.v_mag[p] *= 1.0 + 0.1 * m;
                }
                EventKind::IpqSmall => {
                    // in-phase current: moves I and P, leaves Q untouched
                    let env = trapezoid(k, spec.duration);
                    add_current(frame, p, m * base.i_mag[p] * env, 0.0);
                }
                EventKind::Oscillation => {
                    frame.i_mag[p] *= 1.0 + m * (2.0 * PI * spec.freq_hz * tau).sin();
                }
                EventKind::LongTransient => {
                    let env = 0.6 + 0.4 * (-3.0 * tau / dur_s).exp()
                        + 0.1 * (2.0 * PI * tau / 5.0).sin();
                    frame.i_mag[p] *= 1.0 + m * env;
                }
                EventKind::VoltageSag => {
                    frame.v_mag[p] *= 1.0 - m;
                }
                EventKind::VoltageDampedOsc => {
                    let env = (-spec.damping * tau).exp();
                    frame.v_mag[p] *= 1.0 + m * env * (2.0 * PI * spec.freq_hz * tau).sin();
                }
            }
            frame.i_mag[p] = frame.i_mag[p].max(0.0);
            frame.v_mag[p] = frame.v_mag[p].max(0.0);
        }
    }
    Ok(())
}

/// Clean stream with every spec injected, plus the matching ground truth.
pub fn build_corpus(
    cfg: &FeederConfig,
    specs: &[EventSpec],
) -> Result<(Vec<PhasorFrame>, GroundTruth)> {
    let mut sorted: Vec<&EventSpec> = specs.iter().collect();
    sorted.sort_by_key(|s| s.t_start);
    for pair in sorted.windows(2) {
        if pair[1].t_start < pair[0].t_end() {
            return Err(Error::OverlappingEvents(pair[1].t_start));
        }
    }
    let mut stream = generate_normal(cfg)?;
    let mut truth = GroundTruth::default();
    for spec in sorted {
        inject_event(&mut stream, spec)?;
        truth.events.push(LabeledEvent {
            kind: spec.kind,
            t_start: spec.t_start,
            t_end: spec.t_end(),
            phases: spec.phases.clone(),
            magnitude: spec.magnitude,
        });
    }
    Ok((stream, truth))
}

/// Magnitude tier, in multiples of the relevant measurement noise std-dev.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tier {
    /// 1-3x noise std-dev.
    Small,
    /// 10-30x noise std-dev.
    Large,
}

impl Tier {
    fn multiple(self, rng: &mut impl Rng) -> f64 {
        match self {
            Tier::Small => rng.gen_range(1.0..3.0),
            Tier::Large => rng.gen_range(10.0..30.0),
        }
    }
}

/// Per-kind defaults for randomized event plans.
#[derive(Debug, Clone, PartialEq)]
pub struct KindDefaults {
    pub kind: EventKind,
    pub tier: Tier,
    /// Duration range in seconds.
    pub duration_s: (f64, f64),
}

/// Default tiers and durations for each kind. Inrush, capacitor switching and
/// long transients are inherently large; the rest default to the small tier.
pub fn default_kind_plan() -> Vec<KindDefaults> {
    use EventKind::*;
    let d = |kind, tier, lo, hi| KindDefaults {
        kind,
        tier,
        duration_s: (lo, hi),
    };
    vec![
        d(Inrush, Tier::Large, 0.5, 2.0),
        d(CapBank, Tier::Large, 2.0, 5.0),
        d(IpqSmall, Tier::Small, 2.0, 6.0),
        d(Oscillation, Tier::Small, 1.0, 4.0),
        d(LongTransient, Tier::Large, 20.0, 25.0),
        d(VoltageSag, Tier::Small, 0.5, 3.0),
        d(VoltageDampedOsc, Tier::Small, 1.0, 3.0),
    ]
}

/// Draws a magnitude for `kind` scaled to the feeder's noise floor.
pub fn draw_magnitude(kind: EventKind, tier: Tier, cfg: &FeederConfig, rng: &mut impl Rng) -> f64 {
    let noise = if kind.is_voltage() { cfg.noise_v } else { cfg.noise_i };
    let m = tier.multiple(rng) * noise;
    match kind {
        // a bare noise multiple is meaningless for a reactive step or inrush;
        // keep these clearly visible
        EventKind::Inrush => m.max(0.3),
        EventKind::CapBank => m.max(0.1),
        EventKind::LongTransient => m.max(0.15),
        _ => m,
    }
}

fn draw_phases(rng: &mut impl Rng) -> Vec<Phase> {
    let mask = rng.gen_range(1u8..8);
    [Phase::A, Phase::B, Phase::C]
        .into_iter()
        .filter(|p| mask & (1 << p.index()) != 0)
        .collect()
}

/// Randomized, non-overlapping event plan: `per_kind` events of each listed
/// kind, shuffled in time, with at least `min_gap_s` of clean data between
/// consecutive events. Returns the specs and the stream length they need.
pub fn random_event_plan(
    cfg: &FeederConfig,
    plan: &[KindDefaults],
    per_kind: usize,
    min_gap_s: f64,
    seed: u64,
) -> (Vec<EventSpec>, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kinds: Vec<&KindDefaults> = plan
        .iter()
        .flat_map(|k| std::iter::repeat(k).take(per_kind))
        .collect();
    kinds.shuffle(&mut rng);

    let rate = SAMPLE_RATE as f64;
    let gap = (min_gap_s * rate) as usize;
    let mut t = gap;
    let mut specs = Vec::with_capacity(kinds.len());
    for kd in kinds {
        let dur_s = rng.gen_range(kd.duration_s.0..=kd.duration_s.1);
        let duration = ((dur_s * rate) as usize).max(1);
        let jitter = rng.gen_range(0..gap.max(1));
        let t_start = t + jitter;
        let mut spec = EventSpec::new(
            kd.kind,
            t_start,
            duration,
            &draw_phases(&mut rng),
            draw_magnitude(kd.kind, kd.tier, cfg, &mut rng),
        );
        spec.freq_hz = rng.gen_range(1.0..8.0);
        spec.damping = rng.gen_range(0.5..2.0);
        t = spec.t_end() + gap;
        specs.push(spec);
    }
    (specs, t)
}

/// Sparse short events covering roughly `share` of `len` samples, used to
/// contaminate training corpora at a realistic event rate.
pub fn contamination_plan(
    cfg: &FeederConfig,
    len: usize,
    count: usize,
    share: f64,
    seed: u64,
) -> Vec<EventSpec> {
    if count == 0 || len == 0 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let duration = ((share * len as f64 / count as f64).round() as usize).max(1);
    let slot = len / count;
    assert!(slot > duration, "contamination share too high for {count} events");
    (0..count)
        .map(|k| {
            let kind = *EventKind::ALL.choose(&mut rng).unwrap();
            let t_start = k * slot + rng.gen_range(0..slot - duration);
            let mut spec = EventSpec::new(
                kind,
                t_start,
                duration,
                &draw_phases(&mut rng),
                draw_magnitude(kind, Tier::Small, cfg, &mut rng),
            );
            spec.freq_hz = rng.gen_range(1.0..8.0);
            spec
        })
        .collect()
}
