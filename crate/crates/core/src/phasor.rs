//! Phasor data model: raw three-phase frames, the twelve derived features,
//! min-max normalization and overlapping windowing.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Axis};

use crate::error::{Error, Result};

/// Reporting rate of the phasor stream, frames per second.
pub const SAMPLE_RATE: usize = 120;
/// Number of derived features per sample (V, I, P, Q for three phases).
pub const NUM_FEATURES: usize = 12;
pub const DEFAULT_WINDOW: usize = 40;
pub const DEFAULT_STRIDE: usize = 20;
/// Lower bound on `hi - lo` for a fitted feature, in feature units.
pub const NORMALIZER_EPS: f64 = 1e-9;

pub const PHASES: [Phase; 3] = [Phase::A, Phase::B, Phase::C];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Phase {
    A,
    B,
    C,
}

impl Phase {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_char(c: char) -> Option<Phase> {
        match c.to_ascii_uppercase() {
            'A' => Some(Phase::A),
            'B' => Some(Phase::B),
            'C' => Some(Phase::C),
            _ => None,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Phase::A => 'A',
            Phase::B => 'B',
            Phase::C => 'C',
        }
    }
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(theta: f64) -> f64 {
    let mut a = theta % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// One timestamped three-phase phasor reading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasorFrame {
    /// Sample index, 120 per second.
    pub timestamp: u64,
    pub v_mag: [f64; 3],
    pub v_ang: [f64; 3],
    pub i_mag: [f64; 3],
    pub i_ang: [f64; 3],
}

impl PhasorFrame {
    /// Checks magnitude signs, angle ranges and finiteness.
    pub fn validate(&self) -> std::result::Result<(), String> {
        for p in 0..3 {
            for (name, m) in [("v_mag", self.v_mag[p]), ("i_mag", self.i_mag[p])] {
                if !m.is_finite() || m < 0.0 {
                    return Err(format!("{name}[{p}] = {m} must be finite and >= 0"));
                }
            }
            for (name, a) in [("v_ang", self.v_ang[p]), ("i_ang", self.i_ang[p])] {
                if !a.is_finite() || a <= -PI || a > PI {
                    return Err(format!("{name}[{p}] = {a} outside (-pi, pi]"));
                }
            }
        }
        Ok(())
    }
}

/// The twelve per-sample features, laid out as
/// `[V_A, V_B, V_C, I_A, I_B, I_C, P_A, P_B, P_C, Q_A, Q_B, Q_C]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureSample(pub [f64; NUM_FEATURES]);

impl FeatureSample {
    pub fn v(&self, p: Phase) -> f64 {
        self.0[p.index()]
    }
    pub fn i(&self, p: Phase) -> f64 {
        self.0[3 + p.index()]
    }
    pub fn p(&self, p: Phase) -> f64 {
        self.0[6 + p.index()]
    }
    pub fn q(&self, p: Phase) -> f64 {
        self.0[9 + p.index()]
    }
}

/// Computes V, I, P and Q for each phase.
///
/// `P = V I cos(dtheta)`, `Q = V I sin(dtheta)` with `dtheta` the voltage-current
/// angle difference wrapped into (-pi, pi].
pub fn derive_features(frame: &PhasorFrame) -> FeatureSample {
    let mut out = [0.0; NUM_FEATURES];
    for p in 0..3 {
        let v = frame.v_mag[p];
        let i = frame.i_mag[p];
        let dtheta = wrap_angle(frame.v_ang[p] - frame.i_ang[p]);
        let (s, c) = dtheta.sin_cos();
        out[p] = v;
        out[3 + p] = i;
        out[6 + p] = v * i * c;
        out[9 + p] = v * i * s;
    }
    FeatureSample(out)
}

/// Which columns of the twelve features a model consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureSet {
    All12,
    V3,
    Ipq9,
}

impl FeatureSet {
    pub fn columns(self) -> std::ops::Range<usize> {
        match self {
            FeatureSet::All12 => 0..12,
            FeatureSet::V3 => 0..3,
            FeatureSet::Ipq9 => 3..12,
        }
    }

    pub fn width(self) -> usize {
        self.columns().len()
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureSet::All12 => "ALL12",
            FeatureSet::V3 => "V3",
            FeatureSet::Ipq9 => "IPQ9",
        })
    }
}

impl FromStr for FeatureSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ALL12" => Ok(FeatureSet::All12),
            "V3" => Ok(FeatureSet::V3),
            "IPQ9" => Ok(FeatureSet::Ipq9),
            other => Err(Error::Config(format!("unknown feature set {other:?}"))),
        }
    }
}

/// A window of `W` consecutive samples restricted to a feature set.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBlock {
    /// `W x F` matrix, one row per sample.
    pub features: Array2<f64>,
    /// Stream position of the first row.
    pub start_index: usize,
    pub feature_set: FeatureSet,
}

impl FeatureBlock {
    pub fn window_len(&self) -> usize {
        self.features.nrows()
    }

    /// Restricts an `ALL12` block to a subset of columns.
    pub fn project(&self, set: FeatureSet) -> Result<FeatureBlock> {
        if self.feature_set == set {
            return Ok(self.clone());
        }
        if self.feature_set != FeatureSet::All12 {
            return Err(Error::FeatureSetMismatch {
                expected: FeatureSet::All12.to_string(),
                got: self.feature_set.to_string(),
            });
        }
        let cols = set.columns();
        let features = self
            .features
            .slice(ndarray::s![.., cols])
            .to_owned();
        Ok(FeatureBlock {
            features,
            start_index: self.start_index,
            feature_set: set,
        })
    }
}

/// Number of full windows a stream of `len` samples yields.
pub fn window_count(len: usize, size: usize, stride: usize) -> usize {
    if len < size {
        0
    } else {
        (len - size) / stride + 1
    }
}

fn check_window(size: usize, stride: usize) -> Result<()> {
    if size == 0 || stride == 0 || stride > size {
        return Err(Error::Config(format!(
            "window size {size} / stride {stride}: need size >= 1 and 1 <= stride <= size"
        )));
    }
    Ok(())
}

/// Slices a sample stream into overlapping `ALL12` blocks starting at
/// `0, stride, 2 * stride, ...`; trailing partial windows are dropped.
pub fn window_stream(
    samples: &[FeatureSample],
    size: usize,
    stride: usize,
) -> Result<Vec<FeatureBlock>> {
    check_window(size, stride)?;
    let n = window_count(samples.len(), size, stride);
    let blocks = (0..n)
        .map(|k| {
            let start = k * stride;
            let features = Array2::from_shape_fn((size, NUM_FEATURES), |(r, c)| {
                samples[start + r].0[c]
            });
            FeatureBlock {
                features,
                start_index: start,
                feature_set: FeatureSet::All12,
            }
        })
        .collect();
    Ok(blocks)
}

/// Per-feature affine map of `[lo, hi]` onto `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub lo: [f64; NUM_FEATURES],
    pub hi: [f64; NUM_FEATURES],
}

impl Normalizer {
    pub fn fit(training: &[FeatureSample]) -> Result<Normalizer> {
        fit_normalizer(training)
    }

    /// Out-of-range values extrapolate past [-1, 1]; nothing is clipped.
    pub fn normalize(&self, s: &FeatureSample) -> FeatureSample {
        let mut out = [0.0; NUM_FEATURES];
        for (k, o) in out.iter_mut().enumerate() {
            *o = 2.0 * (s.0[k] - self.lo[k]) / (self.hi[k] - self.lo[k]) - 1.0;
        }
        FeatureSample(out)
    }

    pub fn denormalize(&self, s: &FeatureSample) -> FeatureSample {
        let mut out = [0.0; NUM_FEATURES];
        for (k, o) in out.iter_mut().enumerate() {
            *o = (s.0[k] + 1.0) * 0.5 * (self.hi[k] - self.lo[k]) + self.lo[k];
        }
        FeatureSample(out)
    }

    pub fn normalize_all(&self, samples: &[FeatureSample]) -> Vec<FeatureSample> {
        samples.iter().map(|s| self.normalize(s)).collect()
    }
}

pub fn fit_normalizer(training: &[FeatureSample]) -> Result<Normalizer> {
    if training.is_empty() {
        return Err(Error::NoTrainingData);
    }
    let mut lo = [f64::INFINITY; NUM_FEATURES];
    let mut hi = [f64::NEG_INFINITY; NUM_FEATURES];
    for s in training {
        for k in 0..NUM_FEATURES {
            lo[k] = lo[k].min(s.0[k]);
            hi[k] = hi[k].max(s.0[k]);
        }
    }
    for k in 0..NUM_FEATURES {
        if !(lo[k].is_finite() && hi[k].is_finite()) {
            return Err(Error::NonFinite(format!("training feature {k}")));
        }
        if hi[k] - lo[k] < NORMALIZER_EPS {
            hi[k] = lo[k] + NORMALIZER_EPS;
        }
    }
    Ok(Normalizer { lo, hi })
}

/// Stacks samples into a `len x 12` matrix.
pub fn samples_to_matrix(samples: &[FeatureSample]) -> Array2<f64> {
    let mut m = Array2::zeros((samples.len(), NUM_FEATURES));
    for (mut row, s) in m.axis_iter_mut(Axis(0)).zip(samples) {
        row.assign(&ndarray::ArrayView1::from(&s.0));
    }
    m
}
