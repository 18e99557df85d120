//! Discriminator-score event detectors.
//!
//! Learning phase: train a GAN, score every training block with its
//! discriminator and fit a Normal to the scores. Detection phase: a window is
//! an event iff its score falls outside the open interval
//! `(mean - z_p * std, mean + z_p * std)`. The enhanced detector runs a voltage
//! model and a current/power model side by side and flags on either.

use std::collections::VecDeque;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::gan::{train_gan, TrainConfig, TrainedGan};
use crate::phasor::{
    derive_features, fit_normalizer, window_stream, FeatureBlock, FeatureSample, FeatureSet,
    PhasorFrame, DEFAULT_STRIDE, DEFAULT_WINDOW, NUM_FEATURES,
};

/// Floor for a fitted score standard deviation.
pub const STD_FLOOR: f64 = 1e-9;

/// Normal fit over discriminator scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreDistribution {
    pub mean: f64,
    pub std: f64,
}

impl ScoreDistribution {
    /// True iff `score` lies strictly inside `(mean - z_p std, mean + z_p std)`.
    pub fn contains(&self, score: f64, z_p: f64) -> bool {
        let half = z_p * self.std;
        score > self.mean - half && score < self.mean + half
    }

    pub fn is_event(&self, score: f64, z_p: f64) -> bool {
        !self.contains(score, z_p)
    }
}

/// Sample mean and (n-1) standard deviation, std floored at [`STD_FLOOR`].
pub fn fit_score_distribution(scores: &[f64]) -> Result<ScoreDistribution> {
    if scores.len() < 2 {
        return Err(Error::TooFew {
            need: 2,
            got: scores.len(),
        });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("scores".into()));
    }
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(ScoreDistribution {
        mean,
        std: var.sqrt().max(STD_FLOOR),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    pub z_p: f64,
    pub window: usize,
    pub stride: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            z_p: 3.0,
            window: DEFAULT_WINDOW,
            stride: DEFAULT_STRIDE,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.z_p > 0.0 && self.z_p.is_finite()) {
            return Err(Error::Config(format!("z_p must be > 0, got {}", self.z_p)));
        }
        if self.window == 0 || self.stride == 0 || self.stride > self.window {
            return Err(Error::Config("need window >= 1 and 1 <= stride <= window".into()));
        }
        Ok(())
    }
}

/// Discriminator output for a block already normalized with the model's
/// normalizer and projected onto its feature set.
pub fn score_block(gan: &TrainedGan, block: &FeatureBlock) -> Result<f64> {
    if block.feature_set != gan.feature_set {
        return Err(Error::FeatureSetMismatch {
            expected: gan.feature_set.to_string(),
            got: block.feature_set.to_string(),
        });
    }
    gan.discriminator.score(&block.features)
}

/// Normalizes a raw `ALL12` block with the model's normalizer and projects it
/// onto the model's feature set.
pub fn prepare_block(gan: &TrainedGan, raw: &FeatureBlock) -> Result<FeatureBlock> {
    if raw.feature_set != FeatureSet::All12 {
        return Err(Error::FeatureSetMismatch {
            expected: FeatureSet::All12.to_string(),
            got: raw.feature_set.to_string(),
        });
    }
    let n = &gan.normalizer;
    let cols = gan.feature_set.columns();
    let features = Array2::from_shape_fn((raw.window_len(), cols.len()), |(r, c)| {
        let k = cols.start + c;
        2.0 * (raw.features[[r, k]] - n.lo[k]) / (n.hi[k] - n.lo[k]) - 1.0
    });
    Ok(FeatureBlock {
        features,
        start_index: raw.start_index,
        feature_set: gan.feature_set,
    })
}

/// Per-window detector output.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowResult {
    pub start_index: usize,
    /// Basic-method score.
    pub score_s: Option<f64>,
    /// Current/power model score (enhanced).
    pub score_s1: Option<f64>,
    /// Voltage model score (enhanced).
    pub score_s2: Option<f64>,
    pub flag: bool,
    /// Which component fired: `basic`, `ipq`, `v`, `ipq+v`, `mad`, or empty.
    pub source: String,
}

/// Something that turns a raw `ALL12` window into a flag.
pub trait WindowDetector {
    fn config(&self) -> &DetectorConfig;
    fn evaluate(&self, raw: &FeatureBlock) -> Result<WindowResult>;
}

/// One GAN over all twelve features.
#[derive(Debug, Clone, PartialEq)]
pub struct BasicDetector {
    pub gan: TrainedGan,
    pub dist: ScoreDistribution,
    pub cfg: DetectorConfig,
}

/// A current/power GAN (scores `s1`) and a voltage GAN (scores `s2`).
#[derive(Debug, Clone, PartialEq)]
pub struct EnhancedDetector {
    pub gan_ipq: TrainedGan,
    pub dist_ipq: ScoreDistribution,
    pub gan_v: TrainedGan,
    pub dist_v: ScoreDistribution,
    pub cfg: DetectorConfig,
}

/// `(F, s)` for one window.
pub fn detect_basic(d: &BasicDetector, raw: &FeatureBlock) -> Result<(bool, f64)> {
    if d.gan.feature_set != FeatureSet::All12 {
        return Err(Error::FeatureSetMismatch {
            expected: FeatureSet::All12.to_string(),
            got: d.gan.feature_set.to_string(),
        });
    }
    let s = score_block(&d.gan, &prepare_block(&d.gan, raw)?)?;
    Ok((d.dist.is_event(s, d.cfg.z_p), s))
}

/// `(F, s1, s2)` for one window; `F = 1` iff either score is outside its interval.
pub fn detect_enhanced(d: &EnhancedDetector, raw: &FeatureBlock) -> Result<(bool, f64, f64)> {
    let s1 = score_block(&d.gan_ipq, &prepare_block(&d.gan_ipq, raw)?)?;
    let s2 = score_block(&d.gan_v, &prepare_block(&d.gan_v, raw)?)?;
    let f = d.dist_ipq.is_event(s1, d.cfg.z_p) || d.dist_v.is_event(s2, d.cfg.z_p);
    Ok((f, s1, s2))
}

impl WindowDetector for BasicDetector {
    fn config(&self) -> &DetectorConfig {
        &self.cfg
    }

    fn evaluate(&self, raw: &FeatureBlock) -> Result<WindowResult> {
        let (flag, s) = detect_basic(self, raw)?;
        Ok(WindowResult {
            start_index: raw.start_index,
            score_s: Some(s),
            score_s1: None,
            score_s2: None,
            flag,
            source: if flag { "basic".into() } else { String::new() },
        })
    }
}

impl WindowDetector for EnhancedDetector {
    fn config(&self) -> &DetectorConfig {
        &self.cfg
    }

    fn evaluate(&self, raw: &FeatureBlock) -> Result<WindowResult> {
        let (flag, s1, s2) = detect_enhanced(self, raw)?;
        let ipq = self.dist_ipq.is_event(s1, self.cfg.z_p);
        let v = self.dist_v.is_event(s2, self.cfg.z_p);
        let source = match (ipq, v) {
            (true, true) => "ipq+v",
            (true, false) => "ipq",
            (false, true) => "v",
            (false, false) => "",
        };
        Ok(WindowResult {
            start_index: raw.start_index,
            score_s: None,
            score_s1: Some(s1),
            score_s2: Some(s2),
            flag,
            source: source.into(),
        })
    }
}

/// Coalesces flagged windows into maximal half-open intervals
/// `[first start, last start + window)`. Windows must be in start order.
pub fn merge_flags(windows: &[(usize, bool)], window: usize) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = Vec::new();
    for &(start, flag) in windows {
        if !flag {
            continue;
        }
        let end = start + window;
        match out.last_mut() {
            Some(last) if start <= last.1 => last.1 = last.1.max(end),
            _ => out.push((start, end)),
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectionReport {
    pub windows: Vec<WindowResult>,
    /// Merged event intervals, sorted and disjoint.
    pub intervals: Vec<(usize, usize)>,
}

impl DetectionReport {
    pub fn from_windows(windows: Vec<WindowResult>, window: usize) -> Self {
        let flags: Vec<(usize, bool)> = windows.iter().map(|w| (w.start_index, w.flag)).collect();
        let intervals = merge_flags(&flags, window);
        DetectionReport { windows, intervals }
    }

    pub fn flag_rate(&self) -> f64 {
        if self.windows.is_empty() {
            return 0.0;
        }
        self.windows.iter().filter(|w| w.flag).count() as f64 / self.windows.len() as f64
    }
}

/// Frame-at-a-time ingestion. A window's result is produced by the `push`
/// call that delivers its last frame.
pub struct StreamProcessor<'a, D: WindowDetector + ?Sized> {
    detector: &'a D,
    buf: VecDeque<FeatureSample>,
    first_ts: Option<u64>,
    last_ts: Option<u64>,
    seen: usize,
}

impl<'a, D: WindowDetector + ?Sized> StreamProcessor<'a, D> {
    pub fn new(detector: &'a D) -> Self {
        let w = detector.config().window;
        StreamProcessor {
            detector,
            buf: VecDeque::with_capacity(w),
            first_ts: None,
            last_ts: None,
            seen: 0,
        }
    }

    pub fn push(&mut self, frame: &PhasorFrame) -> Result<Option<WindowResult>> {
        let row = self.seen;
        if let Some(prev) = self.last_ts {
            if frame.timestamp <= prev {
                return Err(Error::Unordered {
                    row,
                    prev,
                    next: frame.timestamp,
                });
            }
            if frame.timestamp != prev + 1 {
                return Err(Error::InvalidFrame {
                    row,
                    reason: format!("gap in stream: {prev} -> {}", frame.timestamp),
                });
            }
        }
        frame
            .validate()
            .map_err(|reason| Error::InvalidFrame { row, reason })?;
        self.first_ts.get_or_insert(frame.timestamp);
        self.last_ts = Some(frame.timestamp);
        self.seen += 1;

        let cfg = *self.detector.config();
        if self.buf.len() == cfg.window {
            self.buf.pop_front();
        }
        self.buf.push_back(derive_features(frame));
        if self.seen < cfg.window || (self.seen - cfg.window) % cfg.stride != 0 {
            return Ok(None);
        }
        let start = (frame.timestamp + 1 - cfg.window as u64) as usize;
        let features = Array2::from_shape_fn((cfg.window, NUM_FEATURES), |(r, c)| self.buf[r].0[c]);
        let block = FeatureBlock {
            features,
            start_index: start,
            feature_set: FeatureSet::All12,
        };
        self.detector.evaluate(&block).map(Some)
    }
}

/// Runs a detector over a whole frame sequence.
pub fn run_stream<D: WindowDetector + ?Sized>(detector: &D, frames: &[PhasorFrame]) -> Result<DetectionReport> {
    detector.config().validate()?;
    let mut proc = StreamProcessor::new(detector);
    let mut windows = Vec::new();
    for f in frames {
        if let Some(w) = proc.push(f)? {
            windows.push(w);
        }
    }
    Ok(DetectionReport::from_windows(windows, detector.config().window))
}

/// Trains one GAN on a clean(ish) frame stream and fits its score distribution
/// over every training block.
pub fn train_model(
    frames: &[PhasorFrame],
    feature_set: FeatureSet,
    det: &DetectorConfig,
    cfg: &TrainConfig,
) -> Result<(TrainedGan, ScoreDistribution)> {
    det.validate()?;
    let samples: Vec<FeatureSample> = frames.iter().map(derive_features).collect();
    let normalizer = fit_normalizer(&samples)?;
    let normalized = normalizer.normalize_all(&samples);
    let blocks = window_stream(&normalized, det.window, det.stride)?
        .into_iter()
        .map(|b| b.project(feature_set))
        .collect::<Result<Vec<_>>>()?;
    let gan = train_gan(&blocks, normalizer, cfg)?;
    let dist = fit_distribution_on(&gan, &blocks)?;
    Ok((gan, dist))
}

/// Scores prepared blocks and fits a Normal to the scores.
pub fn fit_distribution_on(gan: &TrainedGan, blocks: &[FeatureBlock]) -> Result<ScoreDistribution> {
    let mut scores = Vec::with_capacity(blocks.len());
    for chunk in blocks.chunks(256) {
        let refs: Vec<&Array2<f64>> = chunk.iter().map(|b| &b.features).collect();
        let pass = gan.discriminator.disc_forward(&crate::nn::time_major(&refs))?;
        scores.extend(pass.scores().iter().copied());
    }
    fit_score_distribution(&scores)
}

impl BasicDetector {
    pub fn train(frames: &[PhasorFrame], det: DetectorConfig, cfg: &TrainConfig) -> Result<Self> {
        let (gan, dist) = train_model(frames, FeatureSet::All12, &det, cfg)?;
        Ok(BasicDetector { gan, dist, cfg: det })
    }
}

impl EnhancedDetector {
    pub fn train(frames: &[PhasorFrame], det: DetectorConfig, cfg: &TrainConfig) -> Result<Self> {
        let (gan_ipq, dist_ipq) = train_model(frames, FeatureSet::Ipq9, &det, cfg)?;
        let (gan_v, dist_v) = train_model(frames, FeatureSet::V3, &det, cfg)?;
        Ok(EnhancedDetector {
            gan_ipq,
            dist_ipq,
            gan_v,
            dist_v,
            cfg: det,
        })
    }

    /// Assembles a detector from two independently trained models in any order.
    pub fn from_parts(
        a: (TrainedGan, ScoreDistribution),
        b: (TrainedGan, ScoreDistribution),
        cfg: DetectorConfig,
    ) -> Result<Self> {
        let (ipq, v) = match (a.0.feature_set, b.0.feature_set) {
            (FeatureSet::Ipq9, FeatureSet::V3) => (a, b),
            (FeatureSet::V3, FeatureSet::Ipq9) => (b, a),
            (x, y) => {
                return Err(Error::FeatureSetMismatch {
                    expected: "IPQ9 + V3".into(),
                    got: format!("{x} + {y}"),
                })
            }
        };
        Ok(EnhancedDetector {
            gan_ipq: ipq.0,
            dist_ipq: ipq.1,
            gan_v: v.0,
            dist_v: v.1,
            cfg,
        })
    }
}
