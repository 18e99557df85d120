//! Median-absolute-deviation baseline with two trailing window sizes.
//!
//! Training-free: a sample is anomalous when any monitored feature deviates
//! from its trailing median by more than `k` scaled MADs in either the coarse
//! or the fine window. Detection windows on the 40/20 grid are flagged when
//! they contain an anomalous sample.

use crate::detector::{DetectionReport, WindowResult};
use crate::error::{Error, Result};
use crate::phasor::{window_count, FeatureSample, NUM_FEATURES};

/// Normal-consistency constant for the MAD.
pub const MAD_SCALE: f64 = 1.482_6;

#[derive(Debug, Clone, PartialEq)]
pub struct MadConfig {
    pub coarse_window: usize,
    pub fine_window: usize,
    pub k: f64,
    pub mad_scale: f64,
    /// Feature columns monitored (indices into the twelve features).
    pub features: Vec<usize>,
}

impl Default for MadConfig {
    fn default() -> Self {
        MadConfig {
            coarse_window: 480,
            fine_window: 120,
            k: 5.0,
            mad_scale: MAD_SCALE,
            features: (0..NUM_FEATURES).collect(),
        }
    }
}

impl MadConfig {
    pub fn validate(&self) -> Result<()> {
        if self.coarse_window < 3 || self.fine_window < 3 {
            return Err(Error::Config("MAD windows must be >= 3 samples".into()));
        }
        if !(self.k > 0.0) || !(self.mad_scale > 0.0) {
            return Err(Error::Config("MAD k and scale must be > 0".into()));
        }
        if self.features.is_empty() || self.features.iter().any(|&f| f >= NUM_FEATURES) {
            return Err(Error::Config("MAD features must be non-empty indices < 12".into()));
        }
        Ok(())
    }
}

/// Trailing median and scaled MAD at one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RollingStat {
    pub median: f64,
    pub mad: f64,
}

fn median_sorted(s: &[f64]) -> f64 {
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Median of `|s_i - m|` over a sorted slice, by merging the two monotone
/// runs of deviations on either side of `m`.
fn mad_sorted(s: &[f64], m: f64) -> f64 {
    let n = s.len();
    let split = s.partition_point(|&x| x < m);
    let (mut lo, mut hi) = (split, split); // lo: next index below is lo-1
    let need = n / 2; // 0-based rank of upper middle
    let mut prev = 0.0;
    let mut cur = 0.0;
    for _ in 0..=need {
        let left = if lo > 0 { Some(m - s[lo - 1]) } else { None };
        let right = if hi < n { Some(s[hi] - m) } else { None };
        prev = cur;
        cur = match (left, right) {
            (Some(l), Some(r)) if l <= r => {
                lo -= 1;
                l
            }
            (Some(l), None) => {
                lo -= 1;
                l
            }
            (_, Some(r)) => {
                hi += 1;
                r
            }
            (None, None) => unreachable!("rank within slice"),
        };
    }
    if n % 2 == 1 {
        cur
    } else {
        0.5 * (prev + cur)
    }
}

/// Trailing-window median and MAD (times `mad_scale`) for every index
/// `t >= window - 1`; output element `j` describes samples `j ..= j + window - 1`.
/// MAD is floored at `1e-12` times the series' largest magnitude.
pub fn rolling_median_mad(series: &[f64], window: usize, mad_scale: f64) -> Vec<RollingStat> {
    if window == 0 || series.len() < window {
        return Vec::new();
    }
    let scale = series.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let floor = 1e-12 * if scale > 0.0 { scale } else { 1.0 };
    let mut sorted: Vec<f64> = Vec::with_capacity(window + 1);
    let mut out = Vec::with_capacity(series.len() - window + 1);
    for (t, &x) in series.iter().enumerate() {
        let pos = sorted.partition_point(|&v| v < x);
        sorted.insert(pos, x);
        if t >= window {
            let old = series[t - window];
            let pos = sorted.partition_point(|&v| v < old);
            sorted.remove(pos);
        }
        if t + 1 >= window {
            let median = median_sorted(&sorted);
            let mad = (mad_scale * mad_sorted(&sorted, median)).max(floor);
            out.push(RollingStat { median, mad });
        }
    }
    out
}

/// Per-sample anomaly mask over the monitored features.
pub fn anomalous_samples(samples: &[FeatureSample], cfg: &MadConfig) -> Result<Vec<bool>> {
    cfg.validate()?;
    let n = samples.len();
    let mut mask = vec![false; n];
    for &f in &cfg.features {
        let series: Vec<f64> = samples.iter().map(|s| s.0[f]).collect();
        for window in [cfg.coarse_window, cfg.fine_window] {
            for (j, st) in rolling_median_mad(&series, window, cfg.mad_scale).iter().enumerate() {
                let t = j + window - 1;
                if (series[t] - st.median).abs() > cfg.k * st.mad {
                    mask[t] = true;
                }
            }
        }
    }
    Ok(mask)
}

/// Flags on the detection-window grid: `(start, flagged)` for each full window.
pub fn detect_mad(
    samples: &[FeatureSample],
    cfg: &MadConfig,
    window: usize,
    stride: usize,
) -> Result<Vec<(usize, bool)>> {
    if window == 0 || stride == 0 || stride > window {
        return Err(Error::Config("need window >= 1 and 1 <= stride <= window".into()));
    }
    let mask = anomalous_samples(samples, cfg)?;
    // prefix counts for O(1) window queries
    let mut prefix = vec![0usize; mask.len() + 1];
    for (t, &m) in mask.iter().enumerate() {
        prefix[t + 1] = prefix[t] + m as usize;
    }
    Ok((0..window_count(samples.len(), window, stride))
        .map(|k| {
            let s = k * stride;
            (s, prefix[s + window] > prefix[s])
        })
        .collect())
}

/// Baseline output in the same report shape as the GAN detectors.
/// `offset` is added to every start index (the stream's first timestamp).
pub fn mad_report(
    samples: &[FeatureSample],
    cfg: &MadConfig,
    window: usize,
    stride: usize,
    offset: usize,
) -> Result<DetectionReport> {
    let windows = detect_mad(samples, cfg, window, stride)?
        .into_iter()
        .map(|(s, flag)| WindowResult {
            start_index: s + offset,
            score_s: None,
            score_s1: None,
            score_s2: None,
            flag,
            source: if flag { "mad".into() } else { String::new() },
        })
        .collect();
    Ok(DetectionReport::from_windows(windows, window))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_window() {
        let st = rolling_median_mad(&[1.0, 2.0, 3.0, 4.0, 100.0], 5, 1.0);
        assert_eq!(st.len(), 1);
        assert_eq!(st[0].median, 3.0);
        assert_eq!(st[0].mad, 1.0);
    }

    #[test]
    fn constant_series_has_floor_mad() {
        let st = rolling_median_mad(&[4.0; 10], 3, MAD_SCALE);
        assert_eq!(st.len(), 8);
        for s in st {
            assert_eq!(s.median, 4.0);
            assert_eq!(s.mad, 4e-12);
        }
        let samples = vec![FeatureSample([4.0; 12]); 600];
        let flags = detect_mad(&samples, &MadConfig::default(), 40, 20).unwrap();
        assert!(flags.iter().all(|&(_, f)| !f));
    }

    #[test]
    fn even_window_mad() {
        // sorted {1,2,4,8}: median 3, deviations {2,1,1,5} -> median 1.5
        let st = rolling_median_mad(&[8.0, 1.0, 4.0, 2.0], 4, 1.0);
        assert_eq!(st[0].median, 3.0);
        assert_eq!(st[0].mad, 1.5);
    }

    #[test]
    fn short_series_gives_nothing() {
        assert!(rolling_median_mad(&[1.0, 2.0], 3, 1.0).is_empty());
    }

    #[test]
    fn config_validation() {
        assert!(MadConfig { k: 0.0, ..Default::default() }.validate().is_err());
        assert!(MadConfig { fine_window: 2, ..Default::default() }.validate().is_err());
        assert!(MadConfig { features: vec![12], ..Default::default() }.validate().is_err());
    }
}
