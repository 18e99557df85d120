//! Event-level matching of detected intervals against ground truth.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::synth::{EventKind, GroundTruth};

pub const DEFAULT_SLACK: usize = 40;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MatchResult {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    /// Whether each ground-truth event (in order) was detected.
    pub hits: Vec<bool>,
    /// Per kind: (detected, total).
    pub per_kind: BTreeMap<EventKind, (usize, usize)>,
}

impl MatchResult {
    pub fn recall_of(&self, kind: EventKind) -> Option<f64> {
        self.per_kind
            .get(&kind)
            .filter(|(_, total)| *total > 0)
            .map(|&(hit, total)| hit as f64 / total as f64)
    }

    /// Pooled recall over several kinds.
    pub fn recall_of_kinds(&self, kinds: &[EventKind]) -> Option<f64> {
        let (hit, total) = kinds
            .iter()
            .filter_map(|k| self.per_kind.get(k))
            .fold((0, 0), |(h, t), &(a, b)| (h + a, t + b));
        (total > 0).then(|| hit as f64 / total as f64)
    }
}

/// Matches sorted detection intervals `[start, end)` against ground truth.
///
/// A truth event is a hit if an unused detection intersects
/// `[t_start - slack, t_end + slack)`; truth events are visited in time order
/// and each takes the earliest such detection.
pub fn match_events(intervals: &[(usize, usize)], truth: &GroundTruth, slack: usize) -> MatchResult {
    let mut used = vec![false; intervals.len()];
    let mut result = MatchResult::default();
    for ev in &truth.events {
        let lo = ev.t_start.saturating_sub(slack);
        let hi = ev.t_end + slack;
        let hit = intervals
            .iter()
            .enumerate()
            .find(|(j, &(s, e))| !used[*j] && s < hi && e > lo)
            .map(|(j, _)| j);
        if let Some(j) = hit {
            used[j] = true;
        }
        result.hits.push(hit.is_some());
        let entry = result.per_kind.entry(ev.kind).or_insert((0, 0));
        entry.1 += 1;
        if hit.is_some() {
            entry.0 += 1;
            result.tp += 1;
        } else {
            result.fn_ += 1;
        }
    }
    result.fp = used.iter().filter(|u| !**u).count();
    result
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// `tp / (tp + fp + fn)`.
    pub accuracy: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn metrics(m: &MatchResult) -> Result<Metrics> {
    let total = m.tp + m.fp + m.fn_;
    if total == 0 {
        return Err(Error::Config("no events and no detections to score".into()));
    }
    let precision = ratio(m.tp, m.tp + m.fp);
    let recall = ratio(m.tp, m.tp + m.fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(Metrics {
        precision,
        recall,
        f1,
        accuracy: ratio(m.tp, total),
    })
}

/// Window-level confusion counts: a window is positive in the truth when it
/// overlaps any event interval.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WindowConfusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

pub fn window_confusion(windows: &[(usize, bool)], window: usize, truth: &GroundTruth) -> WindowConfusion {
    let mut c = WindowConfusion::default();
    for &(s, flag) in windows {
        let e = s + window;
        let positive = truth.events.iter().any(|ev| ev.t_start < e && ev.t_end > s);
        match (flag, positive) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    c
}
