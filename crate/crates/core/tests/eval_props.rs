use pmugan::eval::*;
use pmugan::phasor::Phase;
use pmugan::synth::{EventKind, GroundTruth, LabeledEvent};
use proptest::prelude::*;

fn truth_from(spans: &[(usize, usize, usize)]) -> GroundTruth {
    GroundTruth {
        events: spans
            .iter()
            .map(|&(s, e, k)| LabeledEvent {
                kind: EventKind::ALL[k % EventKind::ALL.len()],
                t_start: s,
                t_end: e,
                phases: vec![Phase::A],
                magnitude: 1.0,
            })
            .collect(),
    }
}

/// Sorted disjoint spans built from (gap, length) pairs.
fn spans(pairs: &[(usize, usize)]) -> Vec<(usize, usize)> {
    let mut t = 0;
    pairs
        .iter()
        .map(|&(gap, len)| {
            let s = t + gap;
            t = s + len;
            (s, t)
        })
        .collect()
}

fn span_strategy(max: usize) -> impl Strategy<Value = Vec<(usize, usize)>> {
    prop::collection::vec((0usize..400, 1usize..300), 0..max).prop_map(|p| spans(&p))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn counts_partition_truth_and_detections(
        truth_spans in span_strategy(15),
        det in span_strategy(15),
        kinds in prop::collection::vec(0usize..7, 15),
        slack in 0usize..100,
    ) {
        let spec: Vec<_> = truth_spans.iter().zip(&kinds).map(|(&(s, e), &k)| (s, e, k)).collect();
        let truth = truth_from(&spec);
        let m = match_events(&det, &truth, slack);
        prop_assert_eq!(m.tp + m.fn_, truth.len());
        prop_assert_eq!(m.tp + m.fp, det.len());
        prop_assert_eq!(m.hits.iter().filter(|h| **h).count(), m.tp);
        let (hit, total) = m.per_kind.values().fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
        prop_assert_eq!(hit, m.tp);
        prop_assert_eq!(total, truth.len());

        if let Ok(x) = metrics(&m) {
            let (tp, fp, fn_) = (m.tp as f64, m.fp as f64, m.fn_ as f64);
            // F1 = 2tp / (2tp + fp + fn) is the harmonic mean without the division by zero cases
            let f1 = if tp > 0.0 { 2.0 * tp / (2.0 * tp + fp + fn_) } else { 0.0 };
            prop_assert!((x.f1 - f1).abs() < 1e-12);
            prop_assert!((x.accuracy - tp / (tp + fp + fn_)).abs() < 1e-15);
            for v in [x.precision, x.recall, x.f1, x.accuracy] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            prop_assert!(x.accuracy <= x.f1 + 1e-15);
        }
    }

    #[test]
    fn exact_report_scores_one(truth_spans in span_strategy(20).prop_filter("non-empty", |v| !v.is_empty()), slack in 0usize..100) {
        let spec: Vec<_> = truth_spans.iter().map(|&(s, e)| (s, e, s)).collect();
        let truth = truth_from(&spec);
        let m = match_events(&truth_spans, &truth, slack);
        let x = metrics(&m).unwrap();
        prop_assert_eq!((x.precision, x.recall, x.f1, x.accuracy), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn more_slack_never_loses_hits(truth_spans in span_strategy(10), det in span_strategy(10), slack in 0usize..100, extra in 0usize..100) {
        let spec: Vec<_> = truth_spans.iter().map(|&(s, e)| (s, e, 0)).collect();
        let truth = truth_from(&spec);
        let a = match_events(&det, &truth, slack);
        let b = match_events(&det, &truth, slack + extra);
        // greedy matching can swap partners, so compare counts only when spans are sparse
        if truth_spans.windows(2).all(|w| w[1].0 >= w[0].1 + 2 * (slack + extra))
            && det.windows(2).all(|w| w[1].0 >= w[0].1 + 2 * (slack + extra)) {
            prop_assert!(b.tp >= a.tp);
        }
    }
}

#[test]
fn detection_inside_slack_counts() {
    let truth = truth_from(&[(1000, 1100, 0)]);
    // ends exactly at t_start - slack: no overlap with [960, 1140)
    assert_eq!(match_events(&[(900, 960)], &truth, 40).tp, 0);
    assert_eq!(match_events(&[(900, 961)], &truth, 40).tp, 1);
    assert_eq!(match_events(&[(1140, 1200)], &truth, 40).tp, 0);
    assert_eq!(match_events(&[(1139, 1200)], &truth, 40).tp, 1);
}

#[test]
fn one_detection_serves_one_event() {
    let truth = truth_from(&[(100, 200, 0), (210, 300, 1)]);
    let m = match_events(&[(150, 260)], &truth, 40);
    assert_eq!((m.tp, m.fp, m.fn_), (1, 0, 1));
    assert_eq!(m.hits, vec![true, false]);
}

#[test]
fn empty_everything_is_an_error() {
    let m = match_events(&[], &GroundTruth::default(), 40);
    assert!(metrics(&m).is_err());
}

#[test]
fn window_confusion_uses_overlap() {
    let truth = truth_from(&[(50, 60, 0)]);
    let w = [(0, true), (20, true), (40, false), (60, false), (80, true)];
    let c = window_confusion(&w, 40, &truth);
    assert_eq!(c, WindowConfusion { tp: 1, fp: 2, fn_: 1, tn: 1 });
}
