//! The four subcommands.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use pmugan::detector::{
    merge_flags, train_model, BasicDetector, DetectionReport, DetectorConfig, EnhancedDetector, StreamProcessor,
    WindowDetector, WindowResult,
};
use pmugan::eval::{match_events, metrics, MatchResult};
use pmugan::io::{self as pio, ComparisonRow, FrameReader, ModelFile, ReportWriter};
use pmugan::mad::mad_report;
use pmugan::phasor::{derive_features, FeatureSample, FeatureSet};
use pmugan::synth::{build_corpus, default_kind_plan, generate_normal, random_event_plan, GroundTruth};

use crate::config::RunConfig;
use crate::CliError;

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", path.display())))
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Data(format!("cannot open {}: {e}", path.display())))
}

fn context(path: &Path) -> impl Fn(pmugan::Error) -> CliError + '_ {
    move |e| match e {
        pmugan::Error::Config(m) => CliError::Config(m),
        other => CliError::Data(format!("{}: {other}", path.display())),
    }
}

/// Summary of a `synth` run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthSummary {
    pub frames: usize,
    pub events: usize,
}

/// Writes a stream CSV and its ground-truth CSV.
pub fn synth(cfg: &RunConfig, stream_out: &Path, truth_out: &Path) -> Result<SynthSummary, CliError> {
    let (frames, truth) = if cfg.synth.events_per_kind == 0 {
        (generate_normal(&cfg.feeder)?, GroundTruth::default())
    } else {
        let plan: Vec<_> = default_kind_plan()
            .into_iter()
            .filter(|k| cfg.synth.kinds.contains(&k.kind))
            .collect();
        let (specs, needed) = random_event_plan(
            &cfg.feeder,
            &plan,
            cfg.synth.events_per_kind,
            cfg.synth.min_gap_s,
            cfg.synth.seed,
        );
        let have = cfg.feeder.num_frames();
        if needed > have {
            return Err(CliError::Config(format!(
                "feeder.duration_s: {} events need {:.1} s of stream, configured {:.1} s",
                specs.len(),
                needed as f64 / 120.0,
                cfg.feeder.duration_s
            )));
        }
        build_corpus(&cfg.feeder, &specs)?
    };
    pio::write_frames(create(stream_out)?, &frames).map_err(context(stream_out))?;
    pio::write_truth(create(truth_out)?, &truth).map_err(context(truth_out))?;
    Ok(SynthSummary {
        frames: frames.len(),
        events: truth.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Basic,
    Enhanced,
}

/// Files written by one trained model.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedFile {
    pub feature_set: FeatureSet,
    pub model: PathBuf,
    pub diagnostics: PathBuf,
    pub converged: bool,
}

pub fn model_path(dir: &Path, fs: FeatureSet) -> PathBuf {
    dir.join(format!("{fs}.model"))
}

pub fn diagnostics_path(dir: &Path, fs: FeatureSet) -> PathBuf {
    dir.join(format!("{fs}.diagnostics.csv"))
}

/// Trains one (basic) or two (enhanced) models into `out_dir`. Files are
/// written even when the equilibrium check failed; the caller decides.
pub fn train(cfg: &RunConfig, input: &Path, mode: Mode, out_dir: &Path) -> Result<Vec<TrainedFile>, CliError> {
    let frames = pio::read_frames(open(input)?).map_err(context(input))?;
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", out_dir.display())))?;
    let sets: &[FeatureSet] = match mode {
        Mode::Basic => &[FeatureSet::All12],
        Mode::Enhanced => &[FeatureSet::Ipq9, FeatureSet::V3],
    };
    let mut written = Vec::new();
    for &fs in sets {
        let (gan, dist) = train_model(&frames, fs, &cfg.detector, &cfg.train).map_err(context(input))?;
        let model = model_path(out_dir, fs);
        let diagnostics = diagnostics_path(out_dir, fs);
        pio::write_trace(create(&diagnostics)?, &gan.diagnostics.trace).map_err(context(&diagnostics))?;
        let converged = gan.diagnostics.converged;
        pio::write_model(create(&model)?, &ModelFile { gan, dist }).map_err(context(&model))?;
        written.push(TrainedFile {
            feature_set: fs,
            model,
            diagnostics,
            converged,
        });
    }
    Ok(written)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectorKind {
    Basic,
    Enhanced,
    Mad,
}

pub fn load_model(path: &Path) -> Result<ModelFile, CliError> {
    pio::read_model(open(path)?).map_err(context(path))
}

fn check_window(model: &ModelFile, det: &DetectorConfig, path: &Path) -> Result<(), CliError> {
    if model.gan.window != det.window {
        return Err(CliError::Data(format!(
            "{}: model window {} differs from detector.window {}",
            path.display(),
            model.gan.window,
            det.window
        )));
    }
    Ok(())
}

/// Builds the GAN detector for `kind` from model files.
pub fn gan_detector(
    cfg: &RunConfig,
    kind: DetectorKind,
    models: &[PathBuf],
) -> Result<Box<dyn WindowDetector>, CliError> {
    let loaded = models
        .iter()
        .map(|p| {
            let m = load_model(p)?;
            check_window(&m, &cfg.detector, p)?;
            Ok(m)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let mismatch = |expected: &str, got: String| CliError::Data(format!("feature set mismatch: expected {expected}, got {got}"));
    let names = loaded
        .iter()
        .map(|m| m.gan.feature_set.to_string())
        .collect::<Vec<_>>()
        .join(" + ");
    match kind {
        DetectorKind::Basic => match <[ModelFile; 1]>::try_from(loaded) {
            Ok([m]) if m.gan.feature_set == FeatureSet::All12 => Ok(Box::new(BasicDetector {
                gan: m.gan,
                dist: m.dist,
                cfg: cfg.detector,
            })),
            _ => Err(mismatch("one ALL12 model", names.clone())),
        },
        DetectorKind::Enhanced => match <[ModelFile; 2]>::try_from(loaded) {
            Ok([a, b]) => EnhancedDetector::from_parts((a.gan, a.dist), (b.gan, b.dist), cfg.detector)
                .map(|d| Box::new(d) as Box<dyn WindowDetector>)
                .map_err(|_| mismatch("IPQ9 + V3 models", names.clone())),
            Err(_) => Err(mismatch("IPQ9 + V3 models", names.clone())),
        },
        DetectorKind::Mad => unreachable!("mad has no model"),
    }
}

/// Runs a detector over a frame source, writing window rows as they are
/// produced. GAN detectors stream (each window is written when its last
/// frame arrives); the MAD baseline needs the whole series.
pub fn detect<R: Read, W: Write>(
    cfg: &RunConfig,
    kind: DetectorKind,
    models: &[PathBuf],
    input: R,
    windows_out: W,
) -> Result<DetectionReport, CliError> {
    cfg.detector.validate()?;
    let mut out = ReportWriter::new(windows_out)?;
    let frames = FrameReader::new(input);
    let results: Vec<WindowResult> = match kind {
        DetectorKind::Mad => {
            if !models.is_empty() {
                return Err(CliError::Config("the mad detector takes no model file".into()));
            }
            let frames = frames.collect::<pmugan::Result<Vec<_>>>()?;
            let samples: Vec<FeatureSample> = frames.iter().map(derive_features).collect();
            let offset = frames.first().map_or(0, |f| f.timestamp as usize);
            let report = mad_report(&samples, &cfg.mad, cfg.detector.window, cfg.detector.stride, offset)?;
            for w in &report.windows {
                out.write(w)?;
            }
            report.windows
        }
        _ => {
            let det = gan_detector(cfg, kind, models)?;
            let mut proc = StreamProcessor::new(det.as_ref());
            let mut results = Vec::new();
            for frame in frames {
                if let Some(w) = proc.push(&frame?)? {
                    out.write(&w)?;
                    out.flush()?;
                    results.push(w);
                }
            }
            results
        }
    };
    out.flush()?;
    Ok(DetectionReport::from_windows(results, cfg.detector.window))
}

/// A named detection result for evaluation: either merged intervals or
/// per-window flags (merged here).
pub fn load_report_intervals(path: &Path, window: usize) -> Result<Vec<(usize, usize)>, CliError> {
    let mut text = String::new();
    open(path)?
        .read_to_string(&mut text)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let header = text.lines().next().unwrap_or("");
    if header.starts_with("window_start") {
        let windows = pio::read_report(text.as_bytes()).map_err(context(path))?;
        let flags: Vec<(usize, bool)> = windows.iter().map(|w| (w.start_index, w.flag)).collect();
        if flags.windows(2).any(|p| p[1].0 <= p[0].0) {
            return Err(CliError::Data(format!("{}: window starts not increasing", path.display())));
        }
        Ok(merge_flags(&flags, window))
    } else if header.starts_with("t_start") {
        let intervals = pio::read_intervals(text.as_bytes()).map_err(context(path))?;
        if intervals.iter().any(|&(s, e)| e <= s) || intervals.windows(2).any(|p| p[1].0 < p[0].1) {
            return Err(CliError::Data(format!("{}: intervals must be sorted and disjoint", path.display())));
        }
        Ok(intervals)
    } else {
        Err(CliError::Data(format!(
            "{}: not a window report or interval file (header {header:?})",
            path.display()
        )))
    }
}

/// Evaluation output for one report.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub row: ComparisonRow,
    pub matched: MatchResult,
}

pub fn eval(cfg: &RunConfig, truth_path: &Path, reports: &[(String, PathBuf)]) -> Result<Vec<EvalRow>, CliError> {
    let truth = pio::read_truth(open(truth_path)?).map_err(context(truth_path))?;
    reports
        .iter()
        .map(|(name, path)| {
            let intervals = load_report_intervals(path, cfg.detector.window)?;
            let matched = match_events(&intervals, &truth, cfg.slack);
            let m = metrics(&matched).map_err(context(path))?;
            Ok(EvalRow {
                row: ComparisonRow::new(name, &m),
                matched,
            })
        })
        .collect()
}

/// Table-style text summary of an evaluation.
pub fn summary(rows: &[EvalRow]) -> String {
    let mut s = format!(
        "{:<12} {:>9} {:>9} {:>9} {:>9} {:>5} {:>5} {:>5}\n",
        "detector", "precision", "recall", "f1", "accuracy", "tp", "fp", "fn"
    );
    for r in rows {
        s += &format!(
            "{:<12} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>5} {:>5} {:>5}\n",
            r.row.detector, r.row.precision, r.row.recall, r.row.f1, r.row.accuracy, r.matched.tp, r.matched.fp, r.matched.fn_
        );
    }
    if let Some(first) = rows.first() {
        s += "\nrecall by kind\n";
        s += &format!("{:<20}", "kind");
        for r in rows {
            s += &format!(" {:>12}", r.row.detector);
        }
        s += "\n";
        for kind in first.matched.per_kind.keys() {
            s += &format!("{:<20}", kind.as_str());
            for r in rows {
                let cell = r
                    .matched
                    .per_kind
                    .get(kind)
                    .map_or("-".to_string(), |(h, t)| format!("{h}/{t}"));
                s += &format!(" {cell:>12}");
            }
            s += "\n";
        }
    }
    s
}

/// Opens `-` as stdin, anything else as a file.
pub fn input_source(path: &Path) -> Result<Box<dyn Read>, CliError> {
    if path == Path::new("-") {
        Ok(Box::new(io::stdin().lock()))
    } else {
        Ok(Box::new(open(path)?))
    }
}

/// Opens `-` as stdout, anything else as a new file.
pub fn output_sink(path: &Path) -> Result<Box<dyn Write>, CliError> {
    if path == Path::new("-") {
        Ok(Box::new(io::stdout().lock()))
    } else {
        Ok(Box::new(create(path)?))
    }
}
