//! CSV schemas and the text model format.

use std::io::{BufRead, Read, Write};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::detector::{ScoreDistribution, WindowResult};
use crate::error::{Error, Result};
use crate::eval::{MatchResult, Metrics};
use crate::gan::{EquilibriumReport, IterRecord, TrainDiagnostics, TrainedGan};
use crate::nn::{Activation, Dense, LstmLayer, Network};
use crate::phasor::{FeatureSet, Normalizer, Phase, PhasorFrame, NUM_FEATURES};
use crate::synth::{EventKind, GroundTruth, LabeledEvent};

#[derive(Debug, Serialize, Deserialize)]
struct FrameRow {
    ts: u64,
    va_mag: f64,
    va_ang: f64,
    vb_mag: f64,
    vb_ang: f64,
    vc_mag: f64,
    vc_ang: f64,
    ia_mag: f64,
    ia_ang: f64,
    ib_mag: f64,
    ib_ang: f64,
    ic_mag: f64,
    ic_ang: f64,
}

impl From<&PhasorFrame> for FrameRow {
    fn from(f: &PhasorFrame) -> Self {
        FrameRow {
            ts: f.timestamp,
            va_mag: f.v_mag[0],
            va_ang: f.v_ang[0],
            vb_mag: f.v_mag[1],
            vb_ang: f.v_ang[1],
            vc_mag: f.v_mag[2],
            vc_ang: f.v_ang[2],
            ia_mag: f.i_mag[0],
            ia_ang: f.i_ang[0],
            ib_mag: f.i_mag[1],
            ib_ang: f.i_ang[1],
            ic_mag: f.i_mag[2],
            ic_ang: f.i_ang[2],
        }
    }
}

impl From<FrameRow> for PhasorFrame {
    fn from(r: FrameRow) -> Self {
        PhasorFrame {
            timestamp: r.ts,
            v_mag: [r.va_mag, r.vb_mag, r.vc_mag],
            v_ang: [r.va_ang, r.vb_ang, r.vc_ang],
            i_mag: [r.ia_mag, r.ib_mag, r.ic_mag],
            i_ang: [r.ia_ang, r.ib_ang, r.ic_ang],
        }
    }
}

fn csv_reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(true).from_reader(r)
}

/// Row-at-a-time frame reader. Each frame is validated, and timestamps must
/// increase by exactly one.
pub struct FrameReader<R: Read> {
    records: csv::DeserializeRecordsIntoIter<R, FrameRow>,
    row: usize,
    last: Option<u64>,
}

impl<R: Read> FrameReader<R> {
    pub fn new(r: R) -> Self {
        FrameReader {
            records: csv_reader(r).into_deserialize(),
            row: 0,
            last: None,
        }
    }
}

impl<R: Read> Iterator for FrameReader<R> {
    type Item = Result<PhasorFrame>;

    fn next(&mut self) -> Option<Self::Item> {
        let rec = self.records.next()?;
        let row = self.row;
        self.row += 1;
        let frame: PhasorFrame = match rec {
            Ok(r) => FrameRow::into(r),
            Err(e) => return Some(Err(e.into())),
        };
        if let Err(reason) = frame.validate() {
            return Some(Err(Error::InvalidFrame { row, reason }));
        }
        if let Some(prev) = self.last {
            if frame.timestamp <= prev {
                return Some(Err(Error::Unordered {
                    row,
                    prev,
                    next: frame.timestamp,
                }));
            }
            if frame.timestamp != prev + 1 {
                return Some(Err(Error::InvalidFrame {
                    row,
                    reason: format!("gap in stream: {prev} -> {}", frame.timestamp),
                }));
            }
        }
        self.last = Some(frame.timestamp);
        Some(Ok(frame))
    }
}

pub fn read_frames<R: Read>(r: R) -> Result<Vec<PhasorFrame>> {
    FrameReader::new(r).collect()
}

pub fn write_frames<W: Write>(w: W, frames: &[PhasorFrame]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    if frames.is_empty() {
        out.write_record(FRAME_HEADER)?;
    }
    for f in frames {
        out.serialize(FrameRow::from(f))?;
    }
    out.flush()?;
    Ok(())
}

pub const FRAME_HEADER: [&str; 13] = [
    "ts", "va_mag", "va_ang", "vb_mag", "vb_ang", "vc_mag", "vc_ang", "ia_mag", "ia_ang", "ib_mag", "ib_ang",
    "ic_mag", "ic_ang",
];

#[derive(Debug, Serialize, Deserialize)]
struct TruthRow {
    kind: String,
    t_start: usize,
    t_end: usize,
    phases: String,
    magnitude: f64,
}

pub fn write_truth<W: Write>(w: W, truth: &GroundTruth) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    if truth.is_empty() {
        out.write_record(["kind", "t_start", "t_end", "phases", "magnitude"])?;
    }
    for e in &truth.events {
        out.serialize(TruthRow {
            kind: e.kind.as_str().to_string(),
            t_start: e.t_start,
            t_end: e.t_end,
            phases: e.phases.iter().map(|p| p.as_char()).collect(),
            magnitude: e.magnitude,
        })?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_truth<R: Read>(r: R) -> Result<GroundTruth> {
    let mut events = Vec::new();
    for (row, rec) in csv_reader(r).into_deserialize::<TruthRow>().enumerate() {
        let rec = rec?;
        let phases = rec
            .phases
            .chars()
            .map(|c| Phase::from_char(c).ok_or_else(|| bad_row(row, format!("phase {c:?}"))))
            .collect::<Result<Vec<_>>>()?;
        if rec.t_end <= rec.t_start {
            return Err(bad_row(row, "t_end must exceed t_start".into()));
        }
        events.push(LabeledEvent {
            kind: rec.kind.parse::<EventKind>()?,
            t_start: rec.t_start,
            t_end: rec.t_end,
            phases,
            magnitude: rec.magnitude,
        });
    }
    events.sort_by_key(|e| e.t_start);
    Ok(GroundTruth { events })
}

fn bad_row(row: usize, reason: String) -> Error {
    Error::InvalidFrame { row, reason }
}

#[derive(Debug, Serialize, Deserialize)]
struct ReportRow {
    window_start: usize,
    score_s: Option<f64>,
    score_s1: Option<f64>,
    score_s2: Option<f64>,
    flag: u8,
    source: String,
}

pub const REPORT_HEADER: [&str; 6] = ["window_start", "score_s", "score_s1", "score_s2", "flag", "source"];

/// Appends window rows to an open writer; used by both batch and streaming
/// detection.
pub struct ReportWriter<W: Write> {
    out: csv::Writer<W>,
}

impl<W: Write> ReportWriter<W> {
    pub fn new(w: W) -> Result<Self> {
        let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        out.write_record(REPORT_HEADER)?;
        Ok(ReportWriter { out })
    }

    pub fn write(&mut self, r: &WindowResult) -> Result<()> {
        self.out.serialize(ReportRow {
            window_start: r.start_index,
            score_s: r.score_s,
            score_s1: r.score_s1,
            score_s2: r.score_s2,
            flag: r.flag as u8,
            source: r.source.clone(),
        })?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

pub fn write_report<W: Write>(w: W, windows: &[WindowResult]) -> Result<()> {
    let mut out = ReportWriter::new(w)?;
    for r in windows {
        out.write(r)?;
    }
    out.flush()
}

pub fn read_report<R: Read>(r: R) -> Result<Vec<WindowResult>> {
    csv_reader(r)
        .into_deserialize::<ReportRow>()
        .enumerate()
        .map(|(row, rec)| {
            let rec = rec?;
            if rec.flag > 1 {
                return Err(bad_row(row, format!("flag {} is not 0 or 1", rec.flag)));
            }
            Ok(WindowResult {
                start_index: rec.window_start,
                score_s: rec.score_s,
                score_s1: rec.score_s1,
                score_s2: rec.score_s2,
                flag: rec.flag == 1,
                source: rec.source,
            })
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct IntervalRow {
    t_start: usize,
    t_end: usize,
}

pub fn write_intervals<W: Write>(w: W, intervals: &[(usize, usize)]) -> Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(["t_start", "t_end"])?;
    for &(t_start, t_end) in intervals {
        out.serialize(IntervalRow { t_start, t_end })?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_intervals<R: Read>(r: R) -> Result<Vec<(usize, usize)>> {
    csv_reader(r)
        .into_deserialize::<IntervalRow>()
        .map(|rec| rec.map(|r| (r.t_start, r.t_end)).map_err(Error::from))
        .collect()
}

pub fn write_trace<W: Write>(w: W, trace: &[IterRecord]) -> Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(["iter", "d_loss", "g_loss", "value_fn", "m_real", "m_fake"])?;
    for r in trace {
        out.serialize((r.iter, r.d_loss, r.g_loss, r.value_fn, r.m_real, r.m_fake))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_trace<R: Read>(r: R) -> Result<Vec<IterRecord>> {
    csv_reader(r)
        .into_deserialize::<(usize, f64, f64, f64, f64, f64)>()
        .map(|rec| {
            let (iter, d_loss, g_loss, value_fn, m_real, m_fake) = rec?;
            Ok(IterRecord {
                iter,
                d_loss,
                g_loss,
                value_fn,
                m_real,
                m_fake,
            })
        })
        .collect()
}

/// One row of the detector comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub detector: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
}

impl ComparisonRow {
    pub fn new(detector: &str, m: &Metrics) -> Self {
        ComparisonRow {
            detector: detector.to_string(),
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
            accuracy: m.accuracy,
        }
    }
}

pub fn write_comparison<W: Write>(w: W, rows: &[ComparisonRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_comparison<R: Read>(r: R) -> Result<Vec<ComparisonRow>> {
    csv_reader(r)
        .into_deserialize()
        .map(|rec| rec.map_err(Error::from))
        .collect()
}

/// Per-kind recall table: `detector,kind,detected,total,recall`.
pub fn write_kind_recall<W: Write>(w: W, results: &[(String, MatchResult)]) -> Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(["detector", "kind", "detected", "total", "recall"])?;
    for (name, m) in results {
        for (kind, &(hit, total)) in &m.per_kind {
            let recall = if total > 0 { hit as f64 / total as f64 } else { 0.0 };
            out.serialize((name, kind.as_str(), hit, total, recall))?;
        }
    }
    out.flush()?;
    Ok(())
}

// ---- model files ----

const MAGIC: &str = "PMUGAN v1";

/// A trained GAN plus the Normal fitted to its training scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub gan: TrainedGan,
    pub dist: ScoreDistribution,
}

fn fmt_values<'a>(vals: impl Iterator<Item = &'a f64>) -> String {
    vals.map(|v| format!("{v:.16e}")).collect::<Vec<_>>().join(" ")
}

fn write_matrix<W: Write>(w: &mut W, name: &str, m: &Array2<f64>) -> Result<()> {
    writeln!(w, "param {name} {} {}", m.nrows(), m.ncols())?;
    for row in m.rows() {
        writeln!(w, "{}", fmt_values(row.iter()))?;
    }
    Ok(())
}

fn write_vector<W: Write>(w: &mut W, name: &str, v: &Array1<f64>) -> Result<()> {
    writeln!(w, "param {name} 1 {}", v.len())?;
    writeln!(w, "{}", fmt_values(v.iter()))?;
    Ok(())
}

fn write_network<W: Write>(w: &mut W, role: &str, net: &Network) -> Result<()> {
    writeln!(w, "network {role}")?;
    writeln!(w, "activation {}", net.activation)?;
    for layer in &net.lstm {
        writeln!(w, "layer lstm {} {}", layer.input_dim, layer.hidden_dim)?;
    }
    writeln!(w, "layer dense {} {}", net.head.w.ncols(), net.head.w.nrows())?;
    for (k, layer) in net.lstm.iter().enumerate() {
        write_matrix(w, &format!("lstm{k}.w_x"), &layer.w_x)?;
        write_matrix(w, &format!("lstm{k}.w_h"), &layer.w_h)?;
        write_vector(w, &format!("lstm{k}.b"), &layer.b)?;
    }
    write_matrix(w, "head.w", &net.head.w)?;
    write_vector(w, "head.b", &net.head.b)?;
    writeln!(w, "end")?;
    Ok(())
}

pub fn write_model<W: Write>(mut w: W, model: &ModelFile) -> Result<()> {
    let gan = &model.gan;
    let diag = &gan.diagnostics;
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "feature_set {}", gan.feature_set)?;
    writeln!(w, "window {}", gan.window)?;
    writeln!(w, "normalizer_lo {}", fmt_values(gan.normalizer.lo.iter()))?;
    writeln!(w, "normalizer_hi {}", fmt_values(gan.normalizer.hi.iter()))?;
    write_network(&mut w, "discriminator", &gan.discriminator)?;
    write_network(&mut w, "generator", &gan.generator)?;
    writeln!(
        w,
        "training converged {} restarts {} non_saturating {} m_real {:.16e} m_fake {:.16e}",
        diag.converged as u8, diag.restarts, diag.non_saturating as u8, diag.equilibrium.m_real, diag.equilibrium.m_fake
    )?;
    writeln!(w, "score_distribution {:.16e} {:.16e}", model.dist.mean, model.dist.std)?;
    w.flush()?;
    Ok(())
}

struct Lines<R: BufRead> {
    inner: std::io::Lines<R>,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    fn next_line(&mut self) -> Result<String> {
        self.line += 1;
        match self.inner.next() {
            Some(l) => Ok(l?),
            None => Err(self.err("unexpected end of file")),
        }
    }

    fn err(&self, msg: impl std::fmt::Display) -> Error {
        Error::ModelFormat(format!("line {}: {msg}", self.line))
    }

    /// Next line split into words, checking the leading keyword.
    fn expect(&mut self, keyword: &str) -> Result<Vec<String>> {
        let line = self.next_line()?;
        let mut words = line.split_whitespace().map(str::to_string);
        match words.next() {
            Some(k) if k == keyword => Ok(words.collect()),
            other => Err(self.err(format!("expected {keyword:?}, found {other:?}"))),
        }
    }

    fn parse<T: std::str::FromStr>(&self, s: &str) -> Result<T> {
        s.parse().map_err(|_| self.err(format!("cannot parse {s:?}")))
    }

    fn floats(&self, words: &[String], n: usize) -> Result<Vec<f64>> {
        if words.len() != n {
            return Err(self.err(format!("expected {n} values, found {}", words.len())));
        }
        words.iter().map(|w| self.parse(w)).collect()
    }

    fn matrix(&mut self, name: &str, rows: usize, cols: usize) -> Result<Array2<f64>> {
        let head = self.expect("param")?;
        let dims = if head.len() == 3 && head[0] == name {
            (self.parse::<usize>(&head[1])?, self.parse::<usize>(&head[2])?)
        } else {
            return Err(self.err(format!("expected param {name}")));
        };
        if dims != (rows, cols) {
            return Err(self.err(format!("{name} is {dims:?}, architecture says {:?}", (rows, cols))));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let line = self.next_line()?;
            let words: Vec<String> = line.split_whitespace().map(str::to_string).collect();
            data.extend(self.floats(&words, cols)?);
        }
        Ok(Array2::from_shape_vec((rows, cols), data).expect("sized above"))
    }
}

fn read_network<R: BufRead>(lines: &mut Lines<R>, role: &str) -> Result<Network> {
    let words = lines.expect("network")?;
    if words != [role] {
        return Err(lines.err(format!("expected network {role}")));
    }
    let act = lines.expect("activation")?;
    let activation: Activation = lines.parse(act.first().map_or("", String::as_str))?;
    let mut dims = Vec::new();
    let head_dims = loop {
        let words = lines.expect("layer")?;
        if words.len() != 3 {
            return Err(lines.err("layer needs kind and two dims"));
        }
        let (a, b) = (lines.parse::<usize>(&words[1])?, lines.parse::<usize>(&words[2])?);
        match words[0].as_str() {
            "lstm" => dims.push((a, b)),
            "dense" => break (a, b),
            other => return Err(lines.err(format!("unknown layer kind {other:?}"))),
        }
    };
    if dims.is_empty() {
        return Err(lines.err("network has no lstm layer"));
    }
    for pair in dims.windows(2) {
        if pair[0].1 != pair[1].0 {
            return Err(lines.err("lstm layer dims do not chain"));
        }
    }
    if head_dims.0 != dims.last().unwrap().1 {
        return Err(lines.err("dense input does not match last lstm width"));
    }
    let mut lstm = Vec::with_capacity(dims.len());
    for (k, &(input, hidden)) in dims.iter().enumerate() {
        let w_x = lines.matrix(&format!("lstm{k}.w_x"), input, 4 * hidden)?;
        let w_h = lines.matrix(&format!("lstm{k}.w_h"), hidden, 4 * hidden)?;
        let b = lines.matrix(&format!("lstm{k}.b"), 1, 4 * hidden)?;
        lstm.push(LstmLayer {
            input_dim: input,
            hidden_dim: hidden,
            w_x,
            w_h,
            b: b.row(0).to_owned(),
        });
    }
    let w = lines.matrix("head.w", head_dims.1, head_dims.0)?;
    let b = lines.matrix("head.b", 1, head_dims.1)?;
    lines.expect("end")?;
    Ok(Network {
        lstm,
        head: Dense { w, b: b.row(0).to_owned() },
        activation,
    })
}

pub fn read_model<R: BufRead>(r: R) -> Result<ModelFile> {
    let mut lines = Lines { inner: r.lines(), line: 0 };
    if lines.next_line()?.trim_end() != MAGIC {
        return Err(lines.err(format!("missing {MAGIC:?} header")));
    }
    let fs = lines.expect("feature_set")?;
    let feature_set: FeatureSet = lines.parse(fs.first().map_or("", String::as_str))?;
    let win = lines.expect("window")?;
    let window: usize = lines.parse(win.first().map_or("", String::as_str))?;
    let lo = lines.expect("normalizer_lo")?;
    let lo = lines.floats(&lo, NUM_FEATURES)?;
    let hi = lines.expect("normalizer_hi")?;
    let hi = lines.floats(&hi, NUM_FEATURES)?;
    let discriminator = read_network(&mut lines, "discriminator")?;
    let generator = read_network(&mut lines, "generator")?;
    if discriminator.input_dim() != feature_set.width() || generator.output_dim() != feature_set.width() {
        return Err(lines.err(format!("network widths do not match feature set {feature_set}")));
    }
    let t = lines.expect("training")?;
    let field = |key: &str| -> Result<&String> {
        t.iter()
            .position(|w| w == key)
            .and_then(|i| t.get(i + 1))
            .ok_or_else(|| lines.err(format!("training line lacks {key}")))
    };
    let converged = lines.parse::<u8>(field("converged")?)? == 1;
    let restarts = lines.parse(field("restarts")?)?;
    let non_saturating = lines.parse::<u8>(field("non_saturating")?)? == 1;
    let m_real = lines.parse(field("m_real")?)?;
    let m_fake = lines.parse(field("m_fake")?)?;
    let sd = lines.expect("score_distribution")?;
    let sd = lines.floats(&sd, 2)?;
    let mut normalizer = Normalizer {
        lo: [0.0; NUM_FEATURES],
        hi: [0.0; NUM_FEATURES],
    };
    normalizer.lo.copy_from_slice(&lo);
    normalizer.hi.copy_from_slice(&hi);
    let gan = TrainedGan {
        discriminator,
        generator,
        normalizer,
        feature_set,
        window,
        diagnostics: TrainDiagnostics {
            trace: Vec::new(),
            restarts,
            equilibrium: EquilibriumReport {
                m_real,
                m_fake,
                passed: converged,
            },
            converged,
            non_saturating,
            attempt_deviation: Vec::new(),
        },
    };
    Ok(ModelFile {
        gan,
        dist: ScoreDistribution { mean: sd[0], std: sd[1] },
    })
}
