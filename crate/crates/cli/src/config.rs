//! Flat `key = value` run configuration.

use std::fmt::Write as _;
use std::path::Path;

use pmugan::detector::DetectorConfig;
use pmugan::gan::TrainConfig;
use pmugan::mad::MadConfig;
use pmugan::synth::{EventKind, FeederConfig};

use crate::CliError;

/// Options for `synth` beyond the feeder itself.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthOptions {
    /// Events of each listed kind; 0 writes a clean stream.
    pub events_per_kind: usize,
    pub min_gap_s: f64,
    pub seed: u64,
    pub kinds: Vec<EventKind>,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            events_per_kind: 0,
            min_gap_s: 8.0,
            seed: 1,
            kinds: EventKind::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub feeder: FeederConfig,
    pub synth: SynthOptions,
    pub train: TrainConfig,
    pub detector: DetectorConfig,
    pub mad: MadConfig,
    pub slack: usize,
}

trait Value: Sized {
    fn parse(s: &str) -> Result<Self, String>;
    fn show(&self) -> String;
}

macro_rules! scalar_value {
    ($($t:ty),*) => {$(
        impl Value for $t {
            fn parse(s: &str) -> Result<Self, String> {
                s.parse().map_err(|e| format!("{e}"))
            }
            fn show(&self) -> String {
                self.to_string()
            }
        }
    )*};
}
scalar_value!(f64, usize, u64);

impl Value for bool {
    fn parse(s: &str) -> Result<Self, String> {
        match s {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            _ => Err(format!("expected true/false, got {s:?}")),
        }
    }
    fn show(&self) -> String {
        self.to_string()
    }
}

impl Value for Vec<usize> {
    fn parse(s: &str) -> Result<Self, String> {
        s.split(',').map(|p| p.trim().parse().map_err(|e| format!("{p:?}: {e}"))).collect()
    }
    fn show(&self) -> String {
        self.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
    }
}

impl Value for Vec<EventKind> {
    fn parse(s: &str) -> Result<Self, String> {
        s.split(',').map(|p| p.trim().parse().map_err(|e| format!("{e}"))).collect()
    }
    fn show(&self) -> String {
        self.iter().map(|k| k.as_str()).collect::<Vec<_>>().join(",")
    }
}

/// One configuration key.
pub struct Key {
    pub name: &'static str,
    pub doc: &'static str,
    get: fn(&RunConfig) -> String,
    set: fn(&mut RunConfig, &str) -> Result<(), String>,
}

macro_rules! key {
    ($name:literal, $doc:literal, |$c:ident| $place:expr) => {
        Key {
            name: $name,
            doc: $doc,
            get: |$c: &RunConfig| Value::show(&$place),
            set: |$c: &mut RunConfig, s: &str| {
                $place = Value::parse(s)?;
                Ok(())
            },
        }
    };
}

pub static KEYS: &[Key] = &[
    key!("feeder.seed", "noise and drift-phase seed", |c| c.feeder.seed),
    key!("feeder.duration_s", "stream length, seconds", |c| c.feeder.duration_s),
    key!("feeder.base_v", "nominal phase voltage, volts", |c| c.feeder.base_v),
    key!("feeder.base_i_a", "phase A load current, amperes", |c| c.feeder.base_i[0]),
    key!("feeder.base_i_b", "phase B load current, amperes", |c| c.feeder.base_i[1]),
    key!("feeder.base_i_c", "phase C load current, amperes", |c| c.feeder.base_i[2]),
    key!("feeder.noise_v", "relative voltage noise std", |c| c.feeder.noise_v),
    key!("feeder.noise_i", "relative current noise std", |c| c.feeder.noise_i),
    key!("feeder.noise_ang", "current angle noise std, radians", |c| c.feeder.noise_ang),
    key!("feeder.load_drift_period_s", "load drift period, seconds", |c| c.feeder.load_drift_period_s),
    key!("feeder.load_drift_depth", "relative load drift amplitude", |c| c.feeder.load_drift_depth),
    key!("feeder.v_drift_coupling", "share of load drift seen on voltage", |c| c.feeder.v_drift_coupling),
    key!("feeder.pf_base", "power-factor angle, radians", |c| c.feeder.pf_base),
    key!("synth.events_per_kind", "events of each kind (0 = clean stream)", |c| c.synth.events_per_kind),
    key!("synth.min_gap_s", "clean seconds between events", |c| c.synth.min_gap_s),
    key!("synth.seed", "event plan seed", |c| c.synth.seed),
    key!("synth.kinds", "comma-separated event kinds", |c| c.synth.kinds),
    key!("train.batch_size", "blocks per batch", |c| c.train.batch_size),
    key!("train.iterations", "training rounds per attempt", |c| c.train.iterations),
    key!("train.d_steps_per_iter", "discriminator steps per round", |c| c.train.d_steps_per_iter),
    key!("train.g_steps_per_iter", "generator steps per round", |c| c.train.g_steps_per_iter),
    key!("train.seed", "initialization and sampling seed", |c| c.train.seed),
    key!("train.noise_mean", "generator noise mean", |c| c.train.noise.mean),
    key!("train.noise_std", "generator noise std", |c| c.train.noise.std),
    key!("train.noise_dim", "generator noise width per step", |c| c.train.noise.dim),
    key!("train.equilibrium_eps", "allowed |mean D - 0.5| on held-out and fake", |c| c.train.equilibrium_eps),
    key!("train.max_restarts", "re-initializations after a failed check", |c| c.train.max_restarts),
    key!("train.non_saturating_g_loss", "use -log D(G(z)) for the generator", |c| c.train.non_saturating_g_loss),
    key!("train.d_lr", "discriminator Adam learning rate", |c| c.train.d_adam.lr),
    key!("train.g_lr", "generator Adam learning rate", |c| c.train.g_adam.lr),
    key!("train.d_hidden", "discriminator LSTM widths", |c| c.train.d_hidden),
    key!("train.g_hidden", "generator LSTM widths", |c| c.train.g_hidden),
    key!("train.holdout_fraction", "tail share of blocks for the equilibrium check", |c| c.train.holdout_fraction),
    key!("detector.z_p", "flag threshold in fitted std units", |c| c.detector.z_p),
    key!("detector.window", "window length, samples", |c| c.detector.window),
    key!("detector.stride", "window stride, samples", |c| c.detector.stride),
    key!("mad.coarse_window", "long trailing window, samples", |c| c.mad.coarse_window),
    key!("mad.fine_window", "short trailing window, samples", |c| c.mad.fine_window),
    key!("mad.k", "threshold in scaled MADs", |c| c.mad.k),
    key!("mad.scale", "MAD consistency constant", |c| c.mad.mad_scale),
    key!("eval.slack", "matching slack, samples", |c| c.slack),
];

impl RunConfig {
    pub fn new() -> Self {
        RunConfig {
            slack: pmugan::eval::DEFAULT_SLACK,
            ..Default::default()
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let k = KEYS
            .iter()
            .find(|k| k.name == key)
            .ok_or_else(|| CliError::Config(format!("unknown config key {key:?}")))?;
        (k.set)(self, value.trim()).map_err(|reason| CliError::Config(format!("{key}: {reason}")))
    }

    pub fn get(&self, key: &str) -> Option<String> {
        KEYS.iter().find(|k| k.name == key).map(|k| (k.get)(self))
    }

    /// Applies `key=value` (or `key = value`) text.
    pub fn apply_assignment(&mut self, line: &str) -> Result<(), CliError> {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("expected key=value, got {line:?}")))?;
        self.set(k.trim(), v)
    }

    /// Reads a config file: one assignment per line, `#` comments.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            self.apply_assignment(line)
                .map_err(|e| CliError::Config(format!("{}:{}: {e}", path.display(), n + 1)))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let wrap = |prefix: &str, r: pmugan::Result<()>| r.map_err(|e| CliError::Config(format!("{prefix}: {e}")));
        wrap("feeder", self.feeder.validate())?;
        wrap("train", self.train.validate())?;
        wrap("detector", self.detector.validate())?;
        wrap("mad", self.mad.validate())?;
        if self.synth.kinds.is_empty() {
            return Err(CliError::Config("synth.kinds: empty".into()));
        }
        if !(self.synth.min_gap_s >= 0.0) {
            return Err(CliError::Config("synth.min_gap_s: must be >= 0".into()));
        }
        Ok(())
    }

    /// Every key with its current value, one per line.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for k in KEYS {
            let _ = writeln!(out, "{} = {}", k.name, (k.get)(self));
        }
        out
    }
}

/// Key reference for `--help`: name, default and description.
pub fn key_help() -> String {
    let defaults = RunConfig::new();
    let mut out = String::from("Config keys (set with --set key=value or a --config file):\n");
    for k in KEYS {
        let _ = writeln!(out, "  {:<30} {:<14} {}", k.name, (k.get)(&defaults), k.doc);
    }
    out
}
