#![allow(dead_code)]

use pmugan::detector::{train_model, DetectorConfig, ScoreDistribution};
use pmugan::gan::{TrainConfig, TrainedGan};
use pmugan::phasor::{FeatureSet, PhasorFrame};
use pmugan::synth::{generate_normal, FeederConfig};

/// A few seconds of clean feeder data.
pub fn clean_frames(seed: u64, seconds: f64) -> Vec<PhasorFrame> {
    generate_normal(&FeederConfig {
        seed,
        duration_s: seconds,
        ..FeederConfig::default()
    })
    .unwrap()
}

/// Small, quickly trained config for tests that only need a working model.
pub fn tiny_train_config(iterations: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        iterations,
        seed,
        batch_size: 8,
        max_restarts: 0,
        d_hidden: vec![6],
        g_hidden: vec![6],
        ..TrainConfig::default()
    }
}

pub fn tiny_model(fs: FeatureSet, seed: u64) -> (TrainedGan, ScoreDistribution) {
    let frames = clean_frames(seed, 20.0);
    train_model(&frames, fs, &DetectorConfig::default(), &tiny_train_config(3, seed)).unwrap()
}
