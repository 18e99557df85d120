//! Small LSTM network engine: stacked LSTM layers, a dense head, BPTT, Adam
//! and a finite-difference gradient checker. 64-bit floats throughout.

mod adam;
mod gradcheck;
mod lstm;
mod network;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use lstm::{LstmCache, LstmLayer};
pub use network::{Activation, Architecture, Dense, DiscPass, GenPass, Network};

use ndarray::Array2;
use rand::Rng;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn uniform_init(buf: &mut [f64], k: f64, rng: &mut impl Rng) {
    for v in buf {
        *v = rng.gen_range(-k..=k);
    }
}

/// Access to every parameter tensor as a flat slice, in a fixed order.
pub trait Parameters {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;
    fn tensor_names(&self) -> Vec<String>;

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// Converts per-sample `W x F` blocks into time-major `B x F` step matrices.
pub fn time_major(blocks: &[&Array2<f64>]) -> Vec<Array2<f64>> {
    let Some(first) = blocks.first() else {
        return Vec::new();
    };
    let (steps, width) = first.dim();
    (0..steps)
        .map(|t| Array2::from_shape_fn((blocks.len(), width), |(b, f)| blocks[b][[t, f]]))
        .collect()
}

/// Inverse of [`time_major`].
pub fn batch_major(steps: &[Array2<f64>]) -> Vec<Array2<f64>> {
    let Some(first) = steps.first() else {
        return Vec::new();
    };
    let (batch, width) = first.dim();
    (0..batch)
        .map(|b| Array2::from_shape_fn((steps.len(), width), |(t, f)| steps[t][[b, f]]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_is_stable() {
        assert_eq!(softplus(1000.0), 1000.0);
        assert_eq!(softplus(-1000.0), 0.0);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        // log(sigmoid(a)) = -softplus(-a)
        for a in [-3.0, -0.2, 0.0, 1.7, 5.0] {
            assert!((sigmoid(a).ln() + softplus(-a)).abs() < 1e-14);
        }
    }

    #[test]
    fn layout_round_trip() {
        let blocks: Vec<Array2<f64>> = (0..3)
            .map(|b| Array2::from_shape_fn((5, 2), |(t, f)| (100 * b + 10 * t + f) as f64))
            .collect();
        let refs: Vec<&Array2<f64>> = blocks.iter().collect();
        let steps = time_major(&refs);
        assert_eq!(steps.len(), 5);
        assert_eq!(steps[4][[2, 1]], 241.0);
        assert_eq!(batch_major(&steps), blocks);
    }
}
