use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use crate::error::{Error, Result};

use super::{sigmoid, uniform_init, LstmCache, LstmLayer, Parameters};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    /// Discriminator: head on the final hidden state, sigmoid output.
    Sigmoid,
    /// Generator: head on every step, tanh output.
    Tanh,
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            _ => Err(Error::ModelFormat(format!("unknown activation {s:?}"))),
        }
    }
}

/// Dense layer, `y = W x + b` with `W` stored `out_dim x in_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Dense {
            w: Array2::zeros((out_dim, in_dim)),
            b: Array1::zeros(out_dim),
        }
    }

    pub fn init(in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        let k = 1.0 / (in_dim as f64).sqrt();
        let mut d = Dense::zeros(in_dim, out_dim);
        uniform_init(d.w.as_slice_mut().unwrap(), k, rng);
        uniform_init(d.b.as_slice_mut().unwrap(), k, rng);
        d
    }

    pub fn in_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.w.nrows()
    }

    /// `B x in` -> `B x out`, pre-activation.
    fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut y = x.dot(&self.w.t());
        y += &self.b;
        y
    }
}

/// Layer dimensions of a network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
}

impl Architecture {
    /// Default discriminator: LSTM 32 -> LSTM 16 -> dense(1) -> sigmoid.
    pub fn discriminator(features: usize) -> Self {
        Architecture {
            input_dim: features,
            hidden: vec![32, 16],
            output_dim: 1,
            activation: Activation::Sigmoid,
        }
    }

    /// Default generator: LSTM 32 -> LSTM 32 -> per-step dense(F) -> tanh.
    pub fn generator(noise_dim: usize, features: usize) -> Self {
        Architecture {
            input_dim: noise_dim,
            hidden: vec![32, 32],
            output_dim: features,
            activation: Activation::Tanh,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() || self.hidden.contains(&0) || self.input_dim == 0 {
            return Err(Error::Config(format!("bad architecture {self:?}")));
        }
        if self.activation == Activation::Sigmoid && self.output_dim != 1 {
            return Err(Error::Config("discriminator head must have one output".into()));
        }
        Ok(())
    }
}

/// Stacked LSTM layers followed by a dense head.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub lstm: Vec<LstmLayer>,
    pub head: Dense,
    pub activation: Activation,
}

/// Cached discriminator forward pass.
#[derive(Debug, Clone)]
pub struct DiscPass {
    pub caches: Vec<LstmCache>,
    /// Pre-sigmoid outputs, one per batch row.
    pub logits: Array1<f64>,
}

impl DiscPass {
    pub fn scores(&self) -> Array1<f64> {
        self.logits.mapv(sigmoid)
    }
}

/// Cached generator forward pass.
#[derive(Debug, Clone)]
pub struct GenPass {
    pub caches: Vec<LstmCache>,
    /// Post-tanh outputs, one `B x F` matrix per step.
    pub out: Vec<Array2<f64>>,
}

impl Network {
    pub fn init(arch: &Architecture, rng: &mut impl Rng) -> Result<Self> {
        arch.validate()?;
        let mut lstm = Vec::with_capacity(arch.hidden.len());
        let mut in_dim = arch.input_dim;
        for &h in &arch.hidden {
            lstm.push(LstmLayer::init(in_dim, h, rng));
            in_dim = h;
        }
        Ok(Network {
            lstm,
            head: Dense::init(in_dim, arch.output_dim, rng),
            activation: arch.activation,
        })
    }

    pub fn zeros(arch: &Architecture) -> Result<Self> {
        arch.validate()?;
        let mut lstm = Vec::new();
        let mut in_dim = arch.input_dim;
        for &h in &arch.hidden {
            lstm.push(LstmLayer::zeros(in_dim, h));
            in_dim = h;
        }
        Ok(Network {
            lstm,
            head: Dense::zeros(in_dim, arch.output_dim),
            activation: arch.activation,
        })
    }

    /// Same shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        Network::zeros(&self.architecture()).expect("existing network has a valid shape")
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            input_dim: self.input_dim(),
            hidden: self.lstm.iter().map(|l| l.hidden_dim).collect(),
            output_dim: self.head.out_dim(),
            activation: self.activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.lstm[0].input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.head.out_dim()
    }

    fn check_chain(&self) -> Result<()> {
        let mut d = self.input_dim();
        for l in &self.lstm {
            if l.input_dim != d {
                return Err(Error::Shape("lstm layer dims do not chain".into()));
            }
            d = l.hidden_dim;
        }
        if self.head.in_dim() != d {
            return Err(Error::Shape("head input does not match last hidden".into()));
        }
        Ok(())
    }

    fn run_stack(&self, x_seq: &[Array2<f64>]) -> Result<Vec<LstmCache>> {
        self.check_chain()?;
        let mut caches: Vec<LstmCache> = Vec::with_capacity(self.lstm.len());
        for layer in &self.lstm {
            let input = match caches.last() {
                Some(c) => c.outputs(),
                None => x_seq,
            };
            caches.push(layer.forward(input, None, None)?);
        }
        Ok(caches)
    }

    fn backward_stack(
        &self,
        caches: &[LstmCache],
        top_dh: Vec<Option<Array2<f64>>>,
        grads: &mut Network,
    ) -> Vec<Array2<f64>> {
        let mut dh = top_dh;
        let mut dx = Vec::new();
        for (l, layer) in self.lstm.iter().enumerate().rev() {
            let (g, d) = layer.backward(&caches[l], &dh);
            grads.lstm[l] = g;
            dh = d.iter().cloned().map(Some).collect();
            dx = d;
        }
        dx
    }

    /// Discriminator pass over time-major input (`W` matrices of `B x F`).
    pub fn disc_forward(&self, x_seq: &[Array2<f64>]) -> Result<DiscPass> {
        if self.activation != Activation::Sigmoid {
            return Err(Error::Shape("network is not a discriminator".into()));
        }
        if x_seq.is_empty() {
            return Err(Error::Shape("empty window".into()));
        }
        if x_seq.iter().any(|x| x.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite("discriminator input".into()));
        }
        let caches = self.run_stack(x_seq)?;
        let h_last = caches.last().unwrap().h.last().unwrap();
        let logits = self.head.apply(h_last).index_axis_move(Axis(1), 0);
        Ok(DiscPass { caches, logits })
    }

    /// Gradients of a loss given `dL/dlogit` per batch row. Also returns the
    /// gradient w.r.t. every input step, used to chain into a generator.
    pub fn disc_backward(&self, pass: &DiscPass, dlogits: &Array1<f64>) -> (Network, Vec<Array2<f64>>) {
        let mut grads = self.zeros_like();
        let top = pass.caches.last().unwrap();
        let h_last = top.h.last().unwrap();
        let d = dlogits.view().insert_axis(Axis(1)); // B x 1
        grads.head.w = d.t().dot(h_last);
        grads.head.b = d.sum_axis(Axis(0));
        let dh_last = d.dot(&self.head.w); // B x H
        let steps = top.x.len();
        let mut top_dh: Vec<Option<Array2<f64>>> = vec![None; steps];
        top_dh[steps - 1] = Some(dh_last);
        let dx = self.backward_stack(&pass.caches, top_dh, &mut grads);
        (grads, dx)
    }

    /// Score of a single `W x F` block, in (0, 1).
    pub fn score(&self, block: &Array2<f64>) -> Result<f64> {
        if block.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "block has {} features, discriminator expects {}",
                block.ncols(),
                self.input_dim()
            )));
        }
        let pass = self.disc_forward(&super::time_major(&[block]))?;
        Ok(sigmoid(pass.logits[0]))
    }

    /// Generator pass over a time-major noise sequence.
    pub fn gen_forward(&self, z_seq: &[Array2<f64>]) -> Result<GenPass> {
        if self.activation != Activation::Tanh {
            return Err(Error::Shape("network is not a generator".into()));
        }
        let caches = self.run_stack(z_seq)?;
        let out = caches
            .last()
            .unwrap()
            .outputs()
            .iter()
            .map(|h| self.head.apply(h).mapv_into(f64::tanh))
            .collect();
        Ok(GenPass { caches, out })
    }

    /// Generator parameter gradients given `dL/d(output)` for every step.
    pub fn gen_backward(&self, pass: &GenPass, d_out: &[Array2<f64>]) -> Network {
        let mut grads = self.zeros_like();
        let top = pass.caches.last().unwrap();
        let mut top_dh = Vec::with_capacity(d_out.len());
        for (t, d) in d_out.iter().enumerate() {
            let y = &pass.out[t];
            let d_pre = d * &y.mapv(|v| 1.0 - v * v);
            grads.head.w += &d_pre.t().dot(&top.h[t + 1]);
            grads.head.b += &d_pre.sum_axis(Axis(0));
            top_dh.push(Some(d_pre.dot(&self.head.w)));
        }
        self.backward_stack(&pass.caches, top_dh, &mut grads);
        grads
    }

    /// Single-sample generator output, `W x F`.
    pub fn generate(&self, z: &Array2<f64>) -> Result<Array2<f64>> {
        let pass = self.gen_forward(&super::time_major(&[z]))?;
        Ok(super::batch_major(&pass.out).remove(0))
    }

    /// Adds `scale * other` into `self`.
    pub fn add_scaled(&mut self, other: &Network, scale: f64) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
    }
}

impl Parameters for Network {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for l in &self.lstm {
            out.push(l.w_x.as_slice().unwrap());
            out.push(l.w_h.as_slice().unwrap());
            out.push(l.b.as_slice().unwrap());
        }
        out.push(self.head.w.as_slice().unwrap());
        out.push(self.head.b.as_slice().unwrap());
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for l in &mut self.lstm {
            out.push(l.w_x.as_slice_mut().unwrap());
            out.push(l.w_h.as_slice_mut().unwrap());
            out.push(l.b.as_slice_mut().unwrap());
        }
        out.push(self.head.w.as_slice_mut().unwrap());
        out.push(self.head.b.as_slice_mut().unwrap());
        out
    }

    fn tensor_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for k in 0..self.lstm.len() {
            for t in ["w_x", "w_h", "b"] {
                out.push(format!("lstm{k}.{t}"));
            }
        }
        out.push("head.w".into());
        out.push("head.b".into());
        out
    }
}
