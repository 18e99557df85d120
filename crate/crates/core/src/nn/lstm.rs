use ndarray::{s, Array1, Array2, Axis};
use rand::Rng;

use crate::error::{Error, Result};

use super::{sigmoid, uniform_init};

/// One LSTM layer. Gate pre-activations are stacked column-wise in the order
/// `[input | forget | output | candidate]`, each block `hidden_dim` wide.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayer {
    pub input_dim: usize,
    pub hidden_dim: usize,
    /// `input_dim x 4*hidden_dim`
    pub w_x: Array2<f64>,
    /// `hidden_dim x 4*hidden_dim`
    pub w_h: Array2<f64>,
    /// `4*hidden_dim`
    pub b: Array1<f64>,
}

/// Activations recorded by a forward pass, consumed by [`LstmLayer::backward`].
#[derive(Debug, Clone)]
pub struct LstmCache {
    pub x: Vec<Array2<f64>>,
    /// Post-activation gates per step, `B x 4H`.
    pub gates: Vec<Array2<f64>>,
    /// `c_0 ..= c_W`
    pub c: Vec<Array2<f64>>,
    /// `tanh(c_1) ..= tanh(c_W)`
    pub tanh_c: Vec<Array2<f64>>,
    /// `h_0 ..= h_W`
    pub h: Vec<Array2<f64>>,
}

impl LstmCache {
    /// Hidden outputs `h_1 ..= h_W`.
    pub fn outputs(&self) -> &[Array2<f64>] {
        &self.h[1..]
    }
}

impl LstmLayer {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        LstmLayer {
            input_dim,
            hidden_dim,
            w_x: Array2::zeros((input_dim, 4 * hidden_dim)),
            w_h: Array2::zeros((hidden_dim, 4 * hidden_dim)),
            b: Array1::zeros(4 * hidden_dim),
        }
    }

    /// Uniform in `[-k, k]`, `k = 1/sqrt(input_dim + hidden_dim)`; forget bias +1.
    pub fn init(input_dim: usize, hidden_dim: usize, rng: &mut impl Rng) -> Self {
        let k = 1.0 / ((input_dim + hidden_dim) as f64).sqrt();
        let mut layer = LstmLayer::zeros(input_dim, hidden_dim);
        uniform_init(layer.w_x.as_slice_mut().unwrap(), k, rng);
        uniform_init(layer.w_h.as_slice_mut().unwrap(), k, rng);
        uniform_init(layer.b.as_slice_mut().unwrap(), k, rng);
        layer
            .b
            .slice_mut(s![hidden_dim..2 * hidden_dim])
            .fill(1.0);
        layer
    }

    pub fn num_params(&self) -> usize {
        self.w_x.len() + self.w_h.len() + self.b.len()
    }

    /// Runs the recurrence over `x_seq` (one `B x input_dim` matrix per step)
    /// from `h0`/`c0` (zeros when `None`).
    pub fn forward(
        &self,
        x_seq: &[Array2<f64>],
        h0: Option<&Array2<f64>>,
        c0: Option<&Array2<f64>>,
    ) -> Result<LstmCache> {
        let h_dim = self.hidden_dim;
        let batch = x_seq.first().map_or(0, |x| x.nrows());
        for x in x_seq {
            if x.ncols() != self.input_dim || x.nrows() != batch {
                return Err(Error::Shape(format!(
                    "lstm input {:?}, expected (B={batch}, {})",
                    x.dim(),
                    self.input_dim
                )));
            }
        }
        let h0 = h0.cloned().unwrap_or_else(|| Array2::zeros((batch, h_dim)));
        let c0 = c0.cloned().unwrap_or_else(|| Array2::zeros((batch, h_dim)));
        if h0.dim() != (batch, h_dim) || c0.dim() != (batch, h_dim) {
            return Err(Error::Shape("initial state shape".into()));
        }

        let steps = x_seq.len();
        let mut cache = LstmCache {
            x: x_seq.to_vec(),
            gates: Vec::with_capacity(steps),
            c: Vec::with_capacity(steps + 1),
            tanh_c: Vec::with_capacity(steps),
            h: Vec::with_capacity(steps + 1),
        };
        cache.c.push(c0);
        cache.h.push(h0);

        for x in x_seq {
            let h_prev = cache.h.last().unwrap();
            let c_prev = cache.c.last().unwrap();
            let mut z = x.dot(&self.w_x) + h_prev.dot(&self.w_h);
            z += &self.b;

            let mut c = Array2::zeros((batch, h_dim));
            let mut tc = Array2::zeros((batch, h_dim));
            let mut h = Array2::zeros((batch, h_dim));
            let cp = c_prev.as_slice().unwrap();
            let (cs, ts, hs) = (c.as_slice_mut().unwrap(), tc.as_slice_mut().unwrap(), h.as_slice_mut().unwrap());
            for (r, zr) in z.as_slice_mut().unwrap().chunks_exact_mut(4 * h_dim).enumerate() {
                for v in &mut zr[..3 * h_dim] {
                    *v = sigmoid(*v);
                }
                for v in &mut zr[3 * h_dim..] {
                    *v = v.tanh();
                }
                let off = r * h_dim;
                for j in 0..h_dim {
                    let (i, f, o, g) = (zr[j], zr[h_dim + j], zr[2 * h_dim + j], zr[3 * h_dim + j]);
                    let cv = f * cp[off + j] + i * g;
                    let t = cv.tanh();
                    cs[off + j] = cv;
                    ts[off + j] = t;
                    hs[off + j] = o * t;
                }
            }
            cache.gates.push(z);
            cache.c.push(c);
            cache.tanh_c.push(tc);
            cache.h.push(h);
        }
        Ok(cache)
    }

    /// Backpropagation through time.
    ///
    /// `dh_out[t]` is the loss gradient w.r.t. `h_{t+1}` from layers above;
    /// `None` entries are zero. Returns parameter gradients and the gradient
    /// w.r.t. each input step.
    pub fn backward(
        &self,
        cache: &LstmCache,
        dh_out: &[Option<Array2<f64>>],
    ) -> (LstmLayer, Vec<Array2<f64>>) {
        let h_dim = self.hidden_dim;
        let steps = cache.x.len();
        let batch = cache.h[0].nrows();
        let mut grads = LstmLayer::zeros(self.input_dim, h_dim);
        let mut dx = vec![Array2::zeros((batch, self.input_dim)); steps];
        let mut dz = Array2::zeros((batch, 4 * h_dim));
        let mut dh_next: Array2<f64> = Array2::zeros((batch, h_dim));
        let mut dc_next = vec![0.0; batch * h_dim];

        for t in (0..steps).rev() {
            let gates = cache.gates[t].as_slice().unwrap();
            let tc = cache.tanh_c[t].as_slice().unwrap();
            let c_prev = cache.c[t].as_slice().unwrap();
            let mut dh = dh_next;
            if let Some(d) = &dh_out[t] {
                dh += d;
            }
            let dhs = dh.as_slice().unwrap();
            let dzs = dz.as_slice_mut().unwrap();
            for r in 0..batch {
                let gr = &gates[r * 4 * h_dim..(r + 1) * 4 * h_dim];
                let dzr = &mut dzs[r * 4 * h_dim..(r + 1) * 4 * h_dim];
                let off = r * h_dim;
                for j in 0..h_dim {
                    let (i, f, o, g) = (gr[j], gr[h_dim + j], gr[2 * h_dim + j], gr[3 * h_dim + j]);
                    let dhv = dhs[off + j];
                    let tcv = tc[off + j];
                    let dc = dc_next[off + j] + dhv * o * (1.0 - tcv * tcv);
                    dzr[j] = dc * g * i * (1.0 - i);
                    dzr[h_dim + j] = dc * c_prev[off + j] * f * (1.0 - f);
                    dzr[2 * h_dim + j] = dhv * tcv * o * (1.0 - o);
                    dzr[3 * h_dim + j] = dc * i * (1.0 - g * g);
                    dc_next[off + j] = dc * f;
                }
            }
            grads.w_x += &cache.x[t].t().dot(&dz);
            grads.w_h += &cache.h[t].t().dot(&dz);
            grads.b += &dz.sum_axis(Axis(0));
            dx[t] = dz.dot(&self.w_x.t());
            dh_next = dz.dot(&self.w_h.t());
        }
        (grads, dx)
    }
}
