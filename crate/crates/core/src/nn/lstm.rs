//! LSTM cell, stacked scan, and the exact reverse-mode pass through both.
//!
//! The cell follows the standard gate algebra on the concatenated
//! `[h_prev, x]` input:
//!
//! ```text
//! f = sig(W_f [h_prev, x] + b_f)
//! i = sig(W_i [h_prev, x] + b_i)
//! c = f * c_prev + i * tanh(W_c [h_prev, x] + b_c)
//! o = sig(W_o [h_prev, x] + b_o)
//! h = o * tanh(c)
//! ```
//!
//! with `*` elementwise. The same scan is reused over time windows (the
//! baselines) and over the module chain (the bidirectional controller).

use super::tensor::{sigmoid, Mat};
use crate::{Error, Result};

use rand_chacha::ChaCha8Rng;

/// Weights and biases of one LSTM layer. Each weight is
/// `hidden x (hidden + input_dim)`, biases are `hidden`.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    pub hidden: usize,
    pub input_dim: usize,
    pub w_f: Mat,
    pub w_i: Mat,
    pub w_c: Mat,
    pub w_o: Mat,
    pub b_f: Vec<f64>,
    pub b_i: Vec<f64>,
    pub b_c: Vec<f64>,
    pub b_o: Vec<f64>,
}

impl LstmParams {
    pub fn init(hidden: usize, input_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let cols = hidden + input_dim;
        LstmParams {
            hidden,
            input_dim,
            w_f: Mat::uniform_init(hidden, cols, rng),
            w_i: Mat::uniform_init(hidden, cols, rng),
            w_c: Mat::uniform_init(hidden, cols, rng),
            w_o: Mat::uniform_init(hidden, cols, rng),
            b_f: vec![0.0; hidden],
            b_i: vec![0.0; hidden],
            b_c: vec![0.0; hidden],
            b_o: vec![0.0; hidden],
        }
    }

    pub fn zeros_like(&self) -> Self {
        let cols = self.hidden + self.input_dim;
        LstmParams {
            hidden: self.hidden,
            input_dim: self.input_dim,
            w_f: Mat::zeros(self.hidden, cols),
            w_i: Mat::zeros(self.hidden, cols),
            w_c: Mat::zeros(self.hidden, cols),
            w_o: Mat::zeros(self.hidden, cols),
            b_f: vec![0.0; self.hidden],
            b_i: vec![0.0; self.hidden],
            b_c: vec![0.0; self.hidden],
            b_o: vec![0.0; self.hidden],
        }
    }
}

/// Everything the backward pass needs from one forward step.
#[derive(Clone, Debug)]
pub struct StepCache {
    z: Vec<f64>,
    f: Vec<f64>,
    i: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    c_prev: Vec<f64>,
    tanh_c: Vec<f64>,
    pub c: Vec<f64>,
    pub h: Vec<f64>,
}

fn gate(w: &Mat, b: &[f64], z: &[f64], out: &mut [f64]) {
    w.matvec(z, out);
    for (v, bias) in out.iter_mut().zip(b) {
        *v = sigmoid(*v + bias);
    }
}

fn step_cached(p: &LstmParams, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> StepCache {
    let hidden = p.hidden;
    let mut z = Vec::with_capacity(hidden + p.input_dim);
    z.extend_from_slice(h_prev);
    z.extend_from_slice(x);

    let mut f = vec![0.0; hidden];
    let mut i = vec![0.0; hidden];
    let mut o = vec![0.0; hidden];
    let mut g = vec![0.0; hidden];
    gate(&p.w_f, &p.b_f, &z, &mut f);
    gate(&p.w_i, &p.b_i, &z, &mut i);
    gate(&p.w_o, &p.b_o, &z, &mut o);
    p.w_c.matvec(&z, &mut g);
    for (v, bias) in g.iter_mut().zip(&p.b_c) {
        *v = (*v + bias).tanh();
    }

    let mut c = vec![0.0; hidden];
    for k in 0..hidden {
        c[k] = f[k] * c_prev[k] + i[k] * g[k];
    }
    let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
    let h: Vec<f64> = o.iter().zip(&tanh_c).map(|(o, t)| o * t).collect();
    StepCache {
        z,
        f,
        i,
        g,
        o,
        c_prev: c_prev.to_vec(),
        tanh_c,
        c,
        h,
    }
}

/// One cell evaluation. Returns `(h, c)`.
pub fn lstm_step(
    p: &LstmParams,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    if x.len() != p.input_dim {
        return Err(Error::ShapeMismatch {
            context: "lstm_step input",
            expected: p.input_dim,
            got: x.len(),
        });
    }
    if h_prev.len() != p.hidden || c_prev.len() != p.hidden {
        return Err(Error::ShapeMismatch {
            context: "lstm_step state",
            expected: p.hidden,
            got: h_prev.len().max(c_prev.len()),
        });
    }
    let cache = step_cached(p, x, h_prev, c_prev);
    Ok((cache.h, cache.c))
}

/// Reverse-mode step: consumes the gradients flowing into `h` and `c`,
/// accumulates parameter gradients, and returns `(dh_prev, dc_prev, dx)`.
fn step_backward(
    p: &LstmParams,
    cache: &StepCache,
    dh: &[f64],
    dc_in: &[f64],
    grads: &mut LstmParams,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let hidden = p.hidden;
    let mut d_pre_f = vec![0.0; hidden];
    let mut d_pre_i = vec![0.0; hidden];
    let mut d_pre_g = vec![0.0; hidden];
    let mut d_pre_o = vec![0.0; hidden];
    let mut dc_prev = vec![0.0; hidden];

    for k in 0..hidden {
        let d_o = dh[k] * cache.tanh_c[k];
        let dc = dc_in[k] + dh[k] * cache.o[k] * (1.0 - cache.tanh_c[k] * cache.tanh_c[k]);
        let d_f = dc * cache.c_prev[k];
        let d_i = dc * cache.g[k];
        let d_g = dc * cache.i[k];
        dc_prev[k] = dc * cache.f[k];
        d_pre_f[k] = d_f * cache.f[k] * (1.0 - cache.f[k]);
        d_pre_i[k] = d_i * cache.i[k] * (1.0 - cache.i[k]);
        d_pre_g[k] = d_g * (1.0 - cache.g[k] * cache.g[k]);
        d_pre_o[k] = d_o * cache.o[k] * (1.0 - cache.o[k]);
    }

    grads.w_f.add_outer(&d_pre_f, &cache.z);
    grads.w_i.add_outer(&d_pre_i, &cache.z);
    grads.w_c.add_outer(&d_pre_g, &cache.z);
    grads.w_o.add_outer(&d_pre_o, &cache.z);
    for k in 0..hidden {
        grads.b_f[k] += d_pre_f[k];
        grads.b_i[k] += d_pre_i[k];
        grads.b_c[k] += d_pre_g[k];
        grads.b_o[k] += d_pre_o[k];
    }

    let mut dz = vec![0.0; hidden + p.input_dim];
    p.w_f.matvec_t_acc(&d_pre_f, &mut dz);
    p.w_i.matvec_t_acc(&d_pre_i, &mut dz);
    p.w_c.matvec_t_acc(&d_pre_g, &mut dz);
    p.w_o.matvec_t_acc(&d_pre_o, &mut dz);
    let dx = dz.split_off(hidden);
    (dz, dc_prev, dx)
}

/// Forward cache of a full stacked scan.
pub struct StackCache {
    steps: Vec<Vec<StepCache>>,
}

impl StackCache {
    /// Top-layer hidden state at each scan position.
    pub fn top_hidden(&self) -> Vec<&[f64]> {
        self.steps
            .last()
            .map(|layer| layer.iter().map(|s| s.h.as_slice()).collect())
            .unwrap_or_default()
    }
}

/// Scans a stack of layers over a sequence, with zero initial states at the
/// sequence start. Layer `l` consumes layer `l-1`'s hidden states.
pub fn scan_stack(layers: &[LstmParams], xs: &[Vec<f64>]) -> Result<StackCache> {
    let n = xs.len();
    let mut steps: Vec<Vec<StepCache>> = Vec::with_capacity(layers.len());
    for (l, p) in layers.iter().enumerate() {
        let mut layer_steps = Vec::with_capacity(n);
        let mut h = vec![0.0; p.hidden];
        let mut c = vec![0.0; p.hidden];
        for pos in 0..n {
            let input: &[f64] = if l == 0 {
                &xs[pos]
            } else {
                &steps[l - 1][pos].h
            };
            if input.len() != p.input_dim {
                return Err(Error::ShapeMismatch {
                    context: "scan_stack input",
                    expected: p.input_dim,
                    got: input.len(),
                });
            }
            let cache = step_cached(p, input, &h, &c);
            h = cache.h.clone();
            c = cache.c.clone();
            layer_steps.push(cache);
        }
        steps.push(layer_steps);
    }
    Ok(StackCache { steps })
}

/// Backpropagates through a scanned stack. `d_top[pos]` is the loss
/// gradient with respect to the top layer's hidden state at `pos`.
/// Returns the gradient with respect to the bottom-layer inputs.
pub fn scan_stack_backward(
    layers: &[LstmParams],
    cache: &StackCache,
    d_top: Vec<Vec<f64>>,
    grads: &mut [LstmParams],
) -> Vec<Vec<f64>> {
    let n = d_top.len();
    let mut d_hidden = d_top;
    for l in (0..layers.len()).rev() {
        let p = &layers[l];
        let mut dh_carry = vec![0.0; p.hidden];
        let mut dc_carry = vec![0.0; p.hidden];
        let mut d_inputs = vec![Vec::new(); n];
        for pos in (0..n).rev() {
            let mut dh = std::mem::take(&mut d_hidden[pos]);
            for (v, c) in dh.iter_mut().zip(&dh_carry) {
                *v += c;
            }
            let (dh_prev, dc_prev, dx) =
                step_backward(p, &cache.steps[l][pos], &dh, &dc_carry, &mut grads[l]);
            dh_carry = dh_prev;
            dc_carry = dc_prev;
            d_inputs[pos] = dx;
        }
        d_hidden = d_inputs;
    }
    d_hidden
}

/// Output head: one affine layer, optionally preceded by a tanh hidden
/// layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Head {
    pub w1: Mat,
    pub b1: Vec<f64>,
    pub w2: Option<Mat>,
    pub b2: Option<Vec<f64>>,
}

pub struct HeadCache {
    x: Vec<f64>,
    mid: Option<Vec<f64>>,
}

impl Head {
    pub fn init(
        in_dim: usize,
        out_dim: usize,
        hidden: Option<usize>,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        match hidden {
            None => Head {
                w1: Mat::uniform_init(out_dim, in_dim, rng),
                b1: vec![0.0; out_dim],
                w2: None,
                b2: None,
            },
            Some(k) => Head {
                w1: Mat::uniform_init(k, in_dim, rng),
                b1: vec![0.0; k],
                w2: Some(Mat::uniform_init(out_dim, k, rng)),
                b2: Some(vec![0.0; out_dim]),
            },
        }
    }

    pub fn zeros_like(&self) -> Self {
        Head {
            w1: Mat::zeros(self.w1.rows, self.w1.cols),
            b1: vec![0.0; self.b1.len()],
            w2: self.w2.as_ref().map(|w| Mat::zeros(w.rows, w.cols)),
            b2: self.b2.as_ref().map(|b| vec![0.0; b.len()]),
        }
    }

    pub fn out_dim(&self) -> usize {
        self.w2.as_ref().map_or(self.w1.rows, |w| w.rows)
    }

    pub fn forward(&self, x: &[f64]) -> (Vec<f64>, HeadCache) {
        let mut y1 = vec![0.0; self.w1.rows];
        self.w1.matvec(x, &mut y1);
        for (v, b) in y1.iter_mut().zip(&self.b1) {
            *v += b;
        }
        match (&self.w2, &self.b2) {
            (Some(w2), Some(b2)) => {
                let mid: Vec<f64> = y1.iter().map(|v| v.tanh()).collect();
                let mut y = vec![0.0; w2.rows];
                w2.matvec(&mid, &mut y);
                for (v, b) in y.iter_mut().zip(b2) {
                    *v += b;
                }
                (
                    y,
                    HeadCache {
                        x: x.to_vec(),
                        mid: Some(mid),
                    },
                )
            }
            _ => (
                y1,
                HeadCache {
                    x: x.to_vec(),
                    mid: None,
                },
            ),
        }
    }

    /// Accumulates parameter gradients and returns the gradient wrt the
    /// head input.
    pub fn backward(&self, cache: &HeadCache, dy: &[f64], grads: &mut Head) -> Vec<f64> {
        let d1: Vec<f64> = match (&self.w2, cache.mid.as_ref()) {
            (Some(w2), Some(mid)) => {
                let g2 = grads.w2.as_mut().expect("grad shape");
                g2.add_outer(dy, mid);
                for (b, d) in grads.b2.as_mut().expect("grad shape").iter_mut().zip(dy) {
                    *b += d;
                }
                let mut dmid = vec![0.0; mid.len()];
                w2.matvec_t_acc(dy, &mut dmid);
                dmid.iter()
                    .zip(mid)
                    .map(|(d, m)| d * (1.0 - m * m))
                    .collect()
            }
            _ => dy.to_vec(),
        };
        grads.w1.add_outer(&d1, &cache.x);
        for (b, d) in grads.b1.iter_mut().zip(&d1) {
            *b += d;
        }
        let mut dx = vec![0.0; self.w1.cols];
        self.w1.matvec_t_acc(&d1, &mut dx);
        dx
    }
}
