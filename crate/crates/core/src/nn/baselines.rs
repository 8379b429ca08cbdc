//! The two time-recurrent baseline architectures.
//!
//! [`PerModuleLstm`] trains one LSTM per module on that module's own
//! window, so no module sees the rest of the chain. [`TimeLstm`] scans one
//! LSTM over the time window with every module's features concatenated per
//! step; it sees the whole chain but its input width is welded to the
//! module count, so it cannot transfer to a different chain length.

use super::lstm::{scan_stack, scan_stack_backward, Head, HeadCache, LstmParams, StackCache};
use super::NetHyper;
use crate::{Error, Result};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Re-arranges one module's flattened feature window into per-step inputs
/// `[label, desired, state(tau), action(tau-1)]`; the first step has no
/// earlier action inside the window and gets zeros.
pub fn time_steps(feat: &[f64], d: usize, a_dim: usize, window: usize) -> Vec<Vec<f64>> {
    let label = feat[0];
    let desired = &feat[1..1 + d];
    let states = &feat[1 + d..1 + d + window * d];
    let acts = &feat[1 + d + window * d..];
    (0..window)
        .map(|k| {
            let mut v = Vec::with_capacity(1 + 2 * d + a_dim);
            v.push(label);
            v.extend_from_slice(desired);
            v.extend_from_slice(&states[k * d..(k + 1) * d]);
            if k == 0 {
                v.extend(std::iter::repeat(0.0).take(a_dim));
            } else {
                v.extend_from_slice(&acts[(k - 1) * a_dim..k * a_dim]);
            }
            v
        })
        .collect()
}

/// Per-step input width of the time-recurrent view of one module.
pub fn step_dim(d: usize, a_dim: usize) -> usize {
    1 + 2 * d + a_dim
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModuleNet {
    pub stack: Vec<LstmParams>,
    pub head: Head,
}

/// One independent time-recurrent LSTM per module.
#[derive(Clone, Debug, PartialEq)]
pub struct PerModuleLstm {
    pub hyper: NetHyper,
    pub nets: Vec<ModuleNet>,
}

pub struct PerModuleCache {
    stacks: Vec<StackCache>,
    heads: Vec<HeadCache>,
    pub outputs: Vec<Vec<f64>>,
}

fn init_stack(hyper: &NetHyper, input_dim: usize, rng: &mut ChaCha8Rng) -> Vec<LstmParams> {
    (0..hyper.layers)
        .map(|l| {
            let in_dim = if l == 0 { input_dim } else { hyper.hidden };
            LstmParams::init(hyper.hidden, in_dim, rng)
        })
        .collect()
}

impl PerModuleLstm {
    pub fn new(hyper: NetHyper, n_sum: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let in_dim = step_dim(hyper.state_dim, hyper.a_dim);
        let nets = (0..n_sum)
            .map(|_| ModuleNet {
                stack: init_stack(&hyper, in_dim, &mut rng),
                head: Head::init(hyper.hidden, hyper.a_dim, hyper.head_hidden, &mut rng),
            })
            .collect();
        PerModuleLstm { hyper, nets }
    }

    pub fn n_sum(&self) -> usize {
        self.nets.len()
    }

    pub fn zeros_like(&self) -> Self {
        PerModuleLstm {
            hyper: self.hyper.clone(),
            nets: self
                .nets
                .iter()
                .map(|n| ModuleNet {
                    stack: n.stack.iter().map(LstmParams::zeros_like).collect(),
                    head: n.head.zeros_like(),
                })
                .collect(),
        }
    }

    fn check(&self, xs: &[Vec<f64>]) -> Result<()> {
        if xs.len() != self.nets.len() {
            return Err(Error::ShapeMismatch {
                context: "per-module-lstm chain length",
                expected: self.nets.len(),
                got: xs.len(),
            });
        }
        let feat = self.hyper.feature_dim();
        for x in xs {
            if x.len() != feat {
                return Err(Error::ShapeMismatch {
                    context: "per-module-lstm feature dim",
                    expected: feat,
                    got: x.len(),
                });
            }
        }
        Ok(())
    }

    pub fn forward(&self, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        Ok(self.forward_cached(xs)?.outputs)
    }

    pub fn forward_cached(&self, xs: &[Vec<f64>]) -> Result<PerModuleCache> {
        self.check(xs)?;
        let h = &self.hyper;
        let mut stacks = Vec::with_capacity(xs.len());
        let mut heads = Vec::with_capacity(xs.len());
        let mut outputs = Vec::with_capacity(xs.len());
        for (m, x) in xs.iter().enumerate() {
            let steps = time_steps(x, h.state_dim, h.a_dim, h.window);
            let cache = scan_stack(&self.nets[m].stack, &steps)?;
            let last = cache.top_hidden().last().copied().expect("window >= 1").to_vec();
            let (y, hc) = self.nets[m].head.forward(&last);
            stacks.push(cache);
            heads.push(hc);
            outputs.push(y);
        }
        Ok(PerModuleCache {
            stacks,
            heads,
            outputs,
        })
    }

    pub fn backward(&self, cache: &PerModuleCache, d_out: &[Vec<f64>], grads: &mut Self) {
        let window = self.hyper.window;
        for m in 0..self.nets.len() {
            let d_last = self.nets[m].head.backward(
                &cache.heads[m],
                &d_out[m],
                &mut grads.nets[m].head,
            );
            let mut d_top = vec![vec![0.0; self.hyper.hidden]; window];
            d_top[window - 1] = d_last;
            scan_stack_backward(
                &self.nets[m].stack,
                &cache.stacks[m],
                d_top,
                &mut grads.nets[m].stack,
            );
        }
    }

    pub fn visit(&self, f: &mut dyn FnMut(&str, usize, usize, &[f64])) {
        for (m, net) in self.nets.iter().enumerate() {
            for (l, p) in net.stack.iter().enumerate() {
                super::visit_lstm(&format!("m{m}.layer{l}"), p, f);
            }
            super::visit_head(&format!("m{m}.head"), &net.head, f);
        }
    }

    pub fn visit_mut(&mut self, f: &mut dyn FnMut(&str, usize, usize, &mut [f64])) {
        for (m, net) in self.nets.iter_mut().enumerate() {
            for (l, p) in net.stack.iter_mut().enumerate() {
                super::visit_lstm_mut(&format!("m{m}.layer{l}"), p, f);
            }
            super::visit_head_mut(&format!("m{m}.head"), &mut net.head, f);
        }
    }
}

/// One LSTM over the time window with all modules' features concatenated
/// per step. The head emits every module's action from the final hidden
/// state.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeLstm {
    pub hyper: NetHyper,
    pub n_sum: usize,
    pub stack: Vec<LstmParams>,
    pub head: Head,
}

pub struct TimeCache {
    stack: StackCache,
    head: HeadCache,
    pub outputs: Vec<Vec<f64>>,
}

impl TimeLstm {
    pub fn new(hyper: NetHyper, n_sum: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let in_dim = n_sum * step_dim(hyper.state_dim, hyper.a_dim);
        let stack = init_stack(&hyper, in_dim, &mut rng);
        let head = Head::init(
            hyper.hidden,
            n_sum * hyper.a_dim,
            hyper.head_hidden,
            &mut rng,
        );
        TimeLstm {
            hyper,
            n_sum,
            stack,
            head,
        }
    }

    pub fn zeros_like(&self) -> Self {
        TimeLstm {
            hyper: self.hyper.clone(),
            n_sum: self.n_sum,
            stack: self.stack.iter().map(LstmParams::zeros_like).collect(),
            head: self.head.zeros_like(),
        }
    }

    fn check(&self, xs: &[Vec<f64>]) -> Result<()> {
        if xs.len() != self.n_sum {
            return Err(Error::ShapeMismatch {
                context: "time-lstm chain length",
                expected: self.n_sum,
                got: xs.len(),
            });
        }
        let feat = self.hyper.feature_dim();
        for x in xs {
            if x.len() != feat {
                return Err(Error::ShapeMismatch {
                    context: "time-lstm feature dim",
                    expected: feat,
                    got: x.len(),
                });
            }
        }
        Ok(())
    }

    pub fn forward(&self, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        Ok(self.forward_cached(xs)?.outputs)
    }

    pub fn forward_cached(&self, xs: &[Vec<f64>]) -> Result<TimeCache> {
        self.check(xs)?;
        let h = &self.hyper;
        let per_module: Vec<Vec<Vec<f64>>> = xs
            .iter()
            .map(|x| time_steps(x, h.state_dim, h.a_dim, h.window))
            .collect();
        let steps: Vec<Vec<f64>> = (0..h.window)
            .map(|k| {
                let mut v = Vec::with_capacity(self.n_sum * step_dim(h.state_dim, h.a_dim));
                for pm in &per_module {
                    v.extend_from_slice(&pm[k]);
                }
                v
            })
            .collect();
        let stack = scan_stack(&self.stack, &steps)?;
        let last = stack.top_hidden().last().copied().expect("window >= 1").to_vec();
        let (flat, head) = self.head.forward(&last);
        let outputs = flat.chunks(h.a_dim).map(<[f64]>::to_vec).collect();
        Ok(TimeCache {
            stack,
            head,
            outputs,
        })
    }

    pub fn backward(&self, cache: &TimeCache, d_out: &[Vec<f64>], grads: &mut Self) {
        let mut d_flat = Vec::with_capacity(self.n_sum * self.hyper.a_dim);
        for d in d_out {
            d_flat.extend_from_slice(d);
        }
        let d_last = self.head.backward(&cache.head, &d_flat, &mut grads.head);
        let mut d_top = vec![vec![0.0; self.hyper.hidden]; self.hyper.window];
        d_top[self.hyper.window - 1] = d_last;
        scan_stack_backward(&self.stack, &cache.stack, d_top, &mut grads.stack);
    }

    pub fn visit(&self, f: &mut dyn FnMut(&str, usize, usize, &[f64])) {
        for (l, p) in self.stack.iter().enumerate() {
            super::visit_lstm(&format!("layer{l}"), p, f);
        }
        super::visit_head("head", &self.head, f);
    }

    pub fn visit_mut(&mut self, f: &mut dyn FnMut(&str, usize, usize, &mut [f64])) {
        for (l, p) in self.stack.iter_mut().enumerate() {
            super::visit_lstm_mut(&format!("layer{l}"), p, f);
        }
        super::visit_head_mut("head", &mut self.head, f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::lstm::lstm_step;
    use rand::Rng;

    fn hyper(window: usize) -> NetHyper {
        NetHyper {
            hidden: 4,
            layers: 1,
            window,
            state_dim: 3,
            a_dim: 2,
            head_hidden: None,
        }
    }

    fn random_features(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect()
    }

    #[test]
    fn identical_nets_identical_outputs() {
        let mut net = PerModuleLstm::new(hyper(3), 4, 7);
        let shared = net.nets[0].clone();
        for n in net.nets.iter_mut() {
            *n = shared.clone();
        }
        let feat = net.hyper.feature_dim();
        let x = random_features(1, feat, 1).pop().unwrap();
        let xs = vec![x; 4];
        let out = net.forward(&xs).unwrap();
        for o in &out[1..] {
            assert_eq!(o, &out[0]);
        }
    }

    #[test]
    fn time_lstm_rejects_other_chain_lengths() {
        let net = TimeLstm::new(hyper(3), 4, 7);
        let feat = net.hyper.feature_dim();
        let xs6 = random_features(6, feat, 2);
        match net.forward(&xs6) {
            Err(Error::ShapeMismatch { expected: 4, got: 6, .. }) => {}
            other => panic!("expected shape mismatch, got {other:?}"),
        }
        assert!(net.forward(&random_features(4, feat, 3)).is_ok());
    }

    #[test]
    fn per_module_rejects_other_chain_lengths() {
        let net = PerModuleLstm::new(hyper(3), 4, 7);
        let feat = net.hyper.feature_dim();
        assert!(net.forward(&random_features(3, feat, 2)).is_err());
    }

    #[test]
    fn window_one_equals_single_cell_plus_head() {
        let net = PerModuleLstm::new(hyper(1), 1, 11);
        let feat = net.hyper.feature_dim();
        assert_eq!(feat, 1 + 3 + 3); // no past actions in a window of 1
        let x = random_features(1, feat, 4).pop().unwrap();
        let out = net.forward(&[x.clone()]).unwrap();

        let step = {
            let mut v = vec![x[0]];
            v.extend_from_slice(&x[1..4]); // desired
            v.extend_from_slice(&x[4..7]); // state
            v.extend_from_slice(&[0.0, 0.0]); // no previous action
            v
        };
        let (h, _) = lstm_step(&net.nets[0].stack[0], &step, &[0.0; 4], &[0.0; 4]).unwrap();
        let (y, _) = net.nets[0].head.forward(&h);
        assert_eq!(out[0], y);
    }

    #[test]
    fn time_step_layout() {
        // window 3, d 2, a_dim 1: feature = [label, Sd(2), S0 S1 S2 (6), A0 A1 (2)]
        let feat: Vec<f64> = (0..11).map(|i| i as f64).collect();
        let steps = time_steps(&feat, 2, 1, 3);
        assert_eq!(steps[0], vec![0.0, 1.0, 2.0, 3.0, 4.0, 0.0]);
        assert_eq!(steps[1], vec![0.0, 1.0, 2.0, 5.0, 6.0, 9.0]);
        assert_eq!(steps[2], vec![0.0, 1.0, 2.0, 7.0, 8.0, 10.0]);
    }
}
