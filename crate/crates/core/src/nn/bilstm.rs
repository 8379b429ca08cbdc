//! Bidirectional controller that recurs over the module chain.
//!
//! One forward stack scans the chain base to tip, one backward stack scans
//! tip to base, both starting from zero states at the chain ends. Each
//! module's output comes from an output head applied to the concatenation
//! of the two top-layer hidden states at that module. Parameter shapes
//! depend only on the hyperparameters, never on the module count, so a
//! trained controller drives chains of any length.

use super::lstm::{scan_stack, scan_stack_backward, Head, HeadCache, LstmParams, StackCache};
use super::NetHyper;
use crate::{Error, Result};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct BiLstmController {
    pub hyper: NetHyper,
    pub fwd: Vec<LstmParams>,
    pub bwd: Vec<LstmParams>,
    pub head: Head,
}

pub struct BiGroupCache {
    fwd: StackCache,
    bwd: StackCache,
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

impl BiLstmController {
    pub fn new(hyper: NetHyper, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let feat = hyper.feature_dim();
        let fwd = init_stack(&hyper, feat, &mut rng);
        let bwd = init_stack(&hyper, feat, &mut rng);
        let head = Head::init(2 * hyper.hidden, hyper.a_dim, hyper.head_hidden, &mut rng);
        BiLstmController {
            hyper,
            fwd,
            bwd,
            head,
        }
    }

    pub fn zeros_like(&self) -> Self {
        BiLstmController {
            hyper: self.hyper.clone(),
            fwd: self.fwd.iter().map(LstmParams::zeros_like).collect(),
            bwd: self.bwd.iter().map(LstmParams::zeros_like).collect(),
            head: self.head.zeros_like(),
        }
    }

    fn check_inputs(&self, xs: &[Vec<f64>]) -> Result<()> {
        if xs.is_empty() {
            return Err(Error::ShapeMismatch {
                context: "bilstm chain length",
                expected: 1,
                got: 0,
            });
        }
        let feat = self.hyper.feature_dim();
        for x in xs {
            if x.len() != feat {
                return Err(Error::ShapeMismatch {
                    context: "bilstm feature dim",
                    expected: feat,
                    got: x.len(),
                });
            }
        }
        Ok(())
    }

    /// Raw per-module outputs (no clamp) for one chain of feature vectors.
    pub fn forward(&self, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        Ok(self.forward_cached(xs)?.outputs)
    }

    pub fn forward_cached(&self, xs: &[Vec<f64>]) -> Result<BiGroupCache> {
        self.check_inputs(xs)?;
        let n = xs.len();
        let rev: Vec<Vec<f64>> = xs.iter().rev().cloned().collect();
        let fwd = scan_stack(&self.fwd, xs)?;
        let bwd = scan_stack(&self.bwd, &rev)?;
        let fwd_top = fwd.top_hidden();
        let bwd_top = bwd.top_hidden();
        let mut heads = Vec::with_capacity(n);
        let mut outputs = Vec::with_capacity(n);
        for m in 0..n {
            let mut cat = Vec::with_capacity(2 * self.hyper.hidden);
            cat.extend_from_slice(fwd_top[m]);
            cat.extend_from_slice(bwd_top[n - 1 - m]);
            let (y, hc) = self.head.forward(&cat);
            heads.push(hc);
            outputs.push(y);
        }
        Ok(BiGroupCache {
            fwd,
            bwd,
            heads,
            outputs,
        })
    }

    /// Backpropagates `d_out[m]` (gradient wrt each module's raw output)
    /// through the head and both scan directions.
    pub fn backward(&self, cache: &BiGroupCache, d_out: &[Vec<f64>], grads: &mut Self) {
        let n = d_out.len();
        let h = self.hyper.hidden;
        let mut d_fwd_top = vec![vec![0.0; h]; n];
        let mut d_bwd_top = vec![vec![0.0; h]; n];
        for m in 0..n {
            let d_cat = self.head.backward(&cache.heads[m], &d_out[m], &mut grads.head);
            d_fwd_top[m].copy_from_slice(&d_cat[..h]);
            d_bwd_top[n - 1 - m].copy_from_slice(&d_cat[h..]);
        }
        scan_stack_backward(&self.fwd, &cache.fwd, d_fwd_top, &mut grads.fwd);
        scan_stack_backward(&self.bwd, &cache.bwd, d_bwd_top, &mut grads.bwd);
    }

    /// The space-mirrored controller: forward and backward stacks swapped,
    /// head input halves swapped. Running it on a reversed chain reproduces
    /// the original outputs in reverse order.
    pub fn mirrored(&self) -> Self {
        let mut head = self.head.clone();
        let h = self.hyper.hidden;
        for r in 0..head.w1.rows {
            let row = &mut head.w1.data[r * head.w1.cols..(r + 1) * head.w1.cols];
            for k in 0..h {
                row.swap(k, h + k);
            }
        }
        BiLstmController {
            hyper: self.hyper.clone(),
            fwd: self.bwd.clone(),
            bwd: self.fwd.clone(),
            head,
        }
    }

    pub fn visit(&self, f: &mut dyn FnMut(&str, usize, usize, &[f64])) {
        for (label, stack) in [("fwd", &self.fwd), ("bwd", &self.bwd)] {
            for (l, p) in stack.iter().enumerate() {
                super::visit_lstm(&format!("{label}{l}"), p, f);
            }
        }
        super::visit_head("head", &self.head, f);
    }

    pub fn visit_mut(&mut self, f: &mut dyn FnMut(&str, usize, usize, &mut [f64])) {
        for (label, stack) in [("fwd", &mut self.fwd), ("bwd", &mut self.bwd)] {
            for (l, p) in stack.iter_mut().enumerate() {
                super::visit_lstm_mut(&format!("{label}{l}"), p, f);
            }
        }
        super::visit_head_mut("head", &mut self.head, f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn tiny() -> BiLstmController {
        BiLstmController::new(
            NetHyper {
                hidden: 4,
                layers: 2,
                window: 2,
                state_dim: 3,
                a_dim: 2,
                head_hidden: None,
            },
            99,
        )
    }

    fn random_chain(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect()
    }

    #[test]
    fn single_module_chain_defined() {
        let net = tiny();
        let xs = random_chain(1, net.hyper.feature_dim(), 1);
        let out = net.forward(&xs).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].len(), 2);
    }

    #[test]
    fn same_parameters_serve_any_chain_length() {
        let net = tiny();
        let feat = net.hyper.feature_dim();
        let out4 = net.forward(&random_chain(4, feat, 2)).unwrap();
        let out6 = net.forward(&random_chain(6, feat, 3)).unwrap();
        assert_eq!(out4.len(), 4);
        assert_eq!(out6.len(), 6);
    }

    #[test]
    fn mirrored_controller_reverses_outputs() {
        let net = tiny();
        let xs = random_chain(5, net.hyper.feature_dim(), 4);
        let out = net.forward(&xs).unwrap();
        let rev_xs: Vec<Vec<f64>> = xs.iter().rev().cloned().collect();
        let mirrored_out = net.mirrored().forward(&rev_xs).unwrap();
        for (m, o) in out.iter().enumerate() {
            for (a, b) in o.iter().zip(&mirrored_out[4 - m]) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn information_flows_both_directions() {
        let net = tiny();
        let feat = net.hyper.feature_dim();
        let xs = random_chain(4, feat, 5);
        let base = net.forward(&xs).unwrap();
        for perturbed_module in 0..4 {
            let mut xs2 = xs.clone();
            xs2[perturbed_module][0] += 0.25;
            let out = net.forward(&xs2).unwrap();
            for m in 0..4 {
                let diff: f64 = out[m]
                    .iter()
                    .zip(&base[m])
                    .map(|(a, b)| (a - b).abs())
                    .sum();
                assert!(
                    diff > 1e-12,
                    "module {m} output unchanged by perturbing module {perturbed_module}"
                );
            }
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let net = tiny();
        let xs = random_chain(3, net.hyper.feature_dim() + 1, 6);
        assert!(net.forward(&xs).is_err());
        assert!(net.forward(&[]).is_err());
    }
}
