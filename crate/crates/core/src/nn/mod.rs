//! From-scratch differentiable recurrent networks: the bidirectional
//! chain controller, two time-recurrent baselines, mean-squared-error
//! training with exact reverse-mode gradients, gradient checking, and Adam.

mod adam;
mod baselines;
mod bilstm;
mod lstm;
mod model_io;
mod tensor;
mod train;

pub use adam::{adam_step, AdamState};
pub use baselines::{step_dim, time_steps, ModuleNet, PerModuleLstm, TimeLstm};
pub use bilstm::BiLstmController;
pub use lstm::{lstm_step, scan_stack, scan_stack_backward, Head, LstmParams, StackCache};
pub use model_io::{load_model, save_model};
pub use tensor::Mat;
pub use train::{estimation_errors, grad_check, train, EstimationTable, TrainHyper, TrainReport};

use crate::datagen::{feature_len, PairGroup};
use crate::geom::ModuleAction;
use crate::{Error, Result};

/// Architecture hyperparameters shared by all three network variants.
#[derive(Clone, Debug, PartialEq)]
pub struct NetHyper {
    pub hidden: usize,
    /// Recurrent layers per scan direction.
    pub layers: usize,
    /// History window length K.
    pub window: usize,
    /// Configuration dimensionality (3 for the cable plant, 2 planar).
    pub state_dim: usize,
    /// Action components per module.
    pub a_dim: usize,
    /// Optional tanh hidden layer between the scan output and the action.
    pub head_hidden: Option<usize>,
}

impl NetHyper {
    /// Flattened per-module feature length.
    pub fn feature_dim(&self) -> usize {
        feature_len(self.state_dim, self.a_dim, self.window)
    }
}

/// Any of the three trainable architectures behind one interface.
#[derive(Clone, Debug, PartialEq)]
pub enum Network {
    BiLstm(BiLstmController),
    PerModule(PerModuleLstm),
    Time(TimeLstm),
}

impl Network {
    pub fn new_bilstm(hyper: NetHyper, seed: u64) -> Self {
        Network::BiLstm(BiLstmController::new(hyper, seed))
    }

    pub fn new_per_module(hyper: NetHyper, n_sum: usize, seed: u64) -> Self {
        Network::PerModule(PerModuleLstm::new(hyper, n_sum, seed))
    }

    pub fn new_time(hyper: NetHyper, n_sum: usize, seed: u64) -> Self {
        Network::Time(TimeLstm::new(hyper, n_sum, seed))
    }

    pub fn hyper(&self) -> &NetHyper {
        match self {
            Network::BiLstm(n) => &n.hyper,
            Network::PerModule(n) => &n.hyper,
            Network::Time(n) => &n.hyper,
        }
    }

    pub fn variant_name(&self) -> &'static str {
        match self {
            Network::BiLstm(_) => "bilstm",
            Network::PerModule(_) => "per-module-lstm",
            Network::Time(_) => "time-lstm",
        }
    }

    /// The chain length this network is welded to, if any. The
    /// bidirectional controller serves any length.
    pub fn n_sum_requirement(&self) -> Option<usize> {
        match self {
            Network::BiLstm(_) => None,
            Network::PerModule(n) => Some(n.n_sum()),
            Network::Time(n) => Some(n.n_sum),
        }
    }

    /// Raw per-module outputs for one chain of feature vectors.
    pub fn forward_group(&self, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        match self {
            Network::BiLstm(n) => n.forward(xs),
            Network::PerModule(n) => n.forward(xs),
            Network::Time(n) => n.forward(xs),
        }
    }

    /// Inference: outputs clamped to the actuation range.
    pub fn predict_actions(&self, xs: &[Vec<f64>]) -> Result<Vec<ModuleAction>> {
        self.forward_group(xs)?
            .iter()
            .map(|y| ModuleAction::from_comps(&clamp_unit(y)))
            .collect()
    }

    pub fn zeros_like(&self) -> Self {
        match self {
            Network::BiLstm(n) => Network::BiLstm(n.zeros_like()),
            Network::PerModule(n) => Network::PerModule(n.zeros_like()),
            Network::Time(n) => Network::Time(n.zeros_like()),
        }
    }

    /// Mean squared error over every output scalar of the batch, forward
    /// pass only.
    pub fn loss(&self, groups: &[PairGroup]) -> Result<f64> {
        if groups.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let total: usize = groups
            .iter()
            .map(|g| g.pairs.iter().map(|p| p.target.len()).sum::<usize>())
            .sum();
        let mut loss = 0.0;
        for (gi, group) in groups.iter().enumerate() {
            let feats: Vec<Vec<f64>> = group.pairs.iter().map(|p| p.features.clone()).collect();
            let outputs = self.forward_group(&feats)?;
            for (m, out) in outputs.iter().enumerate() {
                for (y, t) in out.iter().zip(&group.pairs[m].target) {
                    let r = y - t;
                    loss += r * r / total as f64;
                }
            }
            if !loss.is_finite() {
                return Err(Error::NonFinite {
                    context: "loss",
                    index: gi,
                });
            }
        }
        Ok(loss)
    }

    /// Mean squared error over every output scalar of the batch, with the
    /// matching exact gradients (returned as a network-shaped accumulator).
    /// Outputs are not clamped here, so gradients stay live at the range
    /// edges.
    pub fn loss_and_grads(&self, groups: &[PairGroup]) -> Result<(f64, Network)> {
        if groups.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let total: usize = groups
            .iter()
            .map(|g| g.pairs.iter().map(|p| p.target.len()).sum::<usize>())
            .sum();
        let mut grads = self.zeros_like();
        let mut loss = 0.0;
        for (gi, group) in groups.iter().enumerate() {
            let feats: Vec<Vec<f64>> = group.pairs.iter().map(|p| p.features.clone()).collect();
            let mut d_out = |outputs: &[Vec<f64>]| -> Result<Vec<Vec<f64>>> {
                let mut d = Vec::with_capacity(outputs.len());
                for (m, out) in outputs.iter().enumerate() {
                    let target = &group.pairs[m].target;
                    if out.len() != target.len() {
                        return Err(Error::ShapeMismatch {
                            context: "target arity",
                            expected: out.len(),
                            got: target.len(),
                        });
                    }
                    let mut dm = Vec::with_capacity(out.len());
                    for (y, t) in out.iter().zip(target) {
                        let r = y - t;
                        loss += r * r / total as f64;
                        dm.push(2.0 * r / total as f64);
                    }
                    d.push(dm);
                }
                Ok(d)
            };
            match (self, &mut grads) {
                (Network::BiLstm(n), Network::BiLstm(g)) => {
                    let cache = n.forward_cached(&feats)?;
                    let d = d_out(&cache.outputs)?;
                    n.backward(&cache, &d, g);
                }
                (Network::PerModule(n), Network::PerModule(g)) => {
                    let cache = n.forward_cached(&feats)?;
                    let d = d_out(&cache.outputs)?;
                    n.backward(&cache, &d, g);
                }
                (Network::Time(n), Network::Time(g)) => {
                    let cache = n.forward_cached(&feats)?;
                    let d = d_out(&cache.outputs)?;
                    n.backward(&cache, &d, g);
                }
                _ => unreachable!("grads mirror the network variant"),
            }
            if !loss.is_finite() {
                return Err(Error::NonFinite {
                    context: "loss",
                    index: gi,
                });
            }
        }
        Ok((loss, grads))
    }

    pub fn visit(&self, f: &mut dyn FnMut(&str, usize, usize, &[f64])) {
        match self {
            Network::BiLstm(n) => n.visit(f),
            Network::PerModule(n) => n.visit(f),
            Network::Time(n) => n.visit(f),
        }
    }

    pub fn visit_mut(&mut self, f: &mut dyn FnMut(&str, usize, usize, &mut [f64])) {
        match self {
            Network::BiLstm(n) => n.visit_mut(f),
            Network::PerModule(n) => n.visit_mut(f),
            Network::Time(n) => n.visit_mut(f),
        }
    }

    pub fn param_count(&self) -> usize {
        let mut count = 0;
        self.visit(&mut |_, _, _, data| count += data.len());
        count
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.visit(&mut |_, _, _, data| out.extend_from_slice(data));
        out
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        let mut cursor = 0;
        let mut overflow = false;
        self.visit_mut(&mut |_, _, _, data| {
            if cursor + data.len() > flat.len() {
                overflow = true;
                return;
            }
            data.copy_from_slice(&flat[cursor..cursor + data.len()]);
            cursor += data.len();
        });
        if overflow || cursor != flat.len() {
            return Err(Error::ShapeMismatch {
                context: "set_params_flat",
                expected: self.param_count(),
                got: flat.len(),
            });
        }
        Ok(())
    }
}

pub(crate) fn clamp_unit(y: &[f64]) -> Vec<f64> {
    y.iter().map(|v| v.clamp(-1.0, 1.0)).collect()
}

pub(crate) fn visit_lstm(prefix: &str, p: &LstmParams, f: &mut dyn FnMut(&str, usize, usize, &[f64])) {
    for (name, w) in [("w_f", &p.w_f), ("w_i", &p.w_i), ("w_c", &p.w_c), ("w_o", &p.w_o)] {
        f(&format!("{prefix}.{name}"), w.rows, w.cols, &w.data);
    }
    for (name, b) in [("b_f", &p.b_f), ("b_i", &p.b_i), ("b_c", &p.b_c), ("b_o", &p.b_o)] {
        f(&format!("{prefix}.{name}"), b.len(), 1, b);
    }
}

pub(crate) fn visit_lstm_mut(
    prefix: &str,
    p: &mut LstmParams,
    f: &mut dyn FnMut(&str, usize, usize, &mut [f64]),
) {
    for (name, w) in [
        ("w_f", &mut p.w_f),
        ("w_i", &mut p.w_i),
        ("w_c", &mut p.w_c),
        ("w_o", &mut p.w_o),
    ] {
        f(&format!("{prefix}.{name}"), w.rows, w.cols, &mut w.data);
    }
    for (name, b) in [
        ("b_f", &mut p.b_f),
        ("b_i", &mut p.b_i),
        ("b_c", &mut p.b_c),
        ("b_o", &mut p.b_o),
    ] {
        let len = b.len();
        f(&format!("{prefix}.{name}"), len, 1, b);
    }
}

pub(crate) fn visit_head(prefix: &str, h: &Head, f: &mut dyn FnMut(&str, usize, usize, &[f64])) {
    f(&format!("{prefix}.w1"), h.w1.rows, h.w1.cols, &h.w1.data);
    f(&format!("{prefix}.b1"), h.b1.len(), 1, &h.b1);
    if let (Some(w2), Some(b2)) = (&h.w2, &h.b2) {
        f(&format!("{prefix}.w2"), w2.rows, w2.cols, &w2.data);
        f(&format!("{prefix}.b2"), b2.len(), 1, b2);
    }
}

pub(crate) fn visit_head_mut(
    prefix: &str,
    h: &mut Head,
    f: &mut dyn FnMut(&str, usize, usize, &mut [f64]),
) {
    f(&format!("{prefix}.w1"), h.w1.rows, h.w1.cols, &mut h.w1.data);
    let len = h.b1.len();
    f(&format!("{prefix}.b1"), len, 1, &mut h.b1);
    if let (Some(w2), Some(b2)) = (&mut h.w2, &mut h.b2) {
        f(&format!("{prefix}.w2"), w2.rows, w2.cols, &mut w2.data);
        let len = b2.len();
        f(&format!("{prefix}.b2"), len, 1, b2);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::TrainingPair;

    fn hyper() -> NetHyper {
        NetHyper {
            hidden: 4,
            layers: 1,
            window: 2,
            state_dim: 3,
            a_dim: 2,
            head_hidden: None,
        }
    }

    #[test]
    fn parameter_count_independent_of_chain_length() {
        let a = Network::new_bilstm(hyper(), 1);
        let b = Network::new_bilstm(hyper(), 2);
        assert_eq!(a.param_count(), b.param_count());
        // while the time-recurrent baseline's width scales with the chain
        let t4 = Network::new_time(hyper(), 4, 1);
        let t6 = Network::new_time(hyper(), 6, 1);
        assert_ne!(t4.param_count(), t6.param_count());
    }

    #[test]
    fn flat_round_trip() {
        let mut net = Network::new_per_module(hyper(), 3, 5);
        let flat = net.params_flat();
        assert_eq!(flat.len(), net.param_count());
        let mut bumped = flat.clone();
        bumped[17] += 1.0;
        net.set_params_flat(&bumped).unwrap();
        assert_eq!(net.params_flat(), bumped);
        assert!(net.set_params_flat(&flat[1..]).is_err());
    }

    #[test]
    fn zero_net_zero_targets_zero_loss_and_grads() {
        let mut net = Network::new_bilstm(hyper(), 7);
        let zeros = vec![0.0; net.param_count()];
        net.set_params_flat(&zeros).unwrap();
        let group = PairGroup {
            pairs: (0..3)
                .map(|_| TrainingPair {
                    features: vec![0.0; net.hyper().feature_dim()],
                    target: vec![0.0, 0.0],
                })
                .collect(),
        };
        let (loss, grads) = net.loss_and_grads(&[group]).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grads.params_flat().iter().all(|g| *g == 0.0));
    }

    #[test]
    fn head_bias_gradient_closed_form() {
        // single output component: dL/db = 2 * mean residual
        let h = NetHyper {
            hidden: 3,
            layers: 1,
            window: 2,
            state_dim: 2,
            a_dim: 1,
            head_hidden: None,
        };
        let net = Network::new_bilstm(h.clone(), 3);
        let feat = h.feature_dim();
        let groups: Vec<PairGroup> = (0..4)
            .map(|k| PairGroup {
                pairs: (0..2)
                    .map(|m| TrainingPair {
                        features: (0..feat).map(|j| ((k + m + j) as f64 * 0.37).sin()).collect(),
                        target: vec![0.3 * (k as f64 - 1.5)],
                    })
                    .collect(),
            })
            .collect();
        let (_, grads) = net.loss_and_grads(&groups).unwrap();

        let mut mean_residual = 0.0;
        let mut count = 0.0;
        for g in &groups {
            let feats: Vec<Vec<f64>> = g.pairs.iter().map(|p| p.features.clone()).collect();
            for (m, out) in net.forward_group(&feats).unwrap().iter().enumerate() {
                mean_residual += out[0] - g.pairs[m].target[0];
                count += 1.0;
            }
        }
        mean_residual /= count;

        let mut head_b_grad = None;
        grads.visit(&mut |name, _, _, data| {
            if name == "head.b1" {
                head_b_grad = Some(data[0]);
            }
        });
        let got = head_b_grad.unwrap();
        assert!(
            (got - 2.0 * mean_residual).abs() < 1e-12,
            "{got} vs {}",
            2.0 * mean_residual
        );
    }
}
