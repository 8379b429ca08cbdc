//! Minibatch training with Adam, holdout estimation errors, and
//! finite-difference gradient checking.

use super::adam::{adam_step, AdamState};
use super::{clamp_unit, Network};
use crate::datagen::PairGroup;
use crate::{Error, Result};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug)]
pub struct TrainHyper {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Multiplicative per-epoch learning-rate factor (1 = constant).
    pub lr_decay: f64,
    pub seed: u64,
    /// Fraction of groups held out for the estimation table.
    pub holdout_frac: f64,
}

impl TrainHyper {
    pub fn new(epochs: usize, batch_size: usize, lr: f64, seed: u64) -> Self {
        TrainHyper {
            epochs,
            batch_size,
            lr,
            lr_decay: 1.0,
            seed,
            holdout_frac: 0.1,
        }
    }

    pub fn with_decay(mut self, decay: f64) -> Self {
        self.lr_decay = decay;
        self
    }
}

/// Per-module action-estimation errors as a percentage of the actuation
/// range (the range spans 2, so the error is `|a_hat - a| / 2 * 100`).
#[derive(Clone, Debug)]
pub struct EstimationTable {
    /// `(mean, std)` per module, base to tip.
    pub per_module: Vec<(f64, f64)>,
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    /// Mean training loss per epoch.
    pub loss_curve: Vec<f64>,
    pub estimation: EstimationTable,
    pub holdout_len: usize,
}

fn shuffle(indices: &mut [usize], rng: &mut ChaCha8Rng) {
    for i in (1..indices.len()).rev() {
        let j = rng.gen_range(0..=i);
        indices.swap(i, j);
    }
}

/// Shuffled minibatch SGD with Adam. The loss curve holds each epoch's mean
/// training loss; training aborts if that mean exceeds ten times the
/// pre-training loss for three consecutive epochs.
pub fn train(net: &mut Network, groups: &[PairGroup], hyper: &TrainHyper) -> Result<TrainReport> {
    if groups.is_empty() {
        return Err(Error::InvalidArgument("no training pairs".into()));
    }
    if hyper.batch_size == 0 || hyper.epochs == 0 {
        return Err(Error::InvalidArgument(
            "batch_size and epochs must be >= 1".into(),
        ));
    }
    if !(0.0..1.0).contains(&hyper.holdout_frac) {
        return Err(Error::InvalidArgument("holdout_frac must be in [0, 1)".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut order: Vec<usize> = (0..groups.len()).collect();
    shuffle(&mut order, &mut rng);
    let holdout_len = if hyper.holdout_frac > 0.0 {
        ((groups.len() as f64 * hyper.holdout_frac).round() as usize)
            .clamp(1, groups.len() - 1)
    } else {
        0
    };
    let (train_idx, holdout_idx) = order.split_at(groups.len() - holdout_len);
    let mut train_idx: Vec<usize> = train_idx.to_vec();

    let train_groups: Vec<PairGroup> = train_idx.iter().map(|&i| groups[i].clone()).collect();
    let initial = net.loss(&train_groups)?;
    drop(train_groups);

    let mut params = net.params_flat();
    let mut adam = AdamState::new(params.len(), hyper.lr);
    let mut loss_curve = Vec::with_capacity(hyper.epochs);
    let mut over_initial = 0usize;

    for epoch in 0..hyper.epochs {
        adam.lr = hyper.lr * hyper.lr_decay.powi(epoch as i32);
        shuffle(&mut train_idx, &mut rng);
        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for batch in train_idx.chunks(hyper.batch_size) {
            let batch_groups: Vec<PairGroup> =
                batch.iter().map(|&i| groups[i].clone()).collect();
            let (loss, grads) = net.loss_and_grads(&batch_groups)?;
            epoch_loss += loss * batch.len() as f64;
            seen += batch.len();
            adam_step(&mut adam, &mut params, &grads.params_flat())?;
            net.set_params_flat(&params)?;
        }
        let mean_loss = epoch_loss / seen as f64;
        loss_curve.push(mean_loss);
        if mean_loss > 10.0 * initial {
            over_initial += 1;
            if over_initial >= 3 {
                return Err(Error::Divergence {
                    epoch,
                    loss: mean_loss,
                    initial,
                });
            }
        } else {
            over_initial = 0;
        }
    }

    let eval_idx: &[usize] = if holdout_idx.is_empty() {
        &train_idx
    } else {
        holdout_idx
    };
    let estimation = estimation_errors(net, groups, eval_idx)?;
    Ok(TrainReport {
        loss_curve,
        estimation,
        holdout_len,
    })
}

/// Per-module mean and population standard deviation of the clamped
/// prediction error over the selected groups.
pub fn estimation_errors(
    net: &Network,
    groups: &[PairGroup],
    indices: &[usize],
) -> Result<EstimationTable> {
    if indices.is_empty() {
        return Err(Error::InvalidArgument("no evaluation groups".into()));
    }
    let n_modules = groups[indices[0]].pairs.len();
    let mut errs: Vec<Vec<f64>> = vec![Vec::new(); n_modules];
    for &i in indices {
        let g = &groups[i];
        let feats: Vec<Vec<f64>> = g.pairs.iter().map(|p| p.features.clone()).collect();
        let outputs = net.forward_group(&feats)?;
        for (m, out) in outputs.iter().enumerate() {
            let clamped = clamp_unit(out);
            for (y, t) in clamped.iter().zip(&g.pairs[m].target) {
                errs[m].push((y - t).abs() / 2.0 * 100.0);
            }
        }
    }
    let per_module = errs
        .iter()
        .map(|e| {
            let n = e.len() as f64;
            let mean = e.iter().sum::<f64>() / n;
            let var = e.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            (mean, var.sqrt())
        })
        .collect();
    Ok(EstimationTable { per_module })
}

/// Central-difference check of the analytic gradients. Returns the largest
/// relative error `|g_a - g_n| / max(1e-8, |g_a| + |g_n|)` over all
/// parameters. Intended for small networks.
pub fn grad_check(net: &Network, groups: &[PairGroup], epsilon: f64) -> Result<f64> {
    let count = net.param_count();
    if count > 10_000 {
        return Err(Error::InvalidArgument(format!(
            "grad_check is for small networks; {count} parameters"
        )));
    }
    let (_, grads) = net.loss_and_grads(groups)?;
    let analytic = grads.params_flat();
    let base = net.params_flat();
    let mut probe = net.clone();
    let mut worst = 0.0f64;
    for k in 0..count {
        let mut params = base.clone();
        params[k] += epsilon;
        probe.set_params_flat(&params)?;
        let (loss_plus, _) = probe.loss_and_grads(groups)?;
        params[k] = base[k] - epsilon;
        probe.set_params_flat(&params)?;
        let (loss_minus, _) = probe.loss_and_grads(groups)?;
        let numeric = (loss_plus - loss_minus) / (2.0 * epsilon);
        let rel = (analytic[k] - numeric).abs() / (analytic[k].abs() + numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}
