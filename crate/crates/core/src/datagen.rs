//! Excitation-signal generation and dataset handling.
//!
//! Two collectors drive the plant with bounded random walks. The
//! traditional one gives every module an independent sequence for the whole
//! run; the phased one spends the first third driving all modules with one
//! shared sequence (so the chain swings far from rest), the second third
//! splitting the end module from the rest, and the final third running all
//! modules independently. Walks in later phases continue from each module's
//! previous action value, so contiguous actions never differ by more than
//! `delta_max` anywhere in the dataset.

use crate::geom::{chain_world_positions, module_label, ModuleAction, RobotConfig};
use crate::plant::{plant_observe, plant_step, PlantMode, PlantState};
use crate::{fmt_f64, mix_seed, Error, Result};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use std::fmt;
use std::fs;
use std::path::Path;

/// Collection phase a record was produced in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    A,
    B,
    C,
    Traditional,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::A => "a",
            Phase::B => "b",
            Phase::C => "c",
            Phase::Traditional => "traditional",
        })
    }
}

impl Phase {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "a" => Some(Phase::A),
            "b" => Some(Phase::B),
            "c" => Some(Phase::C),
            "traditional" => Some(Phase::Traditional),
            _ => None,
        }
    }
}

/// One time step: the actions applied at `t` and the configurations
/// observed before they were applied.
#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub t: u64,
    pub phase: Phase,
    pub actions: Vec<ModuleAction>,
    pub configs: RobotConfig,
}

/// Time-ordered action/configuration records plus provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub n_sum: usize,
    pub mode: PlantMode,
    pub seed: u64,
    pub params_digest: u64,
    pub records: Vec<Record>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn phase_len(&self, phase: Phase) -> usize {
        self.records.iter().filter(|r| r.phase == phase).count()
    }

    /// Writes the line-oriented text format: one header line, then one
    /// record per line (`t phase` followed, per module, by the action
    /// components then the configuration components).
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str(&format!(
            "modarm-dataset 1 n_sum={} mode={} d={} a_dim={} seed={} params={:016x}\n",
            self.n_sum,
            self.mode.name(),
            self.mode.state_dim(),
            self.mode.a_dim(),
            self.seed,
            self.params_digest,
        ));
        for r in &self.records {
            out.push_str(&format!("{} {}", r.t, r.phase));
            for m in 0..self.n_sum {
                for a in r.actions[m].comps() {
                    out.push(' ');
                    out.push_str(&fmt_f64(*a));
                }
                for v in r.configs.configs[m].comps() {
                    out.push(' ');
                    out.push_str(&fmt_f64(*v));
                }
            }
            out.push('\n');
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Dataset> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Dataset> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "empty file".into(),
        })?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 8 || fields[0] != "modarm-dataset" || fields[1] != "1" {
            return Err(Error::Parse {
                line: 1,
                msg: format!("bad header: {header}"),
            });
        }
        let field = |idx: usize, key: &str| -> Result<String> {
            let (k, v) = fields[idx].split_once('=').ok_or_else(|| Error::Parse {
                line: 1,
                msg: format!("expected {key}=..."),
            })?;
            if k != key {
                return Err(Error::Parse {
                    line: 1,
                    msg: format!("expected {key}, found {k}"),
                });
            }
            Ok(v.to_string())
        };
        let n_sum: usize = field(2, "n_sum")?.parse().map_err(|_| Error::Parse {
            line: 1,
            msg: "bad n_sum".into(),
        })?;
        let mode = PlantMode::from_name(&field(3, "mode")?).map_err(|e| Error::Parse {
            line: 1,
            msg: e.to_string(),
        })?;
        let d: usize = field(4, "d")?.parse().map_err(|_| Error::Parse {
            line: 1,
            msg: "bad d".into(),
        })?;
        let a_dim: usize = field(5, "a_dim")?.parse().map_err(|_| Error::Parse {
            line: 1,
            msg: "bad a_dim".into(),
        })?;
        if d != mode.state_dim() || a_dim != mode.a_dim() {
            return Err(Error::Parse {
                line: 1,
                msg: format!("mode {} implies d={} a_dim={}", mode.name(), mode.state_dim(), mode.a_dim()),
            });
        }
        let seed: u64 = field(6, "seed")?.parse().map_err(|_| Error::Parse {
            line: 1,
            msg: "bad seed".into(),
        })?;
        let params_digest =
            u64::from_str_radix(&field(7, "params")?, 16).map_err(|_| Error::Parse {
                line: 1,
                msg: "bad params digest".into(),
            })?;

        let per_record = 2 + n_sum * (a_dim + d);
        let mut records = Vec::new();
        let mut prev_t: Option<u64> = None;
        for (idx, line) in lines {
            let lineno = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != per_record {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("expected {per_record} columns, found {}", toks.len()),
                });
            }
            let t: u64 = toks[0].parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: "bad step index".into(),
            })?;
            if let Some(p) = prev_t {
                if t <= p {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: format!("step index {t} not increasing"),
                    });
                }
            }
            prev_t = Some(t);
            let phase = Phase::parse(toks[1]).ok_or_else(|| Error::Parse {
                line: lineno,
                msg: format!("unknown phase tag {}", toks[1]),
            })?;
            let mut cursor = 2;
            let num = |cursor: &mut usize| -> Result<f64> {
                let v: f64 = toks[*cursor].parse().map_err(|_| Error::Parse {
                    line: lineno,
                    msg: format!("bad number {}", toks[*cursor]),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: "non-finite value".into(),
                    });
                }
                *cursor += 1;
                Ok(v)
            };
            let mut actions = Vec::with_capacity(n_sum);
            let mut configs = Vec::with_capacity(n_sum);
            for _ in 0..n_sum {
                let mut a = Vec::with_capacity(a_dim);
                for _ in 0..a_dim {
                    a.push(num(&mut cursor)?);
                }
                actions.push(ModuleAction::from_comps(&a).map_err(|e| Error::Parse {
                    line: lineno,
                    msg: e.to_string(),
                })?);
                let mut v = Vec::with_capacity(d);
                for _ in 0..d {
                    v.push(num(&mut cursor)?);
                }
                configs.push(crate::geom::ModuleConfig::from_comps(&v).map_err(|e| {
                    Error::Parse {
                        line: lineno,
                        msg: e.to_string(),
                    }
                })?);
            }
            records.push(Record {
                t,
                phase,
                actions,
                configs: RobotConfig { t, configs },
            });
        }
        Ok(Dataset {
            n_sum,
            mode,
            seed,
            params_digest,
            records,
        })
    }
}

/// Bounded random walk from the origin: `a(0) = 0`,
/// `a(t+1) = clamp(a(t) + u, -1, 1)` with `u` uniform per component on
/// `[-delta_max, delta_max]`. Reproducible from the seed.
pub fn random_walk_sequence(
    len: usize,
    delta_max: f64,
    seed: u64,
    a_dim: usize,
) -> Vec<ModuleAction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    walk_from(&vec![0.0; a_dim], len, delta_max, &mut rng)
        .into_iter()
        .map(|c| ModuleAction::from_comps(&c).expect("walk arity"))
        .collect()
}

fn walk_from(start: &[f64], len: usize, delta_max: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(len);
    let mut cur = start.to_vec();
    for _ in 0..len {
        out.push(cur.clone());
        for c in cur.iter_mut() {
            let u: f64 = rng.gen_range(-delta_max..=delta_max);
            *c = (*c + u).clamp(-1.0, 1.0);
        }
    }
    out
}

fn to_actions(comps: &[Vec<f64>]) -> Vec<ModuleAction> {
    comps
        .iter()
        .map(|c| ModuleAction::from_comps(c).expect("walk arity"))
        .collect()
}

/// Drives the plant and records every step. `schedule[t]` holds the
/// per-module actions for step `t`.
fn run_schedule(
    mut state: PlantState,
    schedule: &[(Phase, Vec<Vec<ModuleAction>>)],
) -> Result<Vec<Record>> {
    let mut records = Vec::new();
    let mut t: u64 = 0;
    for (phase, steps) in schedule {
        for actions in steps {
            let obs = plant_observe(&state);
            records.push(Record {
                t,
                phase: *phase,
                actions: actions.clone(),
                configs: obs,
            });
            state = plant_step(&state, actions)?;
            t += 1;
        }
    }
    Ok(records)
}

/// Phased collection: shared sequence, split end module, then fully
/// independent sequences, with the plant state carried across phases.
/// `phase_b_shared` is the number of leading modules that share one
/// sequence in phase b (the remaining modules share the solo sequence).
pub fn collect_phased_with(
    state: PlantState,
    n_samples: usize,
    delta_max: f64,
    seed: u64,
    phase_b_shared: usize,
) -> Result<Dataset> {
    if n_samples < 3 {
        return Err(Error::InvalidArgument(
            "phased collection needs at least 3 samples".into(),
        ));
    }
    validate_delta(delta_max)?;
    let n = state.params.n_sum;
    if phase_b_shared == 0 || phase_b_shared >= n.max(2) {
        return Err(Error::InvalidArgument(format!(
            "phase_b_shared {phase_b_shared} must be in 1..{n}"
        )));
    }
    let a_dim = state.params.mode.a_dim();
    let mode = state.params.mode;
    let digest = state.params.digest();

    let len_a = n_samples.div_ceil(3);
    let len_b = n_samples.div_ceil(3).min(n_samples - len_a);
    let len_c = n_samples - len_a - len_b;

    let zeros = vec![0.0; a_dim];
    let mut rng_a = ChaCha8Rng::seed_from_u64(mix_seed(seed, 1));
    let walk_a = walk_from(&zeros, len_a, delta_max, &mut rng_a);
    let a_end = walk_a.last().cloned().unwrap_or(zeros.clone());

    let mut rng_b1 = ChaCha8Rng::seed_from_u64(mix_seed(seed, 2));
    let walk_b1 = walk_from(&a_end, len_b, delta_max, &mut rng_b1);
    let mut rng_b3 = ChaCha8Rng::seed_from_u64(mix_seed(seed, 3));
    let walk_b3 = walk_from(&a_end, len_b, delta_max, &mut rng_b3);
    let b1_end = walk_b1.last().cloned().unwrap_or_else(|| a_end.clone());
    let b3_end = walk_b3.last().cloned().unwrap_or_else(|| a_end.clone());

    let walks_c: Vec<Vec<Vec<f64>>> = (0..n)
        .map(|i| {
            let start = if i < phase_b_shared { &b1_end } else { &b3_end };
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x10 + i as u64));
            walk_from(start, len_c, delta_max, &mut rng)
        })
        .collect();

    let steps_a: Vec<Vec<ModuleAction>> = walk_a
        .iter()
        .map(|c| to_actions(&vec![c.clone(); n]))
        .collect();
    let steps_b: Vec<Vec<ModuleAction>> = (0..len_b)
        .map(|k| {
            let comps: Vec<Vec<f64>> = (0..n)
                .map(|i| {
                    if i < phase_b_shared {
                        walk_b1[k].clone()
                    } else {
                        walk_b3[k].clone()
                    }
                })
                .collect();
            to_actions(&comps)
        })
        .collect();
    let steps_c: Vec<Vec<ModuleAction>> = (0..len_c)
        .map(|k| {
            let comps: Vec<Vec<f64>> = (0..n).map(|i| walks_c[i][k].clone()).collect();
            to_actions(&comps)
        })
        .collect();

    let records = run_schedule(
        state,
        &[
            (Phase::A, steps_a),
            (Phase::B, steps_b),
            (Phase::C, steps_c),
        ],
    )?;
    Ok(Dataset {
        n_sum: n,
        mode,
        seed,
        params_digest: digest,
        records,
    })
}

/// Phased collection with the default split: every module except the end
/// one shares the phase-b sequence.
pub fn collect_phased(
    state: PlantState,
    n_samples: usize,
    delta_max: f64,
    seed: u64,
) -> Result<Dataset> {
    let shared = state.params.n_sum.saturating_sub(1).max(1);
    collect_phased_with(state, n_samples, delta_max, seed, shared)
}

/// Traditional collection: every module follows its own independent random
/// walk for the whole run.
pub fn collect_traditional(
    state: PlantState,
    n_samples: usize,
    delta_max: f64,
    seed: u64,
) -> Result<Dataset> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("need at least 1 sample".into()));
    }
    validate_delta(delta_max)?;
    let n = state.params.n_sum;
    let a_dim = state.params.mode.a_dim();
    let mode = state.params.mode;
    let digest = state.params.digest();
    let zeros = vec![0.0; a_dim];
    let walks: Vec<Vec<Vec<f64>>> = (0..n)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x40 + i as u64));
            walk_from(&zeros, n_samples, delta_max, &mut rng)
        })
        .collect();
    let steps: Vec<Vec<ModuleAction>> = (0..n_samples)
        .map(|k| {
            let comps: Vec<Vec<f64>> = (0..n).map(|i| walks[i][k].clone()).collect();
            to_actions(&comps)
        })
        .collect();
    let records = run_schedule(state, &[(Phase::Traditional, steps)])?;
    Ok(Dataset {
        n_sum: n,
        mode,
        seed,
        params_digest: digest,
        records,
    })
}

fn validate_delta(delta_max: f64) -> Result<()> {
    if delta_max > 0.0 && delta_max <= 2.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "delta_max {delta_max} must be in (0, 2]"
        )))
    }
}

/// Supervised example for one module at one time step.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingPair {
    /// `[label, S_d, S(t-K+1..t), A(t-K+1..t-1)]`, flattened oldest-first;
    /// the achieved next state plays the role of the desired state.
    pub features: Vec<f64>,
    /// Action components applied at `t`.
    pub target: Vec<f64>,
}

/// All modules' training pairs for one time step, base to tip.
#[derive(Clone, Debug, PartialEq)]
pub struct PairGroup {
    pub pairs: Vec<TrainingPair>,
}

/// Per-module feature length for the flattened window layout. Independent
/// of the module count, which is what makes one controller serve chains of
/// any length.
pub fn feature_len(state_dim: usize, a_dim: usize, window: usize) -> usize {
    1 + state_dim + window * state_dim + (window - 1) * a_dim
}

/// Builds one module's feature vector from its label, desired next state,
/// and measured history (oldest first, `window` states and `window - 1`
/// actions).
pub fn build_features(
    label: f64,
    desired: &[f64],
    state_hist: &[Vec<f64>],
    action_hist: &[Vec<f64>],
) -> Vec<f64> {
    let mut f = Vec::with_capacity(
        1 + desired.len()
            + state_hist.iter().map(Vec::len).sum::<usize>()
            + action_hist.iter().map(Vec::len).sum::<usize>(),
    );
    f.push(label);
    f.extend_from_slice(desired);
    for s in state_hist {
        f.extend_from_slice(s);
    }
    for a in action_hist {
        f.extend_from_slice(a);
    }
    f
}

/// Slides a window of length `window` over the dataset and emits one
/// [`PairGroup`] per step `t` in `[window-1, len-2]`.
pub fn make_training_pairs(ds: &Dataset, window: usize) -> Result<Vec<PairGroup>> {
    if window == 0 {
        return Err(Error::InvalidArgument("window must be >= 1".into()));
    }
    let len = ds.len();
    if len <= window + 1 {
        return Err(Error::ShortDataset {
            len,
            min: window + 1,
        });
    }
    let n = ds.n_sum;
    let labels: Vec<f64> = (1..=n)
        .map(|i| module_label(i, n).map(|l| l.value()))
        .collect::<Result<_>>()?;

    let mut groups = Vec::with_capacity(len - window);
    for t in (window - 1)..=(len - 2) {
        let mut pairs = Vec::with_capacity(n);
        for m in 0..n {
            let desired = ds.records[t + 1].configs.configs[m].comps().to_vec();
            let state_hist: Vec<Vec<f64>> = (t + 1 - window..=t)
                .map(|tau| ds.records[tau].configs.configs[m].comps().to_vec())
                .collect();
            let action_hist: Vec<Vec<f64>> = (t + 1 - window..t)
                .map(|tau| ds.records[tau].actions[m].comps().to_vec())
                .collect();
            let features = build_features(labels[m], &desired, &state_hist, &action_hist);
            pairs.push(TrainingPair {
                features,
                target: ds.records[t].actions[m].comps().to_vec(),
            });
        }
        groups.push(PairGroup { pairs });
    }
    Ok(groups)
}

/// World-frame end position of the last module for every record.
pub fn tip_positions(records: &[Record]) -> Vec<[f64; 3]> {
    records
        .iter()
        .map(|r| {
            *chain_world_positions(&r.configs.configs)
                .last()
                .expect("non-empty chain")
        })
        .collect()
}

/// Spread of the end-module tip: square root of the summed per-axis
/// variances of its world position.
pub fn tip_position_std(records: &[Record]) -> f64 {
    let tips = tip_positions(records);
    if tips.is_empty() {
        return 0.0;
    }
    let n = tips.len() as f64;
    let mut mean = [0.0; 3];
    for t in &tips {
        for k in 0..3 {
            mean[k] += t[k] / n;
        }
    }
    let mut var = 0.0;
    for t in &tips {
        for k in 0..3 {
            var += (t[k] - mean[k]) * (t[k] - mean[k]) / n;
        }
    }
    var.sqrt()
}

/// Largest absolute x excursion of the end-module tip.
pub fn tip_x_excursion_max(records: &[Record]) -> f64 {
    tip_positions(records)
        .iter()
        .map(|t| t[0].abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{plant_init, PlantParams};
    use proptest::prelude::*;

    fn plant(n: usize) -> PlantState {
        plant_init(PlantParams::new(n, PlantMode::Cable3D)).unwrap()
    }

    #[test]
    fn walk_starts_at_origin() {
        let w = random_walk_sequence(1, 0.05, 9, 2);
        assert_eq!(w, vec![ModuleAction::pair(0.0, 0.0)]);
    }

    #[test]
    fn walk_deterministic() {
        let a = random_walk_sequence(200, 0.05, 42, 2);
        let b = random_walk_sequence(200, 0.05, 42, 2);
        assert_eq!(a, b);
        let c = random_walk_sequence(200, 0.05, 43, 2);
        assert_ne!(a, c);
    }

    #[test]
    fn phase_sizes_for_16000() {
        let ds = collect_phased(plant(4), 16000, 0.05, 7).unwrap();
        assert_eq!(ds.len(), 16000);
        assert_eq!(ds.phase_len(Phase::A), 5334);
        assert_eq!(ds.phase_len(Phase::B), 5334);
        assert_eq!(ds.phase_len(Phase::C), 5332);
    }

    #[test]
    fn phase_a_actions_shared() {
        let ds = collect_phased(plant(4), 300, 0.05, 7).unwrap();
        for r in ds.records.iter().filter(|r| r.phase == Phase::A) {
            for a in &r.actions[1..] {
                assert_eq!(a, &r.actions[0]);
            }
        }
        // phase b: modules 1..=3 share, module 4 separate from them
        let b_recs: Vec<_> = ds.records.iter().filter(|r| r.phase == Phase::B).collect();
        assert!(!b_recs.is_empty());
        let mut end_differs = false;
        for r in &b_recs {
            assert_eq!(r.actions[1], r.actions[0]);
            assert_eq!(r.actions[2], r.actions[0]);
            if r.actions[3] != r.actions[0] {
                end_differs = true;
            }
        }
        assert!(end_differs);
    }

    #[test]
    fn phases_contiguous_and_partition() {
        let ds = collect_phased(plant(3), 500, 0.05, 3).unwrap();
        let mut seen = Vec::new();
        for r in &ds.records {
            if seen.last() != Some(&r.phase) {
                seen.push(r.phase);
            }
        }
        assert_eq!(seen, vec![Phase::A, Phase::B, Phase::C]);
        assert_eq!(
            ds.phase_len(Phase::A) + ds.phase_len(Phase::B) + ds.phase_len(Phase::C),
            ds.len()
        );
    }

    #[test]
    fn step_bound_holds_across_phase_boundaries() {
        let delta = 0.05;
        let ds = collect_phased(plant(4), 600, delta, 11).unwrap();
        for w in ds.records.windows(2) {
            for m in 0..4 {
                for (a, b) in w[0].actions[m].comps().iter().zip(w[1].actions[m].comps()) {
                    assert!((b - a).abs() <= delta + 1e-12);
                }
            }
        }
    }

    #[test]
    fn traditional_tags_and_count() {
        let ds = collect_traditional(plant(4), 1000, 0.05, 5).unwrap();
        assert_eq!(ds.len(), 1000);
        assert!(ds.records.iter().all(|r| r.phase == Phase::Traditional));
        // independent walks diverge
        let actions_of = |m: usize| -> Vec<f64> {
            ds.records.iter().map(|r| r.actions[m].a0()).collect()
        };
        for m in 1..4 {
            assert_ne!(actions_of(0), actions_of(m));
        }
    }

    #[test]
    fn phased_covers_more_than_traditional() {
        let params = PlantParams::new(4, PlantMode::Cable3D);
        let ph = collect_phased(plant_init(params.clone()).unwrap(), 2000, 0.05, 17).unwrap();
        let tr = collect_traditional(plant_init(params).unwrap(), 2000, 0.05, 17).unwrap();
        assert!(tip_position_std(&ph.records) > tip_position_std(&tr.records));

        let len_a = ph.phase_len(Phase::A);
        let phase_a: Vec<Record> = ph.records[..len_a].to_vec();
        assert!(tip_x_excursion_max(&phase_a) >= tip_x_excursion_max(&tr.records[..len_a]));
    }

    #[test]
    fn pair_counts_and_layout() {
        let ds = collect_phased(plant(4), 120, 0.05, 1).unwrap();
        let groups = make_training_pairs(&ds, 5).unwrap();
        assert_eq!(groups.len(), 120 - 5);
        assert_eq!(feature_len(3, 2, 5), 27);
        for g in &groups {
            assert_eq!(g.pairs.len(), 4);
            for p in &g.pairs {
                assert_eq!(p.features.len(), 27);
                assert_eq!(p.target.len(), 2);
            }
        }
        // same layout regardless of module count
        let ds6 = collect_phased(plant(6), 60, 0.05, 1).unwrap();
        let g6 = make_training_pairs(&ds6, 5).unwrap();
        assert_eq!(g6[0].pairs[0].features.len(), 27);

        assert!(make_training_pairs(&ds, 119).is_err());
    }

    #[test]
    fn pairs_do_not_peek_past_next_state() {
        let mut ds = collect_phased(plant(3), 80, 0.05, 2).unwrap();
        let groups = make_training_pairs(&ds, 4).unwrap();
        // mutate everything after t+1 for the first group (t = 3)
        for r in ds.records.iter_mut().skip(5) {
            r.actions = vec![ModuleAction::pair(0.123, -0.456); 3];
        }
        let groups2 = make_training_pairs(&ds, 4).unwrap();
        assert_eq!(groups[0], groups2[0]);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = std::env::temp_dir().join(format!("modarm-ds-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("ds.txt");
        let ds = collect_phased(plant(3), 50, 0.05, 23).unwrap();
        ds.save(&path).unwrap();
        let back = Dataset::load(&path).unwrap();
        assert_eq!(ds, back);

        // 2D round trip
        let p2 = plant_init(PlantParams::new(2, PlantMode::Chamber2D)).unwrap();
        let ds2 = collect_traditional(p2, 40, 0.05, 5).unwrap();
        let path2 = dir.join("ds2.txt");
        ds2.save(&path2).unwrap();
        assert_eq!(Dataset::load(&path2).unwrap(), ds2);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn malformed_files_rejected_with_line_numbers() {
        let ds = collect_phased(plant(2), 10, 0.05, 23).unwrap();
        let dir = std::env::temp_dir().join(format!("modarm-bad-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("ds.txt");
        ds.save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();

        // truncate a record line: column count mismatch
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let full = lines[3].clone();
        lines[3] = full.rsplit_once(' ').unwrap().0.to_string();
        match Dataset::parse(&lines.join("\n")) {
            Err(Error::Parse { line: 4, .. }) => {}
            other => panic!("expected parse error at line 4, got {other:?}"),
        }

        // header module count inconsistent with record arity
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        lines[0] = lines[0].replace("n_sum=2", "n_sum=3");
        assert!(Dataset::parse(&lines.join("\n")).is_err());

        // header mode inconsistent with record arity
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        lines[0] = lines[0].replace("mode=cable3d", "mode=chamber2d");
        assert!(Dataset::parse(&lines.join("\n")).is_err());
        std::fs::remove_dir_all(&dir).ok();
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn walk_respects_step_bound(
            seed in 0u64..1000,
            len in 2usize..200,
            delta in 0.01f64..0.5,
        ) {
            let w = random_walk_sequence(len, delta, seed, 2);
            prop_assert_eq!(w[0], ModuleAction::pair(0.0, 0.0));
            for pair in w.windows(2) {
                for (a, b) in pair[0].comps().iter().zip(pair[1].comps()) {
                    prop_assert!((b - a).abs() <= delta + 1e-12);
                    prop_assert!((-1.0..=1.0).contains(b));
                }
            }
        }
    }
}
