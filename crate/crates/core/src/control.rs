//! Reference trajectories, the closed-loop runner, and error tables.
//!
//! Tasks a/b/c command 3D module configurations (bend-and-rotate, end
//! orientation sweep with fixed height, and a bend-then-rotate ramp); edge
//! and down command planar bending angles as triangle waves. The per-module
//! parameter lists ship as named presets; a `scale` factor shrinks every
//! bend amplitude uniformly when a plant cannot reach the full preset.

use crate::datagen::build_features;
use crate::geom::{
    angle_error_deg, config_error_pct, module_label, Dim, ModuleAction, ModuleConfig,
};
use crate::plant::{invert_at_state, plant_observe, plant_step, PlantMode, PlantState};
use crate::{fmt_f64, Error, Result};

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaskKind {
    A,
    B,
    C,
    Edge,
    Down,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::A => "a",
            TaskKind::B => "b",
            TaskKind::C => "c",
            TaskKind::Edge => "edge",
            TaskKind::Down => "down",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        match s {
            "a" => Ok(TaskKind::A),
            "b" => Ok(TaskKind::B),
            "c" => Ok(TaskKind::C),
            "edge" => Ok(TaskKind::Edge),
            "down" => Ok(TaskKind::Down),
            other => Err(Error::InvalidArgument(format!("unknown task {other}"))),
        }
    }

    pub fn dim(self) -> Dim {
        match self {
            TaskKind::A | TaskKind::B | TaskKind::C => Dim::Three,
            TaskKind::Edge | TaskKind::Down => Dim::Two,
        }
    }
}

/// Per-module trajectory parameters for one task.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectorySpec {
    pub kind: TaskKind,
    pub t_max: u64,
    /// Uniform bend-amplitude factor; 1 evaluates the closed forms exactly.
    pub scale: f64,
    /// Minimal `v_z` per module (tasks a and c).
    pub v_zmin: Vec<f64>,
    /// Constant `v_z` per module (task b).
    pub v_dz: Vec<f64>,
    /// Rotation direction per module, +1 or -1 (tasks b and c).
    pub dir: Vec<f64>,
    /// Peak bending angle per module in degrees (edge and down).
    pub ang_max_deg: Vec<f64>,
}

impl TrajectorySpec {
    pub fn n_sum(&self) -> usize {
        match self.kind {
            TaskKind::A => self.v_zmin.len(),
            TaskKind::B => self.v_dz.len(),
            TaskKind::C => self.v_zmin.len(),
            TaskKind::Edge | TaskKind::Down => self.ang_max_deg.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_max == 0 {
            return Err(Error::InvalidParams("t_max must be positive".into()));
        }
        if !(self.scale > 0.0 && self.scale <= 1.0) {
            return Err(Error::InvalidParams(format!(
                "scale {} must be in (0, 1]",
                self.scale
            )));
        }
        let check_v = |name: &str, v: &[f64]| -> Result<()> {
            if v.is_empty() {
                return Err(Error::InvalidParams(format!("{name} list empty")));
            }
            for x in v {
                if !(*x > 0.0 && *x <= 1.0) {
                    return Err(Error::InvalidParams(format!("{name} value {x} not in (0, 1]")));
                }
            }
            Ok(())
        };
        match self.kind {
            TaskKind::A => check_v("v_zmin", &self.v_zmin)?,
            TaskKind::B => {
                check_v("v_dz", &self.v_dz)?;
                self.check_dir(self.v_dz.len())?;
            }
            TaskKind::C => {
                check_v("v_zmin", &self.v_zmin)?;
                self.check_dir(self.v_zmin.len())?;
            }
            TaskKind::Edge | TaskKind::Down => {
                if self.ang_max_deg.is_empty() {
                    return Err(Error::InvalidParams("ang_max list empty".into()));
                }
                for a in &self.ang_max_deg {
                    if a.abs() >= 180.0 {
                        return Err(Error::InvalidParams(format!("ang_max {a} out of range")));
                    }
                }
            }
        }
        Ok(())
    }

    fn check_dir(&self, expect: usize) -> Result<()> {
        if self.dir.len() != expect {
            return Err(Error::InvalidParams("direction list length mismatch".into()));
        }
        for d in &self.dir {
            if d.abs() != 1.0 {
                return Err(Error::InvalidParams(format!("direction {d} must be +-1")));
            }
        }
        Ok(())
    }

    fn base(kind: TaskKind, t_max: u64) -> Self {
        TrajectorySpec {
            kind,
            t_max,
            scale: 1.0,
            v_zmin: Vec::new(),
            v_dz: Vec::new(),
            dir: Vec::new(),
            ang_max_deg: Vec::new(),
        }
    }

    /// Named presets carrying the per-module parameter lists for the
    /// four/six-module cable experiments and the three/two-module planar
    /// ones.
    pub fn preset(name: &str) -> Result<TrajectorySpec> {
        let spec = match name {
            "four-module-a" => TrajectorySpec {
                v_zmin: vec![0.975, 0.850, 0.725, 0.625],
                ..Self::base(TaskKind::A, 250)
            },
            "four-module-b" => TrajectorySpec {
                v_dz: vec![0.998, 0.998, 0.996, 0.600],
                dir: vec![1.0, 1.0, 1.0, -1.0],
                ..Self::base(TaskKind::B, 250)
            },
            "four-module-c" => TrajectorySpec {
                v_zmin: vec![0.941, 0.998, 0.897, 0.650],
                dir: vec![1.0, 1.0, 1.0, -1.0],
                ..Self::base(TaskKind::C, 250)
            },
            "six-module-a" => TrajectorySpec {
                v_zmin: vec![0.998, 0.995, 0.950, 0.850, 0.800, 0.650],
                ..Self::base(TaskKind::A, 250)
            },
            "six-module-b" => TrajectorySpec {
                v_dz: vec![0.999, 0.999, 0.999, 0.998, 0.995, 0.708],
                dir: vec![1.0, 1.0, 1.0, 1.0, -1.0, -1.0],
                ..Self::base(TaskKind::B, 250)
            },
            "six-module-c" => TrajectorySpec {
                v_zmin: vec![0.999, 0.996, 0.985, 0.975, 0.925, 0.600],
                dir: vec![1.0, 1.0, 1.0, 1.0, 1.0, -1.0],
                ..Self::base(TaskKind::C, 250)
            },
            "three-module-edge" => TrajectorySpec {
                ang_max_deg: vec![5.4, 18.0, 90.0],
                ..Self::base(TaskKind::Edge, 200)
            },
            "three-module-down" => TrajectorySpec {
                ang_max_deg: vec![3.6, 36.0, -39.6],
                ..Self::base(TaskKind::Down, 200)
            },
            "two-module-edge" => TrajectorySpec {
                ang_max_deg: vec![21.6, 72.0],
                ..Self::base(TaskKind::Edge, 200)
            },
            "two-module-down" => TrajectorySpec {
                ang_max_deg: vec![3.24, -32.4],
                ..Self::base(TaskKind::Down, 200)
            },
            other => {
                return Err(Error::InvalidArgument(format!("unknown preset {other}")));
            }
        };
        Ok(spec)
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }
}

/// Shrinks a spherical configuration's bend angle by `scale`, keeping the
/// bending plane.
fn scale_sphere(vx: f64, vy: f64, vz: f64, scale: f64) -> (f64, f64, f64) {
    let theta = vz.clamp(-1.0, 1.0).acos();
    let planar = vx.hypot(vy);
    let theta_s = scale * theta;
    if planar < 1e-15 {
        (0.0, 0.0, theta_s.cos())
    } else {
        let s = theta_s.sin() / planar;
        (vx * s, vy * s, theta_s.cos())
    }
}

/// Desired configuration of `module` (1-based) at step `t`, `0 <= t <= t_max`.
pub fn desired_config(spec: &TrajectorySpec, module: usize, t: u64) -> Result<ModuleConfig> {
    let n = spec.n_sum();
    if module < 1 || module > n {
        return Err(Error::IndexOutOfRange { index: module, n_sum: n });
    }
    if t > spec.t_max {
        return Err(Error::InvalidArgument(format!(
            "step {t} beyond t_max {}",
            spec.t_max
        )));
    }
    let idx = module - 1;
    let tf = t as f64;
    let t_max = spec.t_max as f64;
    match spec.kind {
        TaskKind::A => {
            let v_dz = 1.0 - (1.0 - spec.v_zmin[idx]) * tf / t_max;
            let r = (1.0 - v_dz * v_dz).max(0.0).sqrt();
            let phase = 2.0 * PI * tf / t_max;
            make3(phase.sin() * r, phase.cos() * r, v_dz, spec.scale)
        }
        TaskKind::B => {
            let v_dz = spec.v_dz[idx];
            let a = spec.dir[idx];
            let r = (1.0 - v_dz * v_dz).max(0.0).sqrt();
            let phase = 2.0 * PI * tf / t_max;
            make3(a * phase.sin() * r, a * phase.cos() * r, v_dz, spec.scale)
        }
        TaskKind::C => {
            let a = spec.dir[idx];
            if tf < 50.0 {
                let v_dz = 1.0 - (1.0 - spec.v_zmin[idx]) * tf / 50.0;
                let r = (1.0 - v_dz * v_dz).max(0.0).sqrt();
                make3(0.0, a * r, v_dz, spec.scale)
            } else {
                let v_dz = spec.v_zmin[idx];
                let r = (1.0 - v_dz * v_dz).max(0.0).sqrt();
                let phase = 2.0 * PI * (tf - 50.0) / 200.0;
                make3(a * phase.sin() * r, a * phase.cos() * r, v_dz, spec.scale)
            }
        }
        TaskKind::Edge | TaskKind::Down => {
            let ang = desired_angle_deg(spec, module, t)?;
            let rad = ang.to_radians();
            Ok(ModuleConfig::raw2(rad.sin(), rad.cos()))
        }
    }
}

fn make3(vx: f64, vy: f64, vz: f64, scale: f64) -> Result<ModuleConfig> {
    if scale == 1.0 {
        Ok(ModuleConfig::raw3(vx, vy, vz))
    } else {
        let (x, y, z) = scale_sphere(vx, vy, vz, scale);
        Ok(ModuleConfig::raw3(x, y, z))
    }
}

/// Triangle-wave bending angle of the planar tasks, in degrees: up over the
/// first 50 steps, down through zero until 150, back up to zero at 200.
pub fn desired_angle_deg(spec: &TrajectorySpec, module: usize, t: u64) -> Result<f64> {
    let n = spec.n_sum();
    if module < 1 || module > n {
        return Err(Error::IndexOutOfRange { index: module, n_sum: n });
    }
    let ang_max = spec.ang_max_deg[module - 1];
    let tf = t as f64;
    let ang = if tf < 50.0 {
        ang_max * tf / 50.0
    } else if tf < 150.0 {
        ang_max * (2.0 - tf / 50.0)
    } else {
        ang_max * (tf / 50.0 - 4.0)
    };
    Ok(ang * spec.scale)
}

/// Everything a controller may look at when choosing the next actions.
/// Learned controllers use only `features` (the training-time layout);
/// `desired_next` and `plant` exist for reference controllers and test
/// instrumentation.
pub struct StepContext<'a> {
    pub t: u64,
    pub features: &'a [Vec<f64>],
    pub desired_next: &'a [ModuleConfig],
    pub plant: &'a PlantState,
}

pub trait ConfigController {
    /// History window length the runner must assemble.
    fn window(&self) -> usize;
    fn controller_id(&self) -> String;
    fn act(&mut self, ctx: &StepContext) -> Result<Vec<ModuleAction>>;
}

impl ConfigController for crate::nn::Network {
    fn window(&self) -> usize {
        self.hyper().window
    }

    fn controller_id(&self) -> String {
        self.variant_name().to_string()
    }

    fn act(&mut self, ctx: &StepContext) -> Result<Vec<ModuleAction>> {
        self.predict_actions(ctx.features)
    }
}

/// Emits zero actions; the plant coasts at rest.
pub struct ZeroController {
    pub window: usize,
    pub a_dim: usize,
}

impl ConfigController for ZeroController {
    fn window(&self) -> usize {
        self.window
    }

    fn controller_id(&self) -> String {
        "zero".into()
    }

    fn act(&mut self, ctx: &StepContext) -> Result<Vec<ModuleAction>> {
        let zero = if self.a_dim == 1 {
            ModuleAction::single(0.0)
        } else {
            ModuleAction::pair(0.0, 0.0)
        };
        Ok(vec![zero; ctx.features.len()])
    }
}

/// Steady-state plant inverse: reads the plant's gravity moments directly
/// and solves for the action whose target bend is the desired next
/// configuration. Tracking error is limited only by the plant's transient
/// dynamics.
pub struct OracleController {
    pub window: usize,
}

impl ConfigController for OracleController {
    fn window(&self) -> usize {
        self.window
    }

    fn controller_id(&self) -> String {
        "oracle".into()
    }

    fn act(&mut self, ctx: &StepContext) -> Result<Vec<ModuleAction>> {
        invert_at_state(ctx.plant, ctx.desired_next)
    }
}

/// One closed-loop step as logged: the commanded configuration for `t+1`,
/// the configuration achieved after stepping, and the applied actions.
#[derive(Clone, Debug, PartialEq)]
pub struct LogStep {
    pub t: u64,
    pub desired: Vec<ModuleConfig>,
    pub achieved: Vec<ModuleConfig>,
    pub actions: Vec<ModuleAction>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunLog {
    pub task: String,
    pub controller: String,
    pub n_sum: usize,
    pub mode: PlantMode,
    pub t_max: u64,
    pub seed: u64,
    pub params_digest: u64,
    pub steps: Vec<LogStep>,
}

/// Runs `controller` on `spec` from the given plant state for `t_max`
/// steps. At step `t` the controller sees the module labels, the desired
/// configuration for `t+1`, and the measured K-step history (zero-padded
/// before the window fills); its clamped actions drive the plant one step.
pub fn run_closed_loop(
    plant0: PlantState,
    controller: &mut dyn ConfigController,
    spec: &TrajectorySpec,
    seed: u64,
) -> Result<RunLog> {
    spec.validate()?;
    let n = plant0.params.n_sum;
    if spec.n_sum() != n {
        return Err(Error::ShapeMismatch {
            context: "trajectory module count",
            expected: n,
            got: spec.n_sum(),
        });
    }
    let plant_dim = match plant0.params.mode {
        PlantMode::Cable3D => Dim::Three,
        PlantMode::Chamber2D => Dim::Two,
    };
    if spec.kind.dim() != plant_dim {
        return Err(Error::DimMismatch {
            expected: plant_dim.len(),
            got: spec.kind.dim().len(),
        });
    }
    let window = controller.window();
    let d = plant_dim.len();
    let a_dim = plant0.params.mode.a_dim();
    let labels: Vec<f64> = (1..=n)
        .map(|i| module_label(i, n).map(|l| l.value()))
        .collect::<Result<_>>()?;

    let mut plant = plant0;
    let mut achieved_hist: Vec<Vec<Vec<f64>>> = vec![Vec::new(); n];
    let mut action_hist: Vec<Vec<Vec<f64>>> = vec![Vec::new(); n];
    let first = plant_observe(&plant);
    for m in 0..n {
        achieved_hist[m].push(first.configs[m].comps().to_vec());
    }

    let mut steps = Vec::with_capacity(spec.t_max as usize);
    for t in 0..spec.t_max {
        let desired_next: Vec<ModuleConfig> = (1..=n)
            .map(|m| desired_config(spec, m, t + 1))
            .collect::<Result<_>>()?;
        let features: Vec<Vec<f64>> = (0..n)
            .map(|m| {
                let state_hist: Vec<Vec<f64>> = (0..window)
                    .map(|k| {
                        let tau = t as i64 - (window as i64 - 1) + k as i64;
                        if tau < 0 {
                            vec![0.0; d]
                        } else {
                            achieved_hist[m][tau as usize].clone()
                        }
                    })
                    .collect();
                let act_hist: Vec<Vec<f64>> = (0..window.saturating_sub(1))
                    .map(|k| {
                        let tau = t as i64 - (window as i64 - 1) + k as i64;
                        if tau < 0 {
                            vec![0.0; a_dim]
                        } else {
                            action_hist[m][tau as usize].clone()
                        }
                    })
                    .collect();
                build_features(labels[m], desired_next[m].comps(), &state_hist, &act_hist)
            })
            .collect();
        let ctx = StepContext {
            t,
            features: &features,
            desired_next: &desired_next,
            plant: &plant,
        };
        let actions = controller.act(&ctx)?;
        if actions.len() != n {
            return Err(Error::ShapeMismatch {
                context: "controller actions",
                expected: n,
                got: actions.len(),
            });
        }
        plant = plant_step(&plant, &actions)?;
        let obs = plant_observe(&plant);
        for m in 0..n {
            achieved_hist[m].push(obs.configs[m].comps().to_vec());
            action_hist[m].push(actions[m].comps().to_vec());
        }
        steps.push(LogStep {
            t,
            desired: desired_next,
            achieved: obs.configs,
            actions,
        });
    }
    Ok(RunLog {
        task: spec.kind.name().to_string(),
        controller: controller.controller_id(),
        n_sum: n,
        mode: plant.params.mode,
        t_max: spec.t_max,
        seed,
        params_digest: plant.params.digest(),
        steps,
    })
}

/// Per-module `(mean, std)` tracking error over all logged steps: percent
/// of the unit-vector length in 3D, degrees of bending angle in 2D.
pub fn evaluate_run(log: &RunLog) -> Result<Vec<(f64, f64)>> {
    let mut errs: Vec<Vec<f64>> = vec![Vec::with_capacity(log.steps.len()); log.n_sum];
    for step in &log.steps {
        for m in 0..log.n_sum {
            let e = match log.mode {
                PlantMode::Cable3D => config_error_pct(&step.desired[m], &step.achieved[m])?,
                PlantMode::Chamber2D => angle_error_deg(
                    step.desired[m].bending_angle_deg(),
                    step.achieved[m].bending_angle_deg(),
                ),
            };
            errs[m].push(e);
        }
    }
    Ok(errs
        .iter()
        .map(|e| {
            let count = e.len() as f64;
            let mean = e.iter().sum::<f64>() / count;
            let var = e.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / count;
            (mean, var.sqrt())
        })
        .collect())
}

impl RunLog {
    /// Line-oriented export: a header, then one line per step holding the
    /// desired, achieved, and action columns for every module.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str(&format!(
            "modarm-runlog 1 task={} controller={} n_sum={} mode={} t_max={} seed={} params={:016x}\n",
            self.task, self.controller, self.n_sum, self.mode.name(), self.t_max, self.seed,
            self.params_digest,
        ));
        for s in &self.steps {
            out.push_str(&s.t.to_string());
            for m in 0..self.n_sum {
                for v in s.desired[m].comps() {
                    out.push(' ');
                    out.push_str(&fmt_f64(*v));
                }
                for v in s.achieved[m].comps() {
                    out.push(' ');
                    out.push_str(&fmt_f64(*v));
                }
                for a in s.actions[m].comps() {
                    out.push(' ');
                    out.push_str(&fmt_f64(*a));
                }
            }
            out.push('\n');
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<RunLog> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<RunLog> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "empty file".into(),
        })?;
        let toks: Vec<&str> = header.split_whitespace().collect();
        if toks.len() != 9 || toks[0] != "modarm-runlog" || toks[1] != "1" {
            return Err(Error::Parse {
                line: 1,
                msg: format!("bad header: {header}"),
            });
        }
        let get = |idx: usize, key: &str| -> Result<String> {
            let (k, v) = toks[idx].split_once('=').ok_or_else(|| Error::Parse {
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
        let task = get(2, "task")?;
        let controller = get(3, "controller")?;
        let n_sum: usize = get(4, "n_sum")?.parse().map_err(|_| Error::Parse {
            line: 1,
            msg: "bad n_sum".into(),
        })?;
        let mode = PlantMode::from_name(&get(5, "mode")?).map_err(|e| Error::Parse {
            line: 1,
            msg: e.to_string(),
        })?;
        let t_max: u64 = get(6, "t_max")?.parse().map_err(|_| Error::Parse {
            line: 1,
            msg: "bad t_max".into(),
        })?;
        let seed: u64 = get(7, "seed")?.parse().map_err(|_| Error::Parse {
            line: 1,
            msg: "bad seed".into(),
        })?;
        let params_digest =
            u64::from_str_radix(&get(8, "params")?, 16).map_err(|_| Error::Parse {
                line: 1,
                msg: "bad params digest".into(),
            })?;

        let d = mode.state_dim();
        let a_dim = mode.a_dim();
        let per_line = 1 + n_sum * (2 * d + a_dim);
        let mut steps = Vec::new();
        for (idx, line) in lines {
            let lineno = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != per_line {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("expected {per_line} columns, found {}", toks.len()),
                });
            }
            let t: u64 = toks[0].parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: "bad step".into(),
            })?;
            let mut cursor = 1usize;
            let num = |cursor: &mut usize| -> Result<f64> {
                let v: f64 = toks[*cursor].parse().map_err(|_| Error::Parse {
                    line: lineno,
                    msg: format!("bad number {}", toks[*cursor]),
                })?;
                *cursor += 1;
                Ok(v)
            };
            let mut desired = Vec::with_capacity(n_sum);
            let mut achieved = Vec::with_capacity(n_sum);
            let mut actions = Vec::with_capacity(n_sum);
            for _ in 0..n_sum {
                let mut dv = Vec::with_capacity(d);
                for _ in 0..d {
                    dv.push(num(&mut cursor)?);
                }
                desired.push(ModuleConfig::from_comps(&dv).map_err(|e| Error::Parse {
                    line: lineno,
                    msg: e.to_string(),
                })?);
                let mut av = Vec::with_capacity(d);
                for _ in 0..d {
                    av.push(num(&mut cursor)?);
                }
                achieved.push(ModuleConfig::from_comps(&av).map_err(|e| Error::Parse {
                    line: lineno,
                    msg: e.to_string(),
                })?);
                let mut ac = Vec::with_capacity(a_dim);
                for _ in 0..a_dim {
                    ac.push(num(&mut cursor)?);
                }
                actions.push(ModuleAction::from_comps(&ac).map_err(|e| Error::Parse {
                    line: lineno,
                    msg: e.to_string(),
                })?);
            }
            steps.push(LogStep {
                t,
                desired,
                achieved,
                actions,
            });
        }
        Ok(RunLog {
            task,
            controller,
            n_sum,
            mode,
            t_max,
            seed,
            params_digest,
            steps,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{plant_init, PlantParams};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn task_a_examples() {
        let spec = TrajectorySpec::preset("four-module-a").unwrap();
        let c = desired_config(&spec, 4, 0).unwrap();
        assert_eq!(c.comps(), &[0.0, 0.0, 1.0]);
        let c = desired_config(&spec, 4, 125).unwrap();
        assert!(c.vx().abs() < 1e-12);
        assert_relative_eq!(
            c.vy().unwrap(),
            -(1.0f64 - 0.8125 * 0.8125).sqrt(),
            epsilon = 1e-12
        );
        assert_relative_eq!(c.vz(), 0.8125, epsilon = 1e-12);
    }

    #[test]
    fn task_b_examples() {
        let spec = TrajectorySpec::preset("four-module-b").unwrap();
        let c = desired_config(&spec, 4, 0).unwrap();
        assert!(c.vx().abs() < 1e-12);
        assert_relative_eq!(c.vy().unwrap(), -0.8, epsilon = 1e-12);
        assert_relative_eq!(c.vz(), 0.6, epsilon = 1e-12);
        // v_z constant over the whole trial
        for t in 0..=spec.t_max {
            for m in 1..=4 {
                assert_eq!(desired_config(&spec, m, t).unwrap().vz(), spec.v_dz[m - 1]);
            }
        }
    }

    #[test]
    fn task_c_example() {
        let spec = TrajectorySpec::preset("four-module-c").unwrap();
        let c = desired_config(&spec, 4, 50).unwrap();
        assert!(c.vx().abs() < 1e-12);
        assert_relative_eq!(
            c.vy().unwrap(),
            -(1.0f64 - 0.65 * 0.65).sqrt(),
            epsilon = 1e-12
        );
        assert_relative_eq!(c.vz(), 0.65, epsilon = 1e-12);
    }

    #[test]
    fn edge_examples_and_breakpoints() {
        let spec = TrajectorySpec::preset("three-module-edge").unwrap();
        assert_relative_eq!(desired_angle_deg(&spec, 3, 25).unwrap(), 45.0, epsilon = 1e-12);
        assert_relative_eq!(desired_angle_deg(&spec, 3, 175).unwrap(), -45.0, epsilon = 1e-12);
        // continuity and the piecewise-linear breakpoints at 50 and 150
        for m in 1..=3 {
            assert_relative_eq!(
                desired_angle_deg(&spec, m, 50).unwrap(),
                spec.ang_max_deg[m - 1],
                epsilon = 1e-12
            );
            assert_relative_eq!(
                desired_angle_deg(&spec, m, 150).unwrap(),
                -spec.ang_max_deg[m - 1],
                epsilon = 1e-12
            );
            for t in 1..200u64 {
                let prev = desired_angle_deg(&spec, m, t - 1).unwrap();
                let here = desired_angle_deg(&spec, m, t).unwrap();
                assert!((here - prev).abs() <= spec.ang_max_deg[m - 1].abs() / 50.0 + 1e-12);
            }
        }
    }

    #[test]
    fn unknown_task_and_preset_rejected() {
        assert!(TaskKind::from_name("q").is_err());
        assert!(TrajectorySpec::preset("seven-module-a").is_err());
    }

    #[test]
    fn zero_controller_error_grows_toward_open_loop_gap() {
        let mut params = PlantParams::new(4, PlantMode::Cable3D);
        params.g_gain = 0.0;
        let plant = plant_init(params).unwrap();
        let spec = TrajectorySpec::preset("four-module-a").unwrap();
        let mut ctrl = ZeroController { window: 5, a_dim: 2 };
        let log = run_closed_loop(plant, &mut ctrl, &spec, 0).unwrap();
        assert_eq!(log.steps.len(), 250);
        let rest = ModuleConfig::raw3(0.0, 0.0, 1.0);
        let last = log.steps.last().unwrap();
        for m in 0..4 {
            assert_eq!(last.achieved[m], rest);
            let open_loop = config_error_pct(&last.desired[m], &rest).unwrap();
            let logged = config_error_pct(&last.desired[m], &last.achieved[m]).unwrap();
            assert_relative_eq!(logged, open_loop, epsilon = 1e-12);
        }
        // error increases as the command ramps away from rest
        let errs = evaluate_run(&log).unwrap();
        assert!(errs[3].0 > 1.0);
    }

    #[test]
    fn oracle_error_is_transient_limited() {
        let mut params = PlantParams::new(4, PlantMode::Cable3D);
        params.theta_max = 0.9;
        let plant = plant_init(params.clone()).unwrap();
        let spec = TrajectorySpec::preset("four-module-a").unwrap().with_scale(0.7);
        let mut oracle = OracleController { window: 5 };
        let log = run_closed_loop(plant, &mut oracle, &spec, 0).unwrap();
        let oracle_errs = evaluate_run(&log).unwrap();

        // The steady-state inverse lags the rotating command by the bend
        // dynamics' frequency response; with omega = 4, zeta = 0.9, and the
        // command rotating at 2*pi / (250 * 0.04 s), |1 - H(jw)| is about
        // 0.28 of the commanded bend amplitude.
        let omega_cmd = 2.0 * PI / (spec.t_max as f64 * params.dt_control);
        let h_re = params.omega * params.omega;
        let denom_re = h_re - omega_cmd * omega_cmd;
        let denom_im = 2.0 * params.zeta * params.omega * omega_cmd;
        let mag = h_re / denom_re.hypot(denom_im);
        let phase = denom_im.atan2(denom_re);
        let deficit =
            ((1.0 - mag * phase.cos()).powi(2) + (mag * phase.sin()).powi(2)).sqrt();
        for (m, (mean, _)) in oracle_errs.iter().enumerate() {
            let amplitude = spec.v_zmin[m].clamp(-1.0, 1.0).acos() * spec.scale;
            let bound = 100.0 * 1.6 * deficit * amplitude;
            assert!(
                *mean < bound,
                "module {} oracle error {mean} above transient bound {bound}",
                m + 1
            );
        }

        // and it is far below the open-loop gap
        let plant = plant_init(params).unwrap();
        let mut zero = ZeroController { window: 5, a_dim: 2 };
        let zero_log = run_closed_loop(plant, &mut zero, &spec, 0).unwrap();
        let zero_errs = evaluate_run(&zero_log).unwrap();
        assert!(oracle_errs[3].0 < 0.5 * zero_errs[3].0);
    }

    struct Recording {
        inner: ZeroController,
        seen: Vec<Vec<Vec<f64>>>,
    }

    impl ConfigController for Recording {
        fn window(&self) -> usize {
            self.inner.window
        }
        fn controller_id(&self) -> String {
            "recording".into()
        }
        fn act(&mut self, ctx: &StepContext) -> Result<Vec<ModuleAction>> {
            self.seen.push(ctx.features.to_vec());
            self.inner.act(ctx)
        }
    }

    #[test]
    fn controller_sees_only_measured_history() {
        let plant = plant_init(PlantParams::new(3, PlantMode::Cable3D)).unwrap();
        let spec = TrajectorySpec {
            kind: TaskKind::A,
            t_max: 40,
            scale: 1.0,
            v_zmin: vec![0.9, 0.8, 0.7],
            v_dz: vec![],
            dir: vec![],
            ang_max_deg: vec![],
        };
        let window = 4;
        let mut ctrl = Recording {
            inner: ZeroController { window, a_dim: 2 },
            seen: Vec::new(),
        };
        let log = run_closed_loop(plant.clone(), &mut ctrl, &spec, 0).unwrap();

        // rebuild the features offline from the log and compare
        let rest = plant_observe(&plant);
        for (t, feats) in ctrl.seen.iter().enumerate() {
            for m in 0..3 {
                let label = module_label(m + 1, 3).unwrap().value();
                let desired = desired_config(&spec, m + 1, t as u64 + 1).unwrap();
                let state_hist: Vec<Vec<f64>> = (0..window)
                    .map(|k| {
                        let tau = t as i64 - (window as i64 - 1) + k as i64;
                        if tau < 0 {
                            vec![0.0; 3]
                        } else if tau == 0 {
                            rest.configs[m].comps().to_vec()
                        } else {
                            log.steps[tau as usize - 1].achieved[m].comps().to_vec()
                        }
                    })
                    .collect();
                let act_hist: Vec<Vec<f64>> = (0..window - 1)
                    .map(|k| {
                        let tau = t as i64 - (window as i64 - 1) + k as i64;
                        if tau < 0 {
                            vec![0.0; 2]
                        } else {
                            log.steps[tau as usize].actions[m].comps().to_vec()
                        }
                    })
                    .collect();
                let expect = build_features(label, desired.comps(), &state_hist, &act_hist);
                assert_eq!(feats[m], expect, "step {t} module {m}");
            }
        }
    }

    #[test]
    fn evaluate_identity_and_offset() {
        let spec = TrajectorySpec::preset("four-module-a").unwrap();
        let plant = plant_init(PlantParams::new(4, PlantMode::Cable3D)).unwrap();
        let mut ctrl = ZeroController { window: 2, a_dim: 2 };
        let mut log = run_closed_loop(plant, &mut ctrl, &spec, 0).unwrap();
        // identity: achieved := desired
        for s in log.steps.iter_mut() {
            s.achieved = s.desired.clone();
        }
        for (mean, std) in evaluate_run(&log).unwrap() {
            assert_eq!((mean, std), (0.0, 0.0));
        }
        // constant offset of 0.05 in one component: 5 percent, zero std
        for s in log.steps.iter_mut() {
            s.achieved = s
                .desired
                .iter()
                .map(|c| {
                    ModuleConfig::raw3(c.vx() + 0.05, c.vy().unwrap(), c.vz())
                })
                .collect();
        }
        for (mean, std) in evaluate_run(&log).unwrap() {
            assert_relative_eq!(mean, 5.0, epsilon = 1e-9);
            assert!(std < 1e-9);
        }
    }

    #[test]
    fn runlog_round_trip() {
        let plant = plant_init(PlantParams::new(2, PlantMode::Chamber2D)).unwrap();
        let spec = TrajectorySpec::preset("two-module-edge").unwrap().with_scale(0.5);
        let mut ctrl = ZeroController { window: 3, a_dim: 1 };
        let log = run_closed_loop(plant, &mut ctrl, &spec, 7).unwrap();
        let dir = std::env::temp_dir().join(format!("modarm-log-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("log.txt");
        log.save(&path).unwrap();
        let back = RunLog::load(&path).unwrap();
        assert_eq!(back, log);
        std::fs::remove_dir_all(&dir).ok();
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn spherical_tasks_stay_unit_norm(
            t in 0u64..=250,
            scale in 0.2f64..=1.0,
            preset_idx in 0usize..6,
        ) {
            let names = [
                "four-module-a", "four-module-b", "four-module-c",
                "six-module-a", "six-module-b", "six-module-c",
            ];
            let spec = TrajectorySpec::preset(names[preset_idx]).unwrap().with_scale(scale);
            for m in 1..=spec.n_sum() {
                let c = desired_config(&spec, m, t).unwrap();
                let norm: f64 = c.comps().iter().map(|x| x * x).sum::<f64>().sqrt();
                prop_assert!((norm - 1.0).abs() < 1e-12);
            }
        }
    }
}
