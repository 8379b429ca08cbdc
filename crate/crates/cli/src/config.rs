//! Declarative experiment configuration. One TOML file fully determines
//! every pipeline output; all randomness is seeded here.

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use modarm::control::TrajectorySpec;
use modarm::nn::{NetHyper, TrainHyper};
use modarm::plant::{PlantMode, PlantParams};

use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub plant: PlantSection,
    pub collect: CollectSection,
    pub network: NetworkSection,
    #[serde(default, rename = "task")]
    pub tasks: Vec<TaskSection>,
    pub output: OutputSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    pub n_sum: usize,
    pub mode: String,
    pub theta_max: Option<f64>,
    pub omega: Option<f64>,
    pub zeta: Option<f64>,
    pub g_gain: Option<f64>,
    pub gravity_dir: Option<[f64; 3]>,
    pub coupling_gain: Option<f64>,
    pub coupling_decay: Option<f64>,
    pub whip_gain: Option<f64>,
    pub whip_decay: Option<f64>,
    pub dt_control: Option<f64>,
    pub substeps: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollectSection {
    pub method: String,
    pub n_samples: usize,
    pub delta_max: f64,
    pub seed: u64,
    pub phase_b_shared: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub variant: String,
    pub hidden: usize,
    pub layers: usize,
    pub window: usize,
    pub lr: f64,
    pub lr_decay: Option<f64>,
    pub batch: usize,
    pub epochs: usize,
    /// Weight-initialization seed.
    pub seed: u64,
    /// Shuffle/holdout seed; defaults to `seed`.
    pub train_seed: Option<u64>,
    pub holdout_frac: Option<f64>,
    pub head_hidden: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSection {
    pub preset: Option<String>,
    pub scale: Option<f64>,
    /// Mean-error ceiling for the control run (percent in 3D, degrees in
    /// 2D); exceeding it exits with code 3.
    pub threshold_mean: Option<f64>,
    // inline trajectory definition, used when no preset is named
    pub name: Option<String>,
    pub kind: Option<String>,
    pub t_max: Option<u64>,
    pub v_zmin: Option<Vec<f64>>,
    pub v_dz: Option<Vec<f64>>,
    pub dir: Option<Vec<f64>>,
    pub ang_max_deg: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollectMethod {
    Phased,
    Traditional,
}

pub struct LoadedConfig {
    pub config: ExperimentConfig,
    /// FNV-1a digest of the raw config bytes, hex-encoded.
    pub digest: String,
}

pub fn load_config(path: &Path) -> Result<LoadedConfig> {
    let bytes = fs::read(path).with_context(|| format!("reading config {}", path.display()))?;
    let text = String::from_utf8(bytes.clone()).context("config is not UTF-8")?;
    let config: ExperimentConfig =
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    Ok(LoadedConfig {
        config,
        digest: format!("{:016x}", modarm::fnv1a(&bytes)),
    })
}

impl ExperimentConfig {
    pub fn plant_params(&self) -> Result<PlantParams> {
        let mode = PlantMode::from_name(&self.plant.mode)
            .map_err(|e| anyhow::anyhow!(e.to_string()))?;
        let mut p = PlantParams::new(self.plant.n_sum, mode);
        if let Some(v) = self.plant.theta_max {
            p.theta_max = v;
        }
        if let Some(v) = self.plant.omega {
            p.omega = v;
        }
        if let Some(v) = self.plant.zeta {
            p.zeta = v;
        }
        if let Some(v) = self.plant.g_gain {
            p.g_gain = v;
        }
        if let Some(v) = self.plant.gravity_dir {
            p.gravity_dir = v;
        }
        if let Some(v) = self.plant.coupling_gain {
            p.coupling_gain = v;
        }
        if let Some(v) = self.plant.coupling_decay {
            p.coupling_decay = v;
        }
        if let Some(v) = self.plant.whip_gain {
            p.whip_gain = v;
        }
        if let Some(v) = self.plant.whip_decay {
            p.whip_decay = v;
        }
        if let Some(v) = self.plant.dt_control {
            p.dt_control = v;
        }
        if let Some(v) = self.plant.substeps {
            p.substeps = v;
        }
        p.validate().map_err(|e| anyhow::anyhow!(e.to_string()))?;
        Ok(p)
    }

    pub fn collect_method(&self) -> Result<CollectMethod> {
        match self.collect.method.as_str() {
            "phased" => Ok(CollectMethod::Phased),
            "traditional" => Ok(CollectMethod::Traditional),
            other => bail!("unknown collect method {other}"),
        }
    }

    pub fn net_hyper(&self, mode: PlantMode) -> NetHyper {
        NetHyper {
            hidden: self.network.hidden,
            layers: self.network.layers,
            window: self.network.window,
            state_dim: mode.state_dim(),
            a_dim: mode.a_dim(),
            head_hidden: self.network.head_hidden.filter(|h| *h > 0),
        }
    }

    pub fn train_hyper(&self) -> TrainHyper {
        let mut h = TrainHyper::new(
            self.network.epochs,
            self.network.batch,
            self.network.lr,
            self.network.train_seed.unwrap_or(self.network.seed),
        );
        if let Some(d) = self.network.lr_decay {
            h.lr_decay = d;
        }
        if let Some(f) = self.network.holdout_frac {
            h.holdout_frac = f;
        }
        h
    }

    pub fn trajectory(&self, task: &TaskSection) -> Result<(String, TrajectorySpec)> {
        let spec = if let Some(preset) = &task.preset {
            TrajectorySpec::preset(preset).map_err(|e| anyhow::anyhow!(e.to_string()))?
        } else {
            let kind = task
                .kind
                .as_deref()
                .context("task needs either a preset or a kind")?;
            let kind = modarm::control::TaskKind::from_name(kind)
                .map_err(|e| anyhow::anyhow!(e.to_string()))?;
            TrajectorySpec {
                kind,
                t_max: task.t_max.unwrap_or(250),
                scale: 1.0,
                v_zmin: task.v_zmin.clone().unwrap_or_default(),
                v_dz: task.v_dz.clone().unwrap_or_default(),
                dir: task.dir.clone().unwrap_or_default(),
                ang_max_deg: task.ang_max_deg.clone().unwrap_or_default(),
            }
        };
        let spec = spec.with_scale(task.scale.unwrap_or(1.0));
        spec.validate().map_err(|e| anyhow::anyhow!(e.to_string()))?;
        let name = task
            .name
            .clone()
            .or_else(|| task.preset.clone())
            .unwrap_or_else(|| spec.kind.name().to_string());
        Ok((name, spec))
    }
}
