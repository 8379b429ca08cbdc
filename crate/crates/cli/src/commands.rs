//! The pipeline subcommands. Each one validates file headers against the
//! config before computing, writes its artifacts under the run directory,
//! and records them in the manifest.

use crate::config::{CollectMethod, ExperimentConfig, LoadedConfig};
use crate::manifest::Manifest;

use anyhow::{anyhow, bail, Context, Result};

use modarm::control::{evaluate_run, run_closed_loop, RunLog};
use modarm::datagen::{
    collect_phased_with, collect_traditional, make_training_pairs, tip_position_std,
    tip_x_excursion_max, Dataset, Phase,
};
use modarm::nn::{estimation_errors, load_model, save_model, train, EstimationTable, Network};
use modarm::plant::{plant_init, PlantMode};

use std::fs;
use std::path::{Path, PathBuf};

/// Process exit codes: 1 validation, 2 numeric failure, 3 threshold miss.
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_NUMERIC: i32 = 2;
pub const EXIT_THRESHOLD: i32 = 3;

/// Maps library errors onto the exit-code contract.
pub fn exit_code_for(err: &anyhow::Error) -> i32 {
    if let Some(e) = err.downcast_ref::<modarm::Error>() {
        match e {
            modarm::Error::Saturated { .. }
            | modarm::Error::NonFinite { .. }
            | modarm::Error::Divergence { .. } => EXIT_NUMERIC,
            _ => EXIT_VALIDATION,
        }
    } else {
        EXIT_VALIDATION
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn fmt2(x: f64) -> String {
    format!("{x:.2}")
}

pub fn cmd_collect(loaded: &LoadedConfig, out_override: Option<PathBuf>) -> Result<()> {
    let cfg = &loaded.config;
    let out = out_override.unwrap_or_else(|| cfg.output.dir.clone());
    ensure_dir(&out)?;
    let params = cfg.plant_params()?;
    let plant = plant_init(params.clone()).map_err(|e| anyhow!(e))?;

    let ds = match cfg.collect_method()? {
        CollectMethod::Phased => {
            let shared = cfg
                .collect
                .phase_b_shared
                .unwrap_or_else(|| params.n_sum.saturating_sub(1).max(1));
            collect_phased_with(
                plant,
                cfg.collect.n_samples,
                cfg.collect.delta_max,
                cfg.collect.seed,
                shared,
            )
            .map_err(|e| anyhow!(e))?
        }
        CollectMethod::Traditional => collect_traditional(
            plant,
            cfg.collect.n_samples,
            cfg.collect.delta_max,
            cfg.collect.seed,
        )
        .map_err(|e| anyhow!(e))?,
    };

    let dataset_path = out.join("dataset.txt");
    ds.save(&dataset_path).map_err(|e| anyhow!(e))?;

    let mut summary = String::new();
    summary.push_str(&format!("records {}\n", ds.len()));
    for phase in [Phase::A, Phase::B, Phase::C, Phase::Traditional] {
        let recs: Vec<_> = ds
            .records
            .iter()
            .filter(|r| r.phase == phase)
            .cloned()
            .collect();
        if recs.is_empty() {
            continue;
        }
        summary.push_str(&format!(
            "phase {} records {} tip_std {:.6} tip_x_max {:.6}\n",
            phase,
            recs.len(),
            tip_position_std(&recs),
            tip_x_excursion_max(&recs),
        ));
    }
    fs::write(out.join("collect_summary.txt"), &summary)?;
    print!("{summary}");

    let mut manifest = Manifest::load(&out)?;
    manifest.record("dataset.txt", "dataset", &loaded.digest);
    manifest.record("collect_summary.txt", "summary", &loaded.digest);
    manifest.save(&out)?;
    println!("wrote {}", dataset_path.display());
    Ok(())
}

fn check_dataset(cfg: &ExperimentConfig, ds: &Dataset) -> Result<()> {
    let params = cfg.plant_params()?;
    if ds.n_sum != params.n_sum {
        bail!(
            "dataset has {} modules, config expects {}",
            ds.n_sum,
            params.n_sum
        );
    }
    if ds.mode != params.mode {
        bail!(
            "dataset mode {} does not match config mode {}",
            ds.mode.name(),
            params.mode.name()
        );
    }
    if ds.params_digest != params.digest() {
        bail!("dataset plant-parameter digest does not match the config");
    }
    Ok(())
}

fn build_network(cfg: &ExperimentConfig, mode: PlantMode, n_sum: usize) -> Result<Network> {
    let hyper = cfg.net_hyper(mode);
    let seed = cfg.network.seed;
    Ok(match cfg.network.variant.as_str() {
        "bilstm" => Network::new_bilstm(hyper, seed),
        "per-module-lstm" => Network::new_per_module(hyper, n_sum, seed),
        "time-lstm" => Network::new_time(hyper, n_sum, seed),
        other => bail!("unknown network variant {other}"),
    })
}

fn write_estimation(path: &Path, table: &EstimationTable) -> Result<()> {
    let mut text = String::from("module,mean_pct,std_pct\n");
    for (m, (mean, std)) in table.per_module.iter().enumerate() {
        text.push_str(&format!("{},{},{}\n", m + 1, fmt2(*mean), fmt2(*std)));
    }
    fs::write(path, text)?;
    Ok(())
}

pub fn cmd_train(
    loaded: &LoadedConfig,
    dataset_path: &Path,
    out_override: Option<PathBuf>,
) -> Result<()> {
    let cfg = &loaded.config;
    let out = out_override.unwrap_or_else(|| cfg.output.dir.clone());
    ensure_dir(&out)?;
    let ds = Dataset::load(dataset_path).map_err(|e| anyhow!(e))?;
    check_dataset(cfg, &ds)?;
    let pairs = make_training_pairs(&ds, cfg.network.window).map_err(|e| anyhow!(e))?;
    let mut net = build_network(cfg, ds.mode, ds.n_sum)?;
    let report = train(&mut net, &pairs, &cfg.train_hyper()).map_err(|e| anyhow!(e))?;

    let model_path = out.join("model.txt");
    save_model(&net, cfg.network.seed, &model_path).map_err(|e| anyhow!(e))?;

    let mut curve = String::from("epoch,loss\n");
    for (e, l) in report.loss_curve.iter().enumerate() {
        curve.push_str(&format!("{e},{l:.16e}\n"));
    }
    fs::write(out.join("loss_curve.csv"), curve)?;
    write_estimation(&out.join("estimation.csv"), &report.estimation)?;

    println!(
        "trained {} on {} pairs ({} held out), final loss {:.3e}",
        net.variant_name(),
        pairs.len(),
        report.holdout_len,
        report.loss_curve.last().unwrap(),
    );
    for (m, (mean, std)) in report.estimation.per_module.iter().enumerate() {
        println!("module {}: {} +- {} %", m + 1, fmt2(*mean), fmt2(*std));
    }

    let mut manifest = Manifest::load(&out)?;
    manifest.record("model.txt", "model", &loaded.digest);
    manifest.record("loss_curve.csv", "loss-curve", &loaded.digest);
    manifest.record("estimation.csv", "estimation-table", &loaded.digest);
    manifest.save(&out)?;
    println!("wrote {}", model_path.display());
    Ok(())
}

pub fn cmd_eval_estimation(
    loaded: &LoadedConfig,
    model_path: &Path,
    dataset_path: &Path,
    out_override: Option<PathBuf>,
) -> Result<()> {
    let cfg = &loaded.config;
    let out = out_override.unwrap_or_else(|| cfg.output.dir.clone());
    ensure_dir(&out)?;
    let ds = Dataset::load(dataset_path).map_err(|e| anyhow!(e))?;
    check_dataset(cfg, &ds)?;
    let (net, _) = load_model(model_path).map_err(|e| anyhow!(e))?;
    if let Some(required) = net.n_sum_requirement() {
        if required != ds.n_sum {
            bail!(
                "model is fixed to {} modules, dataset has {}",
                required,
                ds.n_sum
            );
        }
    }
    let pairs = make_training_pairs(&ds, net.hyper().window).map_err(|e| anyhow!(e))?;
    let indices: Vec<usize> = (0..pairs.len()).collect();
    let table = estimation_errors(&net, &pairs, &indices).map_err(|e| anyhow!(e))?;
    write_estimation(&out.join("estimation_eval.csv"), &table)?;
    for (m, (mean, std)) in table.per_module.iter().enumerate() {
        println!("module {}: {} +- {} %", m + 1, fmt2(*mean), fmt2(*std));
    }
    let mut manifest = Manifest::load(&out)?;
    manifest.record("estimation_eval.csv", "estimation-table", &loaded.digest);
    manifest.save(&out)?;
    Ok(())
}

pub struct ControlOutcome {
    pub threshold_missed: bool,
}

pub fn cmd_control(
    loaded: &LoadedConfig,
    model_path: &Path,
    out_override: Option<PathBuf>,
) -> Result<ControlOutcome> {
    let cfg = &loaded.config;
    let out = out_override.unwrap_or_else(|| cfg.output.dir.clone());
    ensure_dir(&out)?;
    if cfg.tasks.is_empty() {
        bail!("no [[task]] entries in config");
    }
    let params = cfg.plant_params()?;
    let (mut net, _) = load_model(model_path).map_err(|e| anyhow!(e))?;
    if net.hyper().state_dim != params.mode.state_dim()
        || net.hyper().a_dim != params.mode.a_dim()
    {
        bail!(
            "model was trained for {}-dimensional configurations, plant mode {} disagrees",
            net.hyper().state_dim,
            params.mode.name()
        );
    }
    if let Some(required) = net.n_sum_requirement() {
        if required != params.n_sum {
            bail!(
                "model variant {} is fixed to {} modules and cannot drive {}",
                net.variant_name(),
                required,
                params.n_sum
            );
        }
    }

    let unit = match params.mode {
        PlantMode::Cable3D => "pct",
        PlantMode::Chamber2D => "deg",
    };
    let mut rows = String::from("task,controller,module,mean,std,unit\n");
    let mut missed = false;
    let mut manifest = Manifest::load(&out)?;
    for task in &cfg.tasks {
        let (name, spec) = cfg.trajectory(task)?;
        if spec.n_sum() != params.n_sum {
            bail!(
                "task {} is parameterized for {} modules, plant has {}",
                name,
                spec.n_sum(),
                params.n_sum
            );
        }
        let plant = plant_init(params.clone()).map_err(|e| anyhow!(e))?;
        let mut log =
            run_closed_loop(plant, &mut net, &spec, cfg.collect.seed).map_err(|e| anyhow!(e))?;
        log.task = name.clone();
        let log_name = format!("runlog_{}_{}.txt", name, log.controller);
        log.save(&out.join(&log_name)).map_err(|e| anyhow!(e))?;
        manifest.record(&log_name, "runlog", &loaded.digest);

        let errors = evaluate_run(&log).map_err(|e| anyhow!(e))?;
        for (m, (mean, std)) in errors.iter().enumerate() {
            rows.push_str(&format!(
                "{},{},{},{},{},{}\n",
                name,
                log.controller,
                m + 1,
                fmt2(*mean),
                fmt2(*std),
                unit
            ));
            println!(
                "{name} module {}: {} +- {} {unit}",
                m + 1,
                fmt2(*mean),
                fmt2(*std)
            );
            if let Some(limit) = task.threshold_mean {
                if *mean > limit {
                    eprintln!(
                        "threshold miss: {name} module {} mean {} > {}",
                        m + 1,
                        fmt2(*mean),
                        limit
                    );
                    missed = true;
                }
            }
        }
    }
    fs::write(out.join("control_report.csv"), rows)?;
    manifest.record("control_report.csv", "control-report", &loaded.digest);
    manifest.save(&out)?;
    Ok(ControlOutcome {
        threshold_missed: missed,
    })
}

pub fn cmd_report(run_dir: &Path) -> Result<()> {
    let mut log_paths: Vec<PathBuf> = fs::read_dir(run_dir)
        .with_context(|| format!("reading {}", run_dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .map(|n| n.starts_with("runlog_") && n.ends_with(".txt"))
                .unwrap_or(false)
        })
        .collect();
    log_paths.sort();
    if log_paths.is_empty() {
        bail!("no runs in {}", run_dir.display());
    }

    let mut rows = String::from("task,controller,module,mean,std,unit\n");
    let mut json_rows = Vec::new();
    let mut digest_material = String::new();
    let mut manifest = Manifest::load(run_dir)?;
    for path in &log_paths {
        let log = RunLog::load(path).map_err(|e| anyhow!(e))?;
        let unit = match log.mode {
            PlantMode::Cable3D => "pct",
            PlantMode::Chamber2D => "deg",
        };
        let errors = evaluate_run(&log).map_err(|e| anyhow!(e))?;
        for (m, (mean, std)) in errors.iter().enumerate() {
            rows.push_str(&format!(
                "{},{},{},{},{},{}\n",
                log.task,
                log.controller,
                m + 1,
                fmt2(*mean),
                fmt2(*std),
                unit
            ));
            json_rows.push(serde_json::json!({
                "task": log.task,
                "controller": log.controller,
                "module": m + 1,
                "mean": fmt2(*mean).parse::<f64>().unwrap(),
                "std": fmt2(*std).parse::<f64>().unwrap(),
                "unit": unit,
            }));
        }
        digest_material.push_str(&format!("{:016x}", log.params_digest));

        // plot data: one line per step with desired/achieved/action columns
        let mut plot = String::from("step");
        let d = log.mode.state_dim();
        let a_dim = log.mode.a_dim();
        for m in 1..=log.n_sum {
            for c in 0..d {
                plot.push_str(&format!(",desired_m{m}_{c}"));
            }
            for c in 0..d {
                plot.push_str(&format!(",achieved_m{m}_{c}"));
            }
            for c in 0..a_dim {
                plot.push_str(&format!(",action_m{m}_{c}"));
            }
        }
        plot.push('\n');
        for step in &log.steps {
            plot.push_str(&step.t.to_string());
            for m in 0..log.n_sum {
                for v in step.desired[m].comps() {
                    plot.push_str(&format!(",{v:.9e}"));
                }
                for v in step.achieved[m].comps() {
                    plot.push_str(&format!(",{v:.9e}"));
                }
                for v in step.actions[m].comps() {
                    plot.push_str(&format!(",{v:.9e}"));
                }
            }
            plot.push('\n');
        }
        let plot_name = format!(
            "plot_{}_{}.csv",
            log.task.replace('/', "-"),
            log.controller
        );
        fs::write(run_dir.join(&plot_name), plot)?;
        let derived = format!("derived:{:016x}", modarm::fnv1a(digest_material.as_bytes()));
        manifest.record(&plot_name, "plot-data", &derived);
    }

    fs::write(run_dir.join("report.csv"), &rows)?;
    let json = serde_json::to_string_pretty(&json_rows)?;
    fs::write(run_dir.join("report.json"), json + "\n")?;
    let derived = format!("derived:{:016x}", modarm::fnv1a(digest_material.as_bytes()));
    manifest.record("report.csv", "report", &derived);
    manifest.record("report.json", "report", &derived);
    manifest.save(run_dir)?;
    print!("{rows}");
    Ok(())
}
