//! The four commands: `predict`, `control`, `gradcheck`, `sweep`.

use std::path::Path;

use anyhow::{bail, Context};
use rayon::prelude::*;

use metaret::algo::{
    run_baseline_control, run_baseline_prediction, run_meta_control, run_meta_prediction,
};
use metaret::config::{Algorithm, EnvName, ExperimentConfig};
use metaret::gradcheck::run_gradcheck;
use metaret::meta::clamped_logit;
use metaret::runlog::RunLog;
use metaret::stats::{median, quantile};
use metaret::Real;

use crate::output;
use crate::svg::{render_curves, Curve};

/// What a command produced, for exit-code selection.
#[derive(Debug, Default)]
pub struct CommandOutcome {
    pub diverged_seeds: Vec<u64>,
    pub checks_failed: bool,
}

fn run_seeds<F>(config: &ExperimentConfig, runner: F) -> anyhow::Result<Vec<RunLog<Real>>>
where
    F: Fn(u64) -> metaret::Result<RunLog<Real>> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .context("building worker pool")?;
    let logs: metaret::Result<Vec<RunLog<Real>>> =
        pool.install(|| config.seeds.par_iter().map(|&s| runner(s)).collect());
    Ok(logs?)
}

/// Median and 20-80 percentile band of a per-seed series at each logged
/// iteration (seeds that aborted early drop out of later points).
fn band_over_seeds(
    logs: &[RunLog<Real>],
    value: impl Fn(&metaret::RunRow) -> f64,
) -> Vec<(f64, f64, f64, f64)> {
    let longest = logs.iter().map(|l| l.rows.len()).max().unwrap_or(0);
    let mut out = Vec::with_capacity(longest);
    for i in 0..longest {
        let mut vals = Vec::new();
        let mut iter = 0u64;
        for log in logs {
            if let Some(row) = log.rows.get(i) {
                vals.push(value(row));
                iter = row.iter;
            }
        }
        if !vals.is_empty() {
            out.push((
                iter as f64,
                median(&vals),
                quantile(&vals, 0.2),
                quantile(&vals, 0.8),
            ));
        }
    }
    out
}

/// Thin the plotted points so SVGs stay small on long runs.
fn thin(points: Vec<(f64, f64, f64, f64)>) -> Vec<(f64, f64, f64, f64)> {
    const MAX_POINTS: usize = 400;
    if points.len() <= MAX_POINTS {
        return points;
    }
    let stride = points.len().div_ceil(MAX_POINTS);
    let last = points.len() - 1;
    points
        .into_iter()
        .enumerate()
        .filter(|(i, _)| i % stride == 0 || *i == last)
        .map(|(_, p)| p)
        .collect()
}

fn eta_curves(logs: &[RunLog<Real>], config: &ExperimentConfig) -> Vec<Curve> {
    let num_slots = logs[0].num_slots;
    let scalar = logs[0].scalar_eta;
    let mut curves = Vec::new();
    let mut push_family = |family: &str| {
        for slot in 0..num_slots {
            let pick = |row: &metaret::RunRow| -> f64 {
                if family == "gamma" {
                    row.gamma[slot]
                } else {
                    row.lambda[slot]
                }
            };
            let pts = thin(band_over_seeds(logs, pick));
            curves.push(Curve {
                label: if scalar {
                    family.to_string()
                } else {
                    format!("{family} s{slot}")
                },
                xs: pts.iter().map(|p| p.0).collect(),
                median: pts.iter().map(|p| p.1).collect(),
                lo: pts.iter().map(|p| p.2).collect(),
                hi: pts.iter().map(|p| p.3).collect(),
            });
        }
    };
    if config.adapt.gamma() || !config.adapt.lambda() {
        push_family("gamma");
    }
    if config.adapt.lambda() || !config.adapt.gamma() {
        push_family("lambda");
    }
    curves
}

fn metric_curve(logs: &[RunLog<Real>], label: &str) -> Vec<Curve> {
    let pts = thin(band_over_seeds(logs, |row| row.metric));
    vec![Curve {
        label: label.to_string(),
        xs: pts.iter().map(|p| p.0).collect(),
        median: pts.iter().map(|p| p.1).collect(),
        lo: pts.iter().map(|p| p.2).collect(),
        hi: pts.iter().map(|p| p.3).collect(),
    }]
}

fn finish_run_outputs(
    config: &ExperimentConfig,
    out_dir: &Path,
    logs: &[RunLog<Real>],
    metric_label: &str,
    metric_file: Option<&str>,
) -> anyhow::Result<CommandOutcome> {
    output::write_runlog(out_dir, logs)?;
    output::write_final_eta(out_dir, logs)?;
    let diverged = output::write_aborts(out_dir, logs)?;
    render_curves(
        &out_dir.join("eta_curves.svg"),
        &format!("meta-parameters over training ({} env)", config_env_name(config)),
        "iteration",
        "sigmoid value",
        &eta_curves(logs, config),
    )?;
    if let Some(file) = metric_file {
        render_curves(
            &out_dir.join(file),
            &format!("{metric_label} over training"),
            "iteration",
            metric_label,
            &metric_curve(logs, metric_label),
        )?;
    }
    for log in logs {
        let note = match &log.aborted {
            Some(info) => format!("aborted at iteration {} ({})", info.iter, info.reason),
            None => format!("final metric {:.6}", log.final_metric),
        };
        println!("seed {}: {}", log.seed, note);
    }
    if !diverged.is_empty() {
        eprintln!("diverged seeds: {diverged:?} (recorded in aborted.csv)");
    }
    Ok(CommandOutcome {
        diverged_seeds: diverged,
        checks_failed: false,
    })
}

fn config_env_name(config: &ExperimentConfig) -> &'static str {
    match config.env {
        EnvName::SignalNoise => "signal_noise",
        EnvName::Fan => "fan",
        EnvName::Gridworld => "gridworld",
        EnvName::Custom => "custom",
    }
}

fn echo_config(config: &ExperimentConfig, out_dir: &Path) -> anyhow::Result<()> {
    let echo = config.to_string();
    print!("{echo}");
    output::write_config(out_dir, &echo)?;
    Ok(())
}

/// Multi-seed meta-gradient prediction run.
pub fn cmd_predict(mut config: ExperimentConfig, out_dir: &Path) -> anyhow::Result<CommandOutcome> {
    config.algorithm = Algorithm::Predict;
    config.validate()?;
    echo_config(&config, out_dir)?;
    let ckpt = (config.checkpoint_every > 0).then_some(out_dir);
    let logs = run_seeds(&config, |seed| run_meta_prediction(&config, seed, ckpt))?;
    finish_run_outputs(&config, out_dir, &logs, "validation mse", Some("mse_curves.svg"))
}

/// Multi-seed meta-gradient control run (the gridworld is the only control
/// environment).
pub fn cmd_control(mut config: ExperimentConfig, out_dir: &Path) -> anyhow::Result<CommandOutcome> {
    config.algorithm = Algorithm::Control;
    if config.env != EnvName::Gridworld {
        log::info!("control runs use the gridworld environment");
        config.env = EnvName::Gridworld;
    }
    config.validate()?;
    echo_config(&config, out_dir)?;
    let ckpt = (config.checkpoint_every > 0).then_some(out_dir);
    let logs = run_seeds(&config, |seed| run_meta_control(&config, seed, ckpt))?;
    finish_run_outputs(&config, out_dir, &logs, "mean return", Some("return_curves.svg"))
}

/// Finite-difference verification suite; failures flip the exit code.
pub fn cmd_gradcheck(config: ExperimentConfig, out_dir: &Path) -> anyhow::Result<CommandOutcome> {
    echo_config(&config, out_dir)?;
    let report = run_gradcheck(&config);
    let text = output::write_gradcheck_report(out_dir, &report)?;
    print!("{text}");
    Ok(CommandOutcome {
        diverged_seeds: Vec::new(),
        checks_failed: !report.all_passed(),
    })
}

/// Fixed-meta-parameter grid sweep: the baseline runner per grid point per
/// seed, with the smoothed final metric per run.
pub fn cmd_sweep(mut config: ExperimentConfig, out_dir: &Path) -> anyhow::Result<CommandOutcome> {
    config.adapt = metaret::config::AdaptSet::None;
    if config.algorithm == Algorithm::Control && config.env != EnvName::Gridworld {
        config.env = EnvName::Gridworld;
    }
    config.validate()?;
    if config.sweep_gamma_grid.is_empty() {
        bail!("sweep needs a non-empty sweep_gamma_grid");
    }
    echo_config(&config, out_dir)?;

    let lambda_points: Vec<Option<f64>> = if config.sweep_lambda_grid.is_empty() {
        vec![None]
    } else {
        config.sweep_lambda_grid.iter().copied().map(Some).collect()
    };
    let mut cells = Vec::new();
    for &g in &config.sweep_gamma_grid {
        for &l in &lambda_points {
            for &seed in &config.seeds {
                cells.push((g, l, seed));
            }
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .context("building worker pool")?;
    let rows: metaret::Result<Vec<output::SweepRow>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(gamma, lambda, seed)| {
                let mut cfg = config.clone();
                cfg.gamma_logit_init = clamped_logit(gamma);
                if let Some(l) = lambda {
                    cfg.lambda_logit_init = clamped_logit(l);
                }
                let log = match cfg.algorithm {
                    Algorithm::Predict => run_baseline_prediction::<Real>(&cfg, seed, None)?,
                    Algorithm::Control => run_baseline_control::<Real>(&cfg, seed, None)?,
                };
                Ok(output::SweepRow {
                    gamma,
                    lambda,
                    seed,
                    final_metric: log.final_metric,
                })
            })
            .collect()
    });
    let rows = rows?;
    output::write_sweep(out_dir, &rows)?;
    println!("{} sweep cells written to sweep.csv", rows.len());
    Ok(CommandOutcome::default())
}
