//! Subcommand bodies. Everything is computed before the first output file
//! is written, so a failure leaves earlier results untouched.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::json;
use zsda_core::artifact::{load_model, model_to_text};
use zsda_core::data::{split, to_text, SplitSpec};
use zsda_core::harness::{mix_seed, report_from, run_loo_outcomes, sweep_k_on, sweep_sources_on, DatasetSource};
use zsda_core::inference::score_domain;
use zsda_core::{
    export_posteriors, DomainDataset, ExperimentSpec, InferenceConfig, MetricKind, MetricsReport, Task, TrainConfig,
};

use crate::output::{write_atomic, write_json};
use crate::{config, svg, CliError, Common};

fn resolve(source: DatasetSource, config_path: &Path) -> DatasetSource {
    match source {
        DatasetSource::File(p) if p.is_relative() => {
            let base = config_path.parent().unwrap_or_else(|| Path::new(""));
            DatasetSource::File(base.join(p))
        }
        other => other,
    }
}

fn load_dataset(source: &DatasetSource) -> Result<DomainDataset, CliError> {
    source.load().map_err(|e| CliError::Config(format!("dataset: {e}")))
}

fn metric_kind(ds: &DomainDataset) -> MetricKind {
    if ds.task().is_classification() {
        MetricKind::Accuracy
    } else {
        MetricKind::Rmse
    }
}

/// Parsed, validated experiment plus its dataset.
fn prepare(c: &Common) -> Result<(ExperimentSpec, DomainDataset), CliError> {
    let mut spec: ExperimentSpec = config::load(&c.config, &c.set)?;
    if let Some(seed) = c.seed {
        spec.seed = seed;
    }
    spec.dataset = resolve(spec.dataset, &c.config);
    spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let ds = load_dataset(&spec.dataset)?;
    if let Some(targets) = &spec.targets {
        if let Some(t) = targets.iter().find(|t| ds.domain(**t).is_none()) {
            return Err(CliError::Config(format!("target domain {t} is not in the dataset")));
        }
    }
    Ok((spec, ds))
}

fn write_report(dir: &Path, report: &MetricsReport) -> Result<(), CliError> {
    write_atomic(&dir.join("metrics.csv"), report.to_csv().as_bytes())?;
    write_json(&dir.join("summary.json"), &report.summary_json())
}

fn print_summary(report: &MetricsReport) {
    for row in report.summary() {
        println!(
            "target {:>6}  {:<8}  {} {:.4} ± {:.4}  ({} trials)",
            row.target,
            row.method.name(),
            report.metric.name(),
            row.mean,
            row.std,
            row.trials
        );
    }
}

pub fn gen(c: &Common) -> Result<(), CliError> {
    let mut source: DatasetSource = config::load(&c.config, &c.set)?;
    if let Some(seed) = c.seed {
        match &mut source {
            DatasetSource::Rotated(g) => g.seed = seed,
            DatasetSource::Slope(g) => g.seed = seed,
            DatasetSource::File(_) => {
                return Err(CliError::Config("`gen` needs a generator config, not a file source".into()))
            }
        }
    }
    if let DatasetSource::File(_) = source {
        return Err(CliError::Config("`gen` needs a generator config, not a file source".into()));
    }
    let ds = source.load().map_err(|e| CliError::Config(format!("generator: {e}")))?;
    let path = c.out.join("dataset.txt");
    write_atomic(&path, to_text(&ds).as_bytes())?;
    println!(
        "wrote {} ({} domains, {} points)",
        path.display(),
        ds.domain_count(),
        ds.total_points()
    );
    Ok(())
}

pub fn train(c: &Common) -> Result<(), CliError> {
    let (spec, ds) = prepare(c)?;
    let targets = spec.targets.clone().unwrap_or_default();
    let sources = ds.domain_count() - targets.len();
    if sources < 2 {
        return Err(CliError::Config(format!(
            "training needs at least 2 source domains, {sources} remain after holding out {targets:?}"
        )));
    }
    let (train_ds, val, test) = split(
        &ds,
        &SplitSpec {
            targets: targets.clone(),
            train_fraction: spec.train_fraction,
            seed: spec.seed,
        },
    )?;
    let cfg = TrainConfig {
        seed: spec.seed,
        ..spec.train.clone()
    };
    let model = zsda_core::train(&train_ds, &cfg, &val)?;
    let icfg = InferenceConfig {
        seed: mix_seed(spec.inference.seed, spec.seed),
        ..spec.inference.clone()
    };
    let metric = metric_kind(&ds);
    let mut scores = Vec::new();
    for d in test.domains() {
        let v = score_domain(&model.encoder, &model.predictor, d, &icfg)?.metric(ds.task().is_classification());
        println!("target {:>6}  {} {v:.4}", d.id, metric.name());
        scores.push(json!({ "target": d.id, "value": v }));
    }
    write_atomic(&c.out.join("model.txt"), model_to_text(&model.encoder, &model.predictor).as_bytes())?;
    write_atomic(&c.out.join("trace.csv"), model.trace.to_csv().as_bytes())?;
    write_json(
        &c.out.join("train.json"),
        &json!({
            "targets": targets,
            "sources": train_ds.ids(),
            "latent_dim": cfg.latent_dim,
            "seed": spec.seed,
            "selected_epoch": model.trace.selected_epoch,
            "metric": metric,
            "test": scores,
        }),
    )?;
    println!("selected epoch {}; model in {}", model.trace.selected_epoch, c.out.join("model.txt").display());
    Ok(())
}

pub fn run(c: &Common) -> Result<(), CliError> {
    let (spec, ds) = prepare(c)?;
    let outcomes = run_loo_outcomes(&ds, &spec)?;
    let report = report_from(metric_kind(&ds), &outcomes);
    let traces = c.out.join("traces");
    for o in &outcomes {
        if let Some((m, _)) = &o.proposed {
            let p = traces.join(format!("proposed_target{}_trial{}.csv", o.target, o.trial));
            write_atomic(&p, m.trace.to_csv().as_bytes())?;
        }
        if let Some((_, t, _)) = &o.baseline {
            let p = traces.join(format!("baseline_target{}_trial{}.csv", o.target, o.trial));
            write_atomic(&p, t.to_csv().as_bytes())?;
        }
    }
    write_report(&c.out, &report)?;
    print_summary(&report);
    Ok(())
}

fn write_sweep(out: &Path, label: &str, dirs: &[(String, PathBuf)], reports: &[MetricsReport]) -> Result<(), CliError> {
    let mut csv = format!("{label},target,method,mean,std,trials\n");
    for ((value, dir), report) in dirs.iter().zip(reports) {
        write_report(dir, report)?;
        for row in report.summary() {
            let _ = writeln!(
                csv,
                "{value},{},{},{:?},{:?},{}",
                row.target,
                row.method.name(),
                row.mean,
                row.std,
                row.trials
            );
        }
        println!("{label}={value}");
        print_summary(report);
    }
    write_atomic(&out.join("sweep.csv"), csv.as_bytes())
}

pub fn sweep_k(c: &Common, ks: &[usize]) -> Result<(), CliError> {
    let (spec, ds) = prepare(c)?;
    if let Some(k) = ks.iter().find(|k| !(1..=64).contains(*k)) {
        return Err(CliError::Config(format!("K={k} is outside 1..=64")));
    }
    let reports = sweep_k_on(&ds, &spec, ks)?;
    let dirs: Vec<_> = ks.iter().map(|k| (k.to_string(), c.out.join(format!("k{k}")))).collect();
    write_sweep(&c.out, "latent_dim", &dirs, &reports)
}

pub fn sweep_sources(c: &Common, fractions: &[f64]) -> Result<(), CliError> {
    let (spec, ds) = prepare(c)?;
    if let Some(f) = fractions.iter().find(|f| !(**f > 0.0 && **f < 1.0)) {
        return Err(CliError::Config(format!("source fraction {f} is outside (0, 1)")));
    }
    let reports = sweep_sources_on(&ds, &spec, fractions)?;
    let dirs: Vec<_> = fractions
        .iter()
        .map(|f| (f.to_string(), c.out.join(format!("fraction{f}"))))
        .collect();
    write_sweep(&c.out, "source_fraction", &dirs, &reports)
}

fn task_name(t: Task) -> String {
    match t {
        Task::Classification { classes } => format!("classification with {classes} classes"),
        Task::Regression => "regression".into(),
    }
}

pub fn export_latents(c: &Common, model: &Path) -> Result<(), CliError> {
    let (spec, ds) = prepare(c)?;
    let (enc, pred) = load_model(model).map_err(|e| CliError::Run(format!("model {}: {e}", model.display())))?;
    if enc.input_dim() != ds.dim() {
        return Err(CliError::Run(format!(
            "model expects {} input features but the dataset has {}",
            enc.input_dim(),
            ds.dim()
        )));
    }
    if pred.task != ds.task() {
        return Err(CliError::Run(format!(
            "model task is {} but the dataset task is {}",
            task_name(pred.task),
            task_name(ds.task())
        )));
    }
    let held_out = spec.targets.clone().unwrap_or_default();
    let sets: Vec<_> = ds.domains().iter().map(|d| (d.id, &d.x)).collect();
    let posts = export_posteriors(&enc, &sets)?;
    let k = enc.latent_dim();

    let mut csv = String::from("id,role");
    for i in 1..=k {
        let _ = write!(csv, ",mu_{i}");
    }
    for i in 1..=k {
        let _ = write!(csv, ",logvar_{i}");
    }
    csv.push('\n');
    let points: Vec<_> = ds
        .domains()
        .iter()
        .zip(&posts)
        .map(|(d, p)| (p, held_out.contains(&d.id)))
        .collect();
    for (d, (p, out)) in ds.domains().iter().zip(&points) {
        let _ = write!(csv, "{},{}", d.id, if *out { "held_out" } else { "source" });
        for v in p.mu.iter().chain(&p.logvar) {
            let _ = write!(csv, ",{v:?}");
        }
        csv.push('\n');
    }
    let svg = svg::latent_scatter(&points);
    write_atomic(&c.out.join("latents.csv"), csv.as_bytes())?;
    println!("wrote {} ({} domains, K={k})", c.out.join("latents.csv").display(), posts.len());
    match svg {
        Some(s) => {
            write_atomic(&c.out.join("latents.svg"), s.as_bytes())?;
            println!("wrote {}", c.out.join("latents.svg").display());
        }
        None => println!("note: SVG scatter requires K=2, skipped (K={k})"),
    }
    Ok(())
}
