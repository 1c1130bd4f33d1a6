//! Leave-one-domain-out experiments, sweeps over `K` and over the number
//! of source domains, and metric reports.

pub mod baseline;
pub mod stats;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    gen_domain_slope_regression, gen_rotated_gaussians, load_text, split, DomainDataset, DomainId, RotatedGaussians,
    SlopeRegression, SplitSpec,
};
use crate::error::{Error, Result};
use crate::inference::{score_domain, InferenceConfig};
use crate::tensor::Rng;
use crate::train::{train, TrainConfig, TrainedModel, TrainingTrace};

pub use baseline::{train_baseline, BaselineParams};
pub use stats::{mean_std, principal_direction, principal_projection, spearman};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Proposed,
    Baseline,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::Baseline => "baseline",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Accuracy,
    Rmse,
}

impl MetricKind {
    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Accuracy => "accuracy",
            MetricKind::Rmse => "rmse",
        }
    }
}

/// Where an experiment's domains come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    File(PathBuf),
    Rotated(RotatedGaussians),
    Slope(SlopeRegression),
}

impl DatasetSource {
    pub fn load(&self) -> Result<DomainDataset> {
        match self {
            DatasetSource::File(p) => load_text(p).map_err(|e| match e {
                Error::Io(io) => Error::Io(std::io::Error::new(io.kind(), format!("{}: {io}", p.display()))),
                other => other,
            }),
            DatasetSource::Rotated(g) => gen_rotated_gaussians(g),
            DatasetSource::Slope(g) => gen_domain_slope_regression(g),
        }
    }
}

fn default_methods() -> Vec<Method> {
    vec![Method::Proposed, Method::Baseline]
}

fn default_trials() -> usize {
    10
}

fn default_fraction() -> f64 {
    0.8
}

fn default_baseline_hidden() -> usize {
    100
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub dataset: DatasetSource,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub inference: InferenceConfig,
    /// Domains to hold out one at a time; all domains when absent.
    #[serde(default)]
    pub targets: Option<Vec<DomainId>>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Share of each source domain used for training; the rest validates.
    #[serde(default = "default_fraction")]
    pub train_fraction: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_baseline_hidden")]
    pub baseline_hidden: usize,
}

impl ExperimentSpec {
    pub fn new(dataset: DatasetSource) -> Self {
        ExperimentSpec {
            dataset,
            methods: default_methods(),
            train: TrainConfig::default(),
            inference: InferenceConfig::default(),
            targets: None,
            trials: default_trials(),
            train_fraction: default_fraction(),
            seed: 0,
            baseline_hidden: default_baseline_hidden(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods selected".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train_fraction {} is outside (0, 1)",
                self.train_fraction
            )));
        }
        if self.baseline_hidden == 0 {
            return Err(Error::Config("baseline_hidden must be positive".into()));
        }
        self.train.validate()?;
        self.inference.validate()
    }

    fn runs(&self, m: Method) -> bool {
        self.methods.contains(&m)
    }
}

/// One method's score on one trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub target: String,
    pub method: Method,
    pub trial: usize,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub target: String,
    pub method: Method,
    pub mean: f64,
    pub std: f64,
    pub trials: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub metric: MetricKind,
    pub records: Vec<TrialRecord>,
    pub metadata: BTreeMap<String, String>,
}

impl MetricsReport {
    pub fn new(metric: MetricKind) -> Self {
        let mut metadata = BTreeMap::new();
        metadata.insert(
            "hyperparameter_selection".into(),
            "global: one configuration for every target domain; per-run snapshot chosen on source validation".into(),
        );
        MetricsReport {
            metric,
            records: Vec::new(),
            metadata,
        }
    }

    /// Per-trial values for one `(target, method)`, in trial order.
    pub fn values(&self, target: &str, method: Method) -> Vec<f64> {
        let mut rows: Vec<&TrialRecord> = self
            .records
            .iter()
            .filter(|r| r.target == target && r.method == method)
            .collect();
        rows.sort_by_key(|r| r.trial);
        rows.into_iter().map(|r| r.value).collect()
    }

    /// Every trial of a method across targets, in record order.
    pub fn method_values(&self, method: Method) -> Vec<f64> {
        self.records.iter().filter(|r| r.method == method).map(|r| r.value).collect()
    }

    pub fn targets(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.records {
            if !out.contains(&r.target) {
                out.push(r.target.clone());
            }
        }
        out
    }

    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut out = Vec::new();
        for t in self.targets() {
            for m in [Method::Proposed, Method::Baseline] {
                let v = self.values(&t, m);
                if v.is_empty() {
                    continue;
                }
                let (mean, std) = mean_std(&v);
                out.push(SummaryRow {
                    target: t.clone(),
                    method: m,
                    mean,
                    std,
                    trials: v.len(),
                });
            }
        }
        out
    }

    /// Mean over every trial and target of one method.
    pub fn overall_mean(&self, method: Method) -> f64 {
        mean_std(&self.method_values(method)).0
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("target,method,trial,metric,value\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{:?}",
                r.target,
                r.method.name(),
                r.trial,
                self.metric.name(),
                r.value
            );
        }
        out
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "metric": self.metric,
            "metadata": self.metadata,
            "summary": self.summary(),
        })
    }
}

/// Everything produced by one trial.
#[derive(Clone, Debug)]
pub struct TrialOutcome {
    pub target: String,
    pub trial: usize,
    pub seed: u64,
    pub proposed: Option<(TrainedModel, f64)>,
    pub baseline: Option<(BaselineParams, TrainingTrace, f64)>,
}

impl TrialOutcome {
    fn records(&self) -> Vec<TrialRecord> {
        let mut out = Vec::new();
        if let Some((_, v)) = &self.proposed {
            out.push(TrialRecord {
                target: self.target.clone(),
                method: Method::Proposed,
                trial: self.trial,
                value: *v,
            });
        }
        if let Some((_, _, v)) = &self.baseline {
            out.push(TrialRecord {
                target: self.target.clone(),
                method: Method::Baseline,
                trial: self.trial,
                value: *v,
            });
        }
        out
    }
}

/// SplitMix64 finalizer over two words.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_add(0x9e37_79b9_7f4a_7c15).rotate_left(17);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn metric_kind(ds: &DomainDataset) -> MetricKind {
    if ds.task().is_classification() {
        MetricKind::Accuracy
    } else {
        MetricKind::Rmse
    }
}

/// Trains the selected methods on every domain outside `targets` and scores
/// them on `targets`. Several targets are averaged with equal weight.
pub fn run_trial(
    ds: &DomainDataset,
    spec: &ExperimentSpec,
    targets: &[DomainId],
    trial: usize,
    seed: u64,
) -> Result<TrialOutcome> {
    let (train_ds, val, test) = split(
        ds,
        &SplitSpec {
            targets: targets.to_vec(),
            train_fraction: spec.train_fraction,
            seed,
        },
    )?;
    let classify = ds.task().is_classification();
    let cfg = TrainConfig {
        seed,
        ..spec.train.clone()
    };
    let label = match targets {
        [one] => one.to_string(),
        _ => "mean".to_string(),
    };

    let proposed = if spec.runs(Method::Proposed) {
        let model = train(&train_ds, &cfg, &val)?;
        let icfg = InferenceConfig {
            seed: mix_seed(spec.inference.seed, seed),
            ..spec.inference.clone()
        };
        let mut values = Vec::with_capacity(test.domain_count());
        for d in test.domains() {
            values.push(score_domain(&model.encoder, &model.predictor, d, &icfg)?.metric(classify));
        }
        Some((model, mean_std(&values).0))
    } else {
        None
    };

    let baseline = if spec.runs(Method::Baseline) {
        let (model, trace) = train_baseline(&train_ds.pooled(), &val.pooled(), spec.baseline_hidden, &cfg)?;
        let mut values = Vec::with_capacity(test.domain_count());
        for d in test.domains() {
            let s = crate::inference::Score::from_predictions(&model.predict(&d.x)?, &d.y)?;
            values.push(s.metric(classify));
        }
        let v = mean_std(&values).0;
        Some((model, trace, v))
    } else {
        None
    };

    Ok(TrialOutcome {
        target: label,
        trial,
        seed,
        proposed,
        baseline,
    })
}

/// Runs `f` inside a pool capped by `ZSDA_THREADS` when it is set.
pub fn with_thread_cap<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    match std::env::var("ZSDA_THREADS") {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("ZSDA_THREADS must be a positive integer, got `{v}`")))?;
            if n == 0 {
                return Err(Error::Config("ZSDA_THREADS must be at least 1".into()));
            }
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
        Err(_) => Ok(f()),
    }
}

fn with_context(target: &str, trial: usize, r: Result<TrialOutcome>) -> Result<TrialOutcome> {
    r.map_err(|e| Error::Trial {
        target: target.to_string(),
        trial,
        source: Box::new(e),
    })
}

/// Every trial of a leave-one-domain-out run, ordered by target then trial.
pub fn run_loo_outcomes(ds: &DomainDataset, spec: &ExperimentSpec) -> Result<Vec<TrialOutcome>> {
    spec.validate()?;
    if ds.domain_count() < 2 {
        return Err(Error::Config(format!(
            "leave-one-domain-out needs at least 2 domains, got {}",
            ds.domain_count()
        )));
    }
    let targets = spec.targets.clone().unwrap_or_else(|| ds.ids());
    for t in &targets {
        if ds.domain(*t).is_none() {
            return Err(Error::Config(format!("target domain {t} is not in the dataset")));
        }
    }
    let jobs: Vec<(DomainId, usize)> = targets
        .iter()
        .flat_map(|&t| (0..spec.trials).map(move |r| (t, r)))
        .collect();
    with_thread_cap(|| {
        jobs.par_iter()
            .map(|&(t, r)| {
                let seed = mix_seed(mix_seed(spec.seed, t as u64), r as u64);
                with_context(&t.to_string(), r, run_trial(ds, spec, &[t], r, seed))
            })
            .collect::<Result<Vec<_>>>()
    })?
}

pub fn report_from(metric: MetricKind, outcomes: &[TrialOutcome]) -> MetricsReport {
    let mut report = MetricsReport::new(metric);
    for o in outcomes {
        report.records.extend(o.records());
    }
    report
}

pub fn run_loo_on(ds: &DomainDataset, spec: &ExperimentSpec) -> Result<MetricsReport> {
    let outcomes = run_loo_outcomes(ds, spec)?;
    Ok(report_from(metric_kind(ds), &outcomes))
}

pub fn run_loo(spec: &ExperimentSpec) -> Result<MetricsReport> {
    run_loo_on(&spec.dataset.load()?, spec)
}

/// One report per `K`. The baseline does not depend on `K`, so it runs once
/// and its rows are repeated in every report.
pub fn sweep_k_on(ds: &DomainDataset, spec: &ExperimentSpec, ks: &[usize]) -> Result<Vec<MetricsReport>> {
    if let Some(k) = ks.iter().find(|k| !(1..=64).contains(*k)) {
        return Err(Error::Config(format!("K={k} is outside 1..=64")));
    }
    let base = if spec.runs(Method::Baseline) {
        let only = ExperimentSpec {
            methods: vec![Method::Baseline],
            ..spec.clone()
        };
        run_loo_on(ds, &only)?.records
    } else {
        Vec::new()
    };
    let mut reports = Vec::with_capacity(ks.len());
    for &k in ks {
        let mut report = MetricsReport::new(metric_kind(ds));
        if spec.runs(Method::Proposed) {
            let mut s = ExperimentSpec {
                methods: vec![Method::Proposed],
                ..spec.clone()
            };
            s.train.latent_dim = k;
            report.records = run_loo_on(ds, &s)?.records;
        }
        report.records.extend(base.iter().cloned());
        report.metadata.insert("latent_dim".into(), k.to_string());
        reports.push(report);
    }
    Ok(reports)
}

pub fn sweep_k(spec: &ExperimentSpec, ks: &[usize]) -> Result<Vec<MetricsReport>> {
    sweep_k_on(&spec.dataset.load()?, spec, ks)
}

/// Randomly splits domain ids into `(sources, targets)` with
/// `round(fraction · D)` sources.
pub fn select_sources(ids: &[DomainId], fraction: f64, seed: u64) -> Result<(Vec<DomainId>, Vec<DomainId>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!("source fraction {fraction} is outside (0, 1)")));
    }
    let n = (fraction * ids.len() as f64).round() as usize;
    if n == 0 {
        return Err(Error::Config(format!(
            "source fraction {fraction} selects no source domains out of {}",
            ids.len()
        )));
    }
    if n >= ids.len() {
        return Err(Error::Config(format!(
            "source fraction {fraction} leaves no target domains out of {}",
            ids.len()
        )));
    }
    let mut picked = Rng::new(seed).subset(ids.len(), n);
    picked.sort_unstable();
    let sources: Vec<DomainId> = picked.iter().map(|&i| ids[i]).collect();
    let targets = ids.iter().copied().filter(|id| !sources.contains(id)).collect();
    Ok((sources, targets))
}

/// One report per fraction; each trial's value is the equal-weight mean
/// over its target domains.
pub fn sweep_sources_on(ds: &DomainDataset, spec: &ExperimentSpec, fractions: &[f64]) -> Result<Vec<MetricsReport>> {
    spec.validate()?;
    let ids = ds.ids();
    let mut reports = Vec::with_capacity(fractions.len());
    for (fi, &f) in fractions.iter().enumerate() {
        let jobs = (0..spec.trials)
            .map(|r| {
                let seed = mix_seed(mix_seed(spec.seed, 0xf0 + fi as u64), r as u64);
                let (_, targets) = select_sources(&ids, f, seed)?;
                Ok((r, seed, targets))
            })
            .collect::<Result<Vec<_>>>()?;
        let outcomes = with_thread_cap(|| {
            jobs.par_iter()
                .map(|(r, seed, targets)| with_context("mean", *r, run_trial(ds, spec, targets, *r, *seed)))
                .collect::<Result<Vec<_>>>()
        })??;
        let mut report = report_from(metric_kind(ds), &outcomes);
        report.metadata.insert("source_fraction".into(), format!("{f}"));
        reports.push(report);
    }
    Ok(reports)
}

pub fn sweep_sources(spec: &ExperimentSpec, fractions: &[f64]) -> Result<Vec<MetricsReport>> {
    sweep_sources_on(&spec.dataset.load()?, spec, fractions)
}
