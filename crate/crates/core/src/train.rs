//! Minibatch Adam training of the encoder and predictor with
//! best-on-validation snapshot selection.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::DomainDataset;
use crate::encoder::EncoderParams;
use crate::error::{Error, Result};
use crate::inference::{score_domain, InferenceConfig, PredictionMode, Score};
use crate::objective::{draw_noise, elbo_and_grads, DomainBatch, ElboTerms};
use crate::predictor::PredictorParams;
use crate::tensor::{Adam, AdamConfig, Parameters, Rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Latent dimension `K`.
    pub latent_dim: usize,
    /// Latent samples per domain per step.
    pub train_samples: usize,
    pub lr: f64,
    /// Target number of points per step, shared equally across domains.
    pub minibatch: usize,
    pub max_epochs: usize,
    pub min_selection_epoch: usize,
    pub seed: u64,
    pub rescale_likelihood: bool,
    /// Encode each domain's posterior from all its points instead of the batch subset.
    pub encode_full_set: bool,
    pub encoder_hidden: Vec<usize>,
    pub feature_hidden: Vec<usize>,
    /// Latent samples when scoring validation domains.
    pub eval_samples: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            latent_dim: 2,
            train_samples: 1,
            lr: 1e-3,
            minibatch: 512,
            max_epochs: 300,
            min_selection_epoch: 15,
            seed: 0,
            rescale_likelihood: true,
            encode_full_set: false,
            encoder_hidden: vec![100],
            feature_hidden: vec![100],
            eval_samples: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.latent_dim == 0 {
            return bad("latent_dim must be at least 1");
        }
        if self.train_samples == 0 {
            return bad("train_samples must be at least 1");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if self.minibatch == 0 || self.max_epochs == 0 || self.eval_samples == 0 {
            return bad("minibatch, max_epochs and eval_samples must be positive");
        }
        if self.encoder_hidden.is_empty() || self.feature_hidden.is_empty() {
            return bad("hidden layer lists must not be empty");
        }
        if self.encoder_hidden.contains(&0) || self.feature_hidden.contains(&0) {
            return bad("hidden widths must be positive");
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        }
    }

    /// First epoch eligible for snapshot selection.
    pub fn first_selectable_epoch(&self) -> usize {
        self.min_selection_epoch.clamp(1, self.max_epochs)
    }

    pub(crate) fn validation_inference(&self) -> InferenceConfig {
        InferenceConfig {
            samples: self.eval_samples,
            seed: self.seed ^ 0x5eed_0f_7a11,
            mode: PredictionMode::Stochastic,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub elbo: f64,
    pub kl_mean: f64,
    pub recon_mean: f64,
    /// Accuracy or RMSE on validation.
    pub val_metric: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub epochs: Vec<EpochRecord>,
    pub selected_epoch: usize,
}

impl TrainingTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,elbo,kl_mean,recon_mean,val_metric\n");
        for r in &self.epochs {
            let _ = writeln!(
                out,
                "{},{:?},{:?},{:?},{:?}",
                r.epoch, r.elbo, r.kl_mean, r.recon_mean, r.val_metric
            );
        }
        out
    }
}

/// Tracks the best validation metric among selectable epochs.
#[derive(Clone, Debug)]
pub struct Selector<T> {
    higher_is_better: bool,
    first_epoch: usize,
    best: Option<(usize, f64, T)>,
}

impl<T: Clone> Selector<T> {
    pub fn new(higher_is_better: bool, first_epoch: usize) -> Self {
        Selector {
            higher_is_better,
            first_epoch,
            best: None,
        }
    }

    /// Offers an epoch's result; ties keep the earlier epoch.
    pub fn offer(&mut self, epoch: usize, metric: f64, snapshot: impl FnOnce() -> T) {
        if epoch < self.first_epoch || metric.is_nan() {
            return;
        }
        let better = match &self.best {
            None => true,
            Some((_, m, _)) => {
                if self.higher_is_better {
                    metric > *m
                } else {
                    metric < *m
                }
            }
        };
        if better {
            self.best = Some((epoch, metric, snapshot()));
        }
    }

    pub fn into_best(self) -> Option<(usize, T)> {
        self.best.map(|(e, _, t)| (e, t))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub encoder: EncoderParams,
    pub predictor: PredictorParams,
    pub trace: TrainingTrace,
}

/// One step's batch: every domain contributes an equal share of `minibatch`.
pub fn sample_minibatch(ds: &DomainDataset, cfg: &TrainConfig, rng: &mut Rng) -> Result<Vec<DomainBatch>> {
    let d = ds.domain_count();
    if d == 0 {
        return Err(Error::Batch("no domains to sample".into()));
    }
    if cfg.minibatch < d {
        return Err(Error::Config(format!(
            "minibatch {} is smaller than the {d} domains sampled per step",
            cfg.minibatch
        )));
    }
    let share = cfg.minibatch.div_ceil(d);
    Ok(ds
        .domains()
        .iter()
        .map(|dom| {
            let n = dom.len();
            let k = share.min(n);
            let idx = rng.subset(n, k);
            let sub = dom.subset(&idx);
            DomainBatch {
                id: dom.id,
                x: sub.x,
                y: sub.y,
                scale: if cfg.rescale_likelihood { n as f64 / k as f64 } else { 1.0 },
                encode_from: cfg.encode_full_set.then(|| dom.x.clone()),
            }
        })
        .collect())
}

/// Pooled validation score; each domain is encoded from its own points.
pub fn validation_score(
    enc: &EncoderParams,
    pred: &PredictorParams,
    val: &DomainDataset,
    cfg: &InferenceConfig,
) -> Result<Score> {
    val.domains()
        .iter()
        .try_fold(Score::default(), |acc, d| Ok(acc.merge(score_domain(enc, pred, d, cfg)?)))
}

pub fn init_model(ds: &DomainDataset, cfg: &TrainConfig, rng: &mut Rng) -> Result<(EncoderParams, PredictorParams)> {
    let enc = EncoderParams::new(ds.dim(), &cfg.encoder_hidden, cfg.latent_dim, rng)?;
    let pred = PredictorParams::new(ds.dim(), &cfg.feature_hidden, cfg.latent_dim, ds.task(), rng)?;
    Ok((enc, pred))
}

pub fn train(ds: &DomainDataset, cfg: &TrainConfig, validation: &DomainDataset) -> Result<TrainedModel> {
    cfg.validate()?;
    if ds.domain_count() < 2 {
        return Err(Error::Config(format!(
            "training needs at least 2 source domains, got {}",
            ds.domain_count()
        )));
    }
    if validation.domain_count() == 0 {
        return Err(Error::Config("validation set has no domains".into()));
    }
    if validation.task() != ds.task() || validation.dim() != ds.dim() {
        return Err(Error::Config("validation set does not match the training task or width".into()));
    }
    let mut init_rng = Rng::with_stream(cfg.seed, 0);
    let mut batch_rng = Rng::with_stream(cfg.seed, 1);
    let mut noise_rng = Rng::with_stream(cfg.seed, 2);
    let (mut enc, mut pred) = init_model(ds, cfg, &mut init_rng)?;

    let mut adam = Adam::new(
        enc.params()
            .into_iter()
            .chain(pred.params())
            .map(|(_, m)| m),
        cfg.adam(),
    );
    let steps = ds.total_points().div_ceil(cfg.minibatch);
    let classify = ds.task().is_classification();
    let val_cfg = cfg.validation_inference();
    let mut selector = Selector::new(classify, cfg.first_selectable_epoch());
    let mut trace = TrainingTrace::default();

    for epoch in 1..=cfg.max_epochs {
        let (mut elbo, mut kl, mut recon) = (0.0, 0.0, 0.0);
        for step in 0..steps {
            let batch = sample_minibatch(ds, cfg, &mut batch_rng)?;
            let noise = draw_noise(&mut noise_rng, batch.len(), cfg.train_samples, cfg.latent_dim);
            let (terms, grads): (ElboTerms, _) = elbo_and_grads(&enc, &pred, &batch, &noise)?;
            if !terms.total.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, step });
            }
            let names: Vec<String> = enc.params().into_iter().chain(pred.params()).map(|(n, _)| n).collect();
            let params: Vec<(&str, &mut crate::Matrix)> = names
                .iter()
                .map(String::as_str)
                .zip(enc.params_mut().into_iter().chain(pred.params_mut()).map(|(_, m)| m))
                .collect();
            adam.step(params, &grads)?;
            elbo += terms.total;
            kl += terms.kl_mean();
            recon += terms.recon_mean();
        }
        let inv = 1.0 / steps as f64;
        let val_metric = validation_score(&enc, &pred, validation, &val_cfg)?.metric(classify);
        trace.epochs.push(EpochRecord {
            epoch,
            elbo: elbo * inv,
            kl_mean: kl * inv,
            recon_mean: recon * inv,
            val_metric,
        });
        selector.offer(epoch, val_metric, || (enc.clone(), pred.clone()));
    }

    let (selected, (encoder, predictor)) = selector.into_best().unwrap_or((cfg.max_epochs, (enc, pred)));
    trace.selected_epoch = selected;
    Ok(TrainedModel {
        encoder,
        predictor,
        trace,
    })
}
