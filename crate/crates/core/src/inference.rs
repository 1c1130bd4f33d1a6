//! Zero-shot prediction for a domain seen only through its feature set.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Domain, DomainId, Targets};
use crate::encoder::{EncoderParams, LatentPosterior};
use crate::error::{Error, Result};
use crate::predictor::{PredictiveDistribution, PredictorParams};
use crate::tensor::{softmax, Matrix, Rng};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictionMode {
    #[default]
    Stochastic,
    PosteriorMean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceConfig {
    pub samples: usize,
    pub seed: u64,
    pub mode: PredictionMode,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            samples: 10,
            seed: 0,
            mode: PredictionMode::Stochastic,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::Config("inference samples must be at least 1".into()));
        }
        Ok(())
    }
}

/// Latent vectors to average over. One set of draws is shared by every query.
fn latent_draws(post: &LatentPosterior, cfg: &InferenceConfig) -> Vec<Vec<f64>> {
    match cfg.mode {
        PredictionMode::PosteriorMean => vec![post.mu.clone()],
        PredictionMode::Stochastic => {
            let mut rng = Rng::new(cfg.seed);
            (0..cfg.samples)
                .map(|_| post.reparameterize(&rng.gaussian(post.dim())))
                .collect()
        }
    }
}

/// Predictive distribution for each query row, averaged in probability space
/// over latent draws from the posterior of `x_unseen`.
pub fn predict_domain(
    enc: &EncoderParams,
    pred: &PredictorParams,
    x_unseen: &Matrix,
    queries: &Matrix,
    cfg: &InferenceConfig,
) -> Result<Vec<PredictiveDistribution>> {
    cfg.validate()?;
    let post = enc.encode(x_unseen)?;
    predict_with_posterior(pred, &post, queries, cfg)
}

pub fn predict_with_posterior(
    pred: &PredictorParams,
    post: &LatentPosterior,
    queries: &Matrix,
    cfg: &InferenceConfig,
) -> Result<Vec<PredictiveDistribution>> {
    cfg.validate()?;
    let features = pred.features(queries)?;
    let zs = latent_draws(post, cfg);
    let n = queries.rows();
    let outputs = pred.outputs();
    let classify = pred.task.is_classification();
    let mut acc = vec![0.0; n * outputs];
    for z in &zs {
        let logits = pred.logits_from_features(&features, z)?;
        for (row, slot) in logits.iter_rows().zip(acc.chunks_exact_mut(outputs)) {
            if classify {
                for (a, p) in slot.iter_mut().zip(softmax(row)) {
                    *a += p;
                }
            } else {
                slot[0] += row[0];
            }
        }
    }
    let inv = 1.0 / zs.len() as f64;
    Ok(acc
        .chunks_exact(outputs)
        .map(|slot| {
            if classify {
                let total: f64 = slot.iter().sum();
                PredictiveDistribution::Classes(slot.iter().map(|p| p / total).collect())
            } else {
                PredictiveDistribution::Mean(slot[0] * inv)
            }
        })
        .collect())
}

/// Posteriors for each `(id, X)` pair, in order.
pub fn export_posteriors(enc: &EncoderParams, domains: &[(DomainId, &Matrix)]) -> Result<Vec<LatentPosterior>> {
    domains
        .par_iter()
        .map(|(id, x)| {
            let mut post = enc.encode(x)?;
            post.id = Some(*id);
            Ok(post)
        })
        .collect()
}

/// Accumulated hits or squared errors.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Score {
    pub count: usize,
    pub correct: usize,
    pub sq_err: f64,
}

impl Score {
    pub fn from_predictions(preds: &[PredictiveDistribution], targets: &Targets) -> Result<Score> {
        if preds.len() != targets.len() {
            return Err(Error::Contract(format!(
                "{} predictions for {} targets",
                preds.len(),
                targets.len()
            )));
        }
        let mut s = Score {
            count: preds.len(),
            ..Score::default()
        };
        match targets {
            Targets::Classes(ys) => {
                s.correct = preds.iter().zip(ys).filter(|(p, &y)| p.argmax() == Some(y)).count();
            }
            Targets::Real(ys) => {
                s.sq_err = preds
                    .iter()
                    .zip(ys)
                    .map(|(p, y)| (p.mean().unwrap_or(f64::NAN) - y).powi(2))
                    .sum();
            }
        }
        Ok(s)
    }

    pub fn merge(self, other: Score) -> Score {
        Score {
            count: self.count + other.count,
            correct: self.correct + other.correct,
            sq_err: self.sq_err + other.sq_err,
        }
    }

    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.count.max(1) as f64
    }

    pub fn rmse(&self) -> f64 {
        (self.sq_err / self.count.max(1) as f64).sqrt()
    }

    /// Accuracy for classification, RMSE for regression.
    pub fn metric(&self, classification: bool) -> f64 {
        if classification {
            self.accuracy()
        } else {
            self.rmse()
        }
    }
}

/// Scores a domain transductively: its own features are both the set to
/// encode and the queries.
pub fn score_domain(
    enc: &EncoderParams,
    pred: &PredictorParams,
    domain: &Domain,
    cfg: &InferenceConfig,
) -> Result<Score> {
    let preds = predict_domain(enc, pred, &domain.x, &domain.x, cfg)?;
    Score::from_predictions(&preds, &domain.y)
}
