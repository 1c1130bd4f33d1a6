//! No-adaptation baseline: a one-hidden-layer network fit to pooled source
//! points with no notion of which domain a point came from.

use serde::{Deserialize, Serialize};

use crate::data::{PooledSamples, Targets, Task};
use crate::error::{Error, Result};
use crate::inference::Score;
use crate::predictor::{PredictiveDistribution, TargetsRef};
use crate::tensor::{dense_params, dense_params_mut, softmax, Adam, Dense, Matrix, Parameters, Rng, Tape};
use crate::train::{EpochRecord, Selector, TrainConfig, TrainingTrace};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineParams {
    pub hidden: Dense,
    pub out: Dense,
    pub task: Task,
}

impl BaselineParams {
    pub fn new(input: usize, hidden: usize, task: Task, rng: &mut Rng) -> Result<Self> {
        if input == 0 || hidden == 0 {
            return Err(Error::Config("baseline widths must be positive".into()));
        }
        Ok(BaselineParams {
            hidden: Dense::new(input, hidden, rng),
            out: Dense::new(hidden, task.outputs(), rng),
            task,
        })
    }

    pub fn outputs(&self, x: &Matrix) -> Result<Matrix> {
        let h = self.hidden.apply(x)?.map(|v| v.max(0.0));
        self.out.apply(&h)
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<PredictiveDistribution>> {
        let f = self.outputs(x)?;
        Ok(f.iter_rows()
            .map(|row| match self.task {
                Task::Classification { .. } => PredictiveDistribution::Classes(softmax(row)),
                Task::Regression => PredictiveDistribution::Mean(row[0]),
            })
            .collect())
    }

    pub fn score(&self, samples: &PooledSamples) -> Result<Score> {
        Score::from_predictions(&self.predict(&samples.x)?, &samples.y)
    }

    /// Mean negative log-likelihood of the batch and its parameter gradients.
    fn loss_and_grads(&self, x: &Matrix, y: &Targets) -> Result<(f64, Vec<Matrix>)> {
        let mut tape = Tape::new();
        let hid = self.hidden.bind(&mut tape);
        let out = self.out.bind(&mut tape);
        let xv = tape.leaf(x.clone());
        let a = hid.forward(&mut tape, xv)?;
        let a = tape.relu(a);
        let f = out.forward(&mut tape, a)?;
        let idx;
        let targets = match y {
            Targets::Classes(_) => {
                idx = y.class_indices().expect("class targets");
                TargetsRef::Classes(&idx)
            }
            Targets::Real(v) => TargetsRef::Real(v),
        };
        let ll = match targets {
            TargetsRef::Classes(c) => {
                let ls = tape.log_softmax(f);
                let g = tape.gather(ls, c)?;
                tape.sum(g)?
            }
            TargetsRef::Real(v) => {
                let t = tape.leaf(Matrix::from_vec(v.len(), 1, v.to_vec())?);
                let d = tape.sub(f, t)?;
                let sq = tape.mul(d, d)?;
                let s = tape.sum(sq)?;
                tape.scale(s, -0.5)
            }
        };
        let loss = tape.scale(ll, -1.0 / x.rows() as f64);
        tape.backward(loss)?;
        let grads = hid
            .vars()
            .into_iter()
            .chain(out.vars())
            .map(|v| tape.grad(v).expect("backward ran").clone())
            .collect();
        Ok((tape.scalar(loss), grads))
    }
}

impl Parameters for BaselineParams {
    fn params(&self) -> Vec<(String, &Matrix)> {
        let mut p: Vec<_> = dense_params("baseline.hidden", &self.hidden).into();
        p.extend(dense_params("baseline.out", &self.out));
        p
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        let mut p: Vec<_> = dense_params_mut("baseline.hidden", &mut self.hidden).into();
        p.extend(dense_params_mut("baseline.out", &mut self.out));
        p
    }
}

/// Fits the baseline with the same optimizer, epoch cap, step count per
/// epoch and selection rule as the proposed model. The trace's `elbo`
/// column holds the negated mean training loss; `kl_mean` is zero.
pub fn train_baseline(
    train: &PooledSamples,
    validation: &PooledSamples,
    hidden: usize,
    cfg: &TrainConfig,
) -> Result<(BaselineParams, TrainingTrace)> {
    cfg.validate()?;
    if train.is_empty() || validation.is_empty() {
        return Err(Error::Config("baseline needs non-empty training and validation points".into()));
    }
    let mut init_rng = Rng::with_stream(cfg.seed, 10);
    let mut batch_rng = Rng::with_stream(cfg.seed, 11);
    let mut model = BaselineParams::new(train.x.cols(), hidden, train.task, &mut init_rng)?;
    let mut adam = Adam::new(model.params().into_iter().map(|(_, m)| m), cfg.adam());
    let n = train.len();
    let size = cfg.minibatch.min(n);
    let steps = n.div_ceil(cfg.minibatch);
    let classify = train.task.is_classification();
    let mut selector = Selector::new(classify, cfg.first_selectable_epoch());
    let mut trace = TrainingTrace::default();

    for epoch in 1..=cfg.max_epochs {
        let mut total = 0.0;
        for step in 0..steps {
            let idx = batch_rng.subset(n, size);
            let x = train.x.select_rows(&idx);
            let y = train.y.select(&idx);
            let (loss, grads) = model.loss_and_grads(&x, &y)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, step });
            }
            let names: Vec<String> = model.params().into_iter().map(|(n, _)| n).collect();
            let params = names
                .iter()
                .map(String::as_str)
                .zip(model.params_mut().into_iter().map(|(_, m)| m))
                .collect();
            adam.step(params, &grads)?;
            total += loss;
        }
        let val_metric = model.score(validation)?.metric(classify);
        trace.epochs.push(EpochRecord {
            epoch,
            elbo: -total / steps as f64,
            kl_mean: 0.0,
            recon_mean: -total / steps as f64,
            val_metric,
        });
        selector.offer(epoch, val_metric, || model.clone());
    }
    let (selected, best) = selector.into_best().unwrap_or((cfg.max_epochs, model));
    trace.selected_epoch = selected;
    Ok((best, trace))
}
