//! The variational lower bound on the multi-domain marginal likelihood.
//!
//! For each domain `d` in a batch:
//!
//! ```text
//! term_d = -KL(q(z|X_d) ‖ N(0, I)) + s_d · (1/L) Σ_l Σ_n ln p(y_n | x_n, z_l)
//! ```
//!
//! with `z_l = μ + ε_l ⊙ σ` and `s_d = N_d / |batch_d|` when likelihood
//! rescaling is on (1 otherwise). The objective is `Σ_d term_d`.

use crate::data::{Domain, DomainId, Targets};
use crate::encoder::{reparameterize, BoundEncoder, EncoderParams, LatentPosterior};
use crate::error::{Error, Result};
use crate::predictor::{BoundPredictor, PredictorParams, TargetsRef};
use crate::tensor::{Matrix, Rng, Tape, Var};

/// `KL(N(μ, σ²) ‖ N(0, I)) = ½ Σ_k (μ_k² + σ_k² − ln σ_k² − 1)`.
pub fn kl_standard_normal(post: &LatentPosterior) -> f64 {
    0.5 * post
        .mu
        .iter()
        .zip(&post.logvar)
        .map(|(m, lv)| m * m + lv.exp() - lv - 1.0)
        .sum::<f64>()
}

/// Differentiable KL for `1×K` nodes `mu` and `logvar`.
pub fn kl_node(tape: &mut Tape, mu: Var, logvar: Var) -> Result<Var> {
    let mu2 = tape.mul(mu, mu)?;
    let var = tape.exp(logvar);
    let a = tape.add(mu2, var)?;
    let b = tape.sub(a, logvar)?;
    let c = tape.shift(b, -1.0);
    let s = tape.sum(c)?;
    Ok(tape.scale(s, 0.5))
}

/// One domain's slice of a minibatch.
#[derive(Clone, Debug)]
pub struct DomainBatch {
    pub id: DomainId,
    pub x: Matrix,
    pub y: Targets,
    /// Multiplier on the summed log-likelihood, `N_d / |subset|` when rescaling.
    pub scale: f64,
    /// Set to encode the posterior from something other than `x`, e.g. the
    /// full domain.
    pub encode_from: Option<Matrix>,
}

impl DomainBatch {
    /// The whole domain, unscaled.
    pub fn full(domain: &Domain) -> Self {
        DomainBatch {
            id: domain.id,
            x: domain.x.clone(),
            y: domain.y.clone(),
            scale: 1.0,
            encode_from: None,
        }
    }

    fn check(&self) -> Result<()> {
        if self.x.rows() == 0 || self.y.is_empty() {
            return Err(Error::Batch(format!("domain {} has no labeled points in the batch", self.id)));
        }
        if self.y.len() != self.x.rows() {
            return Err(Error::Batch(format!(
                "domain {}: {} labels for {} points",
                self.id,
                self.y.len(),
                self.x.rows()
            )));
        }
        Ok(())
    }
}

/// Per-domain parts of the bound and their assembled total.
#[derive(Clone, Debug, PartialEq)]
pub struct ElboTerms {
    pub ids: Vec<DomainId>,
    pub kl: Vec<f64>,
    /// Scaled expected log-likelihood per domain.
    pub recon: Vec<f64>,
    pub total: f64,
}

impl ElboTerms {
    pub fn kl_mean(&self) -> f64 {
        self.kl.iter().sum::<f64>() / self.kl.len().max(1) as f64
    }

    pub fn recon_mean(&self) -> f64 {
        self.recon.iter().sum::<f64>() / self.recon.len().max(1) as f64
    }
}

/// Graph handles for a built objective.
pub struct ElboGraph {
    /// `Σ_d (−kl_d + recon_d)`, to be maximized.
    pub total: Var,
    pub kl: Vec<Var>,
    pub recon: Vec<Var>,
}

impl ElboGraph {
    pub fn terms(&self, tape: &Tape, ids: Vec<DomainId>) -> ElboTerms {
        ElboTerms {
            ids,
            kl: self.kl.iter().map(|&v| tape.scalar(v)).collect(),
            recon: self.recon.iter().map(|&v| tape.scalar(v)).collect(),
            total: tape.scalar(self.total),
        }
    }
}

/// Frozen reparameterization noise: `noise[d][l]` is `ε_l` for batch domain `d`.
pub type Noise = Vec<Vec<Vec<f64>>>;

pub fn draw_noise(rng: &mut Rng, domains: usize, samples: usize, latent: usize) -> Noise {
    (0..domains)
        .map(|_| (0..samples).map(|_| rng.gaussian(latent)).collect())
        .collect()
}

/// One domain's term given its posterior nodes: returns `(kl, scaled recon)`.
pub fn domain_term(
    tape: &mut Tape,
    pred: &BoundPredictor,
    mu: Var,
    logvar: Var,
    batch: &DomainBatch,
    eps: &[Vec<f64>],
) -> Result<(Var, Var)> {
    batch.check()?;
    if eps.is_empty() {
        return Err(Error::Config("at least one latent sample is required".into()));
    }
    let class_idx;
    let targets = match &batch.y {
        Targets::Classes(_) => {
            class_idx = batch.y.class_indices().expect("class targets");
            TargetsRef::Classes(&class_idx)
        }
        Targets::Real(ys) => TargetsRef::Real(ys),
    };
    let kl = kl_node(tape, mu, logvar)?;
    let x = tape.leaf(batch.x.clone());
    let features = pred.features(tape, x)?;
    let mut acc: Option<Var> = None;
    for e in eps {
        let z = reparameterize(tape, mu, logvar, e)?;
        let heads = pred.head_weights(tape, z)?;
        let logits = pred.logits(tape, features, heads)?;
        let ll = pred.log_likelihood_sum(tape, logits, &targets)?;
        acc = Some(match acc {
            Some(a) => tape.add(a, ll)?,
            None => ll,
        });
    }
    let recon = tape.scale(acc.expect("non-empty"), batch.scale / eps.len() as f64);
    Ok((kl, recon))
}

/// Builds the full objective on `tape`.
pub fn build_elbo(
    tape: &mut Tape,
    enc: &BoundEncoder,
    pred: &BoundPredictor,
    batch: &[DomainBatch],
    noise: &Noise,
) -> Result<ElboGraph> {
    if batch.is_empty() {
        return Err(Error::Batch("empty minibatch".into()));
    }
    if noise.len() != batch.len() {
        return Err(Error::Contract(format!(
            "{} noise sets for {} batch domains",
            noise.len(),
            batch.len()
        )));
    }
    let mut kls = Vec::with_capacity(batch.len());
    let mut recons = Vec::with_capacity(batch.len());
    let mut total: Option<Var> = None;
    for (b, eps) in batch.iter().zip(noise) {
        let src = tape.leaf(b.encode_from.as_ref().unwrap_or(&b.x).clone());
        let (mu, logvar) = enc.encode(tape, src)?;
        let (kl, recon) = domain_term(tape, pred, mu, logvar, b, eps)?;
        let term = tape.sub(recon, kl)?;
        total = Some(match total {
            Some(t) => tape.add(t, term)?,
            None => term,
        });
        kls.push(kl);
        recons.push(recon);
    }
    Ok(ElboGraph {
        total: total.expect("non-empty batch"),
        kl: kls,
        recon: recons,
    })
}

/// Evaluates the objective with frozen noise.
pub fn elbo_with_noise(
    enc: &EncoderParams,
    pred: &PredictorParams,
    batch: &[DomainBatch],
    noise: &Noise,
) -> Result<ElboTerms> {
    let mut tape = Tape::new();
    let be = enc.bind(&mut tape);
    let bp = pred.bind(&mut tape);
    let graph = build_elbo(&mut tape, &be, &bp, batch, noise)?;
    Ok(graph.terms(&tape, batch.iter().map(|b| b.id).collect()))
}

/// Evaluates the objective, drawing `samples` latent vectors per domain.
pub fn elbo_minibatch(
    enc: &EncoderParams,
    pred: &PredictorParams,
    batch: &[DomainBatch],
    rng: &mut Rng,
    samples: usize,
) -> Result<ElboTerms> {
    let noise = draw_noise(rng, batch.len(), samples, enc.latent_dim());
    elbo_with_noise(enc, pred, batch, &noise)
}

/// Objective value and the gradient of the loss `−total` w.r.t. every
/// encoder then predictor parameter, in [`crate::tensor::Parameters`] order.
pub fn elbo_and_grads(
    enc: &EncoderParams,
    pred: &PredictorParams,
    batch: &[DomainBatch],
    noise: &Noise,
) -> Result<(ElboTerms, Vec<Matrix>)> {
    let mut tape = Tape::new();
    let be = enc.bind(&mut tape);
    let bp = pred.bind(&mut tape);
    let graph = build_elbo(&mut tape, &be, &bp, batch, noise)?;
    let terms = graph.terms(&tape, batch.iter().map(|b| b.id).collect());
    let loss = tape.scale(graph.total, -1.0);
    tape.backward(loss)?;
    let grads = be
        .vars()
        .into_iter()
        .chain(bp.vars())
        .map(|v| tape.grad(v).expect("backward ran").clone())
        .collect();
    Ok((terms, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Task;
    use crate::tensor::Parameters;

    #[test]
    fn kl_closed_form_cases() {
        let zero = LatentPosterior::new(vec![0.0, 0.0], vec![0.0, 0.0]).unwrap();
        assert_eq!(kl_standard_normal(&zero), 0.0);
        let shifted = LatentPosterior::new(vec![1.0, 0.0], vec![0.0, 0.0]).unwrap();
        assert_eq!(kl_standard_normal(&shifted), 0.5);
        let wide = LatentPosterior::new(vec![0.0], vec![1.0]).unwrap();
        assert!((kl_standard_normal(&wide) - 0.5 * (std::f64::consts::E - 2.0)).abs() < 1e-15);
        assert!((kl_standard_normal(&wide) - 0.359141).abs() < 1e-6);
    }

    #[test]
    fn kl_is_nonnegative() {
        let mut rng = Rng::new(10);
        for _ in 0..1000 {
            let mu = rng.gaussian(3).iter().map(|v| v * 3.0).collect();
            let lv = rng.gaussian(3).iter().map(|v| v * 5.0).collect();
            assert!(kl_standard_normal(&LatentPosterior::new(mu, lv).unwrap()) >= 0.0);
        }
    }

    fn micro(seed: u64) -> (EncoderParams, PredictorParams, Vec<DomainBatch>) {
        let mut rng = Rng::new(seed);
        let enc = EncoderParams::new(3, &[5], 2, &mut rng).unwrap();
        let pred = PredictorParams::new(3, &[4], 2, Task::Classification { classes: 2 }, &mut rng).unwrap();
        let batch = (0..2)
            .map(|d| DomainBatch {
                id: d,
                x: Matrix::from_vec(4, 3, rng.gaussian(12)).unwrap(),
                y: Targets::Classes(vec![1, 2, 2, 1]),
                scale: 1.0 + d as f64,
                encode_from: None,
            })
            .collect();
        (enc, pred, batch)
    }

    #[test]
    fn kl_term_matches_closed_form() {
        let (enc, pred, batch) = micro(2);
        let terms = elbo_minibatch(&enc, &pred, &batch, &mut Rng::new(0), 1).unwrap();
        for (b, kl) in batch.iter().zip(&terms.kl) {
            assert_eq!(*kl, kl_standard_normal(&enc.encode(&b.x).unwrap()));
        }
        let assembled: f64 = terms.recon.iter().zip(&terms.kl).map(|(r, k)| r - k).sum();
        assert!((assembled - terms.total).abs() < 1e-12);
    }

    #[test]
    fn collapsed_posterior_gives_deterministic_likelihood() {
        let (_, pred, batch) = micro(3);
        let b = &batch[0];
        let mu0 = vec![0.3, -0.8];
        let mut tape = Tape::new();
        let bp = pred.bind(&mut tape);
        let mu = tape.leaf(Matrix::row_vector(&mu0));
        let lv = tape.leaf(Matrix::row_vector(&[-40.0, -40.0]));
        let eps = vec![Rng::new(1).gaussian(2)];
        let (_, recon) = domain_term(&mut tape, &bp, mu, lv, b, &eps).unwrap();
        let Targets::Classes(ys) = &b.y else { unreachable!() };
        let direct: f64 = b
            .x
            .iter_rows()
            .zip(ys)
            .map(|(x, &y)| pred.log_likelihood(x, crate::Label::Class(y), &mu0).unwrap())
            .sum();
        assert!((tape.scalar(recon) - direct).abs() < 1e-6);
    }

    #[test]
    fn empty_batch_domain_is_rejected() {
        let (enc, pred, mut batch) = micro(4);
        batch[1].x = Matrix::zeros(0, 3);
        batch[1].y = Targets::Classes(vec![]);
        batch[1].encode_from = Some(Matrix::from_rows(&[[1.0, 2.0, 3.0]]).unwrap());
        assert!(matches!(
            elbo_minibatch(&enc, &pred, &batch, &mut Rng::new(0), 1),
            Err(Error::Batch(_))
        ));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (enc, pred, batch) = micro(5);
        let noise = draw_noise(&mut Rng::new(6), batch.len(), 2, 2);
        let (_, grads) = elbo_and_grads(&enc, &pred, &batch, &noise).unwrap();
        let f = |e: &EncoderParams, p: &PredictorParams| elbo_with_noise(e, p, &batch, &noise).unwrap().total;
        let h = 1e-4;
        let n_enc = enc.params().len();
        for (k, g) in grads.iter().enumerate() {
            for i in 0..g.len() {
                let (mut ep, mut em, mut pp, mut pm) = (enc.clone(), enc.clone(), pred.clone(), pred.clone());
                if k < n_enc {
                    ep.params_mut()[k].1.data_mut()[i] += h;
                    em.params_mut()[k].1.data_mut()[i] -= h;
                } else {
                    pp.params_mut()[k - n_enc].1.data_mut()[i] += h;
                    pm.params_mut()[k - n_enc].1.data_mut()[i] -= h;
                }
                let numeric = -(f(&ep, &pp) - f(&em, &pm)) / (2.0 * h);
                let a = g.data()[i];
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-4);
                assert!(rel < 1e-4, "param {k}[{i}]: {a} vs {numeric}");
            }
        }
    }
}
