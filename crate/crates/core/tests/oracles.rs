//! Worked examples checked against independent oracles: quadrature,
//! Monte Carlo and data-derived baselines.

mod common;

use common::{gauss_hermite, gh_expect, gh_log_expect_exp, mc_kl, quantile_noise};
use zsda_core::data::{gen_domain_slope_regression, gen_rotated_gaussians, split, RotatedGaussians, SlopeRegression, SplitSpec};
use zsda_core::encoder::reparameterize;
use zsda_core::harness::{run_trial, DatasetSource, ExperimentSpec, Method};
use zsda_core::inference::{predict_with_posterior, score_domain};
use zsda_core::objective::{domain_term, elbo_with_noise, DomainBatch};
use zsda_core::tensor::Tape;
use zsda_core::train::train;
use zsda_core::{
    kl_standard_normal, Domain, DomainDataset, EncoderParams, InferenceConfig, Label, LatentPosterior, Matrix,
    PredictorParams, Rng, Targets, Task, TrainConfig,
};

#[test]
fn hermite_rule_integrates_gaussian_moments() {
    let (t, w) = gauss_hermite(64);
    assert!((w.iter().sum::<f64>() - std::f64::consts::PI.sqrt()).abs() < 1e-12);
    assert!(t.windows(2).all(|p| p[0] > p[1]));
    assert!((gh_expect(64, 0.0, 1.0, |z| z * z) - 1.0).abs() < 1e-12);
    assert!((gh_expect(64, 0.0, 1.0, |z| z.powi(4)) - 3.0).abs() < 1e-10);
    assert!((gh_expect(64, 0.5, 2.0, |z| z) - 0.5).abs() < 1e-12);
    // ln E[e^z] = 1/2 for a standard normal
    assert!((gh_log_expect_exp(64, |z| z) - 0.5).abs() < 1e-12);
}

#[test]
fn kl_with_variance_e_matches_monte_carlo() {
    let post = LatentPosterior::new(vec![0.0], vec![1.0]).unwrap();
    let closed = kl_standard_normal(&post);
    assert!((closed - 0.359141).abs() < 1e-6);
    let mc = mc_kl(&[0.0], &[1.0], 1_000_000, &mut Rng::new(77));
    assert!((closed - mc).abs() < 1e-2, "{closed} vs {mc}");
}

fn micro_k1(seed: u64) -> (EncoderParams, PredictorParams, DomainBatch) {
    let mut rng = Rng::new(seed);
    let enc = EncoderParams::new(2, &[4], 1, &mut rng).unwrap();
    let pred = PredictorParams::new(2, &[4], 1, Task::Classification { classes: 2 }, &mut rng).unwrap();
    let batch = DomainBatch {
        id: 0,
        x: Matrix::from_vec(4, 2, rng.gaussian(8)).unwrap(),
        y: Targets::Classes(vec![1, 2, 1, 2]),
        scale: 1.0,
        encode_from: None,
    };
    (enc, pred, batch)
}

#[test]
fn elbo_never_exceeds_quadrature_marginal_likelihood() {
    for seed in 0..5 {
        let (enc, pred, batch) = micro_k1(seed);
        let elbo = elbo_with_noise(&enc, &pred, std::slice::from_ref(&batch), &vec![quantile_noise(20_000)])
            .unwrap()
            .total;
        let Targets::Classes(ys) = &batch.y else { unreachable!() };
        let log_p = gh_log_expect_exp(64, |z| {
            batch
                .x
                .iter_rows()
                .zip(ys)
                .map(|(x, &y)| pred.log_likelihood(x, Label::Class(y), &[z]).unwrap())
                .sum()
        });
        assert!(elbo <= log_p + 1e-3, "seed {seed}: {elbo} > {log_p}");
    }
}

#[test]
fn elbo_matches_quadrature_of_its_own_expectation() {
    let (enc, pred, batch) = micro_k1(9);
    let terms = elbo_with_noise(&enc, &pred, std::slice::from_ref(&batch), &vec![quantile_noise(20_000)]).unwrap();
    let post = enc.encode(&batch.x).unwrap();
    let Targets::Classes(ys) = &batch.y else { unreachable!() };
    let recon = gh_expect(64, post.mu[0], post.std_dev()[0], |z| {
        batch
            .x
            .iter_rows()
            .zip(ys)
            .map(|(x, &y)| pred.log_likelihood(x, Label::Class(y), &[z]).unwrap())
            .sum()
    });
    assert!((terms.recon[0] - recon).abs() < 1e-3);
    assert!((terms.kl[0] - kl_standard_normal(&post)).abs() < 1e-15);
}

#[test]
fn rescaled_subset_objective_is_unbiased() {
    let mut rng = Rng::new(5);
    let pred = PredictorParams::new(2, &[5], 2, Task::Classification { classes: 3 }, &mut rng).unwrap();
    let n = 12;
    let full = DomainBatch {
        id: 0,
        x: Matrix::from_vec(n, 2, rng.gaussian(2 * n)).unwrap(),
        y: Targets::Classes((0..n).map(|i| i % 3 + 1).collect()),
        scale: 1.0,
        encode_from: None,
    };
    let eps = vec![rng.gaussian(2)];
    let value = |b: &DomainBatch| {
        let mut tape = Tape::new();
        let bp = pred.bind(&mut tape);
        let mu = tape.leaf(Matrix::row_vector(&[0.3, -0.4]));
        let lv = tape.leaf(Matrix::row_vector(&[-0.5, 0.2]));
        let (_, recon) = domain_term(&mut tape, &bp, mu, lv, b, &eps).unwrap();
        tape.scalar(recon)
    };
    let exact = value(&full);
    let k = 4;
    let draws: Vec<f64> = (0..4000)
        .map(|_| {
            let idx = rng.subset(n, k);
            value(&DomainBatch {
                id: 0,
                x: full.x.select_rows(&idx),
                y: full.y.select(&idx),
                scale: n as f64 / k as f64,
                encode_from: None,
            })
        })
        .collect();
    let m = draws.iter().sum::<f64>() / draws.len() as f64;
    let sd = (draws.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (draws.len() - 1) as f64).sqrt();
    let se = sd / (draws.len() as f64).sqrt();
    assert!((m - exact).abs() <= 3.0 * se, "{m} vs {exact} (se {se})");
}

#[test]
fn reparameterized_sample_has_posterior_moments() {
    let mut tape = Tape::new();
    let mu = tape.leaf(Matrix::row_vector(&[1.5]));
    let lv = tape.leaf(Matrix::row_vector(&[0.8]));
    let noise = quantile_noise(10_000);
    let zs: Vec<f64> = noise
        .iter()
        .map(|e| {
            let z = reparameterize(&mut tape, mu, lv, e).unwrap();
            tape.scalar(z)
        })
        .collect();
    let mean = zs.iter().sum::<f64>() / zs.len() as f64;
    let var = zs.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / zs.len() as f64;
    assert!((mean - 1.5).abs() < 1e-9);
    assert!((var - 0.8f64.exp()).abs() < 2e-3 * 0.8f64.exp());
}

#[test]
fn stochastic_prediction_converges_to_quadrature() {
    let mut rng = Rng::new(61);
    let pred = PredictorParams::new(3, &[5], 1, Task::Regression, &mut rng).unwrap();
    let post = LatentPosterior::new(vec![0.4], vec![0.3]).unwrap();
    let q = Matrix::from_vec(3, 3, rng.gaussian(9)).unwrap();
    let cfg = InferenceConfig {
        samples: 10_000,
        seed: 1,
        ..InferenceConfig::default()
    };
    let got = predict_with_posterior(&pred, &post, &q, &cfg).unwrap();
    for (row, p) in q.iter_rows().zip(&got) {
        let exact = gh_expect(64, 0.4, post.std_dev()[0], |z| pred.logits(row, &[z]).unwrap()[0]);
        assert!((p.mean().unwrap() - exact).abs() < 5e-3, "{} vs {exact}", p.mean().unwrap());
    }
}

#[test]
fn slope_family_noise_floor() {
    let spec = SlopeRegression {
        slopes: vec![-1.0, 0.5],
        n_per_domain: 10_000,
        dim: 3,
        noise: 0.3,
        covariate_shift: 0.0,
        seed: 4,
    };
    let ds = gen_domain_slope_regression(&spec).unwrap();
    let w = spec.direction();
    for (d, a) in ds.domains().iter().zip(&spec.slopes) {
        let Targets::Real(ys) = &d.y else { unreachable!() };
        let mse: f64 = d
            .x
            .iter_rows()
            .zip(ys)
            .map(|(x, y)| (y - a * x.iter().zip(&w).map(|(p, q)| p * q).sum::<f64>()).powi(2))
            .sum::<f64>()
            / ys.len() as f64;
        // standard error of the RMSE estimate is about sigma / sqrt(2N)
        assert!((mse.sqrt() - 0.3).abs() < 4.0 * 0.3 / (2.0 * 1e4f64).sqrt());
    }
}

fn quick_cfg(seed: u64, epochs: usize) -> TrainConfig {
    TrainConfig {
        latent_dim: 2,
        max_epochs: epochs,
        min_selection_epoch: 15.min(epochs),
        encoder_hidden: vec![32],
        feature_hidden: vec![32],
        seed,
        ..TrainConfig::default()
    }
}

/// Two i.i.d. domains of a linearly separable two-class problem.
fn separable(seed: u64) -> DomainDataset {
    let mut rng = Rng::new(seed);
    let domains = (0..2)
        .map(|id| {
            let mut rows = Vec::new();
            let mut ys = Vec::new();
            for i in 0..150 {
                let c = i % 2;
                let offset = if c == 0 { -1.0 } else { 1.0 };
                rows.push([offset + 0.3 * rng.normal(), rng.normal()]);
                ys.push(c + 1);
            }
            Domain {
                id,
                x: Matrix::from_rows(&rows).unwrap(),
                y: Targets::Classes(ys),
            }
        })
        .collect();
    DomainDataset::new(Task::Classification { classes: 2 }, 2, domains).unwrap()
}

#[test]
fn separable_data_trains_cleanly() {
    let ds = separable(1);
    let val = separable(2);
    let cfg = TrainConfig {
        minibatch: 32,
        lr: 1e-2,
        ..quick_cfg(3, 30)
    };
    let model = train(&ds, &cfg, &val).unwrap();
    let losses: Vec<f64> = model.trace.epochs.iter().take(5).map(|e| -e.elbo).collect();
    assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
    let cfg = InferenceConfig::default();
    let acc = ds
        .domains()
        .iter()
        .map(|d| score_domain(&model.encoder, &model.predictor, d, &cfg).unwrap())
        .fold(zsda_core::Score::default(), |a, s| a.merge(s))
        .accuracy();
    assert!(acc >= 0.95, "training accuracy {acc}");
}

#[test]
fn training_is_seed_deterministic() {
    let ds = separable(5);
    let val = separable(6);
    let a = train(&ds, &quick_cfg(8, 16), &val).unwrap();
    let b = train(&ds, &quick_cfg(8, 16), &val).unwrap();
    let last = |m: &zsda_core::TrainedModel| m.trace.epochs.last().unwrap().val_metric;
    assert_eq!(last(&a), last(&b));
}

fn majority_rate(d: &Domain, classes: usize) -> f64 {
    let Targets::Classes(ys) = &d.y else { unreachable!() };
    let mut counts = vec![0usize; classes + 1];
    for &y in ys {
        counts[y] += 1;
    }
    *counts.iter().max().unwrap() as f64 / ys.len() as f64
}

#[test]
fn rotated_held_out_beats_majority_class() {
    let gen = RotatedGaussians {
        angles_deg: vec![0.0, 15.0, 30.0, 45.0, 60.0, 75.0],
        n_per_domain: 120,
        classes: 3,
        noise: 0.2,
        anchor_arc_deg: 360.0,
        seed: 12,
    };
    let ds = gen_rotated_gaussians(&gen).unwrap();
    let (tr, val, test) = split(&ds, &SplitSpec::hold_out(vec![3], 13)).unwrap();
    let model = train(&tr, &quick_cfg(14, 60), &val).unwrap();
    let target = &test.domains()[0];
    let acc = score_domain(&model.encoder, &model.predictor, target, &InferenceConfig::default())
        .unwrap()
        .accuracy();
    assert!(acc > majority_rate(target, 3), "accuracy {acc}");
}

fn spec_for(ds_source: DatasetSource, epochs: usize) -> ExperimentSpec {
    let mut spec = ExperimentSpec::new(ds_source);
    spec.train = quick_cfg(0, epochs);
    spec.baseline_hidden = 32;
    spec.trials = 1;
    spec
}

#[test]
fn near_noiseless_rotations_are_solved_by_both_methods() {
    let gen = RotatedGaussians {
        angles_deg: vec![0.0, 15.0, 30.0, 45.0, 60.0, 75.0],
        n_per_domain: 60,
        classes: 3,
        noise: 1e-6,
        anchor_arc_deg: 360.0,
        seed: 2,
    };
    let spec = spec_for(DatasetSource::Rotated(gen), 60);
    let ds = spec.dataset.load().unwrap();
    let out = run_trial(&ds, &spec, &[2], 0, 3).unwrap();
    let p = out.proposed.unwrap().1;
    let b = out.baseline.unwrap().2;
    assert!(p >= 0.99 && b >= 0.99, "proposed {p}, baseline {b}");
}

#[test]
fn without_domain_signal_methods_agree() {
    // every domain is the same distribution: rotation angle 0 throughout
    let mut diffs = Vec::new();
    for seed in 0..5 {
        let gen = RotatedGaussians {
            angles_deg: vec![0.0; 4],
            n_per_domain: 100,
            classes: 4,
            noise: 0.5,
            anchor_arc_deg: 360.0,
            seed,
        };
        let mut spec = spec_for(DatasetSource::Rotated(gen), 40);
        spec.train.seed = seed;
        let ds = spec.dataset.load().unwrap();
        let out = run_trial(&ds, &spec, &[0], 0, seed).unwrap();
        diffs.push(out.proposed.unwrap().1 - out.baseline.unwrap().2);
    }
    let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
    assert!(mean.abs() <= 0.03, "mean accuracy difference {mean} ({diffs:?})");
}

#[test]
fn report_means_recompute_from_trials() {
    let gen = RotatedGaussians {
        angles_deg: vec![0.0, 30.0, 60.0],
        n_per_domain: 30,
        classes: 2,
        noise: 0.3,
        anchor_arc_deg: 360.0,
        seed: 3,
    };
    let mut spec = spec_for(DatasetSource::Rotated(gen), 5);
    spec.trials = 3;
    let report = zsda_core::run_loo(&spec).unwrap();
    for row in report.summary() {
        let v = report.values(&row.target, row.method);
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        assert_eq!(row.mean, mean);
        assert_eq!(v.len(), 3);
    }
    assert!(report.summary().iter().any(|r| r.method == Method::Baseline));
}
