//! Independent numerical oracles shared by the integration tests.
#![allow(dead_code)]

use statrs::distribution::{ContinuousCDF, Normal};
use zsda_core::objective::{elbo_with_noise, DomainBatch, Noise};
use zsda_core::{EncoderParams, Matrix, PredictorParams, Rng, Targets, Task};

/// Gauss–Hermite nodes and weights for `∫ e^{-t²} f(t) dt`, found by Newton
/// iteration on the orthonormal Hermite recurrence.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let pim4 = std::f64::consts::PI.powf(-0.25);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let mut z = 0.0f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * n as f64 + 1.0).sqrt() - 1.85575 * (2.0 * n as f64 + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * (n as f64).powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = (j + 1) as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * n as f64).sqrt() * p2;
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// `E[f(z)]` for `z ~ N(mu, sigma²)` with `n`-node Gauss–Hermite.
pub fn gh_expect(n: usize, mu: f64, sigma: f64, f: impl Fn(f64) -> f64) -> f64 {
    let (t, w) = gauss_hermite(n);
    let s = std::f64::consts::PI.sqrt();
    t.iter().zip(&w).map(|(t, w)| w / s * f(mu + std::f64::consts::SQRT_2 * sigma * t)).sum()
}

/// `ln E[exp(g(z))]` for `z ~ N(0, 1)`, stabilized by the largest term.
pub fn gh_log_expect_exp(n: usize, g: impl Fn(f64) -> f64) -> f64 {
    let (t, w) = gauss_hermite(n);
    let s = std::f64::consts::PI.sqrt();
    let terms: Vec<f64> = t
        .iter()
        .zip(&w)
        .map(|(t, w)| (w / s).ln() + g(std::f64::consts::SQRT_2 * t))
        .collect();
    let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + terms.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Standard normal quantile.
pub fn norm_ppf(p: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().inverse_cdf(p)
}

/// Evenly spaced normal quantiles `Φ⁻¹((l − ½)/L)`: a deterministic stand-in
/// for `L` i.i.d. draws whose average converges like a midpoint rule.
pub fn quantile_noise(l: usize) -> Vec<Vec<f64>> {
    (0..l).map(|i| vec![norm_ppf((i as f64 + 0.5) / l as f64)]).collect()
}

/// Relative error with a floor so gradients that vanish compare absolutely.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Central difference of the ELBO total along every parameter entry.
pub fn fd_elbo_grads(
    enc: &EncoderParams,
    pred: &PredictorParams,
    batch: &[DomainBatch],
    noise: &Noise,
    h: f64,
) -> Vec<Vec<f64>> {
    use zsda_core::Parameters;
    let f = |e: &EncoderParams, p: &PredictorParams| elbo_with_noise(e, p, batch, noise).unwrap().total;
    let n_enc = enc.params().len();
    let shapes: Vec<usize> = enc
        .params()
        .iter()
        .chain(pred.params().iter())
        .map(|(_, m)| m.len())
        .collect();
    shapes
        .iter()
        .enumerate()
        .map(|(k, &len)| {
            (0..len)
                .map(|i| {
                    let (mut ep, mut em, mut pp, mut pm) = (enc.clone(), enc.clone(), pred.clone(), pred.clone());
                    if k < n_enc {
                        ep.params_mut()[k].1.data_mut()[i] += h;
                        em.params_mut()[k].1.data_mut()[i] -= h;
                    } else {
                        pp.params_mut()[k - n_enc].1.data_mut()[i] += h;
                        pm.params_mut()[k - n_enc].1.data_mut()[i] -= h;
                    }
                    (f(&ep, &pp) - f(&em, &pm)) / (2.0 * h)
                })
                .collect()
        })
        .collect()
}

/// A small classification domain with random features.
pub fn class_domain(id: i64, n: usize, m: usize, classes: usize, rng: &mut Rng) -> DomainBatch {
    DomainBatch {
        id,
        x: Matrix::from_vec(n, m, rng.gaussian(n * m)).unwrap(),
        y: Targets::Classes((0..n).map(|i| i % classes + 1).collect()),
        scale: 1.0,
        encode_from: None,
    }
}

pub fn micro_model(m: usize, k: usize, classes: usize, hidden: usize, seed: u64) -> (EncoderParams, PredictorParams) {
    let mut rng = Rng::new(seed);
    let enc = EncoderParams::new(m, &[hidden], k, &mut rng).unwrap();
    let pred = PredictorParams::new(m, &[hidden], k, Task::Classification { classes }, &mut rng).unwrap();
    (enc, pred)
}

/// Monte Carlo `KL(N(μ, σ²) ‖ N(0, I))` from `n` draws of the left side.
pub fn mc_kl(mu: &[f64], logvar: &[f64], n: usize, rng: &mut Rng) -> f64 {
    let mut total = 0.0;
    for _ in 0..n {
        let eps = rng.gaussian(mu.len());
        let mut lq = 0.0;
        let mut lp = 0.0;
        for k in 0..mu.len() {
            let z = mu[k] + eps[k] * (0.5 * logvar[k]).exp();
            lq += -0.5 * (eps[k] * eps[k] + logvar[k]);
            lp += -0.5 * z * z;
        }
        total += lq - lp;
    }
    total / n as f64
}
