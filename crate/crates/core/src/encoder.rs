//! Permutation-invariant encoder for the latent domain posterior.
//!
//! A feature set `X = {x_1..x_N}` maps to a diagonal Gaussian over the
//! latent domain vector:
//!
//! ```text
//! pool   = (1/N) Σ_n η(x_n)
//! μ      = ρ_μ(pool)
//! ln σ²  = clamp(ρ_lnσ²(pool), -10, 10)
//! ```
//!
//! `η` is a shared ReLU stack; `ρ_μ` and `ρ_lnσ²` are separate affine maps.
//! Mean pooling makes the output independent of point order and of
//! replicating the whole set.

use serde::{Deserialize, Serialize};

use crate::data::DomainId;
use crate::error::{Error, Result};
use crate::tensor::{dense_params, dense_params_mut, BoundDense, Dense, Matrix, Parameters, Rng, Tape, Var};

/// Encoder log-variance outputs are clamped to `±LOGVAR_BOUND`.
pub const LOGVAR_BOUND: f64 = 10.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    /// Shared per-point network; ReLU after every layer.
    pub eta: Vec<Dense>,
    pub rho_mu: Dense,
    pub rho_logvar: Dense,
}

impl EncoderParams {
    /// `input → hidden[0] → … → hidden[last]`, then two heads of width `latent`.
    pub fn new(input: usize, hidden: &[usize], latent: usize, rng: &mut Rng) -> Result<Self> {
        if hidden.is_empty() {
            return Err(Error::Config("encoder needs at least one hidden layer".into()));
        }
        if input == 0 || latent == 0 || hidden.contains(&0) {
            return Err(Error::Config("encoder widths must be positive".into()));
        }
        let mut eta = Vec::with_capacity(hidden.len());
        let mut width = input;
        for &h in hidden {
            eta.push(Dense::new(width, h, rng));
            width = h;
        }
        Ok(EncoderParams {
            eta,
            rho_mu: Dense::new(width, latent, rng),
            rho_logvar: Dense::new(width, latent, rng),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.eta[0].inputs()
    }

    pub fn latent_dim(&self) -> usize {
        self.rho_mu.outputs()
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundEncoder {
        BoundEncoder {
            eta: self.eta.iter().map(|d| d.bind(tape)).collect(),
            rho_mu: self.rho_mu.bind(tape),
            rho_logvar: self.rho_logvar.bind(tape),
            input_dim: self.input_dim(),
        }
    }

    /// Posterior for one feature set.
    pub fn encode(&self, x: &Matrix) -> Result<LatentPosterior> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let xv = tape.leaf(x.clone());
        let (mu, logvar) = bound.encode(&mut tape, xv)?;
        Ok(LatentPosterior {
            id: None,
            mu: tape.value(mu).data().to_vec(),
            logvar: tape.value(logvar).data().to_vec(),
        })
    }
}

impl Parameters for EncoderParams {
    fn params(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::new();
        for (i, d) in self.eta.iter().enumerate() {
            out.extend(dense_params(&format!("encoder.eta.{i}"), d));
        }
        out.extend(dense_params("encoder.rho_mu", &self.rho_mu));
        out.extend(dense_params("encoder.rho_logvar", &self.rho_logvar));
        out
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        let mut out = Vec::new();
        for (i, d) in self.eta.iter_mut().enumerate() {
            out.extend(dense_params_mut(&format!("encoder.eta.{i}"), d));
        }
        out.extend(dense_params_mut("encoder.rho_mu", &mut self.rho_mu));
        out.extend(dense_params_mut("encoder.rho_logvar", &mut self.rho_logvar));
        out
    }
}

/// Encoder parameters placed on a tape, in [`Parameters`] order.
pub struct BoundEncoder {
    pub eta: Vec<BoundDense>,
    pub rho_mu: BoundDense,
    pub rho_logvar: BoundDense,
    input_dim: usize,
}

impl BoundEncoder {
    pub fn vars(&self) -> Vec<Var> {
        self.eta
            .iter()
            .chain([&self.rho_mu, &self.rho_logvar])
            .flat_map(|d| d.vars())
            .collect()
    }

    /// Returns `(μ, ln σ²)` as `1×K` nodes.
    pub fn encode(&self, tape: &mut Tape, x: Var) -> Result<(Var, Var)> {
        let (n, m) = tape.value(x).shape();
        if n == 0 {
            return Err(Error::EmptyDomain("cannot encode an empty feature set".into()));
        }
        if m != self.input_dim {
            return Err(Error::Shape {
                op: "encode",
                lhs: (n, m),
                rhs: (n, self.input_dim),
            });
        }
        let mut h = x;
        for layer in &self.eta {
            let a = layer.forward(tape, h)?;
            h = tape.relu(a);
        }
        let pool = tape.row_mean(h)?;
        let mu = self.rho_mu.forward(tape, pool)?;
        let raw = self.rho_logvar.forward(tape, pool)?;
        let logvar = tape.clamp(raw, -LOGVAR_BOUND, LOGVAR_BOUND);
        Ok((mu, logvar))
    }
}

/// Diagonal Gaussian `N(μ, diag(exp(ln σ²)))` over the latent domain vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentPosterior {
    pub id: Option<DomainId>,
    pub mu: Vec<f64>,
    pub logvar: Vec<f64>,
}

impl LatentPosterior {
    pub fn new(mu: Vec<f64>, logvar: Vec<f64>) -> Result<Self> {
        if mu.len() != logvar.len() {
            return Err(Error::Shape {
                op: "posterior",
                lhs: (1, mu.len()),
                rhs: (1, logvar.len()),
            });
        }
        Ok(LatentPosterior { id: None, mu, logvar })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn std_dev(&self) -> Vec<f64> {
        self.logvar.iter().map(|lv| (0.5 * lv).exp()).collect()
    }

    pub fn variance(&self) -> Vec<f64> {
        self.logvar.iter().map(|lv| lv.exp()).collect()
    }

    /// `z = μ + ε ⊙ exp(½ ln σ²)` for a given `ε`.
    pub fn reparameterize(&self, eps: &[f64]) -> Vec<f64> {
        self.mu
            .iter()
            .zip(&self.logvar)
            .zip(eps)
            .map(|((m, lv), e)| m + e * (0.5 * lv).exp())
            .collect()
    }
}

/// Draws `count` latent vectors by reparameterization.
pub fn sample_z(post: &LatentPosterior, rng: &mut Rng, count: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| post.reparameterize(&rng.gaussian(post.dim())))
        .collect()
}

/// Differentiable `z = μ + ε ⊙ exp(½ ln σ²)` with frozen noise `eps`.
pub fn reparameterize(tape: &mut Tape, mu: Var, logvar: Var, eps: &[f64]) -> Result<Var> {
    let half = tape.scale(logvar, 0.5);
    let sigma = tape.exp(half);
    let noise = tape.leaf(Matrix::row_vector(eps));
    let scaled = tape.mul(noise, sigma)?;
    tape.add(mu, scaled)
}
