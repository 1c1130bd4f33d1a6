//! Synthetic domain families for desk-scale experiments.

use serde::{Deserialize, Serialize};

use super::{Domain, DomainDataset, DomainId, Targets, Task};
use crate::error::{Error, Result};
use crate::tensor::{Matrix, Rng};

/// Class-conditional Gaussians in R² whose anchors rotate with the domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RotatedGaussians {
    pub angles_deg: Vec<f64>,
    pub n_per_domain: usize,
    pub classes: usize,
    pub noise: f64,
    /// Arc over which the class anchors are equally spaced. 360 places them
    /// around the whole circle; a smaller arc breaks the rotational symmetry
    /// of the feature set.
    #[serde(default = "full_circle")]
    pub anchor_arc_deg: f64,
    pub seed: u64,
}

fn full_circle() -> f64 {
    360.0
}

impl RotatedGaussians {
    /// Unit-circle anchor of 0-based class `c`.
    pub fn anchor(&self, c: usize) -> [f64; 2] {
        let phi = (c as f64 * self.anchor_arc_deg / self.classes as f64).to_radians();
        [phi.cos(), phi.sin()]
    }
}

pub fn rotate(point: [f64; 2], angle_deg: f64) -> [f64; 2] {
    let (s, c) = angle_deg.to_radians().sin_cos();
    [c * point[0] - s * point[1], s * point[0] + c * point[1]]
}

/// Domain `d` (id `d`) draws class-`c` points from `N(R(θ_d)·m_c, σ²I)`.
/// Labels cycle `1, 2, …, C` so each domain is balanced.
pub fn gen_rotated_gaussians(spec: &RotatedGaussians) -> Result<DomainDataset> {
    if spec.classes < 2 {
        return Err(Error::Config("rotated gaussians need at least 2 classes".into()));
    }
    if spec.n_per_domain < spec.classes {
        return Err(Error::Config(format!(
            "n_per_domain {} is below the class count {}",
            spec.n_per_domain, spec.classes
        )));
    }
    if spec.angles_deg.is_empty() {
        return Err(Error::Config("no angles given".into()));
    }
    if !(spec.noise >= 0.0 && spec.noise.is_finite()) {
        return Err(Error::Config(format!("noise {} must be finite and >= 0", spec.noise)));
    }
    let mut rng = Rng::new(spec.seed);
    let domains = spec
        .angles_deg
        .iter()
        .enumerate()
        .map(|(d, &theta)| {
            let mut data = Vec::with_capacity(spec.n_per_domain * 2);
            let mut labels = Vec::with_capacity(spec.n_per_domain);
            for n in 0..spec.n_per_domain {
                let c = n % spec.classes;
                let center = rotate(spec.anchor(c), theta);
                data.push(center[0] + spec.noise * rng.normal());
                data.push(center[1] + spec.noise * rng.normal());
                labels.push(c + 1);
            }
            Domain {
                id: d as DomainId,
                x: Matrix::from_vec(spec.n_per_domain, 2, data).expect("n×2 data"),
                y: Targets::Classes(labels),
            }
        })
        .collect();
    DomainDataset::new(Task::Classification { classes: spec.classes }, 2, domains)
}

/// Linear regression tasks that differ only in slope.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlopeRegression {
    pub slopes: Vec<f64>,
    pub n_per_domain: usize,
    pub dim: usize,
    pub noise: f64,
    /// Moves each domain's inputs by `shift · a_d · w`, so the feature set
    /// carries information about the slope. Zero keeps `x ~ U[-1, 1]^M`.
    #[serde(default)]
    pub covariate_shift: f64,
    pub seed: u64,
}

impl SlopeRegression {
    /// The fixed unit direction `w = (1, …, 1)/√M`.
    pub fn direction(&self) -> Vec<f64> {
        vec![1.0 / (self.dim as f64).sqrt(); self.dim]
    }
}

/// Domain `d` (id `d`): `y = a_d · w·x + ε`, `ε ~ N(0, σ²)`.
pub fn gen_domain_slope_regression(spec: &SlopeRegression) -> Result<DomainDataset> {
    if spec.slopes.len() < 2 {
        return Err(Error::Config("slope regression needs at least 2 domains".into()));
    }
    if spec.dim == 0 || spec.n_per_domain == 0 {
        return Err(Error::Config("dim and n_per_domain must be positive".into()));
    }
    if !(spec.noise >= 0.0 && spec.noise.is_finite()) {
        return Err(Error::Config(format!("noise {} must be finite and >= 0", spec.noise)));
    }
    let w = spec.direction();
    let mut rng = Rng::new(spec.seed);
    let domains = spec
        .slopes
        .iter()
        .enumerate()
        .map(|(d, &a)| {
            let mut data = Vec::with_capacity(spec.n_per_domain * spec.dim);
            let mut ys = Vec::with_capacity(spec.n_per_domain);
            for _ in 0..spec.n_per_domain {
                let x: Vec<f64> = w
                    .iter()
                    .map(|wi| rng.uniform(-1.0, 1.0) + spec.covariate_shift * a * wi)
                    .collect();
                let proj: f64 = x.iter().zip(&w).map(|(p, q)| p * q).sum();
                ys.push(a * proj + spec.noise * rng.normal());
                data.extend(x);
            }
            Domain {
                id: d as DomainId,
                x: Matrix::from_vec(spec.n_per_domain, spec.dim, data).expect("n×M data"),
                y: Targets::Real(ys),
            }
        })
        .collect();
    DomainDataset::new(Task::Regression, spec.dim, domains)
}
