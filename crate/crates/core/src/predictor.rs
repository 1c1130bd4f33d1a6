//! Domain-conditioned predictor `p(y | x, z)`.
//!
//! Output `c` is the inner product `f_c(x, z) = h(x) · g_c(z)` where `h` is
//! a ReLU feature stack of width `J` and `g_c(z) = tanh(W_c z + b_c)`.
//! Classification applies a softmax over the `C` outputs; regression uses
//! the single output as the mean of a unit-variance Gaussian.

use serde::{Deserialize, Serialize};

use crate::data::Task;
use crate::error::{Error, Result};
use crate::tensor::{
    dense_params, dense_params_mut, init_dense, log_sum_exp, softmax, BoundDense, Dense, Matrix, Parameters, Rng,
    Tape, Var,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictorParams {
    /// Feature stack `h`; ReLU after every layer. `J` is the last width.
    pub h: Vec<Dense>,
    /// All class heads side by side: columns `c·J .. (c+1)·J` hold `g_c`.
    pub g: Dense,
    pub task: Task,
}

impl PredictorParams {
    pub fn new(input: usize, hidden: &[usize], latent: usize, task: Task, rng: &mut Rng) -> Result<Self> {
        if hidden.is_empty() {
            return Err(Error::Config("predictor needs at least one hidden layer".into()));
        }
        if input == 0 || latent == 0 || hidden.contains(&0) || task.outputs() == 0 {
            return Err(Error::Config("predictor widths must be positive".into()));
        }
        let mut h = Vec::with_capacity(hidden.len());
        let mut width = input;
        for &w in hidden {
            h.push(Dense::new(width, w, rng));
            width = w;
        }
        let outputs = task.outputs();
        // each g_c is initialized as its own K→J layer
        let mut weight = Matrix::zeros(latent, outputs * width);
        for c in 0..outputs {
            let block = init_dense(latent, width, rng);
            for k in 0..latent {
                for j in 0..width {
                    weight.set(k, c * width + j, block.get(k, j));
                }
            }
        }
        Ok(PredictorParams {
            h,
            g: Dense {
                weight,
                bias: Matrix::zeros(1, outputs * width),
            },
            task,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.h[0].inputs()
    }

    pub fn latent_dim(&self) -> usize {
        self.g.inputs()
    }

    /// Feature width `J`.
    pub fn feature_dim(&self) -> usize {
        self.h.last().map_or(0, Dense::outputs)
    }

    pub fn outputs(&self) -> usize {
        self.task.outputs()
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundPredictor {
        BoundPredictor {
            h: self.h.iter().map(|d| d.bind(tape)).collect(),
            g: self.g.bind(tape),
            input_dim: self.input_dim(),
            latent_dim: self.latent_dim(),
            feature_dim: self.feature_dim(),
            outputs: self.outputs(),
        }
    }

    /// `h(X)` for a batch, `N×J`.
    pub fn features(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.input_dim() {
            return Err(Error::Shape {
                op: "features",
                lhs: x.shape(),
                rhs: (x.rows(), self.input_dim()),
            });
        }
        let mut h = x.clone();
        for layer in &self.h {
            h = layer.apply(&h)?.map(|v| v.max(0.0));
        }
        Ok(h)
    }

    /// `g(z)` as a `C×J` matrix.
    pub fn head_weights(&self, z: &[f64]) -> Result<Matrix> {
        if z.len() != self.latent_dim() {
            return Err(Error::Shape {
                op: "head_weights",
                lhs: (1, z.len()),
                rhs: (1, self.latent_dim()),
            });
        }
        let g = self.g.apply(&Matrix::row_vector(z))?.map(f64::tanh);
        Matrix::from_vec(self.outputs(), self.feature_dim(), g.into_vec())
    }

    /// Logits for a batch of precomputed features, `N×C`.
    pub fn logits_from_features(&self, features: &Matrix, z: &[f64]) -> Result<Matrix> {
        features.matmul_t(&self.head_weights(z)?)
    }

    /// `f_c(x, z)` for every class.
    pub fn logits(&self, x: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        let feats = self.features(&Matrix::row_vector(x))?;
        Ok(self.logits_from_features(&feats, z)?.into_vec())
    }

    /// `ln p(y | x, z)`; regression drops the Gaussian normalizer.
    pub fn log_likelihood(&self, x: &[f64], y: Label, z: &[f64]) -> Result<f64> {
        let f = self.logits(x, z)?;
        match (self.task, y) {
            (Task::Classification { classes }, Label::Class(c)) => {
                if c < 1 || c > classes {
                    return Err(Error::Label { label: c, classes });
                }
                Ok(f[c - 1] - log_sum_exp(&f))
            }
            (Task::Regression, Label::Real(t)) => Ok(-0.5 * (t - f[0]).powi(2)),
            _ => Err(Error::Contract(format!("label {y:?} does not fit task {:?}", self.task))),
        }
    }

    pub fn predict_given_z(&self, x: &[f64], z: &[f64]) -> Result<PredictiveDistribution> {
        let f = self.logits(x, z)?;
        Ok(self.distribution_from_logits(&f))
    }

    pub(crate) fn distribution_from_logits(&self, f: &[f64]) -> PredictiveDistribution {
        match self.task {
            Task::Classification { .. } => PredictiveDistribution::Classes(softmax(f)),
            Task::Regression => PredictiveDistribution::Mean(f[0]),
        }
    }
}

impl Parameters for PredictorParams {
    fn params(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::new();
        for (i, d) in self.h.iter().enumerate() {
            out.extend(dense_params(&format!("predictor.h.{i}"), d));
        }
        out.extend(dense_params("predictor.g", &self.g));
        out
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        let mut out = Vec::new();
        for (i, d) in self.h.iter_mut().enumerate() {
            out.extend(dense_params_mut(&format!("predictor.h.{i}"), d));
        }
        out.extend(dense_params_mut("predictor.g", &mut self.g));
        out
    }
}

/// A single supervised target.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Label {
    /// 1-based class.
    Class(usize),
    Real(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum PredictiveDistribution {
    /// Class probabilities, summing to one.
    Classes(Vec<f64>),
    /// Gaussian mean; the variance is fixed at one.
    Mean(f64),
}

impl PredictiveDistribution {
    /// Most probable 1-based class, ties to the lowest index.
    pub fn argmax(&self) -> Option<usize> {
        match self {
            PredictiveDistribution::Classes(p) => argmax(p).map(|i| i + 1),
            PredictiveDistribution::Mean(_) => None,
        }
    }

    pub fn probabilities(&self) -> Option<&[f64]> {
        match self {
            PredictiveDistribution::Classes(p) => Some(p),
            PredictiveDistribution::Mean(_) => None,
        }
    }

    pub fn mean(&self) -> Option<f64> {
        match self {
            PredictiveDistribution::Mean(m) => Some(*m),
            PredictiveDistribution::Classes(_) => None,
        }
    }
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// Predictor parameters placed on a tape, in [`Parameters`] order.
pub struct BoundPredictor {
    pub h: Vec<BoundDense>,
    pub g: BoundDense,
    input_dim: usize,
    latent_dim: usize,
    feature_dim: usize,
    outputs: usize,
}

impl BoundPredictor {
    pub fn vars(&self) -> Vec<Var> {
        self.h.iter().chain([&self.g]).flat_map(|d| d.vars()).collect()
    }

    /// `h(X)`, `N×J`.
    pub fn features(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let (n, m) = tape.value(x).shape();
        if m != self.input_dim {
            return Err(Error::Shape {
                op: "features",
                lhs: (n, m),
                rhs: (n, self.input_dim),
            });
        }
        let mut h = x;
        for layer in &self.h {
            let a = layer.forward(tape, h)?;
            h = tape.relu(a);
        }
        Ok(h)
    }

    /// `g(z)` reshaped to `C×J`; `z` is a `1×K` node.
    pub fn head_weights(&self, tape: &mut Tape, z: Var) -> Result<Var> {
        let shape = tape.value(z).shape();
        if shape != (1, self.latent_dim) {
            return Err(Error::Shape {
                op: "head_weights",
                lhs: shape,
                rhs: (1, self.latent_dim),
            });
        }
        let a = self.g.forward(tape, z)?;
        let t = tape.tanh(a);
        tape.reshape(t, self.outputs, self.feature_dim)
    }

    /// `N×C` logits from features and head weights.
    pub fn logits(&self, tape: &mut Tape, features: Var, heads: Var) -> Result<Var> {
        let ht = tape.transpose(heads);
        tape.matmul(features, ht)
    }

    /// `Σ_n ln p(y_n | x_n, z)` over a batch, as a `1×1` node.
    pub fn log_likelihood_sum(&self, tape: &mut Tape, logits: Var, targets: &TargetsRef<'_>) -> Result<Var> {
        match targets {
            TargetsRef::Classes(idx) => {
                let ls = tape.log_softmax(logits);
                let picked = tape.gather(ls, idx)?;
                tape.sum(picked)
            }
            TargetsRef::Real(ys) => {
                let y = tape.leaf(Matrix::from_vec(ys.len(), 1, ys.to_vec())?);
                let r = tape.sub(y, logits)?;
                let sq = tape.mul(r, r)?;
                let s = tape.sum(sq)?;
                Ok(tape.scale(s, -0.5))
            }
        }
    }
}

/// Borrowed batch targets: 0-based class indices or real values.
#[derive(Clone, Debug)]
pub enum TargetsRef<'a> {
    Classes(&'a [usize]),
    Real(&'a [f64]),
}
