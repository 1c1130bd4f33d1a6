use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::tensor::{Matrix, Rng, Tape, Var};

/// Glorot-uniform matrix: entries uniform in `±sqrt(6 / (rows + cols))`.
pub fn init_dense(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    let bound = glorot_bound(rows, cols);
    let data = (0..rows * cols).map(|_| rng.uniform(-bound, bound)).collect();
    Matrix::from_vec(rows, cols, data).expect("length matches shape")
}

pub fn glorot_bound(rows: usize, cols: usize) -> f64 {
    (6.0 / (rows + cols) as f64).sqrt()
}

/// Affine layer `x·W + b` with `W: in×out` and `b: 1×out`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Matrix,
}

impl Dense {
    /// Glorot-uniform weights, zero bias.
    pub fn new(inputs: usize, outputs: usize, rng: &mut Rng) -> Self {
        Dense {
            weight: init_dense(inputs, outputs, rng),
            bias: Matrix::zeros(1, outputs),
        }
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            weight: Matrix::zeros(inputs, outputs),
            bias: Matrix::zeros(1, outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.rows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.cols()
    }

    /// Tape-free `x·W + b`.
    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        let mut out = x.matmul(&self.weight)?;
        let cols = out.cols();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v += self.bias.data()[i % cols];
        }
        Ok(out)
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundDense {
        BoundDense {
            weight: tape.leaf(self.weight.clone()),
            bias: tape.leaf(self.bias.clone()),
        }
    }
}

/// A [`Dense`] layer whose parameters live on a tape.
#[derive(Clone, Copy, Debug)]
pub struct BoundDense {
    pub weight: Var,
    pub bias: Var,
}

impl BoundDense {
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let h = tape.matmul(x, self.weight)?;
        tape.add_row(h, self.bias)
    }

    pub fn vars(&self) -> [Var; 2] {
        [self.weight, self.bias]
    }
}

/// Named access to every trainable matrix, in a fixed order.
pub trait Parameters {
    fn params(&self) -> Vec<(String, &Matrix)>;
    fn params_mut(&mut self) -> Vec<(String, &mut Matrix)>;

    fn param_count(&self) -> usize {
        self.params().iter().map(|(_, m)| m.len()).sum()
    }
}

pub(crate) fn dense_params<'a>(prefix: &str, d: &'a Dense) -> [(String, &'a Matrix); 2] {
    [
        (format!("{prefix}.weight"), &d.weight),
        (format!("{prefix}.bias"), &d.bias),
    ]
}

pub(crate) fn dense_params_mut<'a>(prefix: &str, d: &'a mut Dense) -> [(String, &'a mut Matrix); 2] {
    [
        (format!("{prefix}.weight"), &mut d.weight),
        (format!("{prefix}.bias"), &mut d.bias),
    ]
}
