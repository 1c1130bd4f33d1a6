//! Reverse-mode differentiation over a linear tape.
//!
//! Every operation appends a node holding its forward value and a record of
//! its inputs. [`Tape::backward`] walks the tape once in reverse, so the
//! gradient reaching each node is complete before it is propagated further.
//! A tape supports one backward pass; build a fresh tape per step.

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Unary {
    Relu,
    Tanh,
    Exp,
    Log,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Binary {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduce {
    Sum,
    Mean,
    /// Column-wise mean over rows: `N×H → 1×H`.
    RowMean,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Binary(Binary, Var, Var),
    /// `N×C + 1×C`, the row added to every row.
    AddRow(Var, Var),
    Scale(Var, f64),
    Shift(Var),
    Unary(Unary, Var),
    Clamp(Var, f64, f64),
    Reduce(Reduce, Var),
    Transpose(Var),
    Reshape(Var),
    LogSoftmax(Var),
    Gather(Var, Vec<usize>),
}

struct Node {
    value: Matrix,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Option<Vec<Matrix>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Adds an input node. Parameters and data are both leaves; only the
    /// gradients the caller reads back matter.
    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    /// Gradient of the loss passed to [`Tape::backward`] w.r.t. `v`.
    pub fn grad(&self, v: Var) -> Option<&Matrix> {
        self.grads.as_ref().map(|g| &g[v.0])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    pub fn binary(&mut self, kind: Binary, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        let value = match kind {
            Binary::Add => x.zip_map(y, "add", |p, q| p + q)?,
            Binary::Sub => x.zip_map(y, "sub", |p, q| p - q)?,
            Binary::Mul => x.zip_map(y, "mul", |p, q| p * q)?,
        };
        Ok(self.push(value, Op::Binary(kind, a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Mul, a, b)
    }

    /// Broadcasts the `1×C` node `row` over every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (x, r) = (self.value(a), self.value(row));
        if r.rows() != 1 || r.cols() != x.cols() {
            return Err(Error::Shape {
                op: "add_row",
                lhs: x.shape(),
                rhs: r.shape(),
            });
        }
        let mut value = x.clone();
        let cols = x.cols();
        for (i, v) in value.data_mut().iter_mut().enumerate() {
            *v += r.data()[i % cols];
        }
        Ok(self.push(value, Op::AddRow(a, row)))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let value = self.value(a).map(|v| v * k);
        self.push(value, Op::Scale(a, k))
    }

    /// Adds the constant `k` to every entry.
    pub fn shift(&mut self, a: Var, k: f64) -> Var {
        let value = self.value(a).map(|v| v + k);
        self.push(value, Op::Shift(a))
    }

    pub fn unary(&mut self, kind: Unary, a: Var) -> Result<Var> {
        let x = self.value(a);
        let value = match kind {
            Unary::Relu => x.map(|v| v.max(0.0)),
            Unary::Tanh => x.map(f64::tanh),
            Unary::Exp => x.map(f64::exp),
            Unary::Log => {
                if let Some(bad) = x.data().iter().find(|&&v| v <= 0.0 || v.is_nan()) {
                    return Err(Error::Domain {
                        op: "log",
                        detail: format!("non-positive entry {bad}"),
                    });
                }
                x.map(f64::ln)
            }
        };
        Ok(self.push(value, Op::Unary(kind, a)))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(Unary::Relu, a).expect("relu is total")
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(Unary::Tanh, a).expect("tanh is total")
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(Unary::Exp, a).expect("exp is total")
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Log, a)
    }

    /// Clamps entries into `[lo, hi]`; the gradient is zero where clamping bites.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let value = self.value(a).map(|v| v.clamp(lo, hi));
        self.push(value, Op::Clamp(a, lo, hi))
    }

    pub fn reduce(&mut self, kind: Reduce, a: Var) -> Result<Var> {
        let x = self.value(a);
        if x.is_empty() {
            return Err(Error::EmptyReduction(match kind {
                Reduce::Sum => "sum",
                Reduce::Mean => "mean",
                Reduce::RowMean => "row_mean",
            }));
        }
        let value = match kind {
            Reduce::Sum => Matrix::scalar(x.sum()),
            Reduce::Mean => Matrix::scalar(x.sum() / x.len() as f64),
            Reduce::RowMean => x.row_mean()?,
        };
        Ok(self.push(value, Op::Reduce(kind, a)))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.reduce(Reduce::Sum, a)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        self.reduce(Reduce::Mean, a)
    }

    pub fn row_mean(&mut self, a: Var) -> Result<Var> {
        self.reduce(Reduce::RowMean, a)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        self.push(value, Op::Transpose(a))
    }

    /// Reinterprets the row-major data with a new shape.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let x = self.value(a);
        if x.len() != rows * cols {
            return Err(Error::Shape {
                op: "reshape",
                lhs: x.shape(),
                rhs: (rows, cols),
            });
        }
        let value = Matrix::from_vec(rows, cols, x.data().to_vec())?;
        Ok(self.push(value, Op::Reshape(a)))
    }

    /// Row-wise log-softmax, stabilized by subtracting each row's maximum.
    pub fn log_softmax(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut value = x.clone();
        let cols = x.cols();
        for row in value.data_mut().chunks_exact_mut(cols.max(1)) {
            let lse = log_sum_exp(row);
            for v in row.iter_mut() {
                *v -= lse;
            }
        }
        self.push(value, Op::LogSoftmax(a))
    }

    /// Picks column `cols[i]` from row `i`, giving an `N×1` node.
    pub fn gather(&mut self, a: Var, cols: &[usize]) -> Result<Var> {
        let x = self.value(a);
        if cols.len() != x.rows() {
            return Err(Error::Shape {
                op: "gather",
                lhs: x.shape(),
                rhs: (cols.len(), 1),
            });
        }
        if let Some(&bad) = cols.iter().find(|&&c| c >= x.cols()) {
            return Err(Error::Label {
                label: bad + 1,
                classes: x.cols(),
            });
        }
        let data = cols.iter().enumerate().map(|(r, &c)| x.get(r, c)).collect();
        let value = Matrix::from_vec(cols.len(), 1, data)?;
        Ok(self.push(value, Op::Gather(a, cols.to_vec())))
    }

    /// Accumulates `∂loss/∂node` into every node reachable from `loss`.
    ///
    /// Gradients start from zero. A second call on the same tape is rejected.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.grads.is_some() {
            return Err(Error::Contract("backward already ran on this tape".into()));
        }
        let shape = self.value(loss).shape();
        if shape != (1, 1) {
            return Err(Error::Contract(format!(
                "backward needs a 1×1 loss, got {}×{}",
                shape.0, shape.1
            )));
        }
        let mut grads: Vec<Matrix> = self
            .nodes
            .iter()
            .map(|n| Matrix::zeros(n.value.rows(), n.value.cols()))
            .collect();
        grads[loss.0] = Matrix::scalar(1.0);

        for i in (0..=loss.0).rev() {
            if grads[i].data().iter().all(|&g| g == 0.0) {
                continue;
            }
            let g = std::mem::replace(&mut grads[i], Matrix::zeros(0, 0));
            self.propagate(i, &g, &mut grads)?;
            grads[i] = g;
        }
        self.grads = Some(grads);
        Ok(())
    }

    fn propagate(&self, i: usize, g: &Matrix, grads: &mut [Matrix]) -> Result<()> {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let da = g.matmul_t(self.value(*b))?;
                let db = self.value(*a).t_matmul(g)?;
                grads[a.0].add_assign(&da);
                grads[b.0].add_assign(&db);
            }
            Op::Binary(kind, a, b) => match kind {
                Binary::Add => {
                    grads[a.0].add_assign(g);
                    grads[b.0].add_assign(g);
                }
                Binary::Sub => {
                    grads[a.0].add_assign(g);
                    grads[b.0].add_assign(&g.map(|v| -v));
                }
                Binary::Mul => {
                    let da = g.zip_map(self.value(*b), "mul", |p, q| p * q)?;
                    let db = g.zip_map(self.value(*a), "mul", |p, q| p * q)?;
                    grads[a.0].add_assign(&da);
                    grads[b.0].add_assign(&db);
                }
            },
            Op::AddRow(a, row) => {
                grads[a.0].add_assign(g);
                let cols = g.cols();
                let mut dr = vec![0.0; cols];
                for r in g.iter_rows() {
                    for (d, v) in dr.iter_mut().zip(r) {
                        *d += v;
                    }
                }
                grads[row.0].add_assign(&Matrix::row_vector(&dr));
            }
            Op::Scale(a, k) => grads[a.0].add_assign(&g.map(|v| v * k)),
            Op::Shift(a) => grads[a.0].add_assign(g),
            Op::Unary(kind, a) => {
                let x = self.value(*a);
                let y = &node.value;
                let local = match kind {
                    Unary::Relu => x.map(|v| if v > 0.0 { 1.0 } else { 0.0 }),
                    Unary::Tanh => y.map(|t| 1.0 - t * t),
                    Unary::Exp => y.clone(),
                    Unary::Log => x.map(|v| 1.0 / v),
                };
                grads[a.0].add_assign(&g.zip_map(&local, "unary", |p, q| p * q)?);
            }
            Op::Clamp(a, lo, hi) => {
                let x = self.value(*a);
                let d = g.zip_map(x, "clamp", |p, v| if v < *lo || v > *hi { 0.0 } else { p })?;
                grads[a.0].add_assign(&d);
            }
            Op::Reduce(kind, a) => {
                let x = self.value(*a);
                let d = match kind {
                    Reduce::Sum => Matrix::filled(x.rows(), x.cols(), g.data()[0]),
                    Reduce::Mean => Matrix::filled(x.rows(), x.cols(), g.data()[0] / x.len() as f64),
                    Reduce::RowMean => {
                        let inv = 1.0 / x.rows() as f64;
                        let row: Vec<f64> = g.data().iter().map(|v| v * inv).collect();
                        let mut d = Matrix::zeros(x.rows(), x.cols());
                        for r in d.data_mut().chunks_exact_mut(x.cols().max(1)) {
                            r.copy_from_slice(&row);
                        }
                        d
                    }
                };
                grads[a.0].add_assign(&d);
            }
            Op::Transpose(a) => grads[a.0].add_assign(&g.transpose()),
            Op::Reshape(a) => {
                let (r, c) = self.value(*a).shape();
                grads[a.0].add_assign(&Matrix::from_vec(r, c, g.data().to_vec())?);
            }
            Op::LogSoftmax(a) => {
                // d/dx_j = g_j - softmax_j * Σ_k g_k, row by row
                let y = &node.value;
                let cols = y.cols();
                let mut d = Matrix::zeros(y.rows(), cols);
                for r in 0..y.rows() {
                    let g_row = g.row(r);
                    let total: f64 = g_row.iter().sum();
                    for c in 0..cols {
                        d.set(r, c, g_row[c] - y.get(r, c).exp() * total);
                    }
                }
                grads[a.0].add_assign(&d);
            }
            Op::Gather(a, cols) => {
                let (r, c) = self.value(*a).shape();
                let mut d = Matrix::zeros(r, c);
                for (row, &col) in cols.iter().enumerate() {
                    d.set(row, col, g.get(row, 0));
                }
                grads[a.0].add_assign(&d);
            }
        }
        Ok(())
    }
}

/// `ln Σ exp(v)` with max-subtraction.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Numerically stable softmax of one row.
pub fn softmax(values: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(values);
    values.iter().map(|v| (v - lse).exp()).collect()
}
