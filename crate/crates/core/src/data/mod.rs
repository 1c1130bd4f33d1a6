//! Multi-domain datasets: the in-memory model, text ingestion, splitting,
//! normalization and synthetic domain families.

mod split;
mod synth;
mod text;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

pub use split::{split, SplitSpec};
pub use synth::{gen_domain_slope_regression, gen_rotated_gaussians, RotatedGaussians, SlopeRegression};
pub use text::{load_text, parse_text, save_text, to_text};

pub type DomainId = i64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Classification { classes: usize },
    Regression,
}

impl Task {
    /// Width of the predictor output: `C` for classification, 1 for regression.
    pub fn outputs(&self) -> usize {
        match self {
            Task::Classification { classes } => *classes,
            Task::Regression => 1,
        }
    }

    pub fn is_classification(&self) -> bool {
        matches!(self, Task::Classification { .. })
    }
}

/// Per-point targets. Class labels are 1-based, as in the text format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Targets {
    Classes(Vec<usize>),
    Real(Vec<f64>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes(v) => v.len(),
            Targets::Real(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, indices: &[usize]) -> Targets {
        match self {
            Targets::Classes(v) => Targets::Classes(indices.iter().map(|&i| v[i]).collect()),
            Targets::Real(v) => Targets::Real(indices.iter().map(|&i| v[i]).collect()),
        }
    }

    pub fn extend(&mut self, other: &Targets) -> Result<()> {
        match (self, other) {
            (Targets::Classes(a), Targets::Classes(b)) => a.extend_from_slice(b),
            (Targets::Real(a), Targets::Real(b)) => a.extend_from_slice(b),
            _ => return Err(Error::Schema("mixing class and real targets".into())),
        }
        Ok(())
    }

    /// 0-based class indices; `None` for real targets.
    pub fn class_indices(&self) -> Option<Vec<usize>> {
        match self {
            Targets::Classes(v) => Some(v.iter().map(|&c| c - 1).collect()),
            Targets::Real(_) => None,
        }
    }

    pub fn empty_like(&self) -> Targets {
        match self {
            Targets::Classes(_) => Targets::Classes(Vec::new()),
            Targets::Real(_) => Targets::Real(Vec::new()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub id: DomainId,
    pub x: Matrix,
    pub y: Targets,
}

impl Domain {
    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn subset(&self, indices: &[usize]) -> Domain {
        Domain {
            id: self.id,
            x: self.x.select_rows(indices),
            y: self.y.select(indices),
        }
    }
}

/// Labeled data grouped by domain, all sharing feature width and task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainDataset {
    task: Task,
    dim: usize,
    domains: Vec<Domain>,
}

impl DomainDataset {
    /// Validates and wraps `domains`. Order is preserved.
    pub fn new(task: Task, dim: usize, domains: Vec<Domain>) -> Result<Self> {
        if let Task::Classification { classes } = task {
            if classes < 1 {
                return Err(Error::Schema("classification needs C >= 1".into()));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for d in &domains {
            if !seen.insert(d.id) {
                return Err(Error::Schema(format!("duplicate domain id {}", d.id)));
            }
            if d.x.rows() == 0 {
                return Err(Error::EmptyDomain(format!("domain {} has no points", d.id)));
            }
            if d.x.cols() != dim {
                return Err(Error::Schema(format!(
                    "domain {} has feature width {}, expected M={dim}",
                    d.id,
                    d.x.cols()
                )));
            }
            if d.y.len() != d.x.rows() {
                return Err(Error::Schema(format!(
                    "domain {}: {} targets for {} points",
                    d.id,
                    d.y.len(),
                    d.x.rows()
                )));
            }
            if !d.x.is_finite() {
                return Err(Error::Schema(format!("domain {} has non-finite features", d.id)));
            }
            match (&task, &d.y) {
                (Task::Classification { classes }, Targets::Classes(ys)) => {
                    if let Some(&bad) = ys.iter().find(|&&y| y < 1 || y > *classes) {
                        return Err(Error::Label { label: bad, classes: *classes });
                    }
                }
                (Task::Regression, Targets::Real(ys)) => {
                    if ys.iter().any(|y| !y.is_finite()) {
                        return Err(Error::Schema(format!("domain {} has non-finite targets", d.id)));
                    }
                }
                _ => {
                    return Err(Error::Schema(format!(
                        "domain {} targets do not match task {:?}",
                        d.id, task
                    )))
                }
            }
        }
        Ok(DomainDataset { task, dim, domains })
    }

    pub fn task(&self) -> Task {
        self.task
    }

    /// Feature width `M`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn domains(&self) -> &[Domain] {
        &self.domains
    }

    pub fn domain_count(&self) -> usize {
        self.domains.len()
    }

    pub fn ids(&self) -> Vec<DomainId> {
        self.domains.iter().map(|d| d.id).collect()
    }

    pub fn domain(&self, id: DomainId) -> Option<&Domain> {
        self.domains.iter().find(|d| d.id == id)
    }

    pub fn total_points(&self) -> usize {
        self.domains.iter().map(Domain::len).sum()
    }

    /// Keeps the listed domains, in dataset order.
    pub fn restrict(&self, ids: &[DomainId]) -> DomainDataset {
        DomainDataset {
            task: self.task,
            dim: self.dim,
            domains: self.domains.iter().filter(|d| ids.contains(&d.id)).cloned().collect(),
        }
    }

    pub fn domains_mut(&mut self) -> &mut [Domain] {
        &mut self.domains
    }

    /// All points with domain identity removed.
    pub fn pooled(&self) -> PooledSamples {
        let rows: usize = self.total_points();
        let mut data = Vec::with_capacity(rows * self.dim);
        let mut y = match self.task {
            Task::Classification { .. } => Targets::Classes(Vec::with_capacity(rows)),
            Task::Regression => Targets::Real(Vec::with_capacity(rows)),
        };
        for d in &self.domains {
            data.extend_from_slice(d.x.data());
            y.extend(&d.y).expect("validated on construction");
        }
        PooledSamples {
            task: self.task,
            x: Matrix::from_vec(rows, self.dim, data).expect("row widths validated"),
            y,
        }
    }

    /// Scales every feature vector to unit Euclidean norm; zero rows stay zero.
    pub fn l2_normalize(&self) -> DomainDataset {
        let mut out = self.clone();
        for d in &mut out.domains {
            let cols = d.x.cols().max(1);
            for row in d.x.data_mut().chunks_exact_mut(cols) {
                let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 0.0 {
                    for v in row.iter_mut() {
                        *v /= norm;
                    }
                }
            }
        }
        out
    }
}

/// Id-stripped view of a dataset, the only input the baseline sees.
#[derive(Clone, Debug, PartialEq)]
pub struct PooledSamples {
    pub task: Task,
    pub x: Matrix,
    pub y: Targets,
}

impl PooledSamples {
    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_domains() -> DomainDataset {
        DomainDataset::new(
            Task::Classification { classes: 2 },
            2,
            vec![
                Domain {
                    id: 3,
                    x: Matrix::from_rows(&[[3.0, 4.0], [0.0, 0.0]]).unwrap(),
                    y: Targets::Classes(vec![1, 2]),
                },
                Domain {
                    id: 1,
                    x: Matrix::from_rows(&[[1.0, 0.0]]).unwrap(),
                    y: Targets::Classes(vec![2]),
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn l2_normalize_rows() {
        let ds = two_domains().l2_normalize();
        assert_eq!(ds.domains()[0].x.row(0), &[0.6, 0.8]);
        assert_eq!(ds.domains()[0].x.row(1), &[0.0, 0.0]);
        assert_eq!(ds.domains()[1].x.row(0), &[1.0, 0.0]);
    }

    #[test]
    fn rejects_bad_labels_and_widths() {
        let bad_label = DomainDataset::new(
            Task::Classification { classes: 2 },
            1,
            vec![Domain {
                id: 0,
                x: Matrix::from_rows(&[[1.0]]).unwrap(),
                y: Targets::Classes(vec![3]),
            }],
        );
        assert!(matches!(bad_label, Err(Error::Label { label: 3, classes: 2 })));
        let bad_width = DomainDataset::new(
            Task::Regression,
            2,
            vec![Domain {
                id: 0,
                x: Matrix::from_rows(&[[1.0]]).unwrap(),
                y: Targets::Real(vec![0.0]),
            }],
        );
        assert!(matches!(bad_width, Err(Error::Schema(_))));
    }

    #[test]
    fn pooled_view_keeps_all_points() {
        let p = two_domains().pooled();
        assert_eq!(p.len(), 3);
        assert_eq!(p.y, Targets::Classes(vec![1, 2, 2]));
        assert_eq!(p.x.row(2), &[1.0, 0.0]);
    }

    #[test]
    fn preserves_domain_order() {
        assert_eq!(two_domains().ids(), vec![3, 1]);
    }
}
