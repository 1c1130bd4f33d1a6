use serde::{Deserialize, Serialize};

use super::{DomainDataset, DomainId};
use crate::error::{Error, Result};
use crate::tensor::Rng;

/// Which domains are held out, and how source domains divide into
/// train and validation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub targets: Vec<DomainId>,
    pub train_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn hold_out(targets: Vec<DomainId>, seed: u64) -> Self {
        SplitSpec {
            targets,
            train_fraction: 0.8,
            seed,
        }
    }
}

/// Splits into `(train, val, test)`.
///
/// `test` holds every point of the target domains. Each source domain is
/// shuffled with the spec's seed and cut at `round(fraction · N_d)`.
pub fn split(ds: &DomainDataset, spec: &SplitSpec) -> Result<(DomainDataset, DomainDataset, DomainDataset)> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::Split(format!(
            "train fraction {} is outside (0, 1)",
            spec.train_fraction
        )));
    }
    for t in &spec.targets {
        if ds.domain(*t).is_none() {
            return Err(Error::Split(format!("target domain {t} is not in the dataset")));
        }
    }
    let source_ids: Vec<DomainId> = ds.ids().into_iter().filter(|id| !spec.targets.contains(id)).collect();

    let mut rng = Rng::new(spec.seed);
    let mut train = Vec::with_capacity(source_ids.len());
    let mut val = Vec::with_capacity(source_ids.len());
    for d in ds.domains().iter().filter(|d| source_ids.contains(&d.id)) {
        let n = d.len();
        let n_train = (spec.train_fraction * n as f64).round() as usize;
        if n_train == 0 || n_train == n {
            return Err(Error::Split(format!(
                "fraction {} leaves an empty side for domain {} (N={n})",
                spec.train_fraction, d.id
            )));
        }
        let perm = rng.permutation(n);
        let mut train_idx = perm[..n_train].to_vec();
        let mut val_idx = perm[n_train..].to_vec();
        train_idx.sort_unstable();
        val_idx.sort_unstable();
        train.push(d.subset(&train_idx));
        val.push(d.subset(&val_idx));
    }
    Ok((
        DomainDataset::new(ds.task(), ds.dim(), train)?,
        DomainDataset::new(ds.task(), ds.dim(), val)?,
        ds.restrict(&spec.targets),
    ))
}
