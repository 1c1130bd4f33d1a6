//! Line-oriented dataset format.
//!
//! ```text
//! # comment
//! task=classification C=10 M=256
//! <domain-id>,<label>,<x1>,...,<xM>
//! ```
//!
//! Regression files use `task=regression M=<int>` and real labels. Rows may
//! interleave domains; domains keep their order of first appearance.

use std::fmt::Write as _;
use std::path::Path;

use super::{Domain, DomainDataset, DomainId, Targets, Task};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

pub fn load_text(path: impl AsRef<Path>) -> Result<DomainDataset> {
    let text = std::fs::read_to_string(path)?;
    parse_text(&text)
}

fn parse_header(line: &str, line_no: usize) -> Result<(Task, usize)> {
    let mut task = None;
    let mut classes = None;
    let mut dim = None;
    for token in line.split_whitespace() {
        let (key, value) = token.split_once('=').ok_or_else(|| Error::Parse {
            line: line_no,
            msg: format!("header token `{token}` is not key=value"),
        })?;
        let parse_count = |v: &str| {
            v.parse::<usize>().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("`{key}` must be a non-negative integer, got `{v}`"),
            })
        };
        match key {
            "task" => task = Some(value.to_string()),
            "C" => classes = Some(parse_count(value)?),
            "M" => dim = Some(parse_count(value)?),
            _ => {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("unknown header key `{key}`"),
                })
            }
        }
    }
    let dim = dim.ok_or_else(|| Error::Parse {
        line: line_no,
        msg: "header is missing M".into(),
    })?;
    if dim == 0 {
        return Err(Error::Parse {
            line: line_no,
            msg: "M must be at least 1".into(),
        });
    }
    let task = match task.as_deref() {
        Some("classification") => {
            let classes = classes.ok_or_else(|| Error::Parse {
                line: line_no,
                msg: "classification header is missing C".into(),
            })?;
            if classes == 0 {
                return Err(Error::Parse {
                    line: line_no,
                    msg: "C must be at least 1".into(),
                });
            }
            Task::Classification { classes }
        }
        Some("regression") => {
            if classes.is_some() {
                return Err(Error::Parse {
                    line: line_no,
                    msg: "regression header must not set C".into(),
                });
            }
            Task::Regression
        }
        Some(other) => {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("unknown task `{other}`"),
            })
        }
        None => {
            return Err(Error::Parse {
                line: line_no,
                msg: "header is missing task".into(),
            })
        }
    };
    Ok((task, dim))
}

struct Accum {
    id: DomainId,
    features: Vec<f64>,
    classes: Vec<usize>,
    reals: Vec<f64>,
}

pub fn parse_text(text: &str) -> Result<DomainDataset> {
    let mut header = None;
    let mut accs: Vec<Accum> = Vec::new();
    let mut index = std::collections::HashMap::new();

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((task, dim)) = header else {
            header = Some(parse_header(line, line_no)?);
            continue;
        };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != dim + 2 {
            return Err(Error::Schema(format!(
                "line {line_no}: expected {} fields (id, label, M={dim} features), found {}",
                dim + 2,
                fields.len()
            )));
        }
        let bad = |msg: String| Error::Parse { line: line_no, msg };
        let id: DomainId = fields[0]
            .parse()
            .map_err(|_| bad(format!("domain id `{}` is not an integer", fields[0])))?;
        let slot = *index.entry(id).or_insert_with(|| {
            accs.push(Accum {
                id,
                features: Vec::new(),
                classes: Vec::new(),
                reals: Vec::new(),
            });
            accs.len() - 1
        });
        let acc = &mut accs[slot];
        match task {
            Task::Classification { classes } => {
                let label: usize = fields[1]
                    .parse()
                    .map_err(|_| bad(format!("class label `{}` is not a positive integer", fields[1])))?;
                if label < 1 || label > classes {
                    return Err(bad(format!("class label {label} outside 1..={classes}")));
                }
                acc.classes.push(label);
            }
            Task::Regression => {
                let y: f64 = fields[1]
                    .parse()
                    .map_err(|_| bad(format!("label `{}` is not a real number", fields[1])))?;
                if !y.is_finite() {
                    return Err(bad("label is not finite".into()));
                }
                acc.reals.push(y);
            }
        }
        for f in &fields[2..] {
            let v: f64 = f.parse().map_err(|_| bad(format!("feature `{f}` is not a real number")))?;
            if !v.is_finite() {
                return Err(bad(format!("feature `{f}` is not finite")));
            }
            acc.features.push(v);
        }
    }

    let (task, dim) = header.ok_or_else(|| Error::Parse {
        line: 1,
        msg: "missing header line".into(),
    })?;
    let domains = accs
        .into_iter()
        .map(|a| {
            let rows = a.features.len() / dim;
            Ok(Domain {
                id: a.id,
                x: Matrix::from_vec(rows, dim, a.features)?,
                y: match task {
                    Task::Classification { .. } => Targets::Classes(a.classes),
                    Task::Regression => Targets::Real(a.reals),
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    DomainDataset::new(task, dim, domains)
}

/// Renders the dataset; reals use the shortest representation that parses
/// back to the same bits.
pub fn to_text(ds: &DomainDataset) -> String {
    let mut out = String::new();
    match ds.task() {
        Task::Classification { classes } => {
            let _ = writeln!(out, "task=classification C={classes} M={}", ds.dim());
        }
        Task::Regression => {
            let _ = writeln!(out, "task=regression M={}", ds.dim());
        }
    }
    for d in ds.domains() {
        for (n, row) in d.x.iter_rows().enumerate() {
            let _ = write!(out, "{},", d.id);
            match &d.y {
                Targets::Classes(ys) => {
                    let _ = write!(out, "{}", ys[n]);
                }
                Targets::Real(ys) => {
                    let _ = write!(out, "{:?}", ys[n]);
                }
            }
            for v in row {
                let _ = write!(out, ",{v:?}");
            }
            out.push('\n');
        }
    }
    out
}

pub fn save_text(ds: &DomainDataset, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_text(ds))?;
    Ok(())
}
