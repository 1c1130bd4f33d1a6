//! Versioned text container for trained encoder and predictor parameters.
//!
//! ```text
//! zsda-model 1
//! task=classification C=4
//! matrix encoder.eta.0.weight 2 100
//! <row 0 values, space separated>
//! ...
//! end
//! ```
//!
//! Each `matrix <name> <rows> <cols>` header is followed by `rows` lines of
//! `cols` reals written in shortest round-trip form, so a save/load cycle is
//! bit-exact. Names follow [`crate::tensor::Parameters`]. Layer counts are
//! recovered from the names present.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::data::Task;
use crate::encoder::EncoderParams;
use crate::error::{Error, Result};
use crate::predictor::PredictorParams;
use crate::tensor::{Dense, Matrix, Parameters};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "zsda-model";

pub fn model_to_text(enc: &EncoderParams, pred: &PredictorParams) -> String {
    let mut out = format!("{MAGIC} {FORMAT_VERSION}\n");
    match pred.task {
        Task::Classification { classes } => {
            let _ = writeln!(out, "task=classification C={classes}");
        }
        Task::Regression => out.push_str("task=regression\n"),
    }
    for (name, m) in enc.params().into_iter().chain(pred.params()) {
        let _ = writeln!(out, "matrix {name} {} {}", m.rows(), m.cols());
        for row in m.iter_rows() {
            let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
    }
    out.push_str("end\n");
    out
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn parse_task(line: &str, no: usize) -> Result<Task> {
    let mut task = None;
    let mut classes = None;
    for tok in line.split_whitespace() {
        match tok.split_once('=') {
            Some(("task", v)) => task = Some(v),
            Some(("C", v)) => classes = Some(v.parse::<usize>().map_err(|_| parse_err(no, "C is not an integer"))?),
            _ => return Err(parse_err(no, format!("unexpected task token `{tok}`"))),
        }
    }
    match (task, classes) {
        (Some("classification"), Some(c)) if c > 0 => Ok(Task::Classification { classes: c }),
        (Some("regression"), None) => Ok(Task::Regression),
        _ => Err(parse_err(no, "task line must be `task=classification C=<n>` or `task=regression`")),
    }
}

pub fn model_from_text(text: &str) -> Result<(EncoderParams, PredictorParams)> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let (no, head) = lines.next().ok_or_else(|| parse_err(1, "empty model file"))?;
    let version = head
        .strip_prefix(MAGIC)
        .map(str::trim)
        .ok_or_else(|| parse_err(no, format!("missing `{MAGIC}` header")))?;
    if version != FORMAT_VERSION.to_string() {
        return Err(parse_err(no, format!("unsupported model format version `{version}`")));
    }
    let (no, task_line) = lines.next().ok_or_else(|| parse_err(no + 1, "missing task line"))?;
    let task = parse_task(task_line, no)?;

    let mut mats: HashMap<String, Matrix> = HashMap::new();
    let mut ended = false;
    while let Some((no, line)) = lines.next() {
        if line == "end" {
            ended = true;
            break;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        let [kw, name, r, c] = parts[..] else {
            return Err(parse_err(no, "expected `matrix <name> <rows> <cols>`"));
        };
        if kw != "matrix" {
            return Err(parse_err(no, format!("unexpected keyword `{kw}`")));
        }
        let rows: usize = r.parse().map_err(|_| parse_err(no, "rows is not an integer"))?;
        let cols: usize = c.parse().map_err(|_| parse_err(no, "cols is not an integer"))?;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (rno, row) = lines.next().ok_or_else(|| parse_err(no, format!("matrix `{name}` is truncated")))?;
            let before = data.len();
            for v in row.split_whitespace() {
                data.push(v.parse::<f64>().map_err(|_| parse_err(rno, format!("`{v}` is not a real number")))?);
            }
            if data.len() - before != cols {
                return Err(parse_err(rno, format!("expected {cols} values in `{name}`")));
            }
        }
        if mats.insert(name.to_string(), Matrix::from_vec(rows, cols, data)?).is_some() {
            return Err(parse_err(no, format!("duplicate matrix `{name}`")));
        }
    }
    if !ended {
        return Err(parse_err(text.lines().count(), "missing `end`"));
    }

    let mut take_dense = |prefix: &str| -> Result<Option<Dense>> {
        let w = mats.remove(&format!("{prefix}.weight"));
        let b = mats.remove(&format!("{prefix}.bias"));
        match (w, b) {
            (None, None) => Ok(None),
            (Some(weight), Some(bias)) => {
                if bias.rows() != 1 || bias.cols() != weight.cols() {
                    return Err(Error::Schema(format!("`{prefix}` bias does not match its weight")));
                }
                Ok(Some(Dense { weight, bias }))
            }
            _ => Err(Error::Schema(format!("`{prefix}` needs both weight and bias"))),
        }
    };
    let mut stack = |prefix: &str| -> Result<Vec<Dense>> {
        let mut out = Vec::new();
        while let Some(d) = take_dense(&format!("{prefix}.{}", out.len()))? {
            out.push(d);
        }
        Ok(out)
    };
    let eta = stack("encoder.eta")?;
    let h = stack("predictor.h")?;
    let need = |d: Option<Dense>, name: &str| d.ok_or_else(|| Error::Schema(format!("missing `{name}`")));
    let rho_mu = need(take_dense("encoder.rho_mu")?, "encoder.rho_mu")?;
    let rho_logvar = need(take_dense("encoder.rho_logvar")?, "encoder.rho_logvar")?;
    let g = need(take_dense("predictor.g")?, "predictor.g")?;
    if let Some(extra) = mats.keys().next() {
        return Err(Error::Schema(format!("unexpected matrix `{extra}`")));
    }
    if eta.is_empty() || h.is_empty() {
        return Err(Error::Schema("encoder and predictor need at least one hidden layer".into()));
    }
    let chained = |layers: &[Dense]| layers.windows(2).all(|w| w[0].outputs() == w[1].inputs());
    let enc = EncoderParams { eta, rho_mu, rho_logvar };
    let pred = PredictorParams { h, g, task };
    let width = enc.eta.last().map(Dense::outputs).unwrap_or(0);
    let j = pred.feature_dim();
    let ok = chained(&enc.eta)
        && chained(&pred.h)
        && enc.rho_mu.inputs() == width
        && enc.rho_logvar.inputs() == width
        && enc.rho_logvar.outputs() == enc.rho_mu.outputs()
        && enc.input_dim() == pred.input_dim()
        && pred.g.inputs() == enc.latent_dim()
        && pred.g.outputs() == task.outputs() * j;
    if !ok {
        return Err(Error::Schema("layer shapes are inconsistent".into()));
    }
    Ok((enc, pred))
}

pub fn save_model(enc: &EncoderParams, pred: &PredictorParams, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, model_to_text(enc, pred))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(EncoderParams, PredictorParams)> {
    model_from_text(&std::fs::read_to_string(path)?)
}
