use std::fs;
use std::io::Write;
use std::path::Path;

use super::{DatasetMeta, PairedDataset, SynthError, TMode};
use crate::adcore::Tensor;

/// Both domains are two-dimensional.
pub const DATA_DIM: usize = 2;

const HEADER: [&str; 4] = ["x1", "x2", "y1", "y2"];

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// CSV with header `x1,x2,y1,y2`; values carry 17 significant digits so
/// reading back is exact.
pub fn write_dataset(data: &PairedDataset, path: &Path) -> Result<(), SynthError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(HEADER)?;
    for i in 0..data.len() {
        let x = data.x.row_slice(i);
        let y = data.y.row_slice(i);
        w.write_record([fmt(x[0]), fmt(x[1]), fmt(y[0]), fmt(y[1])])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<PairedDataset, SynthError> {
    let bad = |reason: String| SynthError::Format {
        path: path.display().to_string(),
        reason,
    };
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != HEADER {
        return Err(bad(format!("expected header x1,x2,y1,y2, found {header:?}")));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != 4 {
            return Err(bad(format!("row {} has {} fields", line + 1, rec.len())));
        }
        let mut vals = [0.0; 4];
        for (v, field) in vals.iter_mut().zip(rec.iter()) {
            *v = field
                .trim()
                .parse()
                .map_err(|e| bad(format!("row {}: {e}", line + 1)))?;
        }
        xs.extend_from_slice(&vals[..2]);
        ys.extend_from_slice(&vals[2..]);
    }
    let n = xs.len() / DATA_DIM;
    PairedDataset::new(
        Tensor::new(n, DATA_DIM, xs).expect("shape"),
        Tensor::new(n, DATA_DIM, ys).expect("shape"),
    )
}

/// `key = value` sidecar describing how a dataset was drawn.
pub fn write_meta(meta: &DatasetMeta, path: &Path) -> Result<(), SynthError> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "seed = {}", meta.seed)?;
    writeln!(f, "permutation = {} {}", meta.permutation[0], meta.permutation[1])?;
    writeln!(f, "t_mode = {}", meta.t_mode.name())?;
    match meta.t {
        Some(t) => writeln!(f, "t = {}", fmt(t))?,
        None => writeln!(f, "t = none")?,
    }
    writeln!(f, "num_train = {}", meta.num_train)?;
    writeln!(f, "num_test = {}", meta.num_test)?;
    Ok(())
}

pub fn read_meta(path: &Path) -> Result<DatasetMeta, SynthError> {
    let text = fs::read_to_string(path)?;
    let bad = |reason: String| SynthError::Format {
        path: path.display().to_string(),
        reason,
    };
    let mut seed = None;
    let mut permutation = None;
    let mut t_mode = None;
    let mut t = None;
    let mut num_train = None;
    let mut num_test = None;
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("expected key = value, got {line:?}")))?;
        let (key, value) = (key.trim(), value.trim());
        let parse_err = |e: &dyn std::fmt::Display| bad(format!("{key}: {e}"));
        match key {
            "seed" => seed = Some(value.parse::<u64>().map_err(|e| parse_err(&e))?),
            "permutation" => {
                let p: Vec<usize> = value
                    .split_whitespace()
                    .map(str::parse)
                    .collect::<Result<_, _>>()
                    .map_err(|e| parse_err(&e))?;
                let p: [usize; 2] = p
                    .try_into()
                    .map_err(|_| bad("permutation needs two entries".into()))?;
                super::validate_permutation(p)?;
                permutation = Some(p);
            }
            "t_mode" => {
                t_mode = Some(
                    TMode::from_name(value).ok_or_else(|| bad(format!("unknown t_mode {value}")))?,
                )
            }
            "t" => {
                t = Some(if value == "none" {
                    None
                } else {
                    Some(value.parse::<f64>().map_err(|e| parse_err(&e))?)
                })
            }
            "num_train" => num_train = Some(value.parse().map_err(|e| parse_err(&e))?),
            "num_test" => num_test = Some(value.parse().map_err(|e| parse_err(&e))?),
            other => return Err(bad(format!("unknown key {other}"))),
        }
    }
    let missing = |k: &str| bad(format!("missing key {k}"));
    Ok(DatasetMeta {
        seed: seed.ok_or_else(|| missing("seed"))?,
        permutation: permutation.ok_or_else(|| missing("permutation"))?,
        t_mode: t_mode.ok_or_else(|| missing("t_mode"))?,
        t: t.ok_or_else(|| missing("t"))?,
        num_train: num_train.ok_or_else(|| missing("num_train"))?,
        num_test: num_test.ok_or_else(|| missing("num_test"))?,
    })
}
