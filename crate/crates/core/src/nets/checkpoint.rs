//! Plain-text checkpoint layout:
//!
//! ```text
//! anchordt-mlp 1
//! sizes 2 32 32 2
//! hidden leaky_relu 2.0000000000000001e-1
//! output identity
//! weight 0 2 32
//! <rows lines, cols space-separated values>
//! bias 0 1 32
//! <one line>
//! ...
//! ```
//!
//! Values are written with 17 significant digits, which round-trips every
//! finite `f64` exactly.

use std::io::{BufRead, Write};

use super::{HiddenActivation, MlpModel, NetError, OutputActivation};
use crate::adcore::Tensor;

pub const CHECKPOINT_MAGIC: &str = "anchordt-mlp 1";

pub fn write_checkpoint<W: Write>(model: &MlpModel, mut out: W) -> Result<(), NetError> {
    writeln!(out, "{CHECKPOINT_MAGIC}")?;
    let sizes: Vec<String> = model.sizes.iter().map(ToString::to_string).collect();
    writeln!(out, "sizes {}", sizes.join(" "))?;
    match model.hidden {
        HiddenActivation::LeakyRelu(s) => writeln!(out, "hidden leaky_relu {s:.16e}")?,
        HiddenActivation::Tanh => writeln!(out, "hidden tanh")?,
    }
    writeln!(out, "output {}", model.output.name())?;
    for (i, (w, b)) in model.weights.iter().zip(&model.biases).enumerate() {
        write_tensor(&mut out, "weight", i, w)?;
        write_tensor(&mut out, "bias", i, b)?;
    }
    Ok(())
}

fn write_tensor<W: Write>(out: &mut W, tag: &str, index: usize, t: &Tensor) -> Result<(), NetError> {
    writeln!(out, "{tag} {index} {} {}", t.rows(), t.cols())?;
    for r in 0..t.rows() {
        let line: Vec<String> = t.row_slice(r).iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(())
}

fn bad(msg: impl Into<String>) -> NetError {
    NetError::Checkpoint(msg.into())
}

pub fn read_checkpoint<R: BufRead>(input: R) -> Result<MlpModel, NetError> {
    let mut lines = input.lines();
    let mut next = || -> Result<String, NetError> {
        lines.next().ok_or_else(|| bad("unexpected end of file"))?.map_err(NetError::from)
    };

    if next()?.trim() != CHECKPOINT_MAGIC {
        return Err(bad("missing header"));
    }
    let sizes_line = next()?;
    let sizes: Vec<usize> = sizes_line
        .strip_prefix("sizes ")
        .ok_or_else(|| bad("expected sizes line"))?
        .split_whitespace()
        .map(|s| s.parse().map_err(|_| bad(format!("bad size {s:?}"))))
        .collect::<Result<_, _>>()?;
    if sizes.len() < 2 {
        return Err(NetError::TooFewLayers(sizes.len()));
    }

    let hidden_line = next()?;
    let hidden = match hidden_line.split_whitespace().collect::<Vec<_>>().as_slice() {
        ["hidden", "leaky_relu", slope] => HiddenActivation::LeakyRelu(
            slope.parse().map_err(|_| bad("bad leaky_relu slope"))?,
        ),
        ["hidden", "tanh"] => HiddenActivation::Tanh,
        _ => return Err(bad(format!("bad hidden line {hidden_line:?}"))),
    };
    let output_line = next()?;
    let output = output_line
        .strip_prefix("output ")
        .and_then(|s| OutputActivation::from_name(s.trim()))
        .ok_or_else(|| bad(format!("bad output line {output_line:?}")))?;

    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for layer in 0..sizes.len() - 1 {
        weights.push(read_tensor(&mut next, "weight", layer)?);
        biases.push(read_tensor(&mut next, "bias", layer)?);
    }
    MlpModel::from_parts(sizes, weights, biases, hidden, output)
}

fn read_tensor(
    next: &mut impl FnMut() -> Result<String, NetError>,
    tag: &str,
    index: usize,
) -> Result<Tensor, NetError> {
    let header = next()?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 4 || parts[0] != tag || parts[1] != index.to_string() {
        return Err(bad(format!("expected `{tag} {index} rows cols`, got {header:?}")));
    }
    let rows: usize = parts[2].parse().map_err(|_| bad("bad row count"))?;
    let cols: usize = parts[3].parse().map_err(|_| bad("bad column count"))?;
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        let line = next()?;
        let before = data.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| bad(format!("bad number {tok:?}")))?;
            if !v.is_finite() {
                return Err(bad("non-finite parameter"));
            }
            data.push(v);
        }
        if data.len() - before != cols {
            return Err(bad(format!("{tag} {index}: expected {cols} values per row")));
        }
    }
    Ok(Tensor::new(rows, cols, data)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::init_mlp;
    use proptest::prelude::*;

    fn round_trip(m: &MlpModel) -> MlpModel {
        let mut buf = Vec::new();
        write_checkpoint(m, &mut buf).unwrap();
        read_checkpoint(buf.as_slice()).unwrap()
    }

    proptest! {
        #[test]
        fn checkpoint_round_trip_is_bit_exact(
            seed in any::<u64>(),
            hidden in 1usize..8,
            scale in -1e6f64..1e6,
        ) {
            let mut m = init_mlp(&[2, hidden, 3], OutputActivation::Tanh, seed).unwrap();
            for p in m.params_mut() {
                for v in p.data_mut() {
                    *v *= scale;
                }
            }
            let back = round_trip(&m);
            let bits = |m: &MlpModel| -> Vec<u64> {
                m.params().flat_map(|t| t.data().iter().map(|v| v.to_bits())).collect()
            };
            prop_assert_eq!(bits(&m), bits(&back));
            prop_assert_eq!(back.sizes(), m.sizes());
            prop_assert_eq!(back.output(), m.output());
        }
    }

    #[test]
    fn rejects_truncated_file() {
        let m = init_mlp(&[2, 4, 2], OutputActivation::Identity, 1).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&m, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let cut: String = text.lines().take(6).map(|l| format!("{l}\n")).collect();
        assert!(matches!(
            read_checkpoint(cut.as_bytes()),
            Err(NetError::Checkpoint(_))
        ));
    }

    #[test]
    fn rejects_wrong_magic() {
        assert!(read_checkpoint("not-a-model\n".as_bytes()).is_err());
    }
}
