//! `MLPCKPT1` checkpoints.
//!
//! ```text
//! MLPCKPT1\n
//! branch <block> <input width>\n
//! layer <block> <inputs> <outputs> <activation> <dropout keep> <l2>\n   (one per layer)
//! ...
//! head <inputs> <outputs> softmax <dropout keep> <l2>\n
//! end\n
//! <f64 LE parameters: per layer in order, weights row-major then bias>
//! ```

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{Architecture, BranchSpec, LayerSpec, MlpModel};
use crate::error::{Error, Result};
use crate::features::Block;

pub const CHECKPOINT_MAGIC: &str = "MLPCKPT1";

fn layer_fields(spec: &LayerSpec) -> String {
    format!(
        "{} {} {} {} {}",
        spec.inputs, spec.outputs, spec.activation, spec.dropout_keep, spec.l2
    )
}

pub fn write_checkpoint(model: &MlpModel) -> Vec<u8> {
    let arch = model.architecture();
    let mut header = format!("{CHECKPOINT_MAGIC}\n");
    for branch in &arch.branches {
        header.push_str(&format!("branch {} {}\n", branch.block, branch.input_dim()));
        for layer in &branch.layers {
            header.push_str(&format!("layer {} {}\n", branch.block, layer_fields(layer)));
        }
    }
    header.push_str(&format!("head {}\nend\n", layer_fields(&arch.head)));

    let mut out = header.into_bytes();
    for layer in model.layers() {
        for w in layer.weights.iter().chain(layer.bias.iter()) {
            out.extend_from_slice(&w.to_le_bytes());
        }
    }
    out
}

fn parse_layer(fields: &[&str]) -> Result<LayerSpec> {
    let bad = || Error::Format(format!("bad layer descriptor `{}`", fields.join(" ")));
    let [inputs, outputs, activation, keep, l2] = fields else {
        return Err(bad());
    };
    Ok(LayerSpec {
        inputs: inputs.parse().map_err(|_| bad())?,
        outputs: outputs.parse().map_err(|_| bad())?,
        activation: activation.parse()?,
        dropout_keep: keep.parse().map_err(|_| bad())?,
        l2: l2.parse().map_err(|_| bad())?,
    })
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<MlpModel> {
    let mut pos = 0;
    let mut next_line = || -> Result<&str> {
        let rest = &bytes[pos..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Format("truncated checkpoint header".into()))?;
        pos += end + 1;
        std::str::from_utf8(&rest[..end]).map_err(|_| Error::Format("checkpoint header is not UTF-8".into()))
    };

    if next_line()? != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let mut branches: Vec<BranchSpec> = Vec::new();
    let mut declared_widths = Vec::new();
    let head = loop {
        let line = next_line()?;
        let fields: Vec<&str> = line.split_ascii_whitespace().collect();
        match fields.as_slice() {
            ["branch", block, width] => {
                let block: Block = block.parse()?;
                let width: usize = width
                    .parse()
                    .map_err(|_| Error::Format(format!("bad branch width in `{line}`")))?;
                branches.push(BranchSpec { block, layers: Vec::new() });
                declared_widths.push(width);
            }
            ["layer", block, rest @ ..] => {
                let block: Block = block.parse()?;
                let branch = branches
                    .last_mut()
                    .filter(|b| b.block == block)
                    .ok_or_else(|| Error::Format(format!("layer outside its branch: `{line}`")))?;
                branch.layers.push(parse_layer(rest)?);
            }
            ["head", rest @ ..] => break parse_layer(rest)?,
            _ => return Err(Error::Format(format!("unexpected checkpoint line `{line}`"))),
        }
    };
    if next_line()? != "end" {
        return Err(Error::Format("checkpoint header missing `end`".into()));
    }
    let arch = Architecture { branches, head };
    arch.validate()
        .map_err(|e| Error::Format(format!("invalid checkpoint architecture: {e}")))?;
    for (branch, width) in arch.branches.iter().zip(declared_widths) {
        if branch.input_dim() != width {
            return Err(Error::Format(format!(
                "{} branch declares width {width} but its first layer takes {}",
                branch.block,
                branch.input_dim()
            )));
        }
    }

    let mut model = MlpModel::zeros(&arch)?;
    let payload = &bytes[pos..];
    let expected = model.num_parameters() * 8;
    if payload.len() != expected {
        return Err(Error::Format(format!(
            "checkpoint holds {} parameter bytes, architecture needs {expected}",
            payload.len()
        )));
    }
    let mut values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    for layer in model.layers_mut() {
        let (rows, cols) = layer.weights.dim();
        let w: Vec<f64> = values.by_ref().take(rows * cols).collect();
        layer.weights = Array2::from_shape_vec((rows, cols), w).expect("sized above");
        layer.bias = Array1::from_iter(values.by_ref().take(rows));
    }
    Ok(model)
}

pub fn save_checkpoint(model: &MlpModel, path: &Path) -> Result<()> {
    fs::write(path, write_checkpoint(model)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<MlpModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&bytes)
}
