//! Checkpoint layout: a magic line, one JSON header line, then every
//! parameter and buffer tensor as little-endian f32 in header order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::network::Param;
use super::{ConvNet, ModelConfig};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &str = "SLEEPNET-CHECKPOINT 1";

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    seed: u64,
    steps: u64,
    input_channels: usize,
    input_len: usize,
    params: Vec<TensorEntry>,
    buffers: Vec<TensorEntry>,
}

fn entries(ps: &[Param<f32>]) -> Vec<TensorEntry> {
    ps.iter()
        .map(|p| TensorEntry {
            name: p.name.clone(),
            shape: p.shape.clone(),
        })
        .collect()
}

pub fn write_checkpoint(net: &ConvNet<f32>, mut out: impl Write) -> std::io::Result<()> {
    let header = Header {
        config: *net.config(),
        seed: net.seed(),
        steps: net.steps(),
        input_channels: net.input_channels(),
        input_len: net.input_len(),
        params: entries(net.params()),
        buffers: entries(net.buffers()),
    };
    writeln!(out, "{CHECKPOINT_MAGIC}")?;
    serde_json::to_writer(&mut out, &header)?;
    writeln!(out)?;
    for p in net.params().iter().chain(net.buffers()) {
        let mut bytes = Vec::with_capacity(4 * p.data.len());
        for v in &p.data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&bytes)?;
    }
    out.flush()
}

/// Parses a checkpoint stream; `path` only labels errors.
pub fn read_checkpoint(input: impl Read, path: &Path) -> Result<ConvNet<f32>> {
    let bad = |detail: String| Error::format("checkpoint", path, detail);
    let mut r = BufReader::new(input);
    let mut line = String::new();
    r.read_line(&mut line).map_err(|e| Error::io(path, e))?;
    if line.trim_end() != CHECKPOINT_MAGIC {
        return Err(bad("missing checkpoint magic line".into()));
    }
    line.clear();
    r.read_line(&mut line).map_err(|e| Error::io(path, e))?;
    let header: Header = serde_json::from_str(&line).map_err(|e| bad(format!("header: {e}")))?;

    let reference = ConvNet::<f32>::new(&header.config, header.seed, header.input_channels, header.input_len)
        .map_err(|e| bad(format!("header config: {e}")))?;
    let read_group = |r: &mut BufReader<_>, declared: &[TensorEntry], expected: &[Param<f32>]| -> Result<Vec<Param<f32>>> {
        if declared.len() != expected.len() {
            return Err(bad(format!("{} tensors declared, config implies {}", declared.len(), expected.len())));
        }
        let mut out = Vec::with_capacity(declared.len());
        for (d, e) in declared.iter().zip(expected) {
            if d.name != e.name || d.shape != e.shape {
                return Err(bad(format!("tensor {} {:?} does not match {} {:?}", d.name, d.shape, e.name, e.shape)));
            }
            let n: usize = d.shape.iter().product();
            let mut bytes = vec![0u8; 4 * n];
            r.read_exact(&mut bytes).map_err(|_| bad(format!("truncated data for {}", d.name)))?;
            let data = bytes
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            out.push(Param {
                name: d.name.clone(),
                shape: d.shape.clone(),
                data,
            });
        }
        Ok(out)
    };
    let params = read_group(&mut r, &header.params, reference.params())?;
    let buffers = read_group(&mut r, &header.buffers, reference.buffers())?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(|e| Error::io(path, e))? != 0 {
        return Err(bad("trailing bytes after tensor data".into()));
    }
    Ok(ConvNet::from_parts(
        header.config,
        header.seed,
        header.input_channels,
        header.input_len,
        params,
        buffers,
        header.steps,
    ))
}

pub fn save_checkpoint(net: &ConvNet<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(net, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ConvNet<f32>> {
    let path: PathBuf = path.as_ref().into();
    let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
    read_checkpoint(file, &path)
}
