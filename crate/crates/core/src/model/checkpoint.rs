//! Checkpoint file layout:
//!
//! ```text
//! magic     8 bytes   "SPICLCKP"
//! version   u32 LE
//! hdr_len   u64 LE
//! header    hdr_len bytes of JSON (config, step, rng, tensor manifest)
//! blobs     little-endian f32 tensors, offsets relative to the blob start
//! ```

use std::io::{Read, Write};
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Adam, ModelConfig, Parameters};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SPICLCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Trained parameters plus everything needed to resume training.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub params: Parameters<f32>,
    pub optimizer: Option<Adam>,
    pub step: u64,
    pub rng: ChaCha8Rng,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    dtype: String,
    shape: Vec<usize>,
    offset: u64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    step: u64,
    rng: ChaCha8Rng,
    adam_t: Option<u64>,
    tensors: Vec<TensorEntry>,
}

pub fn write_checkpoint<W: Write>(mut w: W, ckpt: &Checkpoint) -> Result<()> {
    let config = &ckpt.params.config;
    let shapes = Parameters::<f32>::shapes(config);
    let mut entries = Vec::new();
    let mut blobs: Vec<&[f32]> = Vec::new();
    let mut offset = 0u64;
    let mut push = |name: String, shape: &[usize], data: &'_ [f32], entries: &mut Vec<TensorEntry>| {
        entries.push(TensorEntry {
            name,
            dtype: "f32".into(),
            shape: shape.to_vec(),
            offset,
        });
        offset += 4 * data.len() as u64;
    };
    for ((name, shape), t) in shapes.iter().zip(ckpt.params.tensors()) {
        push(name.clone(), shape, t, &mut entries);
        blobs.push(t);
    }
    if let Some(opt) = &ckpt.optimizer {
        for (prefix, state) in [("adam.m.", &opt.m), ("adam.v.", &opt.v)] {
            for ((name, shape), t) in shapes.iter().zip(state.tensors()) {
                push(format!("{prefix}{name}"), shape, t, &mut entries);
                blobs.push(t);
            }
        }
    }
    let header = Header {
        config: config.clone(),
        step: ckpt.step,
        rng: ckpt.rng.clone(),
        adam_t: ckpt.optimizer.as_ref().map(|o| o.t),
        tensors: entries,
    };
    let json = serde_json::to_vec(&header)?;
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for blob in blobs {
        let mut bytes = Vec::with_capacity(blob.len() * 4);
        for v in blob {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&bytes)?;
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let corrupt = |m: &str| Error::CorruptCheckpoint(m.to_string());
    if bytes.len() < 20 {
        return Err(corrupt("file shorter than fixed preamble"));
    }
    if &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointVersion {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let hdr_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let blob_start = 20usize
        .checked_add(hdr_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| corrupt("header length exceeds file"))?;
    let header: Header = serde_json::from_slice(&bytes[20..blob_start])
        .map_err(|e| Error::CorruptCheckpoint(format!("header: {e}")))?;
    header.config.validate()?;
    let blobs = &bytes[blob_start..];

    let read_tensor = |entry: &TensorEntry, expected: &[usize]| -> Result<Vec<f32>> {
        if entry.dtype != "f32" {
            return Err(Error::CorruptCheckpoint(format!("{}: unsupported dtype {}", entry.name, entry.dtype)));
        }
        if entry.shape != expected {
            return Err(Error::ShapeMismatch {
                name: entry.name.clone(),
                expected: expected.to_vec(),
                found: entry.shape.clone(),
            });
        }
        let n: usize = expected.iter().product();
        let start = entry.offset as usize;
        let end = start
            .checked_add(n * 4)
            .filter(|&e| e <= blobs.len())
            .ok_or_else(|| Error::CorruptCheckpoint(format!("{}: blob truncated", entry.name)))?;
        Ok(blobs[start..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    };
    let find = |name: &str| -> Result<&TensorEntry> {
        header
            .tensors
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| Error::CorruptCheckpoint(format!("missing tensor {name}")))
    };

    let shapes = Parameters::<f32>::shapes(&header.config);
    let load = |prefix: &str| -> Result<Parameters<f32>> {
        let mut p = Parameters::<f32>::zeros(&header.config);
        for ((name, shape), dst) in shapes.iter().zip(p.tensors_mut()) {
            *dst = read_tensor(find(&format!("{prefix}{name}"))?, shape)?;
        }
        Ok(p)
    };
    let params = load("")?;
    params.check_finite()?;
    let optimizer = match header.adam_t {
        Some(t) => Some(Adam {
            m: load("adam.m.")?,
            v: load("adam.v.")?,
            t,
        }),
        None => None,
    };
    Ok(Checkpoint {
        params,
        optimizer,
        step: header.step,
        rng: header.rng,
    })
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_checkpoint(&mut f, ckpt)?;
    f.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    read_checkpoint(std::io::BufReader::new(std::fs::File::open(path)?))
}
