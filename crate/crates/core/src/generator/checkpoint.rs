//! Portable `.misockpt` checkpoint container.
//!
//! ```text
//! "MISOCKPT" | u64 LE header length | JSON header | payload
//! ```
//!
//! The header records the architecture config, its hash, the payload dtype
//! and, per named array, its shape plus byte offset/length into the payload.
//! Payload values are little-endian `f32`. When any value would not survive
//! the narrowing (fine-tuned parameters usually don't), the whole payload is
//! written as `f64` and the header says so; loading is always bit-exact.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::GeneratorConfig;
use super::params::{architecture_hash, GeneratorParams, ParamArray};
use crate::error::{format_err, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MISOCKPT";
pub const CHECKPOINT_EXTENSION: &str = "misockpt";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Dtype {
    F32,
    F64,
}

impl Dtype {
    fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
    nbytes: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    dtype: Dtype,
    arch_hash: String,
    config: GeneratorConfig,
    arrays: Vec<ArrayEntry>,
}

fn fits_f32(v: f64) -> bool {
    (v as f32 as f64).to_bits() == v.to_bits()
}

pub fn save_checkpoint(params: &GeneratorParams, path: impl AsRef<Path>) -> Result<()> {
    let dtype = if params.iter().all(|(_, a)| a.data.iter().all(|v| fits_f32(*v))) {
        Dtype::F32
    } else {
        Dtype::F64
    };
    let mut arrays = Vec::new();
    let mut payload = Vec::with_capacity(params.num_params() * dtype.width());
    for (name, arr) in params.iter() {
        let offset = payload.len();
        for v in &arr.data {
            match dtype {
                Dtype::F32 => payload.extend_from_slice(&(*v as f32).to_le_bytes()),
                Dtype::F64 => payload.extend_from_slice(&v.to_le_bytes()),
            }
        }
        arrays.push(ArrayEntry {
            name: name.clone(),
            shape: arr.shape.clone(),
            offset,
            nbytes: payload.len() - offset,
        });
    }
    let header = Header {
        format: CHECKPOINT_EXTENSION.into(),
        version: FORMAT_VERSION,
        dtype,
        arch_hash: params.arch_hash().to_string(),
        config: params.config().clone(),
        arrays,
    };
    let header_bytes = serde_json::to_vec(&header)?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(CHECKPOINT_MAGIC)?;
    f.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
    f.write_all(&header_bytes)?;
    f.write_all(&payload)?;
    f.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<GeneratorParams> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode(&bytes)
}

fn decode(bytes: &[u8]) -> Result<GeneratorParams> {
    if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(format_err("magic", "not a misockpt checkpoint"));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = &bytes[16..];
    if hlen > body.len() {
        return Err(format_err("header", "truncated header"));
    }
    let header: Header =
        serde_json::from_slice(&body[..hlen]).map_err(|e| format_err("header", e.to_string()))?;
    if header.version != FORMAT_VERSION {
        return Err(format_err("version", format!("unsupported version {}", header.version)));
    }
    let payload = &body[hlen..];
    let expected_hash = architecture_hash(&header.config);
    if expected_hash != header.arch_hash {
        return Err(format_err(
            "arch_hash",
            format!("header hash {} does not match config ({expected_hash})", header.arch_hash),
        ));
    }
    let width = header.dtype.width();
    let mut arrays = BTreeMap::new();
    for e in header.arrays {
        let n: usize = e.shape.iter().product();
        let path = format!("arrays.{}", e.name);
        if e.nbytes != n * width {
            return Err(format_err(path, "byte length disagrees with shape"));
        }
        let raw = payload
            .get(e.offset..e.offset + e.nbytes)
            .ok_or_else(|| format_err(path.clone(), "payload out of range"))?;
        let data: Vec<f64> = match header.dtype {
            Dtype::F32 => raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
                .collect(),
            Dtype::F64 => raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect(),
        };
        arrays.insert(e.name, ParamArray { shape: e.shape, data });
    }
    GeneratorParams::from_arrays(header.config, arrays)
}
