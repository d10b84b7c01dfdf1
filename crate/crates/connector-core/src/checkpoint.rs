//! Flat binary checkpoint container for named f64 tensors.
//!
//! Layout:
//! ```text
//! CONNCKPT v1\n
//! <name> <dim0> <dim1> ...\n      (one line per tensor, in order)
//! DATA\n
//! <little-endian f64 payload, tensors concatenated in header order>
//! ```
//! Names are ASCII without whitespace. The payload length must equal the
//! sum of the declared element counts times 8.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::connector::ConnectorParams;
use crate::error::CoreError;
use crate::tensor::Tensor;

const MAGIC: &str = "CONNCKPT v1";

pub fn to_bytes(params: &ConnectorParams) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC.as_bytes());
    out.push(b'\n');
    for (name, tensor) in &params.entries {
        let dims: Vec<String> = tensor.shape().iter().map(|d| d.to_string()).collect();
        out.extend_from_slice(format!("{name} {}\n", dims.join(" ")).as_bytes());
    }
    out.extend_from_slice(b"DATA\n");
    for (_, tensor) in &params.entries {
        for v in tensor.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<ConnectorParams, CoreError> {
    // split header from payload at the DATA marker line
    let mut pos = 0;
    let mut lines: Vec<&str> = Vec::new();
    loop {
        let rest = &bytes[pos..];
        let nl = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| CoreError::Parse("checkpoint missing DATA marker".into()))?;
        let line = core::str::from_utf8(&rest[..nl])
            .map_err(|_| CoreError::Parse("checkpoint header is not UTF-8".into()))?;
        pos += nl + 1;
        if line == "DATA" {
            break;
        }
        lines.push(line);
    }
    if lines.first() != Some(&MAGIC) {
        return Err(CoreError::Parse(format!(
            "bad checkpoint magic, expected '{MAGIC}'"
        )));
    }

    let mut entries = Vec::new();
    let mut payload = &bytes[pos..];
    for line in &lines[1..] {
        let mut parts = line.split_whitespace();
        let name = parts
            .next()
            .ok_or_else(|| CoreError::Parse("empty header line".into()))?
            .to_string();
        let shape: Vec<usize> = parts
            .map(|p| {
                p.parse::<usize>()
                    .map_err(|_| CoreError::Parse(format!("bad dimension '{p}' for '{name}'")))
            })
            .collect::<Result<_, _>>()?;
        let numel: usize = shape.iter().product();
        if payload.len() < numel * 8 {
            return Err(CoreError::Parse(format!(
                "checkpoint payload truncated at tensor '{name}'"
            )));
        }
        let data: Vec<f64> = payload[..numel * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        payload = &payload[numel * 8..];
        entries.push((name, Tensor::new(shape, data)?));
    }
    if !payload.is_empty() {
        return Err(CoreError::Parse("trailing bytes after checkpoint payload".into()));
    }
    Ok(ConnectorParams { entries })
}
