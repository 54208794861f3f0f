//! Binary parameter container: a JSON header followed by little-endian f64s.
//!
//! Layout:
//!
//! ```text
//! magic   4 bytes  "XMAM"
//! version u32 LE   1
//! hlen    u64 LE   header length in bytes
//! header  hlen     UTF-8 JSON
//! count   u64 LE   number of floats
//! payload count*8  f64 LE
//! ```

use std::io::{Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"XMAM";
const VERSION: u32 = 1;

pub fn encode<H: Serialize>(header: &H, payload: &[f64]) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(header)?;
    let mut out = Vec::with_capacity(24 + json.len() + payload.len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    for x in payload {
        out.extend_from_slice(&x.to_le_bytes());
    }
    Ok(out)
}

fn take<'a>(bytes: &mut &'a [u8], n: usize, what: &str) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(Error::Parse {
            location: format!("container {what}"),
            message: format!("truncated: need {n} bytes, have {}", bytes.len()),
        });
    }
    let (head, tail) = bytes.split_at(n);
    *bytes = tail;
    Ok(head)
}

fn read_u64(bytes: &mut &[u8], what: &str) -> Result<u64> {
    let b = take(bytes, 8, what)?;
    Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
}

/// Splits a container into its raw JSON header and payload.
pub fn decode_raw(mut bytes: &[u8]) -> Result<(serde_json::Value, Vec<f64>)> {
    let magic = take(&mut bytes, 4, "magic")?;
    if magic != MAGIC {
        return Err(Error::Parse {
            location: "container magic".into(),
            message: format!("expected {:?}, found {:?}", MAGIC, magic),
        });
    }
    let version = u32::from_le_bytes(take(&mut bytes, 4, "version")?.try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Parse {
            location: "container version".into(),
            message: format!("unsupported version {version}"),
        });
    }
    let hlen = read_u64(&mut bytes, "header length")? as usize;
    let header: serde_json::Value = serde_json::from_slice(take(&mut bytes, hlen, "header")?)?;
    let count = read_u64(&mut bytes, "payload length")? as usize;
    let raw = take(&mut bytes, count.saturating_mul(8), "payload")?;
    if !bytes.is_empty() {
        return Err(Error::Parse {
            location: "container payload".into(),
            message: format!("{} trailing bytes", bytes.len()),
        });
    }
    let payload = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((header, payload))
}

pub fn decode<H: DeserializeOwned>(bytes: &[u8]) -> Result<(H, Vec<f64>)> {
    let (header, payload) = decode_raw(bytes)?;
    Ok((serde_json::from_value(header)?, payload))
}

pub fn write_file<H: Serialize>(path: &Path, header: &H, payload: &[f64]) -> Result<()> {
    let bytes = encode(header, payload)?;
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    Ok(bytes)
}
