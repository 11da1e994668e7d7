//! Binary container shared by datasets and checkpoints: a magic line, one
//! line of JSON header, then a little-endian `f64` payload whose SHA-256 is
//! recorded in the header.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn f64s_to_le(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn le_to_f64s(bytes: &[u8]) -> Result<Vec<f64>> {
    if !bytes.len().is_multiple_of(8) {
        return Err(Error::Format(format!("payload length {} is not a multiple of 8", bytes.len())));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

/// Writes `magic`, the header and the payload. The header must already carry
/// the payload checksum (see [`sha256_hex`]).
pub fn write(path: &Path, magic: &str, header: &impl Serialize, payload: &[u8]) -> Result<()> {
    let mut out = Vec::with_capacity(payload.len() + 1024);
    out.extend_from_slice(magic.as_bytes());
    out.push(b'\n');
    serde_json::to_writer(&mut out, header)?;
    out.push(b'\n');
    out.extend_from_slice(payload);
    let mut f = std::fs::File::create(path)?;
    f.write_all(&out)?;
    Ok(())
}

/// Reads a container, returning the header and the raw payload. The caller
/// verifies the checksum against its header field.
pub fn read<H: DeserializeOwned>(path: &Path, magic: &str) -> Result<(H, Vec<u8>)> {
    let f = std::fs::File::open(path)?;
    let mut r = BufReader::new(f);
    let mut line = String::new();
    r.read_line(&mut line)?;
    if line.trim_end_matches('\n') != magic {
        return Err(Error::Format(format!("{} is not a {magic} file", path.display())));
    }
    line.clear();
    r.read_line(&mut line)?;
    let header: H = serde_json::from_str(line.trim_end())
        .map_err(|e| Error::Format(format!("bad header in {}: {e}", path.display())))?;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    Ok((header, payload))
}

pub fn verify_checksum(payload: &[u8], expected: &str, what: &str) -> Result<()> {
    let actual = sha256_hex(payload);
    if actual != expected {
        return Err(Error::Format(format!("{what} checksum mismatch: header {expected}, payload {actual}")));
    }
    Ok(())
}
