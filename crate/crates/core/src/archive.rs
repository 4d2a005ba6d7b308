//! Single-file container: magic, JSON header, raw payload, SHA-256 trailer.
//!
//! Layout: `magic (8) | header_len u32 LE | header JSON | payload | sha256 (32)`
//! where the digest covers everything before it.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::digest;
use crate::error::{Error, Result};

pub fn encode<H: Serialize>(magic: &[u8; 8], header: &H, payload: &[u8]) -> Result<Vec<u8>> {
    let head = serde_json::to_vec(header)?;
    let mut out = Vec::with_capacity(8 + 4 + head.len() + payload.len() + 32);
    out.extend_from_slice(magic);
    out.extend_from_slice(&(head.len() as u32).to_le_bytes());
    out.extend_from_slice(&head);
    out.extend_from_slice(payload);
    let sum = digest::sha256(&out);
    out.extend_from_slice(&sum);
    Ok(out)
}

pub fn decode<H: DeserializeOwned>(magic: &[u8; 8], bytes: &[u8], what: &Path) -> Result<(H, Vec<u8>)> {
    let fail = |reason: &str| Error::Load { path: what.to_path_buf(), reason: reason.to_string() };
    if bytes.len() < 8 + 4 + 32 {
        return Err(fail("file too short"));
    }
    if &bytes[..8] != magic {
        return Err(Error::Format(format!("{}: wrong magic bytes", what.display())));
    }
    let (body, sum) = bytes.split_at(bytes.len() - 32);
    if digest::sha256(body) != sum {
        return Err(Error::Checksum(what.display().to_string()));
    }
    let hlen = u32::from_le_bytes(body[8..12].try_into().expect("4 bytes")) as usize;
    if 12 + hlen > body.len() {
        return Err(fail("header length past end of file"));
    }
    let header = serde_json::from_slice(&body[12..12 + hlen]).map_err(|e| fail(&format!("bad header: {e}")))?;
    Ok((header, body[12 + hlen..].to_vec()))
}

pub fn write<H: Serialize>(path: &Path, magic: &[u8; 8], header: &H, payload: &[u8]) -> Result<usize> {
    let bytes = encode(magic, header, payload)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
    Ok(bytes.len())
}

pub fn read<H: DeserializeOwned>(path: &Path, magic: &[u8; 8]) -> Result<(H, Vec<u8>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(magic, &bytes, path)
}

pub fn f64s_to_bytes(values: &[f64], out: &mut Vec<u8>) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn f64s_from_bytes(bytes: &[u8]) -> Result<Vec<f64>> {
    if bytes.len() % 8 != 0 {
        return Err(Error::Format(format!("{} payload bytes is not a multiple of 8", bytes.len())));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_tamper() {
        let p = Path::new("mem");
        let mut payload = Vec::new();
        f64s_to_bytes(&[1.5, -0.0, f64::MIN_POSITIVE], &mut payload);
        let bytes = encode(b"TESTARCH", &serde_json::json!({"a": 1}), &payload).unwrap();
        let (h, pl): (serde_json::Value, _) = decode(b"TESTARCH", &bytes, p).unwrap();
        assert_eq!(h["a"], 1);
        let back = f64s_from_bytes(&pl).unwrap();
        assert_eq!(back[1].to_bits(), (-0.0f64).to_bits());
        let mut bad = bytes.clone();
        let k = bad.len() - 40;
        bad[k] ^= 1;
        assert!(matches!(decode::<serde_json::Value>(b"TESTARCH", &bad, p), Err(Error::Checksum(_))));
        assert!(matches!(decode::<serde_json::Value>(b"OTHERARC", &bytes, p), Err(Error::Format(_))));
    }
}
