//! Content digests used for fingerprints, config hashes and checksums.

use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

pub fn sha256(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

/// Digest of a float slice by its exact little-endian bit patterns.
pub fn f64_digest(values: &[f64]) -> String {
    let mut h = Sha256::new();
    for v in values {
        h.update(v.to_le_bytes());
    }
    hex(&h.finalize())
}

/// Digest of a value's canonical JSON form (struct fields serialize in
/// declaration order, maps must be ordered).
pub fn json_digest<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("serializable value");
    sha256_hex(&bytes)
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_digest_sees_single_bit() {
        let a = [1.0, 2.0];
        let b = [1.0, f64::from_bits(2.0f64.to_bits() + 1)];
        assert_ne!(f64_digest(&a), f64_digest(&b));
        assert_eq!(f64_digest(&a), f64_digest(&[1.0, 2.0]));
    }
}
