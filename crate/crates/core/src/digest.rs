use sha2::{Digest, Sha256};

/// First eight bytes of the SHA-256 of `bytes`, little-endian.
pub fn digest64(bytes: &[u8]) -> u64 {
    let out = Sha256::digest(bytes);
    u64::from_le_bytes(out[..8].try_into().expect("sha256 output is 32 bytes"))
}

/// Digest of the little-endian bit patterns of `values`.
pub fn digest_f64s(values: &[f64]) -> u64 {
    let mut hasher = Sha256::new();
    for v in values {
        hasher.update(v.to_bits().to_le_bytes());
    }
    let out = hasher.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("sha256 output is 32 bytes"))
}

pub fn hex64(v: u64) -> String {
    format!("{v:016x}")
}
