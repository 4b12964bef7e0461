//! LVEC: the binary latent file.
//!
//! Layout, all little-endian, no padding and no trailer:
//!
//! ```text
//! offset  size          field
//! 0       4             magic "LVEC"
//! 4       4             u32 version (= 1)
//! 8       4             u32 count
//! 12      4             u32 dim
//! 16      4*count*dim   binary32 values, row-major
//! ```
//!
//! Values are computed in `f64` and stored as `f32`, so a save/load cycle
//! rounds each coordinate to the nearest `f32`. Sets that are already
//! `f32`-representable round-trip bit-exactly.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result, StoreError};
use crate::latent::{LatentSet, LatentVector};

pub const MAGIC: [u8; 4] = *b"LVEC";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

pub fn encode_latents(set: &LatentSet) -> Result<Vec<u8>> {
    let count = u32::try_from(set.len()).map_err(|_| Error::invalid("too many rows for LVEC"))?;
    let dim = u32::try_from(set.dim()).map_err(|_| Error::invalid("dim too large for LVEC"))?;
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * set.len() * set.dim());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    out.extend_from_slice(&dim.to_le_bytes());
    for (r, row) in set.iter().enumerate() {
        for (c, &v) in row.as_slice().iter().enumerate() {
            let narrow = v as f32;
            if !narrow.is_finite() {
                return Err(Error::invalid(format!(
                    "value {v} at row {r}, column {c} overflows binary32"
                )));
            }
            out.extend_from_slice(&narrow.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_latents(bytes: &[u8]) -> Result<LatentSet, StoreError> {
    if bytes.len() < HEADER_LEN {
        if bytes.len() >= 4 && bytes[..4] != MAGIC {
            return Err(StoreError::BadMagic {
                found: bytes[..4].try_into().unwrap(),
            });
        }
        return Err(StoreError::Truncated {
            expected: HEADER_LEN as u64,
            found: bytes.len() as u64,
        });
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(StoreError::BadMagic { found: magic });
    }
    let version = word(4);
    if version != VERSION {
        return Err(StoreError::UnsupportedVersion(version));
    }
    let count = word(8) as usize;
    let dim = word(12) as usize;
    if count == 0 || dim == 0 {
        return Err(StoreError::InvalidHeader(format!(
            "count and dim must be positive, got count={count} dim={dim}"
        )));
    }
    let expected = 4u64 * count as u64 * dim as u64;
    let found = (bytes.len() - HEADER_LEN) as u64;
    if found < expected {
        return Err(StoreError::Truncated { expected, found });
    }
    if found > expected {
        return Err(StoreError::TrailingBytes(found - expected));
    }

    let payload = &bytes[HEADER_LEN..];
    let mut rows = Vec::with_capacity(count);
    for r in 0..count {
        let mut values = Vec::with_capacity(dim);
        for c in 0..dim {
            let at = 4 * (r * dim + c);
            let v = f32::from_le_bytes(payload[at..at + 4].try_into().unwrap());
            if !v.is_finite() {
                return Err(StoreError::NonFinite { row: r, col: c });
            }
            values.push(f64::from(v));
        }
        rows.push(LatentVector::new(values).expect("finite and nonempty"));
    }
    Ok(LatentSet::new(rows, 0).expect("rows share dim"))
}

pub fn save_latents(set: &LatentSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_latents(set)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_latents(path: impl AsRef<Path>) -> Result<LatentSet> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(decode_latents(&bytes)?)
}

/// Round every coordinate through binary32, as a save/load cycle would.
pub fn quantize(set: &LatentSet) -> Result<LatentSet> {
    let bytes = encode_latents(set)?;
    let mut out = decode_latents(&bytes)?;
    if set.seed() != 0 {
        out = LatentSet::new(out.into_rows(), set.seed())?;
    }
    Ok(out)
}

/// Round one vector through binary32, as saving and loading would.
pub fn quantize_vector(v: LatentVector) -> Result<LatentVector> {
    let out: Vec<f64> = v.as_slice().iter().map(|&x| f64::from(x as f32)).collect();
    if out.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("latent value overflows binary32"));
    }
    LatentVector::new(out)
}
