//! Binary feature files: `"WOADF1"`, `u32` T, `u32` D, then `T·D` `f32`
//! values row-major, all little-endian.

use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::matrix::DenseMatrix;

pub const FEATURE_MAGIC: &[u8; 6] = b"WOADF1";
const HEADER_LEN: usize = FEATURE_MAGIC.len() + 8;

/// Encodes `T×D` features; values are narrowed to `f32`.
pub fn encode_features(features: &DenseMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * features.as_slice().len());
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&(features.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(features.cols() as u32).to_le_bytes());
    for &v in features.as_slice() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_features(bytes: &[u8], source_name: &str) -> Result<DenseMatrix> {
    let err = |offset: usize, message: String| Error::Parse {
        source_name: source_name.to_string(),
        offset: offset as u64,
        message,
    };
    if bytes.len() < FEATURE_MAGIC.len() || &bytes[..FEATURE_MAGIC.len()] != FEATURE_MAGIC {
        return Err(err(0, "bad magic, expected WOADF1".into()));
    }
    if bytes.len() < HEADER_LEN {
        return Err(err(bytes.len(), "truncated header".into()));
    }
    let t = u32::from_le_bytes(bytes[6..10].try_into().expect("4 bytes")) as usize;
    let d = u32::from_le_bytes(bytes[10..14].try_into().expect("4 bytes")) as usize;
    if t == 0 {
        return Err(err(6, "video has zero frames".into()));
    }
    if d == 0 {
        return Err(err(10, "feature dimension is zero".into()));
    }
    let count = t
        .checked_mul(d)
        .filter(|n| n.checked_mul(4).is_some())
        .ok_or_else(|| err(6, format!("{t}x{d} overflows")))?;
    let payload = &bytes[HEADER_LEN..];
    let available = payload.len() / 4;
    if available < count {
        return Err(err(
            HEADER_LEN + 4 * available,
            format!("truncated payload: {count} floats expected, {available} present"),
        ));
    }
    if payload.len() > 4 * count {
        return Err(err(
            HEADER_LEN + 4 * count,
            "trailing bytes after payload".into(),
        ));
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(err(HEADER_LEN + 4 * i, "non-finite feature value".into()));
    }
    DenseMatrix::from_f32(t, d, &data)
}

pub fn write_features(path: &Path, features: &DenseMatrix) -> Result<()> {
    std::fs::write(path, encode_features(features)).map_err(|e| Error::io(path, e))
}

pub fn load_features(path: &Path) -> Result<DenseMatrix> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_features(&bytes, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn header(t: u32, d: u32) -> Vec<u8> {
        let mut b = FEATURE_MAGIC.to_vec();
        b.extend_from_slice(&t.to_le_bytes());
        b.extend_from_slice(&d.to_le_bytes());
        b
    }

    #[test]
    fn zero_frames_rejected() {
        assert!(decode_features(&header(0, 4), "f").is_err());
    }

    #[test]
    fn truncation_reports_offset() {
        let mut b = header(3, 2);
        for i in 0..5 {
            b.extend_from_slice(&(i as f32).to_le_bytes());
        }
        match decode_features(&b, "f") {
            Err(Error::Parse {
                offset, message, ..
            }) => {
                assert_eq!(offset, (HEADER_LEN + 5 * 4) as u64);
                assert!(message.contains("6 floats expected"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_magic() {
        assert!(matches!(
            decode_features(b"WOADF2\0\0\0\0\0\0\0\0", "f"),
            Err(Error::Parse { offset: 0, .. })
        ));
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(t in 1usize..6, d in 1usize..5, seed in any::<u32>()) {
            let m = DenseMatrix::from_fn(t, d, |r, c| {
                f32::from_bits(seed.wrapping_mul(2654435761).wrapping_add((r * 31 + c) as u32) % 0x7f00_0000) as f64
            });
            let bytes = encode_features(&m);
            let back = decode_features(&bytes, "f").unwrap();
            prop_assert_eq!(&back, &m);
            prop_assert_eq!(encode_features(&back), bytes);
        }
    }
}
