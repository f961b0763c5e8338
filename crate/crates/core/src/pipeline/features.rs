//! `AVF1` feature files: magic, two little-endian `u32` extents (rows, cols), then
//! `rows * cols` little-endian `f32` values in row-major order.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::FeatureMatrix;

pub const MAGIC: &[u8; 4] = b"AVF1";
const HEADER_LEN: usize = 12;

/// Largest payload accepted, in values (1 GiB of `f32`).
pub const MAX_VALUES: u64 = 1 << 28;

pub fn encode_features(matrix: &FeatureMatrix) -> Result<Vec<u8>> {
    let (rows, cols) = matrix.dims2()?;
    let rows = u32::try_from(rows).map_err(|_| Error::Dimension(format!("{rows} rows exceed u32")))?;
    let cols = u32::try_from(cols).map_err(|_| Error::Dimension(format!("{cols} cols exceed u32")))?;
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * matrix.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&rows.to_le_bytes());
    out.extend_from_slice(&cols.to_le_bytes());
    for &v in matrix.data() {
        let narrow = v as f32;
        if !narrow.is_finite() {
            return Err(Error::NonFinite(format!("feature value {v} overflows f32")));
        }
        out.extend_from_slice(&narrow.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_features(bytes: &[u8], path: &Path) -> Result<FeatureMatrix> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("bad magic {:?}", &bytes[..4]),
        });
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let cols = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let count = u64::from(rows) * u64::from(cols);
    if count > MAX_VALUES {
        return Err(Error::ExtentOverflow {
            path: path.to_path_buf(),
            rows,
            cols,
        });
    }
    let expected = HEADER_LEN + 4 * count as usize;
    let payload = &bytes[HEADER_LEN..];
    if bytes.len() < expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("{} trailing bytes", bytes.len() - expected),
        });
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
        .collect();
    Tensor::matrix(rows as usize, cols as usize, data).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

pub fn save_features(matrix: &FeatureMatrix, path: &Path) -> Result<()> {
    let bytes = encode_features(matrix)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_features(path: &Path) -> Result<FeatureMatrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_features(&bytes, path)
}

/// Truncates to the first `segments` columns, or pads by repeating the last column.
pub fn fit_segments(matrix: &FeatureMatrix, segments: usize) -> Result<FeatureMatrix> {
    let (rows, cols) = matrix.dims2()?;
    if cols == 0 {
        return Err(Error::Input("cannot pad a matrix with no segments".into()));
    }
    if cols == segments {
        return Ok(matrix.clone());
    }
    let mut data = Vec::with_capacity(rows * segments);
    for r in 0..rows {
        for c in 0..segments {
            data.push(matrix.at(r, c.min(cols - 1)));
        }
    }
    Tensor::matrix(rows, segments, data)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn round_trip_within_single_precision() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.audio.avf");
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = Tensor::uniform(&[16, 8], 3.0, &mut rng);
        save_features(&m, &path).unwrap();
        let back = load_features(&path).unwrap();
        assert_eq!(back.shape(), &[16, 8]);
        for (a, b) in m.data().iter().zip(back.data()) {
            assert_eq!(*b, f64::from(*a as f32));
        }
        // Narrowed values survive a second pass unchanged.
        save_features(&back, &path).unwrap();
        assert_eq!(load_features(&path).unwrap(), back);
    }

    #[test]
    fn wrong_magic() {
        let mut bytes = encode_features(&Tensor::zeros(&[2, 2])).unwrap();
        bytes[3] = b'2';
        assert!(matches!(decode_features(&bytes, Path::new("m")), Err(Error::Format { .. })));
    }

    #[test]
    fn truncated_payload() {
        let mut bytes = encode_features(&Tensor::zeros(&[4, 4])).unwrap();
        bytes.truncate(HEADER_LEN + 15 * 4);
        match decode_features(&bytes, Path::new("t")) {
            Err(Error::Truncated { expected, found, .. }) => {
                assert_eq!(expected, HEADER_LEN + 64);
                assert_eq!(found, HEADER_LEN + 60);
            }
            other => panic!("expected truncation, got {other:?}"),
        }
        assert!(matches!(decode_features(b"AVF", Path::new("t")), Err(Error::Truncated { .. })));
    }

    #[test]
    fn extent_overflow_and_trailing_bytes() {
        let mut bytes = Vec::from(&MAGIC[..]);
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        assert!(matches!(decode_features(&bytes, Path::new("o")), Err(Error::ExtentOverflow { .. })));

        let mut bytes = encode_features(&Tensor::zeros(&[1, 1])).unwrap();
        bytes.push(0);
        assert!(matches!(decode_features(&bytes, Path::new("x")), Err(Error::Format { .. })));
    }

    #[test]
    fn non_finite_payload_is_rejected() {
        let mut bytes = encode_features(&Tensor::zeros(&[1, 1])).unwrap();
        bytes[HEADER_LEN..].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(decode_features(&bytes, Path::new("n")).is_err());
    }

    #[test]
    fn pad_and_truncate() {
        let m = Tensor::from_rows(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]).unwrap();
        let short = fit_segments(&m, 2).unwrap();
        assert_eq!(short, Tensor::from_rows(&[&[1.0, 2.0], &[4.0, 5.0]]).unwrap());
        let long = fit_segments(&m, 5).unwrap();
        assert_eq!(long.column_values(4), vec![3.0, 6.0]);
    }
}
