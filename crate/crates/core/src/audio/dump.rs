//! Binary per-clip feature records.
//!
//! Layout (little endian): four `u32` header words
//! `{version, n_frames, n_dims, hop_samples}` followed by
//! `n_frames * n_dims` row-major `f32` values.

use std::io::Write;
use std::path::Path;

use super::Frames;
use crate::error::{Error, Result};

pub const DUMP_VERSION: u32 = 1;
const HEADER_BYTES: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureDump {
    pub frames: Frames,
    pub hop_samples: u32,
}

pub fn encode_feature_dump(dump: &FeatureDump) -> Vec<u8> {
    let f = &dump.frames;
    let mut out = Vec::with_capacity(HEADER_BYTES + 4 * f.data().len());
    for word in [DUMP_VERSION, f.rows() as u32, f.dims() as u32, dump.hop_samples] {
        out.extend_from_slice(&word.to_le_bytes());
    }
    for v in f.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Parse a dump held in memory. `path` only labels errors.
pub fn decode_feature_dump(bytes: &[u8], path: &Path) -> Result<FeatureDump> {
    let corrupt = |reason: String| Error::CorruptFile {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < HEADER_BYTES {
        return Err(corrupt(format!("{} bytes is shorter than the header", bytes.len())));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap());
    let version = word(0);
    if version != DUMP_VERSION {
        return Err(Error::Version {
            found: version,
            expected: DUMP_VERSION,
        });
    }
    let (rows, dims, hop) = (word(1) as usize, word(2) as usize, word(3));
    let expected = rows
        .checked_mul(dims)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| corrupt("header dimensions overflow".into()))?;
    let body = &bytes[HEADER_BYTES..];
    if body.len() != expected {
        return Err(corrupt(format!(
            "expected {expected} data bytes for {rows}x{dims}, found {}",
            body.len()
        )));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(FeatureDump {
        frames: Frames::new(rows, dims, data)?,
        hop_samples: hop,
    })
}

pub fn write_feature_dump(path: &Path, dump: &FeatureDump) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode_feature_dump(dump))?;
    f.sync_all()?;
    Ok(())
}

pub fn read_feature_dump(path: &Path) -> Result<FeatureDump> {
    let bytes = std::fs::read(path)?;
    decode_feature_dump(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> FeatureDump {
        let data = (0..56 * 29).map(|i| (i as f32).sin()).collect();
        FeatureDump {
            frames: Frames::new(56, 29, data).unwrap(),
            hop_samples: 320,
        }
    }

    #[test]
    fn header_layout() {
        let bytes = encode_feature_dump(&sample());
        assert_eq!(&bytes[..4], &1u32.to_le_bytes());
        assert_eq!(&bytes[4..8], &56u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &29u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &320u32.to_le_bytes());
        assert_eq!(bytes.len(), 16 + 56 * 29 * 4);
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.feat");
        write_feature_dump(&p, &sample()).unwrap();
        assert_eq!(read_feature_dump(&p).unwrap(), sample());
    }

    #[test]
    fn truncation_and_version() {
        let p = Path::new("x.feat");
        let bytes = encode_feature_dump(&sample());
        assert!(matches!(decode_feature_dump(&[], p), Err(Error::CorruptFile { .. })));
        assert!(matches!(
            decode_feature_dump(&bytes[..bytes.len() - 1], p),
            Err(Error::CorruptFile { .. })
        ));
        let mut v = bytes.clone();
        v[0] = 9;
        assert!(matches!(decode_feature_dump(&v, p), Err(Error::Version { found: 9, .. })));
    }

    proptest! {
        #[test]
        fn bit_exact(rows in 0usize..20, dims in 1usize..10, bits in proptest::collection::vec(any::<u32>(), 200)) {
            let data: Vec<f32> = (0..rows * dims).map(|i| f32::from_bits(bits[i % bits.len()])).collect();
            let d = FeatureDump { frames: Frames::new(rows, dims, data.clone()).unwrap(), hop_samples: 80 };
            let back = decode_feature_dump(&encode_feature_dump(&d), Path::new("p")).unwrap();
            let got: Vec<u32> = back.frames.data().iter().map(|v| v.to_bits()).collect();
            let want: Vec<u32> = data.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(got, want);
        }
    }
}
