//! NFM1 binary feature-map container.
//!
//! Layout, all little-endian:
//! `"NFM1"` magic (4 bytes) | u32 x5: `f_h, f_w, f_c, i_h, i_w` |
//! f32 x `f_h * f_w * f_c` activations, row-major (height outermost, channel
//! innermost). The file length must equal `24 + 4 * f_h * f_w * f_c` exactly.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::featgeom::FeatureMap;

const MAGIC: &[u8; 4] = b"NFM1";
const HEADER_LEN: usize = 24;

/// Parses an NFM1 byte buffer, rejecting bad magic and any length that
/// disagrees with the header.
pub fn read_feature_map(bytes: &[u8]) -> Result<FeatureMap> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(format!(
            "NFM1 file too short: expected at least {HEADER_LEN} bytes, got {}",
            bytes.len()
        )));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::format(format!(
            "bad magic {:?}, expected \"NFM1\"",
            &bytes[0..4]
        )));
    }
    let mut fields = [0u32; 5];
    for (i, field) in fields.iter_mut().enumerate() {
        let start = 4 + 4 * i;
        *field = u32::from_le_bytes(bytes[start..start + 4].try_into().unwrap());
    }
    let [f_h, f_w, f_c, i_h, i_w] = fields;

    // Header fields are attacker-controlled; the size math must not wrap.
    let expected = (f_h as usize)
        .checked_mul(f_w as usize)
        .and_then(|v| v.checked_mul(f_c as usize))
        .and_then(|v| v.checked_mul(4))
        .and_then(|v| v.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::format("NFM1 header dimensions overflow".to_string()))?;
    if bytes.len() != expected {
        return Err(Error::format(format!(
            "NFM1 length mismatch: header implies {expected} bytes, file has {}",
            bytes.len()
        )));
    }

    let data: Vec<f32> = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::format(format!(
            "NFM1 activation {pos} is not finite"
        )));
    }

    FeatureMap::new(f_h as usize, f_w as usize, f_c as usize, i_h, i_w, data)
}

/// Reads an NFM1 file from disk.
pub fn read_feature_map_file(path: &Path) -> Result<FeatureMap> {
    let bytes = fs::read(path)?;
    read_feature_map(&bytes)
}

/// Serializes a feature map to NFM1 bytes; bit-exact round-trip with the
/// reader.
pub fn feature_map_to_bytes(map: &FeatureMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * map.data().len());
    out.extend_from_slice(MAGIC);
    for field in [
        map.height() as u32,
        map.width() as u32,
        map.channels() as u32,
        map.image_height(),
        map.image_width(),
    ] {
        out.extend_from_slice(&field.to_le_bytes());
    }
    for v in map.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Writes an NFM1 file atomically.
pub fn write_feature_map_file(path: &Path, map: &FeatureMap) -> Result<()> {
    super::write_atomic(path, &feature_map_to_bytes(map))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_map() -> FeatureMap {
        let data: Vec<f32> = (0..2 * 3 * 2).map(|i| i as f32 * 0.5 - 1.0).collect();
        FeatureMap::new(2, 3, 2, 480, 640, data).unwrap()
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let map = sample_map();
        let bytes = feature_map_to_bytes(&map);
        let reread = read_feature_map(&bytes).unwrap();
        assert_eq!(reread, map);
        assert_eq!(feature_map_to_bytes(&reread), bytes);
    }

    #[test]
    fn bad_magic_rejected() {
        let mut bytes = feature_map_to_bytes(&sample_map());
        bytes[0] = b'X';
        let err = read_feature_map(&bytes).unwrap_err();
        assert!(err.to_string().contains("magic"));
    }

    #[test]
    fn length_mismatch_names_both_counts() {
        let mut bytes = feature_map_to_bytes(&sample_map());
        let expected_len = bytes.len();
        bytes.push(0);
        let err = read_feature_map(&bytes).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains(&expected_len.to_string()), "{msg}");
        assert!(msg.contains(&(expected_len + 1).to_string()), "{msg}");

        bytes.truncate(expected_len - 4);
        assert!(read_feature_map(&bytes).is_err());
    }

    #[test]
    fn truncated_header_rejected() {
        assert!(read_feature_map(b"NFM1\x01\x00").is_err());
    }

    #[test]
    fn overflowing_header_dimensions_rejected() {
        let mut bytes = Vec::from(*b"NFM1");
        for field in [u32::MAX, u32::MAX, u32::MAX, 100u32, 100u32] {
            bytes.extend_from_slice(&field.to_le_bytes());
        }
        let err = read_feature_map(&bytes).unwrap_err();
        assert!(err.to_string().contains("overflow"), "{err}");
    }

    #[test]
    fn non_finite_activation_rejected() {
        let map = sample_map();
        let mut bytes = feature_map_to_bytes(&map);
        bytes[HEADER_LEN..HEADER_LEN + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(read_feature_map(&bytes).is_err());
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("map.nfm");
        let map = sample_map();
        write_feature_map_file(&path, &map).unwrap();
        assert_eq!(read_feature_map_file(&path).unwrap(), map);
    }
}
