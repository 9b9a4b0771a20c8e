//! MPF1 map container: magic `MPF1`, u32 LE height, u32 LE width, then
//! `height * width` f32 LE values in row-major order.

use std::path::Path;

use super::FloatMap;
use crate::codec::{ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const MAGIC: &[u8; 4] = b"MPF1";

pub fn encode_map<T: Scalar>(map: &FloatMap<T>) -> Vec<u8> {
    let mut w = ByteWriter::default();
    w.bytes(MAGIC);
    w.u32(map.height() as u32);
    w.u32(map.width() as u32);
    for v in map.values() {
        w.f32(v.to_f32().unwrap_or(f32::NAN));
    }
    w.buf
}

pub fn decode_map<T: Scalar>(bytes: &[u8]) -> Result<FloatMap<T>> {
    let mut r = ByteReader::new(bytes);
    r.magic(MAGIC)?;
    let h = r.u32()? as usize;
    let w = r.u32()? as usize;
    let body_at = r.offset();
    let raw = r.f32_vec(h * w)?;
    r.finish()?;
    let values = raw.into_iter().map(|v| T::of(v as f64)).collect();
    FloatMap::new(h, w, values).map_err(|e| Error::Parse {
        offset: body_at,
        message: e.to_string(),
    })
}

pub fn save_map<T: Scalar>(map: &FloatMap<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_map(map)).map_err(|e| Error::io(path, e))
}

pub fn load_map<T: Scalar>(path: impl AsRef<Path>) -> Result<FloatMap<T>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_map(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_round_trip() {
        let map = FloatMap::constant(16, 16, 0.25f32).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.mpf");
        save_map(&map, &path).unwrap();
        let back: FloatMap<f32> = load_map(&path).unwrap();
        assert_eq!(back, map);
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 12 + 16 * 16 * 4);
    }

    #[test]
    fn layout_is_little_endian() {
        let map = FloatMap::new(1, 2, vec![1.0f32, 0.5]).unwrap();
        let bytes = encode_map(&map);
        assert_eq!(&bytes[..4], b"MPF1");
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        assert_eq!(&bytes[8..12], &[2, 0, 0, 0]);
        assert_eq!(&bytes[12..16], &1.0f32.to_le_bytes());
    }

    #[test]
    fn truncated_reports_missing_bytes() {
        let map = FloatMap::constant(4, 4, 0.5f32).unwrap();
        let bytes = encode_map(&map);
        let err = decode_map::<f32>(&bytes[..bytes.len() - 6]).unwrap_err();
        match err {
            Error::Truncated { offset, missing } => {
                assert_eq!(offset, 12);
                assert_eq!(missing, 6);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err_string(&bytes[..bytes.len() - 6]).contains("6 bytes missing"));
    }

    fn err_string(b: &[u8]) -> String {
        decode_map::<f32>(b).unwrap_err().to_string()
    }

    #[test]
    fn bad_magic() {
        assert!(matches!(
            decode_map::<f32>(b"MPF2\0\0\0\0\0\0\0\0"),
            Err(Error::Parse { offset: 0, .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn round_trip_bit_exact(h in 1usize..12, w in 1usize..12, seed in any::<u64>()) {
            let mut state = seed;
            let map = FloatMap::from_fn(h, w, |_, _| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (state >> 40) as f32 / (1u64 << 24) as f32
            }).unwrap();
            let back: FloatMap<f32> = decode_map(&encode_map(&map)).unwrap();
            prop_assert!(back.values().iter().zip(map.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
}
