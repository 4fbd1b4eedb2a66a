//! `LMSF` feature files and the on-disk feature cache.
//!
//! Layout: magic `LMSF`, version byte (1), variant id byte, u32 LE rows,
//! u32 LE cols, then `rows * cols` f32 LE values in row-major order.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::{FeatureError, FeatureVariant, LogMelSpectrogram, Matrix};
use crate::fsutil::write_atomic;

const MAGIC: &[u8; 4] = b"LMSF";
const VERSION: u8 = 1;
const HEADER_LEN: usize = 14;

pub fn encode_lmsf(spec: &LogMelSpectrogram) -> Vec<u8> {
    let m = spec.data();
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * m.as_slice().len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(spec.variant().id());
    out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
    for v in m.as_slice() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

pub fn decode_lmsf(bytes: &[u8]) -> Result<LogMelSpectrogram, FeatureError> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(FeatureError::Format("missing LMSF header".into()));
    }
    if bytes[4] != VERSION {
        return Err(FeatureError::Format(format!("unsupported LMSF version {}", bytes[4])));
    }
    let variant = FeatureVariant::from_id(bytes[5])
        .ok_or_else(|| FeatureError::Format(format!("unknown variant id {}", bytes[5])))?;
    let rows = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != rows * cols * 4 {
        return Err(FeatureError::Format(format!(
            "payload of {} bytes does not match {rows}x{cols}",
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    LogMelSpectrogram::new(Matrix::from_vec(rows, cols, data)?, variant)
        .map_err(|e| FeatureError::Format(e.to_string()))
}

/// Directory of LMSF files addressed by (clip path, variant).
#[derive(Debug, Clone)]
pub struct FeatureCache {
    dir: PathBuf,
}

impl FeatureCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, clip: &Path, variant: FeatureVariant) -> PathBuf {
        let mut h = Sha256::new();
        h.update(clip.to_string_lossy().as_bytes());
        h.update([0u8, variant.id()]);
        let digest = h.finalize();
        let hex: String = digest[..12].iter().map(|b| format!("{b:02x}")).collect();
        self.dir.join(format!("{hex}.{variant}.lmsf"))
    }

    /// True when a cache entry exists and is no older than the source clip.
    pub fn is_fresh(&self, clip: &Path, variant: FeatureVariant) -> bool {
        let entry = self.path_for(clip, variant);
        let Ok(cached) = std::fs::metadata(&entry).and_then(|m| m.modified()) else {
            return false;
        };
        match std::fs::metadata(clip).and_then(|m| m.modified()) {
            Ok(source) => cached >= source,
            // source gone: the cache is all we have
            Err(_) => true,
        }
    }

    pub fn load(&self, clip: &Path, variant: FeatureVariant) -> Result<LogMelSpectrogram, FeatureError> {
        let path = self.path_for(clip, variant);
        let bytes = std::fs::read(&path).map_err(|source| FeatureError::Io { path, source })?;
        let spec = decode_lmsf(&bytes)?;
        if spec.variant() != variant {
            return Err(FeatureError::Format(format!(
                "cache entry holds {} features, wanted {variant}",
                spec.variant()
            )));
        }
        Ok(spec)
    }

    pub fn store(&self, clip: &Path, spec: &LogMelSpectrogram) -> Result<PathBuf, FeatureError> {
        let path = self.path_for(clip, spec.variant());
        write_atomic(&path, &encode_lmsf(spec))
            .map_err(|source| FeatureError::Io { path: path.clone(), source })?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_spec(variant: FeatureVariant, seed: u64) -> LogMelSpectrogram {
        let n = variant.total_frames() * 64;
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        let data = (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) * 40.0 - 23.0
            })
            .collect();
        LogMelSpectrogram::new(Matrix::from_vec(variant.total_frames(), 64, data).unwrap(), variant).unwrap()
    }

    #[test]
    fn header_layout() {
        let spec = random_spec(FeatureVariant::V1, 1);
        let b = encode_lmsf(&spec);
        assert_eq!(&b[..4], b"LMSF");
        assert_eq!(b[4], 1);
        assert_eq!(b[5], 1);
        assert_eq!(u32::from_le_bytes(b[6..10].try_into().unwrap()), 999);
        assert_eq!(u32::from_le_bytes(b[10..14].try_into().unwrap()), 64);
        assert_eq!(b.len(), 14 + 999 * 64 * 4);
    }

    #[test]
    fn corrupt_files_rejected() {
        let b = encode_lmsf(&random_spec(FeatureVariant::V2, 2));
        assert!(decode_lmsf(&b[..b.len() - 1]).is_err());
        let mut v = b.clone();
        v[4] = 9;
        assert!(decode_lmsf(&v).is_err());
        let mut v = b.clone();
        v[5] = 7;
        assert!(decode_lmsf(&v).is_err());
        assert!(decode_lmsf(b"LMS").is_err());
    }

    #[test]
    fn cache_store_load_and_freshness() {
        let dir = tempfile::tempdir().unwrap();
        let cache = FeatureCache::new(dir.path().join("cache"));
        let clip = dir.path().join("a.wav");
        std::fs::write(&clip, b"x").unwrap();
        assert!(!cache.is_fresh(&clip, FeatureVariant::V1));
        let spec = random_spec(FeatureVariant::V1, 3);
        cache.store(&clip, &spec).unwrap();
        assert!(cache.is_fresh(&clip, FeatureVariant::V1));
        assert!(!cache.is_fresh(&clip, FeatureVariant::V2));
        assert_eq!(cache.load(&clip, FeatureVariant::V1).unwrap(), spec.quantized());
        assert_ne!(
            cache.path_for(&clip, FeatureVariant::V1),
            cache.path_for(&clip, FeatureVariant::V2)
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn lmsf_round_trip_is_bit_exact(seed in any::<u64>(), v2 in any::<bool>()) {
            let variant = if v2 { FeatureVariant::V2 } else { FeatureVariant::V1 };
            let spec = random_spec(variant, seed);
            let bytes = encode_lmsf(&spec);
            let back = decode_lmsf(&bytes).unwrap();
            prop_assert_eq!(&back, &spec.quantized());
            prop_assert_eq!(encode_lmsf(&back), bytes);
        }
    }
}
