//! Small shared helpers: pinned timestamp (de)serialization, atomic file
//! writes, and a seedable stable hash.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Serde adapter pinning timestamps to `%Y-%m-%dT%H:%M:%SZ` (second
/// precision, UTC). Subsecond parts are truncated on read so that
/// write-then-read is the identity.
pub mod ts_seconds {
    use chrono::{DateTime, Timelike, Utc};
    use serde::{self, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(dt: &DateTime<Utc>, ser: S) -> Result<S::Ok, S::Error> {
        ser.serialize_str(&dt.format("%Y-%m-%dT%H:%M:%SZ").to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<DateTime<Utc>, D::Error> {
        let raw = String::deserialize(de)?;
        let dt = DateTime::parse_from_rfc3339(&raw)
            .map_err(|e| serde::de::Error::custom(format!("bad timestamp {raw:?}: {e}")))?;
        Ok(truncate_seconds(dt.with_timezone(&Utc)))
    }

    pub fn truncate_seconds(dt: DateTime<Utc>) -> DateTime<Utc> {
        dt.with_nanosecond(0).unwrap_or(dt)
    }
}

/// Parse an RFC 3339 timestamp (or the NVD's zone-less millisecond variant)
/// into UTC, truncated to whole seconds.
pub fn parse_utc(raw: &str) -> Result<chrono::DateTime<chrono::Utc>> {
    use chrono::{DateTime, NaiveDateTime, Utc};
    if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
        return Ok(ts_seconds::truncate_seconds(dt.with_timezone(&Utc)));
    }
    // NVD v2 publishes "2021-08-04T13:00:00.000" with no zone; dates are UTC.
    let naive = NaiveDateTime::parse_from_str(raw, "%Y-%m-%dT%H:%M:%S%.f")
        .map_err(|e| Error::Parse(format!("bad timestamp {raw:?}: {e}")))?;
    Ok(ts_seconds::truncate_seconds(naive.and_utc()))
}

/// Write `bytes` to `path` atomically: write a sibling temp file, then rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    if !dir.as_os_str().is_empty() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("out")
    ));
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Seeded FNV-1a over bytes. Stable across platforms and releases, which is
/// what the feature hasher and seed derivation need.
pub fn fnv1a64(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derive an independent RNG stream from a user seed and a purpose label.
pub fn subseed(seed: u64, label: &str) -> u64 {
    fnv1a64(seed, label.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};

    #[test]
    fn parses_rfc3339_and_nvd_shapes() {
        let a = parse_utc("2021-08-04T13:00:00Z").unwrap();
        let b = parse_utc("2021-08-04T13:00:00.000").unwrap();
        let c = parse_utc("2021-08-04T13:00:00.731Z").unwrap();
        let want = Utc.with_ymd_and_hms(2021, 8, 4, 13, 0, 0).unwrap();
        assert_eq!(a, want);
        assert_eq!(b, want);
        assert_eq!(c, want);
        assert!(parse_utc("yesterday").is_err());
    }

    #[test]
    fn atomic_write_replaces_contents() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        atomic_write(&path, b"one").unwrap();
        atomic_write(&path, b"two").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"two");
        assert!(!path.with_extension("json.tmp").exists());
    }

    #[test]
    fn fnv_is_seed_sensitive() {
        assert_ne!(fnv1a64(1, b"token"), fnv1a64(2, b"token"));
        assert_eq!(fnv1a64(7, b"token"), fnv1a64(7, b"token"));
    }
}
