//! Optional on-disk cache for expensive tables, enabled by `CPVQUAD_CACHE_DIR`.
//!
//! Values round-trip exactly through JSON, so a cache hit returns the same
//! bits as a fresh computation.

use serde::de::DeserializeOwned;
use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};

pub const CACHE_ENV: &str = "CPVQUAD_CACHE_DIR";

pub fn cache_dir() -> Option<PathBuf> {
    std::env::var_os(CACHE_ENV).filter(|s| !s.is_empty()).map(PathBuf::from)
}

/// File name safe rendering of a cache key.
pub fn key_to_file(key: &str) -> String {
    let mut s: String = key
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect();
    s.push_str(".json");
    s
}

pub fn load<T: DeserializeOwned>(kind: &str, key: &str) -> Option<T> {
    let path = cache_dir()?.join(kind).join(key_to_file(key));
    let text = std::fs::read_to_string(path).ok()?;
    serde_json::from_str(&text).ok()
}

/// Best-effort store; failures are ignored since the cache is only an accelerator.
pub fn store<T: Serialize>(kind: &str, key: &str, value: &T) {
    let Some(dir) = cache_dir() else { return };
    let dir = dir.join(kind);
    if std::fs::create_dir_all(&dir).is_err() {
        return;
    }
    if let Ok(text) = serde_json::to_string(value) {
        let _ = write_atomic(&dir.join(key_to_file(key)), text.as_bytes());
    }
}

/// Writes `bytes` to a temporary file next to `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_contents() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn keys_are_file_safe() {
        assert_eq!(key_to_file("freud:alpha=2,beta=2|64"), "freud_alpha_2_beta_2_64.json");
    }
}
