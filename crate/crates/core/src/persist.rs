//! Canonical, checksummed text files.
//!
//! ```text
//! SPRINTCTL <kind> <format-version> sha256:<hex digest of body>
//! <body: pretty-printed JSON, object keys sorted>
//! ```
//!
//! Numbers use the shortest representation that round-trips, so the same
//! value always renders to the same bytes.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const MAGIC: &str = "SPRINTCTL";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_canonical(value: &Value, indent: usize, out: &mut String) {
    const STEP: &str = "  ";
    match value {
        Value::Array(items) if !items.is_empty() => {
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                out.push_str(&STEP.repeat(indent + 1));
                write_canonical(item, indent + 1, out);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            out.push_str(&STEP.repeat(indent));
            out.push(']');
        }
        Value::Object(map) if !map.is_empty() => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (i, key) in keys.iter().enumerate() {
                out.push_str(&STEP.repeat(indent + 1));
                out.push_str(&Value::String((*key).clone()).to_string());
                out.push_str(": ");
                write_canonical(&map[*key], indent + 1, out);
                out.push_str(if i + 1 < keys.len() { ",\n" } else { "\n" });
            }
            out.push_str(&STEP.repeat(indent));
            out.push('}');
        }
        scalar => out.push_str(&scalar.to_string()),
    }
}

/// Canonical JSON text for any serializable value (sorted keys, two-space indent).
pub fn canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let value = serde_json::to_value(value)
        .map_err(|e| Error::InvalidConfig(format!("value is not serializable: {e}")))?;
    let mut out = String::new();
    write_canonical(&value, 0, &mut out);
    out.push('\n');
    Ok(out)
}

pub fn encode<T: Serialize>(kind: &str, version: u32, value: &T) -> Result<String> {
    let body = canonical_json(value)?;
    Ok(format!(
        "{MAGIC} {kind} {version} sha256:{}\n{body}",
        sha256_hex(body.as_bytes())
    ))
}

pub fn decode<T: DeserializeOwned>(kind: &str, supported: u32, text: &str) -> Result<T> {
    let (header, body) = text
        .split_once('\n')
        .ok_or_else(|| Error::CorruptFile("missing header line".into()))?;
    let fields: Vec<&str> = header.split(' ').collect();
    let [magic, found_kind, version, digest] = fields[..] else {
        return Err(Error::CorruptFile(format!("malformed header {header:?}")));
    };
    if magic != MAGIC || found_kind != kind {
        return Err(Error::CorruptFile(format!(
            "expected a {MAGIC} {kind} file, found header {header:?}"
        )));
    }
    let expected = digest
        .strip_prefix("sha256:")
        .ok_or_else(|| Error::CorruptFile(format!("malformed checksum {digest:?}")))?;
    if sha256_hex(body.as_bytes()) != expected {
        return Err(Error::CorruptFile("checksum mismatch".into()));
    }
    let version: u32 = version
        .parse()
        .map_err(|_| Error::CorruptFile(format!("malformed version {version:?}")))?;
    if version != supported {
        return Err(Error::VersionMismatch {
            found: version,
            supported,
        });
    }
    let value: Value =
        serde_json::from_str(body).map_err(|e| Error::CorruptFile(format!("invalid body: {e}")))?;
    if let Some(v) = value.get("format_version").and_then(Value::as_u64) {
        if v != u64::from(supported) {
            return Err(Error::VersionMismatch {
                found: v as u32,
                supported,
            });
        }
    }
    serde_json::from_value(value).map_err(|e| Error::CorruptFile(format!("invalid body: {e}")))
}

/// Writes `contents` to a sibling temporary file and renames it into place,
/// so readers never observe a partially written file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::io(path, std::io::Error::other("path has no file name")))?;
    let tmp = dir.join(format!(
        ".{}.tmp-{}",
        file_name.to_string_lossy(),
        std::process::id()
    ));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

pub fn save<T: Serialize>(kind: &str, version: u32, value: &T, path: &Path) -> Result<()> {
    write_atomic(path, encode(kind, version, value)?.as_bytes())
}

pub fn load<T: DeserializeOwned>(kind: &str, supported: u32, path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    decode(kind, supported, &text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn canonical_sorts_keys_regardless_of_insertion() {
        let mut a = HashMap::new();
        let mut b = HashMap::new();
        for (k, v) in [("z", 1.5), ("a", 0.1), ("m", -2.0)] {
            a.insert(k, v);
        }
        for (k, v) in [("m", -2.0), ("z", 1.5), ("a", 0.1)] {
            b.insert(k, v);
        }
        let text = canonical_json(&a).unwrap();
        assert_eq!(text, canonical_json(&b).unwrap());
        assert_eq!(text, "{\n  \"a\": 0.1,\n  \"m\": -2.0,\n  \"z\": 1.5\n}\n");
    }

    #[test]
    fn decode_detects_tampering() {
        let text = encode("TEST", 1, &vec![1, 2, 3]).unwrap();
        assert_eq!(decode::<Vec<i32>>("TEST", 1, &text).unwrap(), vec![1, 2, 3]);
        let tampered = text.replace('2', "5");
        assert_eq!(decode::<Vec<i32>>("TEST", 1, &tampered).unwrap_err().code(), "CORRUPT_FILE");
        assert_eq!(decode::<Vec<i32>>("OTHER", 1, &text).unwrap_err().code(), "CORRUPT_FILE");
        let bumped = text.replacen("TEST 1", "TEST 2", 1);
        assert!(matches!(
            decode::<Vec<i32>>("TEST", 1, &bumped).unwrap_err(),
            Error::VersionMismatch { found: 2, supported: 1 }
        ));
        assert_eq!(decode::<Vec<i32>>("TEST", 1, "").unwrap_err().code(), "CORRUPT_FILE");
    }

    #[test]
    fn write_atomic_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.txt");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
