//! JSON file helpers. Parse errors carry the file and the JSON path of the
//! offending field.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::IoError;

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let text = fs::read_to_string(path).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_json(&text, path)
}

/// Parses `text`, attributing errors to `origin`.
pub fn parse_json<T: DeserializeOwned>(text: &str, origin: &Path) -> Result<T, IoError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|err| {
        let field = err.path().to_string();
        IoError::Json {
            path: origin.to_path_buf(),
            field,
            message: err.into_inner().to_string(),
        }
    })
}

fn write_bytes(path: &Path, mut bytes: Vec<u8>) -> Result<(), IoError> {
    bytes.push(b'\n');
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|source| IoError::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, bytes).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_json_compact<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let bytes = serde_json::to_vec(value).map_err(|e| IoError::Other(e.to_string()))?;
    write_bytes(path, bytes)
}

pub fn write_json_pretty<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let bytes = serde_json::to_vec_pretty(value).map_err(|e| IoError::Other(e.to_string()))?;
    write_bytes(path, bytes)
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    let mut bytes = text.as_bytes().to_vec();
    if bytes.last() == Some(&b'\n') {
        bytes.pop();
    }
    write_bytes(path, bytes)
}
