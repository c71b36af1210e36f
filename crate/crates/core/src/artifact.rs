//! Self-describing JSON artifacts.
//!
//! Every file written by the pipeline starts with a header naming the tool
//! version, the artifact kind, and a hash of the configuration that produced
//! it. Struct fields serialise in declaration order, so files diff cleanly.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Header {
    pub tool: String,
    pub kind: String,
    pub config_hash: String,
}

impl Header {
    pub fn new(kind: &str, config_hash: &str) -> Self {
        Self {
            tool: crate::TOOL_VERSION.to_string(),
            kind: kind.to_string(),
            config_hash: config_hash.to_string(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    header: Header,
    body: T,
}

/// First 16 hex digits of the SHA-256 of a serialisable value's JSON form.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config is serialisable");
    let digest = Sha256::digest(&bytes);
    hex::encode(&digest[..8])
}

pub fn to_json_string<T: Serialize>(header: &Header, body: &T) -> String {
    let env = Envelope {
        header: header.clone(),
        body,
    };
    let mut s = serde_json::to_string_pretty(&env).expect("artifact is serialisable");
    s.push('\n');
    s
}

pub fn from_json_str<T: DeserializeOwned>(text: &str, kind: &str, path: &Path) -> Result<(Header, T)> {
    let env: Envelope<T> = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    if env.header.kind != kind {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            message: format!("expected a `{kind}` artifact, found `{}`", env.header.kind),
        });
    }
    Ok((env.header, env.body))
}

pub fn write_json<T: Serialize>(path: &Path, header: &Header, body: &T) -> Result<()> {
    write_text(path, &to_json_string(header, body))
}

pub fn read_json<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<(Header, T)> {
    let text = read_text(path)?;
    from_json_str(&text, kind, path)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|source| Error::Io {
                path: dir.to_path_buf(),
                source,
            })?;
        }
    }
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Comment line placed above CSV headers.
pub fn csv_preamble(header: &Header) -> String {
    format!(
        "# tool={} kind={} config_hash={}\n",
        header.tool, header.kind, header.config_hash
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_mismatch_is_a_parse_error() {
        let h = Header::new("plan", "abc");
        let s = to_json_string(&h, &vec![1.0_f64, 2.5]);
        let err = from_json_str::<Vec<f64>>(&s, "library", Path::new("x.json")).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
        let (h2, v) = from_json_str::<Vec<f64>>(&s, "plan", Path::new("x.json")).unwrap();
        assert_eq!(h2, h);
        assert_eq!(v, vec![1.0, 2.5]);
    }

    #[test]
    fn hash_is_stable_and_short() {
        let a = config_hash(&("pi2", 0.4_f64));
        assert_eq!(a, config_hash(&("pi2", 0.4_f64)));
        assert_ne!(a, config_hash(&("pi2", 0.8_f64)));
        assert_eq!(a.len(), 16);
    }
}
