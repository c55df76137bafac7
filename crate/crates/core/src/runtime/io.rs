//! Versioned binary model container.
//!
//! Layout: the 8-byte magic `TWPMODEL`, a little-endian `u32` format
//! version, a little-endian `u64` header length, the JSON header, and then
//! every tensor's data as row-major little-endian `f32`, in header order.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::tensor::{ParamStore, Tensor};
use super::RuntimeError;

pub const MAGIC: &[u8; 8] = b"TWPMODEL";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    kind: String,
    meta: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

/// Serializes `params` with a model-specific `meta` block (vocabularies,
/// dimensions, label inventories).
pub fn write_model<W: Write>(
    mut out: W,
    kind: &str,
    meta: &serde_json::Value,
    params: &ParamStore,
) -> Result<(), RuntimeError> {
    let header = Header {
        format_version: FORMAT_VERSION,
        kind: kind.to_owned(),
        meta: meta.clone(),
        tensors: params
            .tensors()
            .map(|(name, t)| TensorEntry {
                name: name.to_owned(),
                rows: t.rows,
                cols: t.cols,
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| RuntimeError::Format(e.to_string()))?;
    let io = |e: std::io::Error| RuntimeError::Io(e.to_string());
    out.write_all(MAGIC).map_err(io)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes()).map_err(io)?;
    out.write_all(&(json.len() as u64).to_le_bytes()).map_err(io)?;
    out.write_all(&json).map_err(io)?;
    let mut buf = Vec::new();
    for (_, t) in params.tensors() {
        buf.clear();
        buf.reserve(t.data.len() * 4);
        for v in &t.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf).map_err(io)?;
    }
    Ok(())
}

pub fn model_to_bytes(
    kind: &str,
    meta: &serde_json::Value,
    params: &ParamStore,
) -> Result<Vec<u8>, RuntimeError> {
    let mut buf = Vec::new();
    write_model(&mut buf, kind, meta, params)?;
    Ok(buf)
}

/// Reads a container, checking that it holds a model of `expected_kind`.
pub fn read_model<R: Read>(
    mut input: R,
    expected_kind: &str,
) -> Result<(serde_json::Value, ParamStore), RuntimeError> {
    let io = |e: std::io::Error| RuntimeError::Io(e.to_string());
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(RuntimeError::Format("not a model file (bad magic)".into()));
    }
    let mut word = [0u8; 4];
    input.read_exact(&mut word).map_err(io)?;
    let version = u32::from_le_bytes(word);
    if version != FORMAT_VERSION {
        return Err(RuntimeError::Format(format!(
            "unsupported model format version {version}"
        )));
    }
    let mut len = [0u8; 8];
    input.read_exact(&mut len).map_err(io)?;
    let len = u64::from_le_bytes(len) as usize;
    let mut json = vec![0u8; len];
    input.read_exact(&mut json).map_err(io)?;
    let header: Header =
        serde_json::from_slice(&json).map_err(|e| RuntimeError::Format(e.to_string()))?;
    if header.kind != expected_kind {
        return Err(RuntimeError::Format(format!(
            "expected a {expected_kind} model, found {}",
            header.kind
        )));
    }
    let mut params = ParamStore::new();
    for entry in &header.tensors {
        let mut bytes = vec![0u8; entry.rows * entry.cols * 4];
        input.read_exact(&mut bytes).map_err(io)?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        params.add(&entry.name, Tensor::from_vec(entry.rows, entry.cols, data))?;
    }
    Ok((header.meta, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut store = ParamStore::new();
        store.add("a", Tensor::glorot(3, 4, &mut rng)).unwrap();
        store.add("b", Tensor::uniform(5, 1, 0.1, &mut rng)).unwrap();
        let meta = serde_json::json!({"vocab": ["<unk>", "x"], "dim": 4});
        let bytes = model_to_bytes("test", &meta, &store).unwrap();
        let (meta2, store2) = read_model(bytes.as_slice(), "test").unwrap();
        assert_eq!(meta, meta2);
        for id in store.ids() {
            assert_eq!(store.get(id), store2.get(id));
            assert_eq!(store.name(id), store2.name(id));
        }
        // Writing again yields identical bytes.
        assert_eq!(bytes, model_to_bytes("test", &meta2, &store2).unwrap());
    }

    #[test]
    fn wrong_kind_and_magic() {
        let store = ParamStore::new();
        let bytes = model_to_bytes("parser", &serde_json::Value::Null, &store).unwrap();
        assert!(read_model(bytes.as_slice(), "tagger").is_err());
        assert!(read_model(&b"garbage!garbage!"[..], "parser").is_err());
    }
}
