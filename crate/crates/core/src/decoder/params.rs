use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, RealMatrix, Result};

/// Named trainable matrices addressed by dense ids.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<RealMatrix>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ParamHeader {
    name: String,
    rows: usize,
    cols: usize,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: RealMatrix) -> usize {
        self.names.push(name.into());
        self.values.push(value);
        self.values.len() - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: usize) -> &RealMatrix {
        &self.values[id]
    }

    pub fn get_mut(&mut self, id: usize) -> &mut RealMatrix {
        &mut self.values[id]
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Total number of scalar parameters.
    pub fn n_scalars(&self) -> usize {
        self.values.iter().map(|v| v.data().len()).sum()
    }

    /// Writes the flat little-endian f64 blob and a JSON header carrying `meta`.
    pub fn save(&self, blob: &Path, header: &Path, meta: serde_json::Value) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(blob)?);
        for v in &self.values {
            for x in v.data() {
                f.write_all(&x.to_le_bytes())?;
            }
        }
        f.flush()?;
        let params: Vec<ParamHeader> = self
            .names
            .iter()
            .zip(&self.values)
            .map(|(n, v)| ParamHeader {
                name: n.clone(),
                rows: v.rows(),
                cols: v.cols(),
            })
            .collect();
        let doc = serde_json::json!({ "format": "f64-le", "config": meta, "params": params });
        std::fs::write(header, serde_json::to_string_pretty(&doc)? + "\n")?;
        Ok(())
    }

    /// Loads a checkpoint, returning the store and its `config` metadata.
    pub fn load(blob: &Path, header: &Path) -> Result<(Self, serde_json::Value)> {
        let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(header)?)?;
        if doc["format"] != "f64-le" {
            return Err(Error::parse("checkpoint header has an unknown format"));
        }
        let params: Vec<ParamHeader> = serde_json::from_value(doc["params"].clone())?;
        let bytes = std::fs::read(blob)?;
        let total: usize = params.iter().map(|p| p.rows * p.cols).sum();
        if bytes.len() != total * 8 {
            return Err(Error::parse(format!("checkpoint blob has {} bytes, header implies {}", bytes.len(), total * 8)));
        }
        let mut floats = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        let mut store = Self::new();
        for p in params {
            let data: Vec<f64> = floats.by_ref().take(p.rows * p.cols).collect();
            store.add(p.name, RealMatrix::new(p.rows, p.cols, data)?);
        }
        Ok((store, doc["config"].clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_round_trip() {
        let mut p = ParamStore::new();
        p.add("a", RealMatrix::from_fn(2, 3, |i, j| i as f64 - j as f64 * 0.25));
        p.add("b", RealMatrix::from_fn(1, 2, |_, j| j as f64 + 0.1));
        let dir = tempfile::tempdir().unwrap();
        let (blob, head) = (dir.path().join("c.bin"), dir.path().join("c.json"));
        p.save(&blob, &head, serde_json::json!({"k": 1})).unwrap();
        let (q, meta) = ParamStore::load(&blob, &head).unwrap();
        assert_eq!(p, q);
        assert_eq!(meta["k"], 1);
        assert_eq!(q.n_scalars(), 8);
        assert_eq!(q.id("b"), Some(1));
    }
}
