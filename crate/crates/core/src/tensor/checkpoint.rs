//! Parameter collections and their on-disk form.
//!
//! A checkpoint is a JSON document:
//!
//! ```json
//! {"format": "migcast-params", "version": 1,
//!  "params": [{"name": "enc0.attn.wq", "shape": [32, 32], "data": [...]}]}
//! ```
//!
//! Floats are written in shortest round-trip form, so reading a checkpoint
//! back reproduces every parameter bit for bit.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CHECKPOINT_FORMAT: &str = "migcast-params";

/// Named parameters in deterministic (sorted) order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: BTreeMap<String, Tensor>,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.params.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.params.values().map(Tensor::numel).sum()
    }
}

impl Serialize for ParamStore {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let entries: Vec<Entry> = self
            .params
            .iter()
            .map(|(name, t)| Entry {
                name: name.clone(),
                shape: t.shape().to_vec(),
                data: t.data().to_vec(),
            })
            .collect();
        entries.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ParamStore {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let entries = Vec::<Entry>::deserialize(d)?;
        let mut store = ParamStore::new();
        for e in entries {
            let t = Tensor::new(e.shape, e.data).map_err(serde::de::Error::custom)?;
            if store.params.insert(e.name.clone(), t).is_some() {
                return Err(serde::de::Error::custom(format!("duplicate parameter '{}'", e.name)));
            }
        }
        Ok(store)
    }
}

pub fn write_checkpoint(params: &ParamStore, writer: impl Write) -> Result<()> {
    let doc = serde_json::json!({
        "format": CHECKPOINT_FORMAT,
        "version": 1,
        "params": params,
    });
    serde_json::to_writer(writer, &doc).map_err(|e| Error::Config(format!("writing checkpoint: {e}")))
}

pub fn read_checkpoint(reader: impl Read) -> Result<ParamStore> {
    let doc: serde_json::Value =
        serde_json::from_reader(reader).map_err(|e| Error::Config(format!("reading checkpoint: {e}")))?;
    if doc.get("format").and_then(|f| f.as_str()) != Some(CHECKPOINT_FORMAT) {
        return Err(Error::Config("not a migcast parameter checkpoint".into()));
    }
    serde_json::from_value(doc["params"].clone()).map_err(|e| Error::Config(format!("reading checkpoint: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn checkpoint_round_trip_is_bit_exact(
            values in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 1..40)
        ) {
            let mut store = ParamStore::new();
            store.insert("a", Tensor::new(vec![values.len()], values.clone()).unwrap());
            store.insert("b.bias", Tensor::new(vec![1, values.len()], values.iter().map(|v| v / 3.0).collect()).unwrap());
            let mut buf = Vec::new();
            write_checkpoint(&store, &mut buf).unwrap();
            let back = read_checkpoint(buf.as_slice()).unwrap();
            for (name, t) in store.iter() {
                let u = back.get(name).unwrap();
                prop_assert_eq!(t.shape(), u.shape());
                for (x, y) in t.data().iter().zip(u.data()) {
                    prop_assert_eq!(x.to_bits(), y.to_bits());
                }
            }
        }
    }

    #[test]
    fn rejects_foreign_documents() {
        assert!(read_checkpoint(&b"{\"format\":\"other\",\"params\":[]}"[..]).is_err());
        let bad = br#"{"format":"migcast-params","version":1,"params":[{"name":"x","shape":[2],"data":[1.0]}]}"#;
        assert!(read_checkpoint(&bad[..]).is_err());
    }
}
