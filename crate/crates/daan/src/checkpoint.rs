//! Binary checkpoint container with named tensor entries.
//!
//! Layout, all little-endian: an 8-byte magic, a format version, the step
//! counter, three length-prefixed UTF-8 strings (schema hash, schema text,
//! config text), a table of named `u64` scalars, and a table of named `f32`
//! tensors (name, dims, raw values). Tables are written in sorted name
//! order, so identical state always produces byte-identical files.
//!
//! Entries carry the parameter names from [`ParamStore`] under a `param.`
//! prefix and optimizer slots under `opt.<label>.`; loading pulls only what
//! the receiving store asks for, so a checkpoint with extra entries (say, a
//! learned translator) still restores a model that doesn't use them. The
//! schema hash is stored so a model is never evaluated against a different
//! attribute vocabulary.

use std::collections::BTreeMap;
use std::io::Cursor;
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use ndarray::{ArrayD, IxDyn};

use crate::error::CheckpointError;
use crate::nn::{Adam, ParamStore, SgdMomentum};
use crate::schema::AttributeSchema;

const MAGIC: &[u8; 8] = b"DAANCKPT";
const VERSION: u32 = 1;

/// One experiment's persistent state: parameters, optimizer slots, the step
/// counter and enough provenance (schema, config) to refuse misuse.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub step: u64,
    pub schema_hash: String,
    pub schema_text: String,
    /// Serialized training configuration, informational on reload.
    pub config_text: String,
    scalars: BTreeMap<String, u64>,
    tensors: BTreeMap<String, ArrayD<f32>>,
}

fn io_err(path: &Path, source: std::io::Error) -> CheckpointError {
    CheckpointError::Io { path: path.display().to_string(), source }
}

fn write_str(buf: &mut Vec<u8>, s: &str) {
    buf.write_u32::<LE>(s.len() as u32).unwrap();
    buf.extend_from_slice(s.as_bytes());
}

fn read_str(cur: &mut Cursor<Vec<u8>>) -> std::io::Result<String> {
    let len = cur.read_u32::<LE>()? as usize;
    let mut bytes = vec![0u8; len];
    std::io::Read::read_exact(cur, &mut bytes)?;
    String::from_utf8(bytes)
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}

impl Checkpoint {
    pub fn new(step: u64, schema: &AttributeSchema, config_text: impl Into<String>) -> Self {
        Checkpoint {
            step,
            schema_hash: schema.hash(),
            schema_text: schema.to_text(),
            config_text: config_text.into(),
            scalars: BTreeMap::new(),
            tensors: BTreeMap::new(),
        }
    }

    /// Error unless the checkpoint was written for exactly this vocabulary.
    pub fn verify_schema(&self, schema: &AttributeSchema) -> Result<(), CheckpointError> {
        let current = schema.hash();
        if self.schema_hash != current {
            return Err(CheckpointError::SchemaHash {
                checkpoint: self.schema_hash.clone(),
                current,
            });
        }
        Ok(())
    }

    pub fn insert(&mut self, name: impl Into<String>, value: ArrayD<f32>) {
        self.tensors.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Result<&ArrayD<f32>, CheckpointError> {
        self.tensors.get(name).ok_or_else(|| CheckpointError::MissingEntry(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn insert_scalar(&mut self, name: impl Into<String>, value: u64) {
        self.scalars.insert(name.into(), value);
    }

    pub fn scalar(&self, name: &str) -> Result<u64, CheckpointError> {
        self.scalars.get(name).copied().ok_or_else(|| CheckpointError::MissingEntry(name.to_string()))
    }

    pub fn tensor_names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    /// Copy every parameter out of `store` under `param.<name>` entries.
    pub fn pack_params(&mut self, store: &ParamStore) {
        for (name, value) in store.iter() {
            self.insert(format!("param.{name}"), value.clone());
        }
    }

    /// Overwrite every parameter in `store` from its `param.<name>` entry.
    /// Every store parameter must be present with its exact shape; entries
    /// the store doesn't ask for are ignored.
    pub fn unpack_params(&self, store: &mut ParamStore) -> Result<(), CheckpointError> {
        for id in store.ids().collect::<Vec<_>>() {
            let key = format!("param.{}", store.name(id));
            let entry = self.get(&key)?;
            if entry.shape() != store.value(id).shape() {
                return Err(CheckpointError::ShapeMismatch {
                    name: key,
                    got: entry.shape().to_vec(),
                    expected: store.value(id).shape().to_vec(),
                });
            }
            store.value_mut(id).assign(entry);
        }
        Ok(())
    }

    /// Save momentum slots under `opt.<label>.velocity.<param>`; parameters
    /// the optimizer never touched have no slot and no entry.
    pub fn pack_sgd(&mut self, label: &str, store: &ParamStore, opt: &SgdMomentum) {
        for id in store.ids() {
            if let Some(v) = &opt.state()[id.index()] {
                self.insert(format!("opt.{label}.velocity.{}", store.name(id)), v.clone());
            }
        }
    }

    pub fn unpack_sgd(
        &self,
        label: &str,
        store: &ParamStore,
        opt: &mut SgdMomentum,
    ) -> Result<(), CheckpointError> {
        for id in store.ids() {
            let key = format!("opt.{label}.velocity.{}", store.name(id));
            if !self.contains(&key) {
                continue;
            }
            let entry = self.get(&key)?;
            if entry.shape() != store.value(id).shape() {
                return Err(CheckpointError::ShapeMismatch {
                    name: key,
                    got: entry.shape().to_vec(),
                    expected: store.value(id).shape().to_vec(),
                });
            }
            opt.set_state(id.index(), entry.clone());
        }
        Ok(())
    }

    /// Save first/second-moment slots under `opt.<label>.m.<param>` /
    /// `opt.<label>.v.<param>` and the step count as scalar `opt.<label>.t`.
    pub fn pack_adam(&mut self, label: &str, store: &ParamStore, opt: &Adam) {
        let (m, v, t) = opt.state();
        self.insert_scalar(format!("opt.{label}.t"), t);
        for id in store.ids() {
            if let (Some(m), Some(v)) = (&m[id.index()], &v[id.index()]) {
                self.insert(format!("opt.{label}.m.{}", store.name(id)), m.clone());
                self.insert(format!("opt.{label}.v.{}", store.name(id)), v.clone());
            }
        }
    }

    pub fn unpack_adam(
        &self,
        label: &str,
        store: &ParamStore,
        opt: &mut Adam,
    ) -> Result<(), CheckpointError> {
        opt.set_t(self.scalar(&format!("opt.{label}.t"))?);
        for id in store.ids() {
            let mkey = format!("opt.{label}.m.{}", store.name(id));
            if !self.contains(&mkey) {
                continue;
            }
            let vkey = format!("opt.{label}.v.{}", store.name(id));
            let m = self.get(&mkey)?;
            let v = self.get(&vkey)?;
            for (key, entry) in [(&mkey, m), (&vkey, v)] {
                if entry.shape() != store.value(id).shape() {
                    return Err(CheckpointError::ShapeMismatch {
                        name: key.clone(),
                        got: entry.shape().to_vec(),
                        expected: store.value(id).shape().to_vec(),
                    });
                }
            }
            opt.set_state(id.index(), m.clone(), v.clone());
        }
        Ok(())
    }

    /// Serialize to the binary layout. Deterministic: same state, same bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.write_u32::<LE>(VERSION).unwrap();
        buf.write_u64::<LE>(self.step).unwrap();
        write_str(&mut buf, &self.schema_hash);
        write_str(&mut buf, &self.schema_text);
        write_str(&mut buf, &self.config_text);
        buf.write_u32::<LE>(self.scalars.len() as u32).unwrap();
        for (name, value) in &self.scalars {
            write_str(&mut buf, name);
            buf.write_u64::<LE>(*value).unwrap();
        }
        buf.write_u32::<LE>(self.tensors.len() as u32).unwrap();
        for (name, value) in &self.tensors {
            write_str(&mut buf, name);
            buf.write_u32::<LE>(value.ndim() as u32).unwrap();
            for &d in value.shape() {
                buf.write_u64::<LE>(d as u64).unwrap();
            }
            for &x in value.iter() {
                buf.write_f32::<LE>(x).unwrap();
            }
        }
        buf
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| io_err(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint, CheckpointError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
        let mut cur = Cursor::new(bytes);
        let io = |e: std::io::Error| io_err(path, e);

        let mut magic = [0u8; 8];
        std::io::Read::read_exact(&mut cur, &mut magic).map_err(io)?;
        if &magic != MAGIC {
            return Err(CheckpointError::BadMagic { path: path.display().to_string() });
        }
        let version = cur.read_u32::<LE>().map_err(io)?;
        if version != VERSION {
            return Err(CheckpointError::BadVersion {
                path: path.display().to_string(),
                version,
            });
        }
        let step = cur.read_u64::<LE>().map_err(io)?;
        let schema_hash = read_str(&mut cur).map_err(io)?;
        let schema_text = read_str(&mut cur).map_err(io)?;
        let config_text = read_str(&mut cur).map_err(io)?;

        let mut scalars = BTreeMap::new();
        let n_scalars = cur.read_u32::<LE>().map_err(io)?;
        for _ in 0..n_scalars {
            let name = read_str(&mut cur).map_err(io)?;
            let value = cur.read_u64::<LE>().map_err(io)?;
            scalars.insert(name, value);
        }

        let mut tensors = BTreeMap::new();
        let n_tensors = cur.read_u32::<LE>().map_err(io)?;
        for _ in 0..n_tensors {
            let name = read_str(&mut cur).map_err(io)?;
            let ndim = cur.read_u32::<LE>().map_err(io)? as usize;
            let mut dims = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                dims.push(cur.read_u64::<LE>().map_err(io)? as usize);
            }
            let numel: usize = dims.iter().product();
            let mut data = vec![0f32; numel];
            cur.read_f32_into::<LE>(&mut data).map_err(io)?;
            let array = ArrayD::from_shape_vec(IxDyn(&dims), data)
                .map_err(|e| io_err(path, std::io::Error::new(std::io::ErrorKind::InvalidData, e)))?;
            tensors.insert(name, array);
        }

        Ok(Checkpoint { step, schema_hash, schema_text, config_text, scalars, tensors })
    }
}
