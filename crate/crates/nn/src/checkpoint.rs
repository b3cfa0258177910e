//! Checkpoint directories: `manifest.json` plus one little-endian `tensors.bin`.
//!
//! Parameters are keyed `{network}/{layer path}/{weight|bias}`. A shared decoder is stored once
//! under its owner; the manifest records the binding (`"G_DA/up": "G_D/up"`) and loading rebuilds
//! the networks so the binding is an alias again, never a copy.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use pdanet_core::io::sha256_hex;
use pdanet_core::Scalar;
use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::model::{ModelConfig, PdaNet};
use crate::optim::{Adam, AdamConfig, Moments};
use crate::params::ParamStore;

pub const FORMAT: &str = "pdanet-checkpoint";
pub const VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";
pub const TENSORS: &str = "tensors.bin";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub key: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentEntry {
    pub key: String,
    pub step: u64,
    pub m_offset: usize,
    pub v_offset: usize,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerEntry {
    pub config: AdamConfig,
    pub moments: Vec<MomentEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub dtype: String,
    pub seed: u64,
    pub model: ModelConfig,
    pub aliases: BTreeMap<String, String>,
    pub tensors: Vec<TensorEntry>,
    pub optimizers: BTreeMap<String, OptimizerEntry>,
    /// Trainer bookkeeping, opaque to this module.
    pub trainer: Option<serde_json::Value>,
    pub tensors_sha256: String,
}

/// A loaded checkpoint.
pub struct Checkpoint<T> {
    pub model: PdaNet<T>,
    pub optimizers: BTreeMap<String, Adam<T>>,
    pub trainer: Option<serde_json::Value>,
}

struct Blob<T> {
    values: Vec<T>,
}

impl<T: Scalar> Blob<T> {
    fn push(&mut self, v: &[T]) -> usize {
        let at = self.values.len();
        self.values.extend_from_slice(v);
        at
    }

    fn bytes(&self) -> Vec<u8> {
        if T::NAME == "f32" {
            self.values.iter().flat_map(|v| (v.as_f64() as f32).to_le_bytes()).collect()
        } else {
            self.values.iter().flat_map(|v| v.as_f64().to_le_bytes()).collect()
        }
    }
}

fn decode<T: Scalar>(bytes: &[u8], dtype: &str) -> Result<Vec<T>> {
    match dtype {
        "f32" if bytes.len() % 4 == 0 => {
            Ok(bytes.chunks_exact(4).map(|c| T::lit(f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)).collect())
        }
        "f64" if bytes.len() % 8 == 0 => {
            Ok(bytes.chunks_exact(8).map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8 bytes")))).collect())
        }
        _ => Err(NnError::Format(format!("{} bytes do not hold whole {dtype} values", bytes.len()))),
    }
}

/// Writes `model`, optional named optimizers and trainer metadata into `dir`.
pub fn save<T: Scalar>(
    dir: &Path,
    model: &PdaNet<T>,
    optimizers: &[(&str, &Adam<T>)],
    trainer: Option<serde_json::Value>,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut blob = Blob { values: Vec::new() };
    let store = &model.store;
    let tensors = store
        .iter()
        .map(|(_, p)| TensorEntry { key: p.name.clone(), shape: p.shape.clone(), offset: blob.push(&p.value), len: p.value.len() })
        .collect();
    let mut opt_entries = BTreeMap::new();
    for (name, opt) in optimizers {
        let moments = opt
            .state
            .iter()
            .map(|(id, st)| MomentEntry {
                key: store.get(*id).name.clone(),
                step: st.step,
                m_offset: blob.push(&st.m),
                v_offset: blob.push(&st.v),
                len: st.m.len(),
            })
            .collect();
        opt_entries.insert(name.to_string(), OptimizerEntry { config: opt.config, moments });
    }
    let bytes = blob.bytes();
    let manifest = Manifest {
        format: FORMAT.into(),
        version: VERSION,
        dtype: T::NAME.into(),
        seed: store.seed(),
        model: model.config.clone(),
        aliases: model.aliases().into_iter().collect(),
        tensors,
        optimizers: opt_entries,
        trainer,
        tensors_sha256: sha256_hex(&bytes),
    };
    // Write both files under temporary names first so a crash never leaves a torn pair.
    let tmp_bin = dir.join(format!("{TENSORS}.tmp"));
    let tmp_man = dir.join(format!("{MANIFEST}.tmp"));
    fs::write(&tmp_bin, &bytes)?;
    fs::write(&tmp_man, serde_json::to_vec_pretty(&manifest)?)?;
    fs::rename(tmp_bin, dir.join(TENSORS))?;
    fs::rename(tmp_man, dir.join(MANIFEST))?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let text = fs::read(dir.join(MANIFEST)).map_err(|e| NnError::Format(format!("{}: {e}", dir.join(MANIFEST).display())))?;
    let manifest: Manifest = serde_json::from_slice(&text)?;
    if manifest.format != FORMAT || manifest.version != VERSION {
        return Err(NnError::Format(format!("unsupported checkpoint {} v{}", manifest.format, manifest.version)));
    }
    Ok(manifest)
}

fn slice<T: Copy>(values: &[T], offset: usize, len: usize, key: &str) -> Result<Vec<T>> {
    values
        .get(offset..offset + len)
        .map(<[T]>::to_vec)
        .ok_or_else(|| NnError::Format(format!("{key}: range {offset}+{len} outside the tensor file")))
}

pub fn load<T: Scalar>(dir: &Path) -> Result<Checkpoint<T>> {
    let manifest = read_manifest(dir)?;
    let bytes = fs::read(dir.join(TENSORS))?;
    if sha256_hex(&bytes) != manifest.tensors_sha256 {
        return Err(NnError::Format("tensor file hash does not match the manifest".into()));
    }
    let values: Vec<T> = decode(&bytes, &manifest.dtype)?;
    let mut model = PdaNet::<T>::build(&manifest.model, manifest.seed)?;
    let expected: BTreeMap<String, String> = model.aliases().into_iter().collect();
    if expected != manifest.aliases {
        return Err(NnError::Format(format!("decoder bindings {:?} do not match the model {:?}", manifest.aliases, expected)));
    }
    if manifest.tensors.len() != model.store.len() {
        return Err(NnError::Format(format!("{} tensors stored, model has {}", manifest.tensors.len(), model.store.len())));
    }
    for t in &manifest.tensors {
        let id = model.store.find(&t.key).ok_or_else(|| NnError::Format(format!("unknown tensor {}", t.key)))?;
        if model.store.get(id).shape != t.shape {
            return Err(NnError::Format(format!("{}: shape {:?} vs model {:?}", t.key, t.shape, model.store.get(id).shape)));
        }
        let v = slice(&values, t.offset, t.len, &t.key)?;
        if v.len() != model.store.value(id).len() {
            return Err(NnError::Format(format!("{}: length mismatch", t.key)));
        }
        model.store.value_mut(id).copy_from_slice(&v);
    }
    let optimizers = manifest
        .optimizers
        .iter()
        .map(|(name, entry)| Ok((name.clone(), restore_optimizer(&model.store, entry, &values)?)))
        .collect::<Result<_>>()?;
    Ok(Checkpoint { model, optimizers, trainer: manifest.trainer })
}

fn restore_optimizer<T: Scalar>(store: &ParamStore<T>, entry: &OptimizerEntry, values: &[T]) -> Result<Adam<T>> {
    let mut opt = Adam::new(entry.config);
    for m in &entry.moments {
        let id = store.find(&m.key).ok_or_else(|| NnError::Format(format!("optimizer state for unknown tensor {}", m.key)))?;
        if store.value(id).len() != m.len {
            return Err(NnError::Format(format!("{}: optimizer state length mismatch", m.key)));
        }
        opt.state.insert(
            id,
            Moments { step: m.step, m: slice(values, m.m_offset, m.len, &m.key)?, v: slice(values, m.v_offset, m.len, &m.key)? },
        );
    }
    Ok(opt)
}
