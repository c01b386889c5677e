//! Checkpoints: named `f64` arrays in a container file (`*.llab`) next to a
//! JSON metadata sidecar with the same stem.

use std::path::{Path, PathBuf};

use ndarray::{ArrayD, IxDyn};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::autodiff::Tensor;
use crate::container::{self, ArrayData, NamedArray};
use crate::error::{Error, Result};
use crate::nn::ParamStore;

pub fn meta_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// FNV-1a over parameter names and shapes, printed as hex.
pub fn architecture_hash(store: &ParamStore) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |bytes: &[u8]| {
        for b in bytes {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    for (name, t) in store.iter() {
        eat(name.as_bytes());
        for d in t.shape() {
            eat(&(*d as u64).to_le_bytes());
        }
    }
    format!("{h:016x}")
}

pub fn tensor_array(name: impl Into<String>, t: &Tensor) -> NamedArray {
    NamedArray::new(name, ArrayData::F64(t.clone().into_dyn()))
}

pub fn store_arrays(prefix: &str, store: &ParamStore) -> Vec<NamedArray> {
    store
        .iter()
        .map(|(n, t)| tensor_array(format!("{prefix}{n}"), t))
        .collect()
}

pub fn vec_array(name: impl Into<String>, v: &[f64]) -> NamedArray {
    NamedArray::new(
        name,
        ArrayData::F64(ArrayD::from_shape_vec(IxDyn(&[v.len()]), v.to_vec()).expect("1-d")),
    )
}

pub fn save<M: Serialize>(path: &Path, arrays: &[NamedArray], meta: &M) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    container::write(path, arrays)?;
    let mp = meta_path(path);
    let text = serde_json::to_string_pretty(meta).expect("metadata serializes");
    std::fs::write(&mp, text).map_err(|e| Error::io(&mp, e))
}

pub fn load<M: DeserializeOwned>(path: &Path) -> Result<(Vec<NamedArray>, M)> {
    if !path.exists() {
        return Err(Error::CheckpointNotFound(path.to_path_buf()));
    }
    let arrays = container::read(path)?;
    let mp = meta_path(path);
    let text = std::fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?;
    let meta = serde_json::from_str(&text).map_err(|e| Error::parse(&mp, e.to_string()))?;
    Ok((arrays, meta))
}

/// Copy arrays named `prefix + param` into `store`, checking shapes.
pub fn restore_store(path: &Path, arrays: &[NamedArray], prefix: &str, store: &mut ParamStore) -> Result<()> {
    let names: Vec<String> = store.names().to_vec();
    for (i, name) in names.iter().enumerate() {
        let key = format!("{prefix}{name}");
        let t: Tensor = container::take(arrays, &key).map_err(|d| Error::parse(path, d))?;
        let slot = &mut store.values_mut()[i];
        if slot.shape() != t.shape() {
            return Err(Error::parse(
                path,
                format!("{key}: shape {:?}, expected {:?}", t.shape(), slot.shape()),
            ));
        }
        *slot = t;
    }
    Ok(())
}

pub fn take_vec(path: &Path, arrays: &[NamedArray], name: &str) -> Result<Vec<f64>> {
    let a: ndarray::Array1<f64> = container::take(arrays, name).map_err(|d| Error::parse(path, d))?;
    Ok(a.to_vec())
}
