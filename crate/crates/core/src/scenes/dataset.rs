//! On-disk dataset split: `manifest.json` plus, per sample, a binary array
//! container (`sample_NNNNN.llab`) and a JSON sidecar (`sample_NNNNN.json`).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::shading::{gain_table_doc, GainTableDoc};
use super::tuple::{DataSample, SampleMeta, TrainingTuple};
use crate::container::{self, ArrayData, NamedArray};
use crate::error::{Error, Result};

pub const DATASET_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Serialize, Deserialize)]
pub struct ArrayShapes {
    pub video: Vec<usize>,
    pub depth: Vec<usize>,
    pub normals: Vec<usize>,
    pub mask: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub count: usize,
    pub seed: u64,
    pub shapes: Option<ArrayShapes>,
    pub files: Vec<String>,
    pub gain_table: serde_json::Value,
}

fn stem(index: usize) -> String {
    format!("sample_{index:05}")
}

fn arrays_of(t: &TrainingTuple) -> Vec<NamedArray> {
    vec![
        NamedArray::new("video", ArrayData::F32(t.v_real.clone().into_dyn())),
        NamedArray::new("depth", ArrayData::F32(t.depth.clone().into_dyn())),
        NamedArray::new("normals", ArrayData::F32(t.normals.clone().into_dyn())),
        NamedArray::new("mask", ArrayData::U8(t.mask.clone().into_dyn())),
        NamedArray::new("v_deg", ArrayData::F32(t.v_deg.clone().into_dyn())),
        NamedArray::new("v_bg", ArrayData::F32(t.v_bg.clone().into_dyn())),
    ]
}

/// Write one split. The directory is created if missing.
pub fn persist_dataset(samples: &[DataSample], dir: &Path, seed: u64) -> Result<Manifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let name = stem(i);
        container::write(&dir.join(format!("{name}.llab")), &arrays_of(&s.tuple))?;
        let sidecar = serde_json::to_string_pretty(&s.meta).expect("sample metadata serializes");
        let side_path = dir.join(format!("{name}.json"));
        std::fs::write(&side_path, sidecar).map_err(|e| Error::io(&side_path, e))?;
        files.push(name);
    }
    let gain: GainTableDoc = gain_table_doc();
    let manifest = Manifest {
        format_version: DATASET_FORMAT_VERSION,
        count: samples.len(),
        seed,
        shapes: samples.first().map(|s| ArrayShapes {
            video: s.tuple.v_real.shape().to_vec(),
            depth: s.tuple.depth.shape().to_vec(),
            normals: s.tuple.normals.shape().to_vec(),
            mask: s.tuple.mask.shape().to_vec(),
        }),
        files,
        gain_table: serde_json::to_value(gain).expect("gain table serializes"),
    };
    let path = dir.join(MANIFEST_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(&manifest).expect("manifest serializes"))
        .map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::parse(&path, e.to_string()))?;
    if m.format_version != DATASET_FORMAT_VERSION {
        return Err(Error::parse(
            &path,
            format!("unsupported format version {}", m.format_version),
        ));
    }
    if m.files.len() != m.count {
        return Err(Error::parse(&path, "count does not match file list"));
    }
    Ok(m)
}

fn load_sample(dir: &Path, name: &str) -> Result<DataSample> {
    let bin: PathBuf = dir.join(format!("{name}.llab"));
    let side = dir.join(format!("{name}.json"));
    let arrays = container::read(&bin)?;
    let perr = |d: String| Error::parse(&bin, d);
    let tuple_meta = {
        let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        serde_json::from_str::<SampleMeta>(&text).map_err(|e| Error::parse(&side, e.to_string()))?
    };
    let tuple = TrainingTuple {
        v_real: container::take(&arrays, "video").map_err(perr)?,
        v_deg: container::take(&arrays, "v_deg").map_err(perr)?,
        v_bg: container::take(&arrays, "v_bg").map_err(perr)?,
        mask: container::take(&arrays, "mask").map_err(perr)?,
        depth: container::take(&arrays, "depth").map_err(perr)?,
        normals: container::take(&arrays, "normals").map_err(perr)?,
        label: tuple_meta.label,
    };
    let shape = tuple.v_real.shape();
    let consistent = tuple.v_deg.shape() == shape
        && tuple.v_bg.shape() == shape
        && tuple.normals.shape() == shape
        && tuple.mask.shape() == &shape[..3]
        && tuple.depth.shape() == &shape[..3];
    if !consistent {
        return Err(Error::parse(&bin, "array shapes disagree"));
    }
    Ok(DataSample {
        meta: tuple_meta,
        tuple,
    })
}

/// Load a split written by [`persist_dataset`]. Errors name the offending
/// sample file.
pub fn load_dataset(dir: &Path) -> Result<Vec<DataSample>> {
    let m = read_manifest(dir)?;
    m.files.iter().map(|name| load_sample(dir, name)).collect()
}
