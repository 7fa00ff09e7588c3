//! Binary tensor container and the JSON-manifested dataset/checkpoint layout.
//!
//! Every .pott file starts with the same 16-byte prefix: magic b"POTT",
//! format version u32, record kind u32, then a kind-specific body. Tensor
//! bodies are rank u32, dims u32[rank], payload f64 little-endian in row
//! major order, so values roundtrip bit-exactly. Checkpoints insert an
//! architecture header (tag string, hyperparameter JSON) before their
//! parameter tensors. Datasets are directories: a JSON manifest plus one
//! tensor file per field.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diff::Tensor;
use crate::error::FormatError;
use crate::model::{DeepOnet, DeepOnetHyper, Fno1d, FnoHyper, OperatorModel, Standardizer};
use crate::pde::datagen::{TEST_BASE, VAL_BASE};
use crate::pde::grid::{Dataset, Domain, GridFunction, SamplePair};
use crate::rng::stream;

pub const MAGIC: [u8; 4] = *b"POTT";
pub const FORMAT_VERSION: u32 = 1;
pub const RECORD_TENSOR: u32 = 1;
pub const RECORD_CHECKPOINT: u32 = 2;

fn write_u32(w: &mut impl Write, v: u32) -> Result<(), FormatError> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<(), FormatError> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..])? {
            0 => return Err(FormatError::Truncated { needed: buf.len() - filled }),
            n => filled += n,
        }
    }
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32, FormatError> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn write_prefix(w: &mut impl Write, kind: u32) -> Result<(), FormatError> {
    w.write_all(&MAGIC)?;
    write_u32(w, FORMAT_VERSION)?;
    write_u32(w, kind)?;
    Ok(())
}

fn read_prefix(r: &mut impl Read, kind: u32) -> Result<(), FormatError> {
    let mut magic = [0u8; 4];
    read_exact(r, &mut magic)?;
    if magic != MAGIC {
        return Err(FormatError::BadMagic { found: magic });
    }
    let version = read_u32(r)?;
    if version != FORMAT_VERSION {
        return Err(FormatError::Version { expected: FORMAT_VERSION, found: version });
    }
    let found = read_u32(r)?;
    if found != kind {
        return Err(FormatError::RecordKind { expected: kind, found });
    }
    Ok(())
}

fn write_tensor_body(w: &mut impl Write, t: &Tensor) -> Result<(), FormatError> {
    let shape = t.shape();
    write_u32(w, shape.len() as u32)?;
    for &d in shape {
        assert!(d <= u32::MAX as usize, "dimension {} does not fit the container", d);
        write_u32(w, d as u32)?;
    }
    for &v in t.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_tensor_body(r: &mut impl Read) -> Result<Tensor, FormatError> {
    let rank = read_u32(r)? as usize;
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(read_u32(r)? as usize);
    }
    let numel = shape.iter().product::<usize>();
    let mut data = Vec::with_capacity(numel);
    let mut b = [0u8; 8];
    for _ in 0..numel {
        read_exact(r, &mut b)?;
        data.push(f64::from_le_bytes(b));
    }
    Ok(Tensor::new(shape, data))
}

/// Write a single tensor record.
pub fn write_tensor(path: &Path, t: &Tensor) -> Result<(), FormatError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_prefix(&mut w, RECORD_TENSOR)?;
    write_tensor_body(&mut w, t)?;
    w.flush()?;
    Ok(())
}

/// Read a single tensor record.
pub fn read_tensor(path: &Path) -> Result<Tensor, FormatError> {
    let mut r = BufReader::new(File::open(path)?);
    read_prefix(&mut r, RECORD_TENSOR)?;
    read_tensor_body(&mut r)
}

fn write_str(w: &mut impl Write, s: &str) -> Result<(), FormatError> {
    write_u32(w, s.len() as u32)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_str(r: &mut impl Read) -> Result<String, FormatError> {
    let len = read_u32(r)? as usize;
    let mut buf = vec![0u8; len];
    read_exact(r, &mut buf)?;
    String::from_utf8(buf).map_err(|e| FormatError::Manifest(format!("non-utf8 header: {}", e)))
}

/// Everything about a checkpoint except the parameter payload.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct CheckpointMeta {
    stats: Standardizer,
    param_names: Vec<String>,
    #[serde(flatten)]
    hyper: HyperJson,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum HyperJson {
    Fno { fno: FnoHyper },
    DeepOnet { deeponet: DeepOnetHyper },
}

/// Persist a model: architecture tag, hyperparameter JSON, then every
/// parameter tensor in declared order.
pub fn save_model(path: &Path, model: &OperatorModel) -> Result<(), FormatError> {
    let hyper = match model {
        OperatorModel::Fno(m) => HyperJson::Fno { fno: m.hyper },
        OperatorModel::DeepOnet(m) => HyperJson::DeepOnet { deeponet: m.hyper.clone() },
    };
    let meta = CheckpointMeta {
        stats: *model.stats(),
        param_names: model.param_names(),
        hyper,
    };
    let mut w = BufWriter::new(File::create(path)?);
    write_prefix(&mut w, RECORD_CHECKPOINT)?;
    write_str(&mut w, model.arch())?;
    write_str(&mut w, &serde_json::to_string(&meta)?)?;
    let params = model.params();
    write_u32(&mut w, params.len() as u32)?;
    for p in params {
        write_tensor_body(&mut w, p)?;
    }
    w.flush()?;
    Ok(())
}

/// Rebuild a model from a checkpoint. The architecture tag picks the
/// constructor; stored tensors must match the declared parameter list.
pub fn load_model(path: &Path) -> Result<OperatorModel, FormatError> {
    let mut r = BufReader::new(File::open(path)?);
    read_prefix(&mut r, RECORD_CHECKPOINT)?;
    let tag = read_str(&mut r)?;
    let meta: CheckpointMeta = serde_json::from_str(&read_str(&mut r)?)?;
    let mut model = match (tag.as_str(), &meta.hyper) {
        ("fno1d", HyperJson::Fno { fno }) => {
            OperatorModel::Fno(Fno1d::init(*fno, &mut stream(0, "checkpoint-shape", 0)))
        }
        ("deeponet", HyperJson::DeepOnet { deeponet }) => {
            OperatorModel::DeepOnet(DeepOnet::init(deeponet.clone(), &mut stream(0, "checkpoint-shape", 0)))
        }
        _ => {
            return Err(FormatError::Manifest(format!(
                "architecture tag {:?} does not match the stored hyperparameters",
                tag
            )))
        }
    };
    if meta.param_names != model.param_names() {
        return Err(FormatError::Manifest(
            "stored parameter list does not match the architecture".into(),
        ));
    }
    let count = read_u32(&mut r)? as usize;
    if count != meta.param_names.len() {
        return Err(FormatError::Manifest(format!(
            "checkpoint declares {} parameters but stores {}",
            meta.param_names.len(),
            count
        )));
    }
    for (name, p) in meta.param_names.iter().zip(model.params_mut()) {
        let t = read_tensor_body(&mut r)?;
        if t.shape() != p.shape() {
            return Err(FormatError::Manifest(format!(
                "parameter {} has shape {:?}, expected {:?}",
                name,
                t.shape(),
                p.shape()
            )));
        }
        *p = t;
    }
    *model.stats_mut() = meta.stats;
    Ok(model)
}

/// Sidecar manifest for one dataset split directory.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SplitManifest {
    pub version: u32,
    pub family: String,
    pub domain_id: String,
    pub split: String,
    pub seed: u64,
    pub k_domain: Domain,
    pub u_domain: Domain,
    /// Global sample indices, the basis of the split-hygiene check.
    pub indices: Vec<u64>,
    pub samples: Vec<SampleFiles>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SampleFiles {
    pub k: String,
    pub u: String,
}

/// Index ranges are allocated per split so a sample can never belong to two
/// canonical splits at once.
pub fn split_index_base(split: &str) -> u64 {
    match split {
        "val" => VAL_BASE,
        "test" => TEST_BASE,
        _ => 0,
    }
}

/// Write a dataset as a directory: manifest.json plus one tensor file per
/// field per sample.
pub fn save_dataset(dir: &Path, data: &Dataset) -> Result<(), FormatError> {
    assert!(!data.is_empty(), "refusing to persist an empty split");
    fs::create_dir_all(dir)?;
    let base = split_index_base(&data.split);
    let mut samples = Vec::with_capacity(data.len());
    for (i, pair) in data.pairs.iter().enumerate() {
        let files = SampleFiles {
            k: format!("k_{:05}.pott", i),
            u: format!("u_{:05}.pott", i),
        };
        write_tensor(&dir.join(&files.k), &pair.k.values)?;
        write_tensor(&dir.join(&files.u), &pair.u.values)?;
        samples.push(files);
    }
    let manifest = SplitManifest {
        version: FORMAT_VERSION,
        family: data.family.clone(),
        domain_id: data.domain_id.clone(),
        split: data.split.clone(),
        seed: data.seed,
        k_domain: data.k_domain(),
        u_domain: data.u_domain(),
        indices: (0..data.len() as u64).map(|i| base + i).collect(),
        samples,
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(dir.join("manifest.json"), json)?;
    Ok(())
}

fn check_hygiene(manifest: &SplitManifest) -> Result<(), FormatError> {
    let (lo, hi) = match manifest.split.as_str() {
        "train" => (0, VAL_BASE),
        "val" => (VAL_BASE, TEST_BASE),
        "test" => (TEST_BASE, u64::MAX),
        _ => return Ok(()),
    };
    for &i in &manifest.indices {
        if i < lo || i >= hi {
            return Err(FormatError::Manifest(format!(
                "sample index {} leaks outside the {:?} split range",
                i, manifest.split
            )));
        }
    }
    Ok(())
}

/// Load one split directory written by `save_dataset`.
pub fn load_dataset(dir: &Path) -> Result<Dataset, FormatError> {
    let manifest_path = dir.join("manifest.json");
    let manifest: SplitManifest = serde_json::from_str(&fs::read_to_string(&manifest_path)?)?;
    if manifest.version != FORMAT_VERSION {
        return Err(FormatError::Version {
            expected: FORMAT_VERSION,
            found: manifest.version,
        });
    }
    if manifest.indices.len() != manifest.samples.len() {
        return Err(FormatError::Manifest(format!(
            "{} indices for {} samples",
            manifest.indices.len(),
            manifest.samples.len()
        )));
    }
    check_hygiene(&manifest)?;
    let mut pairs = Vec::with_capacity(manifest.samples.len());
    for files in &manifest.samples {
        let k = read_tensor(&dir.join(&files.k))?;
        let u = read_tensor(&dir.join(&files.u))?;
        if k.shape() != manifest.k_domain.value_shape().as_slice()
            || u.shape() != manifest.u_domain.value_shape().as_slice()
        {
            return Err(FormatError::Manifest(format!(
                "stored tensors {:?}/{:?} do not match the declared domains",
                k.shape(),
                u.shape()
            )));
        }
        pairs.push(SamplePair {
            k: GridFunction::new(manifest.k_domain, k),
            u: GridFunction::new(manifest.u_domain, u),
        });
    }
    Ok(Dataset {
        pairs,
        family: manifest.family,
        domain_id: manifest.domain_id,
        split: manifest.split,
        seed: manifest.seed,
    })
}

/// The on-disk shape of a generated domain: train/val/test side by side.
pub struct StoredSplits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// Load a three-split dataset directory, asserting that no sample index
/// appears in more than one split.
pub fn load_splits(root: &Path) -> Result<StoredSplits, FormatError> {
    let mut seen: Vec<(u64, String)> = Vec::new();
    let mut load = |name: &str| -> Result<Dataset, FormatError> {
        let dir = root.join(name);
        let manifest: SplitManifest =
            serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?;
        for &i in &manifest.indices {
            if let Some((_, other)) = seen.iter().find(|(j, _)| *j == i) {
                return Err(FormatError::Manifest(format!(
                    "sample index {} appears in both {:?} and {:?}",
                    i, other, name
                )));
            }
            seen.push((i, name.to_string()));
        }
        load_dataset(&dir)
    };
    Ok(StoredSplits {
        train: load("train")?,
        val: load("val")?,
        test: load("test")?,
    })
}

/// Resolve a dataset argument that may be either a single split directory or
/// a root holding train/val/test.
pub fn dataset_root_split(root: &Path, preferred: &str) -> PathBuf {
    if root.join("manifest.json").exists() {
        root.to_path_buf()
    } else {
        root.join(preferred)
    }
}
