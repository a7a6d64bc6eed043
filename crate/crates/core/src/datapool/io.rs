//! Pool directory format.
//!
//! ```text
//! pool.json         manifest (UTF-8 JSON)
//! embeddings.f32    n×d float32, little-endian, row-major
//! similarities.f32  n×k float32
//! labels.i32        n int32
//! prototypes.f32    k×d float32 (optional)
//! ```
//!
//! The manifest may carry a SHA-256 hex digest per payload file; digests
//! that are present are verified on load.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::pool::{EmbeddingPool, PoolViolation};
use crate::error::{Result, SaeError};
use crate::io_util::write_atomic;
use crate::numerics::DenseMatrix;

pub const MANIFEST_FILE: &str = "pool.json";
pub const FORMAT_VERSION: u32 = 1;
pub const DTYPE_TAG: &str = "f32le";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolFiles {
    pub embeddings: String,
    pub similarities: String,
    pub labels: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prototypes: Option<String>,
}

impl Default for PoolFiles {
    fn default() -> Self {
        Self {
            embeddings: "embeddings.f32".into(),
            similarities: "similarities.f32".into(),
            labels: "labels.i32".into(),
            prototypes: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolManifest {
    pub format_version: u32,
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub class_names: Vec<String>,
    pub dtype: String,
    pub files: PoolFiles,
    /// File name to lowercase hex SHA-256.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub checksums: BTreeMap<String, String>,
}

impl PoolManifest {
    fn validate(&self, path: &Path) -> Result<()> {
        let fail = |message: String| {
            Err(SaeError::Load {
                file: path.to_path_buf(),
                message,
            })
        };
        if self.format_version != FORMAT_VERSION {
            return fail(format!("unsupported format_version {}", self.format_version));
        }
        if self.dtype != DTYPE_TAG {
            return fail(format!("unsupported dtype '{}', expected '{DTYPE_TAG}'", self.dtype));
        }
        if self.k < 2 || self.d == 0 || self.n == 0 {
            return fail(format!("invalid shape n={} d={} k={}", self.n, self.d, self.k));
        }
        if self.class_names.len() != self.k {
            return fail(format!("{} class names for k={}", self.class_names.len(), self.k));
        }
        for name in self.file_names() {
            let p = Path::new(name);
            if p.components().count() != 1 || p.file_name().is_none() {
                return fail(format!("payload file name '{name}' must be a bare file name"));
            }
        }
        Ok(())
    }

    fn file_names(&self) -> impl Iterator<Item = &str> {
        [
            Some(self.files.embeddings.as_str()),
            Some(self.files.similarities.as_str()),
            Some(self.files.labels.as_str()),
            self.files.prototypes.as_deref(),
        ]
        .into_iter()
        .flatten()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn f32_bytes(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect()
}

/// Writes payloads first and the manifest last, each atomically.
pub fn save_pool(pool: &EmbeddingPool, dir: &Path) -> Result<PoolManifest> {
    if let Some(v) = pool.violation() {
        return Err(SaeError::invalid(v.describe()));
    }
    fs::create_dir_all(dir).map_err(|e| SaeError::io(dir, e))?;
    let mut files = PoolFiles::default();
    let mut payloads = vec![
        (files.embeddings.clone(), f32_bytes(pool.embeddings.as_slice())),
        (files.similarities.clone(), f32_bytes(pool.similarities.as_slice())),
        (
            files.labels.clone(),
            pool.labels.iter().flat_map(|&y| (y as i32).to_le_bytes()).collect(),
        ),
    ];
    if let Some(p) = &pool.prototypes {
        files.prototypes = Some("prototypes.f32".into());
        payloads.push(("prototypes.f32".into(), f32_bytes(p.as_slice())));
    } else {
        let stale = dir.join("prototypes.f32");
        if stale.exists() {
            fs::remove_file(&stale).map_err(|e| SaeError::io(&stale, e))?;
        }
    }
    let mut checksums = BTreeMap::new();
    for (name, bytes) in &payloads {
        write_atomic(&dir.join(name), bytes)?;
        checksums.insert(name.clone(), sha256_hex(bytes));
    }
    let manifest = PoolManifest {
        format_version: FORMAT_VERSION,
        n: pool.n(),
        d: pool.d(),
        k: pool.k(),
        class_names: pool.class_names.clone(),
        dtype: DTYPE_TAG.into(),
        files,
        checksums,
    };
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    write_atomic(&dir.join(MANIFEST_FILE), json.as_bytes())?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<PoolManifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| SaeError::io(&path, e))?;
    let manifest: PoolManifest = serde_json::from_str(&text).map_err(|e| SaeError::Load {
        file: path.clone(),
        message: format!("malformed manifest: {e}"),
    })?;
    manifest.validate(&path)?;
    Ok(manifest)
}

struct Payload {
    path: PathBuf,
    bytes: Vec<u8>,
}

impl Payload {
    fn read(dir: &Path, name: &str, manifest: &PoolManifest, dims: (usize, usize)) -> Result<Self> {
        let path = dir.join(name);
        let bytes = fs::read(&path).map_err(|e| SaeError::io(&path, e))?;
        let expected = dims.0 * dims.1 * 4;
        if bytes.len() != expected {
            return Err(SaeError::Load {
                file: path,
                message: format!(
                    "expected {expected} bytes ({}×{}×4), found {}",
                    dims.0,
                    dims.1,
                    bytes.len()
                ),
            });
        }
        if let Some(want) = manifest.checksums.get(name) {
            let got = sha256_hex(&bytes);
            if !got.eq_ignore_ascii_case(want) {
                return Err(SaeError::Load {
                    file: path,
                    message: format!("sha256 mismatch: manifest has {want}, file has {got}"),
                });
            }
        }
        Ok(Self { path, bytes })
    }

    fn at(&self, index: usize, message: String) -> SaeError {
        SaeError::LoadAt {
            file: self.path.clone(),
            offset: 4 * index as u64,
            message,
        }
    }

    fn words(&self) -> impl Iterator<Item = [u8; 4]> + '_ {
        self.bytes.chunks_exact(4).map(|c| [c[0], c[1], c[2], c[3]])
    }

    fn f32_values(&self) -> Result<Vec<f64>> {
        self.words()
            .enumerate()
            .map(|(i, w)| {
                let v = f32::from_le_bytes(w);
                if v.is_finite() {
                    Ok(v as f64)
                } else {
                    Err(self.at(i, format!("non-finite value {v}")))
                }
            })
            .collect()
    }
}

/// Loads and validates a pool directory. Embeddings are checked for unit
/// norm but never renormalized.
pub fn load_pool(dir: &Path) -> Result<EmbeddingPool> {
    let m = read_manifest(dir)?;
    let (n, d, k) = (m.n, m.d, m.k);

    let emb = Payload::read(dir, &m.files.embeddings, &m, (n, d))?;
    let sim = Payload::read(dir, &m.files.similarities, &m, (n, k))?;
    let lab = Payload::read(dir, &m.files.labels, &m, (n, 1))?;
    let proto = match &m.files.prototypes {
        Some(name) => Some(Payload::read(dir, name, &m, (k, d))?),
        None => None,
    };

    let labels = lab
        .words()
        .enumerate()
        .map(|(i, w)| {
            let y = i32::from_le_bytes(w);
            if y < 0 || y as usize >= k {
                Err(lab.at(i, format!("label out of range: {y} (k = {k})")))
            } else {
                Ok(y as usize)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let embeddings = DenseMatrix::from_parts_unchecked(n, d, emb.f32_values()?);
    let similarities = DenseMatrix::from_parts_unchecked(n, k, sim.f32_values()?);
    let prototypes = match &proto {
        Some(p) => Some(DenseMatrix::from_parts_unchecked(k, d, p.f32_values()?)),
        None => None,
    };

    let pool = EmbeddingPool {
        class_names: m.class_names.clone(),
        embeddings,
        similarities,
        labels,
        prototypes,
    };
    match pool.violation() {
        None => Ok(pool),
        Some(v @ PoolViolation::NotUnitNorm { row, .. }) => Err(emb.at(row * d, v.describe())),
        Some(v @ PoolViolation::SimilarityRange { row, col, .. }) => {
            Err(sim.at(row * k + col, v.describe()))
        }
        Some(v @ PoolViolation::LabelRange { row, .. }) => Err(lab.at(row, v.describe())),
        Some(v @ PoolViolation::Shape(_)) => Err(SaeError::Load {
            file: dir.join(MANIFEST_FILE),
            message: v.describe(),
        }),
    }
}
