//! Binary checkpoint layout shared by the evidence head and the probe.
//!
//! ```text
//! magic     8 bytes   "SAECKPT1"
//! kind      u32 len + UTF-8 bytes        ("seh" | "probe")
//! count     u32                           number of tensors
//! manifest  per tensor: u32 name len, name bytes, u32 ndim, u64 dims[ndim]
//! payload   every tensor's values as f64, little-endian, in manifest order
//! ```
//!
//! All integers are little-endian. The payload length must equal the sum of
//! the manifest's element counts exactly.

use std::path::Path;

use crate::error::{Result, SaeError};

const MAGIC: &[u8; 8] = b"SAECKPT1";

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub tensors: Vec<Tensor>,
}

impl Checkpoint {
    pub fn new(kind: &str) -> Self {
        Self {
            kind: kind.to_string(),
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: &str, shape: &[usize], values: Vec<f64>) {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        self.tensors.push(Tensor {
            name: name.to_string(),
            shape: shape.to_vec(),
            values,
        });
    }

    /// Looks up a tensor and checks its shape.
    pub fn take(&self, name: &str, shape: &[usize]) -> Result<&[f64]> {
        let t = self
            .tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| SaeError::invalid(format!("checkpoint has no tensor '{name}'")))?;
        if t.shape != shape {
            return Err(SaeError::invalid(format!(
                "tensor '{name}' has shape {:?}, expected {:?}",
                t.shape, shape
            )));
        }
        Ok(&t.values)
    }

    pub fn scalar(&self, name: &str) -> Result<f64> {
        Ok(self.take(name, &[1])?[0])
    }

    pub fn shape_of(&self, name: &str) -> Result<&[usize]> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .map(|t| t.shape.as_slice())
            .ok_or_else(|| SaeError::invalid(format!("checkpoint has no tensor '{name}'")))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_str(&mut out, &self.kind);
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            put_str(&mut out, &t.name);
            out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
            for &d in &t.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
        }
        for t in &self.tensors {
            for v in &t.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(SaeError::invalid("not a checkpoint (bad magic)"));
        }
        let kind = r.string()?;
        let count = r.u32()? as usize;
        let mut shapes = Vec::with_capacity(count);
        for _ in 0..count {
            let name = r.string()?;
            let ndim = r.u32()? as usize;
            let shape = (0..ndim)
                .map(|_| r.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            shapes.push((name, shape));
        }
        let expected: usize = shapes.iter().map(|(_, s)| s.iter().product::<usize>()).sum();
        let remaining = bytes.len() - r.pos;
        if remaining != expected * 8 {
            return Err(SaeError::invalid(format!(
                "checkpoint payload is {remaining} bytes, manifest declares {}",
                expected * 8
            )));
        }
        let mut tensors = Vec::with_capacity(count);
        for (name, shape) in shapes {
            let n: usize = shape.iter().product();
            let values = (0..n)
                .map(|_| r.u64().map(f64::from_bits))
                .collect::<Result<Vec<_>>>()?;
            if let Some(i) = values.iter().position(|v| !v.is_finite()) {
                return Err(SaeError::invalid(format!(
                    "tensor '{name}' entry {i} is not finite"
                )));
            }
            tensors.push(Tensor {
                name,
                shape,
                values,
            });
        }
        Ok(Self { kind, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io_util::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| SaeError::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| SaeError::Load {
            file: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(SaeError::invalid(format!(
                "checkpoint truncated at byte {}",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| SaeError::invalid("checkpoint string is not UTF-8"))
    }
}
