//! Named, partitioned parameter arrays and their checkpoint format.
//!
//! Checkpoint layout (all integers little-endian `u32`):
//!
//! ```text
//! b"FSPNCKPT"  version  array_count
//! per array: name_len  name(utf-8)  tag(u8: 0 common, 1 head)  head_index
//!            rank  dims[rank]  values[prod(dims)] as f32 LE
//! ```

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tensor::{cast, Scalar};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"FSPNCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Which block an array belongs to: the shared feature extractor, or the
/// classification head of one task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Partition {
    Common,
    Head(u32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamArray<F = f32> {
    pub name: String,
    pub partition: Partition,
    pub shape: Vec<usize>,
    pub values: Vec<F>,
}

/// Ordered parameter arrays. Common arrays always precede head arrays.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet<F = f32> {
    pub arrays: Vec<ParamArray<F>>,
}

impl<F: Scalar> ParamSet<F> {
    pub fn len(&self) -> usize {
        self.arrays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrays.is_empty()
    }

    pub fn param_count(&self) -> usize {
        self.arrays.iter().map(|a| a.values.len()).sum()
    }

    pub fn get(&self, name: &str) -> Option<&ParamArray<F>> {
        self.arrays.iter().find(|a| a.name == name)
    }

    pub fn zeros_like(&self) -> Self {
        ParamSet {
            arrays: self
                .arrays
                .iter()
                .map(|a| ParamArray {
                    name: a.name.clone(),
                    partition: a.partition,
                    shape: a.shape.clone(),
                    values: vec![F::zero(); a.values.len()],
                })
                .collect(),
        }
    }

    pub fn fill_zero(&mut self) {
        for a in &mut self.arrays {
            a.values.iter_mut().for_each(|v| *v = F::zero());
        }
    }

    pub fn cast<G: Scalar>(&self) -> ParamSet<G> {
        ParamSet {
            arrays: self
                .arrays
                .iter()
                .map(|a| ParamArray {
                    name: a.name.clone(),
                    partition: a.partition,
                    shape: a.shape.clone(),
                    values: a.values.iter().map(|&v| cast(v)).collect(),
                })
                .collect(),
        }
    }

    pub fn flatten(&self) -> Vec<F> {
        self.arrays
            .iter()
            .flat_map(|a| a.values.iter().copied())
            .collect()
    }

    pub fn unflatten(&mut self, flat: &[F]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Size(format!(
                "flat vector has {} values, parameter set holds {}",
                flat.len(),
                self.param_count()
            )));
        }
        let mut off = 0;
        for a in &mut self.arrays {
            let n = a.values.len();
            a.values.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    /// Same names, partitions and shapes in the same order.
    pub fn same_structure<G: Scalar>(&self, other: &ParamSet<G>) -> bool {
        self.arrays.len() == other.arrays.len()
            && self
                .arrays
                .iter()
                .zip(&other.arrays)
                .all(|(a, b)| a.name == b.name && a.partition == b.partition && a.shape == b.shape)
    }

    pub fn ensure_same_structure(&self, other: &ParamSet<F>, what: &str) -> Result<()> {
        if self.same_structure(other) {
            Ok(())
        } else {
            Err(Error::Protocol(format!(
                "{what}: parameter sets differ in structure"
            )))
        }
    }

    /// `(common, heads)`.
    pub fn split(&self) -> (ParamSet<F>, ParamSet<F>) {
        let (common, heads): (Vec<_>, Vec<_>) = self
            .arrays
            .iter()
            .cloned()
            .partition(|a| a.partition == Partition::Common);
        (ParamSet { arrays: common }, ParamSet { arrays: heads })
    }

    pub fn merge(common: ParamSet<F>, heads: ParamSet<F>) -> Result<ParamSet<F>> {
        if common
            .arrays
            .iter()
            .any(|a| a.partition != Partition::Common)
            || heads
                .arrays
                .iter()
                .any(|a| a.partition == Partition::Common)
        {
            return Err(Error::Protocol("merge: partitions are mixed".into()));
        }
        let mut arrays = common.arrays;
        arrays.extend(heads.arrays);
        Ok(ParamSet { arrays })
    }

    /// Overwrites arrays of `part` with those of `src`, matched by position and name.
    pub fn load_partition(&mut self, src: &ParamSet<F>) -> Result<()> {
        let targets: Vec<usize> = self
            .arrays
            .iter()
            .enumerate()
            .filter(|(_, a)| {
                src.arrays
                    .first()
                    .map_or(false, |s| same_block(s.partition, a.partition))
            })
            .map(|(i, _)| i)
            .collect();
        if targets.len() != src.arrays.len() {
            return Err(Error::Protocol(format!(
                "load: expected {} arrays, received {}",
                targets.len(),
                src.arrays.len()
            )));
        }
        for (i, s) in targets.into_iter().zip(&src.arrays) {
            let d = &mut self.arrays[i];
            if d.name != s.name || d.shape != s.shape {
                return Err(Error::Protocol(format!(
                    "load: array '{}' does not match '{}'",
                    s.name, d.name
                )));
            }
            d.values.copy_from_slice(&s.values);
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.arrays
            .iter()
            .all(|a| a.values.iter().all(|v| v.is_finite()))
    }
}

fn same_block(a: Partition, b: Partition) -> bool {
    matches!(
        (a, b),
        (Partition::Common, Partition::Common) | (Partition::Head(_), Partition::Head(_))
    )
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

impl ParamSet<f32> {
    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 4 * self.param_count());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        put_u32(&mut out, CHECKPOINT_VERSION);
        put_u32(&mut out, self.arrays.len() as u32);
        for a in &self.arrays {
            put_u32(&mut out, a.name.len() as u32);
            out.extend_from_slice(a.name.as_bytes());
            let (tag, head) = match a.partition {
                Partition::Common => (0u8, 0u32),
                Partition::Head(h) => (1u8, h),
            };
            out.push(tag);
            put_u32(&mut out, head);
            put_u32(&mut out, a.shape.len() as u32);
            for &d in &a.shape {
                put_u32(&mut out, d as u32);
            }
            for &v in &a.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Cursor { bytes, pos: 0 };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(r.err("bad magic"));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(r.err(&format!("unsupported version {version}")));
        }
        let count = r.u32()? as usize;
        let mut arrays = Vec::with_capacity(count);
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name =
                String::from_utf8(r.take(len)?.to_vec()).map_err(|_| r.err("name is not utf-8"))?;
            let tag = r.take(1)?[0];
            let head = r.u32()?;
            let partition = match tag {
                0 => Partition::Common,
                1 => Partition::Head(head),
                t => return Err(r.err(&format!("unknown partition tag {t}"))),
            };
            let rank = r.u32()? as usize;
            let shape = (0..rank)
                .map(|_| r.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let raw = r.take(4 * n)?;
            let values = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            arrays.push(ParamArray {
                name,
                partition,
                shape,
                values,
            });
        }
        if r.pos != bytes.len() {
            return Err(r.err("trailing bytes"));
        }
        Ok(ParamSet { arrays })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_checkpoint_bytes())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint_bytes(&bytes).map_err(|e| match e {
            Error::Format { detail, .. } => Error::Format {
                path: path.to_path_buf(),
                detail,
            },
            other => other,
        })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, detail: &str) -> Error {
        Error::Format {
            path: "<checkpoint>".into(),
            detail: format!("{detail} at byte {}", self.pos),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(self.err("truncated"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}
