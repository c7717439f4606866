//! Binary feature files.
//!
//! Layout, all little-endian:
//!
//! | field    | type            |
//! |----------|-----------------|
//! | magic    | `b"RLFEAT\0\0"` |
//! | version  | u32 (= 1)       |
//! | count    | u64             |
//! | dim      | u64             |
//! | features | count·dim f64, row-major |
//! | ids      | count u32       |
//! | cameras  | count u32       |

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::data::SampleMeta;
use crate::error::{ensure_len, Error, Result};
use crate::matrix::Matrix;

const MAGIC: &[u8; 8] = b"RLFEAT\0\0";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub features: Matrix,
    pub meta: Vec<SampleMeta>,
}

impl FeatureSet {
    pub fn new(features: Matrix, meta: Vec<SampleMeta>) -> Result<Self> {
        ensure_len("feature metadata", features.rows(), meta.len())?;
        Ok(Self { features, meta })
    }

    pub fn ids(&self) -> Vec<u32> {
        self.meta.iter().map(|m| m.identity).collect()
    }
}

pub fn write_features(set: &FeatureSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    w.write_all(MAGIC).map_err(io)?;
    w.write_u32::<LittleEndian>(VERSION).map_err(io)?;
    w.write_u64::<LittleEndian>(set.features.rows() as u64).map_err(io)?;
    w.write_u64::<LittleEndian>(set.features.cols() as u64).map_err(io)?;
    for &v in set.features.as_slice() {
        w.write_f64::<LittleEndian>(v).map_err(io)?;
    }
    for m in &set.meta {
        w.write_u32::<LittleEndian>(m.identity).map_err(io)?;
    }
    for m in &set.meta {
        w.write_u32::<LittleEndian>(m.camera).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_features(path: impl AsRef<Path>) -> Result<FeatureSet> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingPath(path.to_path_buf()));
    }
    let bad = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    let truncated = |e: std::io::Error| bad(format!("truncated or unreadable: {e}"));
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let file_len = file.metadata().map_err(|e| Error::io(path, e))?.len();
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != MAGIC {
        return Err(bad("not a feature file".into()));
    }
    let version = r.read_u32::<LittleEndian>().map_err(truncated)?;
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let count = r.read_u64::<LittleEndian>().map_err(truncated)?;
    let dim = r.read_u64::<LittleEndian>().map_err(truncated)?;
    let expected = count
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(count * 8 + 28))
        .ok_or_else(|| bad("header sizes overflow".into()))?;
    if expected != file_len {
        return Err(bad(format!("expected {expected} bytes for {count}x{dim}, file has {file_len}")));
    }
    let (count, dim) = (count as usize, dim as usize);
    let mut values = vec![0.0; count * dim];
    r.read_f64_into::<LittleEndian>(&mut values).map_err(truncated)?;
    let mut ids = vec![0u32; count];
    r.read_u32_into::<LittleEndian>(&mut ids).map_err(truncated)?;
    let mut cams = vec![0u32; count];
    r.read_u32_into::<LittleEndian>(&mut cams).map_err(truncated)?;
    let features = Matrix::new(count, dim, values).map_err(|e| bad(e.to_string()))?;
    let meta = ids
        .into_iter()
        .zip(cams)
        .map(|(identity, camera)| SampleMeta { identity, camera })
        .collect();
    FeatureSet::new(features, meta)
}
