//! Dataset files: `.fvecs`, and raw little-endian f32 rows with a JSON
//! sidecar (`<path>.json`) giving N, dim and metric.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, DistanceMetric};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawDescriptor {
    pub n: usize,
    pub dim: usize,
    pub metric: DistanceMetric,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Each vector is an i32 dimension followed by that many f32 values.
pub fn read_fvecs(path: impl AsRef<Path>, metric: DistanceMetric) -> Result<Dataset> {
    let mut buf = Vec::new();
    BufReader::new(std::fs::File::open(path)?).read_to_end(&mut buf)?;
    let mut data = Vec::new();
    let mut dim = None;
    let mut pos = 0;
    while pos < buf.len() {
        let head = buf
            .get(pos..pos + 4)
            .ok_or_else(|| Error::Malformed("truncated fvecs header".into()))?;
        let d = i32::from_le_bytes(head.try_into().expect("4 bytes"));
        if d <= 0 {
            return Err(Error::Malformed(format!("fvecs dimension {d}")));
        }
        let d = d as usize;
        if *dim.get_or_insert(d) != d {
            return Err(Error::Malformed("fvecs rows differ in dimension".into()));
        }
        pos += 4;
        let body = buf
            .get(pos..pos + 4 * d)
            .ok_or_else(|| Error::Malformed("truncated fvecs row".into()))?;
        data.extend(body.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes"))));
        pos += 4 * d;
    }
    let dim = dim.ok_or_else(|| Error::Malformed("empty fvecs file".into()))?;
    Dataset::from_flat(dim, metric, data)
}

pub fn write_fvecs(path: impl AsRef<Path>, ds: &Dataset) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    for row in ds.rows() {
        out.write_all(&(row.len() as i32).to_le_bytes())?;
        for x in row {
            out.write_all(&x.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_raw(path: impl AsRef<Path>, ds: &Dataset) -> Result<()> {
    let path = path.as_ref();
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    for x in ds.as_flat() {
        out.write_all(&x.to_le_bytes())?;
    }
    out.flush()?;
    let desc = RawDescriptor {
        n: ds.len(),
        dim: ds.dim(),
        metric: ds.metric(),
    };
    std::fs::write(sidecar_path(path), serde_json::to_vec_pretty(&desc)?)?;
    Ok(())
}

pub fn read_raw(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let desc: RawDescriptor = serde_json::from_slice(&std::fs::read(sidecar_path(path))?)?;
    let bytes = std::fs::read(path)?;
    if bytes.len() != desc.n * desc.dim * 4 {
        return Err(Error::Malformed(format!(
            "{} bytes do not hold {} x {} floats",
            bytes.len(),
            desc.n,
            desc.dim
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
        .collect();
    Dataset::from_flat(desc.dim, desc.metric, data)
}

/// `.fvecs` by extension, raw-with-sidecar otherwise. The metric argument is
/// only used for fvecs, which does not record one.
pub fn read_dataset(path: impl AsRef<Path>, metric: DistanceMetric) -> Result<Dataset> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some("fvecs") => read_fvecs(path, metric),
        _ => read_raw(path),
    }
}
