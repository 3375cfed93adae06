//! Vectors, distance metrics and the exhaustive top-k oracle.
//!
//! Every score in the crate lives in "comparator space": smaller is closer for
//! both metrics. L2 is kept squared and inner product is negated.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::bitmap::FilterBitmap;
use crate::error::{Error, Result};

/// Dense row identifier, `0..N`.
pub type RowId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    L2Squared,
    InnerProduct,
}

impl DistanceMetric {
    /// Unchecked kernel; callers guarantee equal lengths.
    #[inline]
    pub fn eval(self, a: &[f32], b: &[f32]) -> f32 {
        debug_assert_eq!(a.len(), b.len());
        match self {
            DistanceMetric::L2Squared => a
                .iter()
                .zip(b)
                .map(|(x, y)| {
                    let d = x - y;
                    d * d
                })
                .sum(),
            DistanceMetric::InnerProduct => -a.iter().zip(b).map(|(x, y)| x * y).sum::<f32>(),
        }
    }

    /// Same as [`eval`](Self::eval) but reads the second operand as
    /// little-endian `f32`s straight out of a page.
    #[inline]
    pub fn eval_le_bytes(self, q: &[f32], bytes: &[u8]) -> f32 {
        debug_assert_eq!(q.len() * 4, bytes.len());
        let it = q
            .iter()
            .zip(bytes.chunks_exact(4))
            .map(|(x, c)| (*x, f32::from_le_bytes([c[0], c[1], c[2], c[3]])));
        match self {
            DistanceMetric::L2Squared => it
                .map(|(x, y)| {
                    let d = x - y;
                    d * d
                })
                .sum(),
            DistanceMetric::InnerProduct => -it.map(|(x, y)| x * y).sum::<f32>(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DistanceMetric::L2Squared => "l2",
            DistanceMetric::InnerProduct => "ip",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l2" | "l2squared" | "l2_squared" => Ok(DistanceMetric::L2Squared),
            "ip" | "inner_product" | "innerproduct" => Ok(DistanceMetric::InnerProduct),
            other => Err(Error::param(format!("unknown metric {other:?}"))),
        }
    }
}

/// A finite, non-empty `f32` vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector {
    values: Vec<f32>,
}

impl Vector {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidVector("dim must be positive".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidVector(format!("non-finite value at index {i}")));
        }
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.values
    }

    pub fn into_inner(self) -> Vec<f32> {
        self.values
    }
}

impl AsRef<[f32]> for Vector {
    fn as_ref(&self) -> &[f32] {
        &self.values
    }
}

/// Checked distance between two vectors.
pub fn distance(metric: DistanceMetric, a: &Vector, b: &Vector) -> Result<f32> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    Ok(metric.eval(a.as_slice(), b.as_slice()))
}

/// Row-major collection of equal-length vectors addressed by dense rowid.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    metric: DistanceMetric,
    data: Vec<f32>,
}

impl Dataset {
    pub fn from_flat(dim: usize, metric: DistanceMetric, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidVector("dim must be positive".into()));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::Malformed(format!(
                "{} floats is not a multiple of dim {dim}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidVector(format!(
                "non-finite value in row {}",
                i / dim
            )));
        }
        Ok(Self { dim, metric, data })
    }

    pub fn from_rows<I, R>(metric: DistanceMetric, rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = R>,
        R: AsRef<[f32]>,
    {
        let mut dim = 0;
        let mut data = Vec::new();
        for (i, row) in rows.into_iter().enumerate() {
            let row = row.as_ref();
            if i == 0 {
                dim = row.len();
            } else if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::from_flat(dim.max(1), metric, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn metric(&self) -> DistanceMetric {
        self.metric
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, rowid: RowId) -> &[f32] {
        let i = rowid as usize * self.dim;
        &self.data[i..i + self.dim]
    }

    pub fn vector(&self, rowid: RowId) -> Vector {
        Vector {
            values: self.row(rowid).to_vec(),
        }
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f32] {
        &self.data
    }

    /// Content hash over dim, metric and the raw little-endian floats.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update((self.dim as u64).to_le_bytes());
        h.update(self.metric.name().as_bytes());
        for v in &self.data {
            h.update(v.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// A scored row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub rowid: RowId,
    pub score: f32,
}

impl Neighbor {
    pub fn new(rowid: RowId, score: f32) -> Self {
        Self { rowid, score }
    }

    /// Ascending score, then ascending rowid.
    pub fn cmp_rank(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then(self.rowid.cmp(&other.rowid))
    }
}

/// Exact top-k, optionally restricted to the rows set in `filter`.
pub fn brute_force_topk(
    ds: &Dataset,
    q: &Vector,
    k: usize,
    filter: Option<&FilterBitmap>,
) -> Result<Vec<Neighbor>> {
    if k == 0 {
        return Err(Error::param("k must be at least 1"));
    }
    if q.dim() != ds.dim() {
        return Err(Error::DimensionMismatch {
            expected: ds.dim(),
            actual: q.dim(),
        });
    }
    let available = filter.map_or(ds.len(), FilterBitmap::cardinality);
    if available < k {
        return Err(Error::InsufficientCandidates {
            requested: k,
            available,
        });
    }
    let metric = ds.metric();
    let mut scored: Vec<Neighbor> = match filter {
        Some(f) => f
            .iter()
            .map(|r| Neighbor::new(r, metric.eval(q.as_slice(), ds.row(r))))
            .collect(),
        None => ds
            .rows()
            .enumerate()
            .map(|(r, row)| Neighbor::new(r as RowId, metric.eval(q.as_slice(), row)))
            .collect(),
    };
    if scored.len() > k {
        scored.select_nth_unstable_by(k - 1, Neighbor::cmp_rank);
        scored.truncate(k);
    }
    scored.sort_by(Neighbor::cmp_rank);
    Ok(scored)
}
