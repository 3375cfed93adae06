//! Filter bitmaps with controlled selectivity and query correlation.
//!
//! A bitmap is drawn from the dataset sorted by distance to the query. The
//! correlation class picks a window of that order and a bias within it;
//! sampling is weighted and without replacement.

mod file;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bitmap::FilterBitmap;
use crate::dataset::{brute_force_topk, Dataset, DistanceMetric, Neighbor, RowId, Vector};
use crate::error::{Error, Result};

pub use file::{read_workload, write_workload, WorkloadFormat};

/// Default softmax temperature over window-normalized distances.
pub const DEFAULT_TAU: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correlation {
    HighPositive,
    MediumPositive,
    LowPositive,
    Negative,
    None,
}

impl Correlation {
    pub const ALL: [Correlation; 5] = [
        Correlation::HighPositive,
        Correlation::MediumPositive,
        Correlation::LowPositive,
        Correlation::Negative,
        Correlation::None,
    ];

    /// Number of leading ranks the class samples from.
    pub fn window(self, n: usize) -> usize {
        match self {
            Correlation::HighPositive => n.div_ceil(3),
            Correlation::MediumPositive => n.div_ceil(2),
            _ => n,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Correlation::HighPositive => "high_positive",
            Correlation::MediumPositive => "medium_positive",
            Correlation::LowPositive => "low_positive",
            Correlation::Negative => "negative",
            Correlation::None => "none",
        }
    }

    pub(crate) fn code(self) -> u8 {
        Self::ALL.iter().position(|&c| c == self).expect("listed") as u8
    }

    pub(crate) fn from_code(c: u8) -> Result<Self> {
        Self::ALL
            .get(c as usize)
            .copied()
            .ok_or_else(|| Error::Corrupt(format!("correlation code {c}")))
    }
}

impl fmt::Display for Correlation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Correlation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|c| c.name() == norm || c.name().replace('_', "") == norm)
            .ok_or_else(|| Error::param(format!("unknown correlation {s:?}")))
    }
}

/// Rowids ordered by distance to a query, nearest first, ties by rowid.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedArray {
    pub rowids: Vec<RowId>,
    pub scores: Vec<f32>,
}

impl RankedArray {
    pub fn len(&self) -> usize {
        self.rowids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rowids.is_empty()
    }

    /// Position of every rowid in the order.
    pub fn positions(&self) -> Vec<u32> {
        let mut pos = vec![0u32; self.rowids.len()];
        for (i, &r) in self.rowids.iter().enumerate() {
            pos[r as usize] = i as u32;
        }
        pos
    }

    /// First `k` rows that pass `bitmap`.
    pub fn filtered_topk(&self, bitmap: &FilterBitmap, k: usize) -> Vec<Neighbor> {
        self.rowids
            .iter()
            .zip(&self.scores)
            .filter(|(r, _)| bitmap.probe(**r))
            .take(k)
            .map(|(&r, &s)| Neighbor::new(r, s))
            .collect()
    }
}

pub fn rank_all(ds: &Dataset, q: &Vector) -> Result<RankedArray> {
    if q.dim() != ds.dim() {
        return Err(Error::DimensionMismatch {
            expected: ds.dim(),
            actual: q.dim(),
        });
    }
    let metric = ds.metric();
    let mut all: Vec<Neighbor> = ds
        .rows()
        .enumerate()
        .map(|(r, row)| Neighbor::new(r as RowId, metric.eval(q.as_slice(), row)))
        .collect();
    all.sort_unstable_by(Neighbor::cmp_rank);
    Ok(RankedArray {
        rowids: all.iter().map(|n| n.rowid).collect(),
        scores: all.iter().map(|n| n.score).collect(),
    })
}

/// Number of rows a selectivity asks for.
pub fn target_cardinality(s: f64, n: usize) -> Result<usize> {
    if !(s > 0.0 && s <= 1.0) {
        return Err(Error::param(format!("selectivity {s} outside (0, 1]")));
    }
    Ok((s * n as f64).round() as usize)
}

pub fn generate_bitmap(ranked: &RankedArray, s: f64, corr: Correlation, seed: u64, tau: f64) -> Result<FilterBitmap> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::param("temperature must be positive"));
    }
    let n = ranked.len();
    let want = target_cardinality(s, n)?;
    let window = corr.window(n);
    if want > window {
        return Err(Error::WindowOverflow {
            requested: want,
            window,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist: Vec<f64> = ranked.scores[..window]
        .iter()
        .map(|&d| match corr {
            Correlation::Negative => -(d as f64),
            _ => d as f64,
        })
        .collect();
    let (lo, hi) = dist
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &d| (lo.min(d), hi.max(d)));
    let span = hi - lo;
    // Exponential race: key = -ln(u) / w; the smallest `want` keys win.
    let mut keys: Vec<(f64, usize)> = dist
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            let w = match corr {
                Correlation::None => 1.0,
                _ => {
                    let z = if span > 0.0 { (d - lo) / span } else { 0.0 };
                    (-z / tau).exp()
                }
            };
            let u: f64 = 1.0 - rng.random::<f64>();
            (-u.ln() / w, i)
        })
        .collect();
    if want < keys.len() && want > 0 {
        keys.select_nth_unstable_by(want - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    }
    keys.truncate(want);
    Ok(FilterBitmap::from_rowids(
        n,
        keys.into_iter().map(|(_, i)| ranked.rowids[i]),
    ))
}

/// Mean of `rank / (N - 1)` over the selected rows: 0 is all-nearest,
/// 1 is all-farthest.
pub fn mean_normalized_rank(ranked: &RankedArray, bitmap: &FilterBitmap) -> f64 {
    let n = ranked.len();
    if n < 2 || bitmap.cardinality() == 0 {
        return 0.0;
    }
    let pos = ranked.positions();
    let sum: f64 = bitmap.iter().map(|r| pos[r as usize] as f64).sum();
    sum / bitmap.cardinality() as f64 / (n - 1) as f64
}

pub fn ground_truth(ds: &Dataset, q: &Vector, bitmap: &FilterBitmap, k: usize) -> Result<Vec<Neighbor>> {
    brute_force_topk(ds, q, k, Some(bitmap))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadHeader {
    pub version: u32,
    pub dataset_hash: String,
    pub n: usize,
    pub dim: usize,
    pub metric: DistanceMetric,
    pub ks: Vec<usize>,
    pub tau: f64,
    /// Base query vectors, indexed by `query_id`.
    pub queries: Vec<Vec<f32>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadRecord {
    pub query_id: u32,
    pub selectivity: f64,
    pub correlation: Correlation,
    pub seed: u64,
    pub bitmap: FilterBitmap,
    /// Exact filtered top-k for each harness `k`.
    pub truth: BTreeMap<usize, Vec<Neighbor>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Workload {
    pub header: WorkloadHeader,
    pub records: Vec<WorkloadRecord>,
}

impl Workload {
    pub fn query(&self, id: u32) -> Result<Vector> {
        let v = self
            .header
            .queries
            .get(id as usize)
            .ok_or_else(|| Error::Malformed(format!("query {id} missing from header")))?;
        Vector::new(v.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadSpec {
    pub selectivities: Vec<f64>,
    pub correlations: Vec<Correlation>,
    pub ks: Vec<usize>,
    pub seed: u64,
    pub tau: f64,
}

impl WorkloadSpec {
    /// The nine selectivities and five correlation classes of the full grid.
    pub fn full_grid(seed: u64) -> Self {
        Self {
            selectivities: vec![0.01, 0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 0.8, 0.9],
            correlations: Correlation::ALL.to_vec(),
            ks: vec![10],
            seed,
            tau: DEFAULT_TAU,
        }
    }
}

/// Mixes a base seed with a record's coordinates.
pub fn record_seed(seed: u64, query_id: u32, s: f64, corr: Correlation) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(query_id.to_le_bytes());
    h.update(s.to_le_bytes());
    h.update([corr.code()]);
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
}

/// Every (query, selectivity, correlation) combination with its bitmap and
/// exact filtered ground truth. Infeasible combinations are skipped with a
/// warning.
pub fn generate_workload(ds: &Dataset, queries: &[Vector], spec: &WorkloadSpec) -> Result<Workload> {
    let max_k = spec.ks.iter().copied().max().unwrap_or(0);
    if max_k == 0 {
        return Err(Error::param("need at least one k"));
    }
    for q in queries {
        if q.dim() != ds.dim() {
            return Err(Error::DimensionMismatch {
                expected: ds.dim(),
                actual: q.dim(),
            });
        }
    }
    let per_query: Vec<Vec<WorkloadRecord>> = queries
        .par_iter()
        .enumerate()
        .map(|(qi, q)| -> Result<Vec<WorkloadRecord>> {
            let ranked = rank_all(ds, q)?;
            let mut out = Vec::new();
            for &s in &spec.selectivities {
                for &corr in &spec.correlations {
                    let want = target_cardinality(s, ds.len())?;
                    if want < max_k {
                        tracing::warn!(query = qi, s, %corr, want, max_k, "skipping: too few rows for k");
                        continue;
                    }
                    let seed = record_seed(spec.seed, qi as u32, s, corr);
                    let bitmap = match generate_bitmap(&ranked, s, corr, seed, spec.tau) {
                        Ok(b) => b,
                        Err(Error::WindowOverflow { requested, window }) => {
                            tracing::warn!(query = qi, s, %corr, requested, window, "skipping: window overflow");
                            continue;
                        }
                        Err(e) => return Err(e),
                    };
                    let truth = spec
                        .ks
                        .iter()
                        .map(|&k| (k, ranked.filtered_topk(&bitmap, k)))
                        .collect();
                    out.push(WorkloadRecord {
                        query_id: qi as u32,
                        selectivity: s,
                        correlation: corr,
                        seed,
                        bitmap,
                        truth,
                    });
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(Workload {
        header: WorkloadHeader {
            version: file::VERSION,
            dataset_hash: ds.content_hash(),
            n: ds.len(),
            dim: ds.dim(),
            metric: ds.metric(),
            ks: spec.ks.clone(),
            tau: spec.tau,
            queries: queries.iter().map(|q| q.as_slice().to_vec()).collect(),
        },
        records: per_query.into_iter().flatten().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize) -> Dataset {
        Dataset::from_flat(1, DistanceMetric::L2Squared, (0..n).map(|i| i as f32).collect()).unwrap()
    }

    #[test]
    fn ranks_colinear_points() {
        let ds = line(4);
        let r = rank_all(&ds, &Vector::new(vec![0.0]).unwrap()).unwrap();
        assert_eq!(r.rowids, vec![0, 1, 2, 3]);
        let r = rank_all(&ds, &Vector::new(vec![3.0]).unwrap()).unwrap();
        assert_eq!(r.rowids, vec![3, 2, 1, 0]);
    }

    #[test]
    fn exact_cardinality_and_window() {
        let ds = line(1000);
        let r = rank_all(&ds, &Vector::new(vec![0.0]).unwrap()).unwrap();
        let b = generate_bitmap(&r, 0.1, Correlation::None, 1, DEFAULT_TAU).unwrap();
        assert_eq!(b.cardinality(), 100);
        for seed in 0..20 {
            let b = generate_bitmap(&r, 0.3, Correlation::HighPositive, seed, DEFAULT_TAU).unwrap();
            let pos = r.positions();
            assert!(b.iter().all(|x| (pos[x as usize] as usize) < 334));
        }
    }

    #[test]
    fn window_overflow() {
        let ds = line(99);
        let r = rank_all(&ds, &Vector::new(vec![0.0]).unwrap()).unwrap();
        assert!(matches!(
            generate_bitmap(&r, 0.5, Correlation::HighPositive, 0, DEFAULT_TAU),
            Err(Error::WindowOverflow { requested: 50, window: 33 })
        ));
        assert!(generate_bitmap(&r, 0.5, Correlation::MediumPositive, 0, DEFAULT_TAU).is_ok());
    }

    #[test]
    fn full_selectivity_selects_everything() {
        let ds = line(50);
        let r = rank_all(&ds, &Vector::new(vec![0.0]).unwrap()).unwrap();
        for c in [Correlation::LowPositive, Correlation::Negative, Correlation::None] {
            assert_eq!(generate_bitmap(&r, 1.0, c, 3, DEFAULT_TAU).unwrap().cardinality(), 50);
        }
    }

    #[test]
    fn correlation_names_roundtrip() {
        for c in Correlation::ALL {
            assert_eq!(c.name().parse::<Correlation>().unwrap(), c);
            assert_eq!(Correlation::from_code(c.code()).unwrap(), c);
        }
        assert_eq!("HighPositive".parse::<Correlation>().unwrap(), Correlation::HighPositive);
        assert!("sideways".parse::<Correlation>().is_err());
    }
}
