//! Deterministic synthetic datasets.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, DistanceMetric, Vector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Distribution {
    /// Independent coordinates in `[0, 1)`.
    Uniform,
    /// Equal-weight isotropic Gaussians around centers drawn from the unit cube.
    GaussianMixture { components: usize, sigma: f32 },
}

impl Distribution {
    pub fn name(&self) -> &'static str {
        match self {
            Distribution::Uniform => "uniform",
            Distribution::GaussianMixture { .. } => "gaussian-mixture",
        }
    }
}

impl FromStr for Distribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Distribution::Uniform),
            "gaussian-mixture" => Ok(Distribution::GaussianMixture {
                components: 50,
                sigma: 0.05,
            }),
            other => Err(Error::param(format!("unknown distribution {other:?}"))),
        }
    }
}

pub fn generate(n: usize, dim: usize, dist: Distribution, metric: DistanceMetric, seed: u64) -> Result<Dataset> {
    if n == 0 || dim == 0 {
        return Err(Error::param("N and dim must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n * dim);
    match dist {
        Distribution::Uniform => {
            data.extend((0..n * dim).map(|_| rng.random::<f32>()));
        }
        Distribution::GaussianMixture { components, sigma } => {
            if components == 0 {
                return Err(Error::param("mixture needs at least one component"));
            }
            let noise = Normal::new(0.0f32, sigma).map_err(|e| Error::param(e.to_string()))?;
            let centers: Vec<f32> = (0..components * dim).map(|_| rng.random::<f32>()).collect();
            for _ in 0..n {
                let c = rng.random_range(0..components);
                let center = &centers[c * dim..(c + 1) * dim];
                data.extend(center.iter().map(|x| x + noise.sample(&mut rng)));
            }
        }
    }
    Dataset::from_flat(dim, metric, data)
}

/// `n` base rows plus `queries` held-out rows drawn from the same distribution.
pub fn generate_split(
    n: usize,
    queries: usize,
    dim: usize,
    dist: Distribution,
    metric: DistanceMetric,
    seed: u64,
) -> Result<(Dataset, Vec<Vector>)> {
    let all = generate(n + queries, dim, dist, metric, seed)?;
    let flat = all.as_flat();
    let base = Dataset::from_flat(dim, metric, flat[..n * dim].to_vec())?;
    let qs = flat[n * dim..]
        .chunks_exact(dim)
        .map(|c| Vector::new(c.to_vec()))
        .collect::<Result<Vec<_>>>()?;
    Ok((base, qs))
}

/// `count` rows from `ds`, as query vectors, with the sampled rowids.
pub fn sample_queries(ds: &Dataset, count: usize, seed: u64) -> Vec<(u32, Vec<f32>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = rand::seq::index::sample(&mut rng, ds.len(), count.min(ds.len()));
    picks
        .into_iter()
        .map(|r| (r as u32, ds.row(r as u32).to_vec()))
        .collect()
}
