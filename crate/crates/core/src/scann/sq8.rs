use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, DistanceMetric};

/// Per-dimension 8-bit scalar quantizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sq8Codebook {
    pub mins: Vec<f32>,
    pub maxs: Vec<f32>,
}

impl Sq8Codebook {
    pub fn fit(ds: &Dataset) -> Self {
        let mut mins = vec![f32::INFINITY; ds.dim()];
        let mut maxs = vec![f32::NEG_INFINITY; ds.dim()];
        for row in ds.rows() {
            for (j, &x) in row.iter().enumerate() {
                mins[j] = mins[j].min(x);
                maxs[j] = maxs[j].max(x);
            }
        }
        Self { mins, maxs }
    }

    pub fn dim(&self) -> usize {
        self.mins.len()
    }

    pub fn encode(&self, x: &[f32]) -> Vec<u8> {
        x.iter()
            .zip(self.mins.iter().zip(&self.maxs))
            .map(|(&v, (&lo, &hi))| {
                if hi > lo {
                    (255.0 * ((v - lo) / (hi - lo)).clamp(0.0, 1.0)).round() as u8
                } else {
                    0
                }
            })
            .collect()
    }

    #[inline]
    fn decode_one(&self, j: usize, c: u8) -> f32 {
        let (lo, hi) = (self.mins[j], self.maxs[j]);
        lo + (hi - lo) * (c as f32 / 255.0)
    }

    pub fn decode(&self, code: &[u8]) -> Vec<f32> {
        code.iter().enumerate().map(|(j, &c)| self.decode_one(j, c)).collect()
    }

    /// Full-precision query against a decoded code.
    pub fn score(&self, metric: DistanceMetric, q: &[f32], code: &[u8]) -> f32 {
        let it = q.iter().zip(code).enumerate().map(|(j, (&x, &c))| (x, self.decode_one(j, c)));
        match metric {
            DistanceMetric::L2Squared => it.map(|(x, y)| (x - y) * (x - y)).sum(),
            DistanceMetric::InnerProduct => -it.map(|(x, y)| x * y).sum::<f32>(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reconstruction_error_bound() {
        let rows: Vec<[f32; 16]> = (0..200)
            .map(|i| std::array::from_fn(|j| ((i * 31 + j * 7) % 97) as f32 / 96.0))
            .collect();
        let ds = Dataset::from_rows(DistanceMetric::L2Squared, rows.iter()).unwrap();
        let cb = Sq8Codebook::fit(&ds);
        for row in ds.rows() {
            let back = cb.decode(&cb.encode(row));
            for (j, (a, b)) in row.iter().zip(&back).enumerate() {
                let step = (cb.maxs[j] - cb.mins[j]) / 255.0;
                assert!((a - b).abs() <= step + 1e-6);
                assert!((a - b).abs() <= 1.0 / 255.0 + 1e-6);
            }
        }
    }

    #[test]
    fn degenerate_dimension_decodes_to_min() {
        let ds = Dataset::from_rows(DistanceMetric::L2Squared, [[3.0f32, 0.0], [3.0, 1.0]]).unwrap();
        let cb = Sq8Codebook::fit(&ds);
        let c = cb.encode(&[3.0, 0.5]);
        assert_eq!(c[0], 0);
        assert_eq!(cb.decode(&c)[0], 3.0);
    }
}
