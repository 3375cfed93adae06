//! Lloyd's k-means with k-means++ seeding, in squared L2.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub dim: usize,
    /// `k * dim`, row-major.
    pub centroids: Vec<f32>,
    pub assignment: Vec<u32>,
}

impl KMeans {
    pub fn k(&self) -> usize {
        self.centroids.len() / self.dim
    }

    pub fn centroid(&self, c: usize) -> &[f32] {
        &self.centroids[c * self.dim..(c + 1) * self.dim]
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k()];
        for &a in &self.assignment {
            s[a as usize] += 1;
        }
        s
    }
}

#[inline]
fn l2(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f32], centroids: &[f32], dim: usize) -> (u32, f32) {
    let mut best = (0u32, f32::INFINITY);
    for (c, cen) in centroids.chunks_exact(dim).enumerate() {
        let d = l2(p, cen);
        if d < best.1 {
            best = (c as u32, d);
        }
    }
    best
}

fn plus_plus(points: &[f32], dim: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let n = points.len() / dim;
    let row = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut centroids = Vec::with_capacity(k * dim);
    centroids.extend_from_slice(row(rng.random_range(0..n)));
    let mut best: Vec<f32> = (0..n).into_par_iter().map(|i| l2(row(i), &centroids[..dim])).collect();
    for _ in 1..k {
        let total: f64 = best.iter().map(|&d| d as f64).sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in best.iter().enumerate() {
                target -= d as f64;
                if target < 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let start = centroids.len();
        centroids.extend_from_slice(row(pick));
        let c = centroids[start..].to_vec();
        best.par_iter_mut().enumerate().for_each(|(i, b)| {
            *b = b.min(l2(row(i), &c));
        });
    }
    centroids
}

/// Moves the farthest member of the largest cluster into each empty one.
fn repair_empty(points: &[f32], dim: usize, centroids: &mut [f32], assignment: &mut [u32]) {
    let k = centroids.len() / dim;
    loop {
        let mut sizes = vec![0usize; k];
        for &a in assignment.iter() {
            sizes[a as usize] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let largest = (0..k).max_by_key(|&c| (sizes[c], std::cmp::Reverse(c))).expect("k > 0");
        if sizes[largest] < 2 {
            return;
        }
        let cen = centroids[largest * dim..(largest + 1) * dim].to_vec();
        let far = assignment
            .iter()
            .enumerate()
            .filter(|(_, &a)| a as usize == largest)
            .map(|(i, _)| (i, l2(&points[i * dim..(i + 1) * dim], &cen)))
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
            .expect("non-empty")
            .0;
        assignment[far] = empty as u32;
        centroids[empty * dim..(empty + 1) * dim].copy_from_slice(&points[far * dim..(far + 1) * dim]);
    }
}

pub fn kmeans(points: &[f32], dim: usize, k: usize, iters: usize, seed: u64) -> Result<KMeans> {
    if dim == 0 || !points.len().is_multiple_of(dim) {
        return Err(Error::param("points are not a whole number of rows"));
    }
    let n = points.len() / dim;
    if k == 0 || k > n {
        return Err(Error::param(format!("cannot make {k} clusters from {n} points")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus(points, dim, k, &mut rng);
    let assign = |centroids: &[f32]| -> Vec<u32> {
        points
            .par_chunks_exact(dim)
            .map(|p| nearest(p, centroids, dim).0)
            .collect()
    };
    let mut assignment = assign(&centroids);
    for _ in 0..iters {
        let mut sums = vec![0f64; k * dim];
        let mut counts = vec![0usize; k];
        for (i, &a) in assignment.iter().enumerate() {
            counts[a as usize] += 1;
            let s = &mut sums[a as usize * dim..(a as usize + 1) * dim];
            for (acc, &x) in s.iter_mut().zip(&points[i * dim..(i + 1) * dim]) {
                *acc += x as f64;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for j in 0..dim {
                    centroids[c * dim + j] = (sums[c * dim + j] / counts[c] as f64) as f32;
                }
            }
        }
        repair_empty(points, dim, &mut centroids, &mut assignment);
        let next = assign(&centroids);
        if next == assignment {
            break;
        }
        assignment = next;
    }
    repair_empty(points, dim, &mut centroids, &mut assignment);
    Ok(KMeans {
        dim,
        centroids,
        assignment,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_blobs_split_cleanly() {
        let mut pts = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for i in 0..400 {
            let off = if i % 2 == 0 { 0.0 } else { 100.0 };
            for _ in 0..4 {
                pts.push(off + rng.random::<f32>());
            }
        }
        let km = kmeans(&pts, 4, 2, 10, 1).unwrap();
        for (i, &a) in km.assignment.iter().enumerate() {
            assert_eq!(a, km.assignment[i % 2]);
            let p = &pts[i * 4..i * 4 + 4];
            let own = l2(p, km.centroid(a as usize));
            let other = l2(p, km.centroid(1 - a as usize));
            assert!(own < other);
        }
    }

    #[test]
    fn no_empty_clusters_with_duplicates() {
        let mut pts = vec![0.0f32; 2 * 50];
        pts.extend_from_slice(&[5.0, 5.0]);
        let km = kmeans(&pts, 2, 10, 5, 0).unwrap();
        assert!(km.sizes().iter().all(|&s| s > 0));
        assert_eq!(km.sizes().iter().sum::<usize>(), 51);
    }

    #[test]
    fn deterministic_and_bounded() {
        let pts: Vec<f32> = (0..300).map(|i| ((i * 37) % 101) as f32).collect();
        assert_eq!(kmeans(&pts, 3, 7, 10, 9).unwrap(), kmeans(&pts, 3, 7, 10, 9).unwrap());
        assert!(kmeans(&pts, 3, 101, 10, 9).is_err());
        assert!(kmeans(&pts, 3, 0, 10, 9).is_err());
    }
}
