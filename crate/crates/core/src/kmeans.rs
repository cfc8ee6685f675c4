//! Seeded Lloyd's k-means with k-means++ seeding.
//!
//! Shared by the codebook trainer (k = 16 per sub-space) and the entry-point
//! table builder. Results depend only on the inputs and the seed; the
//! assignment step runs in parallel but every reduction is sequential.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::distance::l2_sq;

pub const DEFAULT_MAX_ITERS: usize = 25;

#[derive(Debug, Clone)]
pub struct KMeans {
    pub k: usize,
    pub dim: usize,
    /// `k * dim` row-major.
    pub centroids: Vec<f32>,
    pub assignments: Vec<u32>,
    /// Sum of squared distances from each point to its assigned centroid.
    pub inertia: f64,
    pub iterations: usize,
}

impl KMeans {
    pub fn centroid(&self, c: usize) -> &[f32] {
        &self.centroids[c * self.dim..(c + 1) * self.dim]
    }
}

/// Index of the nearest centroid; ties resolve to the smaller index.
#[inline]
pub fn nearest_centroid(centroids: &[f32], dim: usize, x: &[f32]) -> (usize, f32) {
    let mut best = (0usize, f32::INFINITY);
    for (c, cent) in centroids.chunks_exact(dim).enumerate() {
        let d = l2_sq(x, cent);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Runs k-means over `data` (`n * dim` row-major). Requires `1 <= k <= n`.
pub fn kmeans(data: &[f32], dim: usize, k: usize, max_iters: usize, seed: u64) -> KMeans {
    let n = data.len() / dim;
    assert!(k >= 1 && k <= n, "k = {k} must be in 1..={n}");
    let row = |i: usize| &data[i * dim..(i + 1) * dim];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut centroids = plus_plus_init(data, dim, k, &mut rng);
    let mut assignments = vec![u32::MAX; n];
    let mut inertia = 0.0f64;
    let mut iterations = 0;

    for _ in 0..max_iters.max(1) {
        iterations += 1;
        let next: Vec<(u32, f32)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let (c, d) = nearest_centroid(&centroids, dim, row(i));
                (c as u32, d)
            })
            .collect();
        let changed = next
            .iter()
            .zip(&assignments)
            .filter(|(a, b)| a.0 != **b)
            .count();
        inertia = next.iter().map(|x| x.1 as f64).sum();
        for (slot, a) in assignments.iter_mut().zip(&next) {
            *slot = a.0;
        }
        if changed == 0 {
            break;
        }

        let mut sums = vec![0.0f64; k * dim];
        let mut counts = vec![0usize; k];
        for (i, &c) in assignments.iter().enumerate() {
            let c = c as usize;
            counts[c] += 1;
            for (s, &v) in sums[c * dim..(c + 1) * dim].iter_mut().zip(row(i)) {
                *s += v as f64;
            }
        }
        for c in 0..k {
            // Empty clusters keep their previous centroid.
            if counts[c] == 0 {
                continue;
            }
            let inv = 1.0 / counts[c] as f64;
            for j in 0..dim {
                centroids[c * dim + j] = (sums[c * dim + j] * inv) as f32;
            }
        }
    }

    KMeans {
        k,
        dim,
        centroids,
        assignments,
        inertia,
        iterations,
    }
}

fn plus_plus_init(data: &[f32], dim: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let n = data.len() / dim;
    let row = |i: usize| &data[i * dim..(i + 1) * dim];
    let mut centroids = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..n);
    centroids.extend_from_slice(row(first));
    let mut best: Vec<f32> = (0..n).into_par_iter().map(|i| l2_sq(row(i), row(first))).collect();

    for _ in 1..k {
        let total: f64 = best.iter().map(|&d| d as f64).sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in best.iter().enumerate() {
                target -= d as f64;
                if target < 0.0 && d > 0.0 {
                    chosen = i;
                    break;
                }
            }
            // Guard against landing on an existing centroid through rounding.
            if best[chosen] == 0.0 {
                chosen = best
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .map(|x| x.0)
                    .unwrap();
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.extend_from_slice(row(pick));
        let c = &centroids[centroids.len() - dim..];
        best.par_iter_mut().enumerate().for_each(|(i, b)| {
            let d = l2_sq(row(i), c);
            if d < *b {
                *b = d;
            }
        });
    }
    centroids
}
