//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use pagegraph::dataset::VectorDataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Gaussian mixture on a `latent`-dimensional subspace embedded in `dim`
/// dimensions by a random linear map, plus isotropic noise.
pub fn clustered(n: usize, dim: usize, latent: usize, clusters: usize, noise: f32, seed: u64) -> VectorDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = || -> f32 { StandardNormal.sample(&mut rng) };
    let map: Vec<f32> = (0..dim * latent).map(|_| normal() / (latent as f32).sqrt()).collect();
    let centers: Vec<f32> = (0..clusters * latent).map(|_| 4.0 * normal()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37);
    let mut data = Vec::with_capacity(n * dim);
    let mut z = vec![0.0f32; latent];
    for _ in 0..n {
        let c = rng.random_range(0..clusters);
        for (j, zj) in z.iter_mut().enumerate() {
            let g: f32 = StandardNormal.sample(&mut rng);
            *zj = centers[c * latent + j] + g;
        }
        for i in 0..dim {
            let row = &map[i * latent..(i + 1) * latent];
            let v: f32 = row.iter().zip(&z).map(|(a, b)| a * b).sum();
            let e: f32 = StandardNormal.sample(&mut rng);
            data.push(v + noise * e);
        }
    }
    VectorDataset::new(n, dim, data).unwrap()
}

/// i.i.d. standard normal vectors.
pub fn gaussian(n: usize, dim: usize, seed: u64) -> VectorDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..n * dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    VectorDataset::new(n, dim, data).unwrap()
}

/// Three well-separated blobs; row `i` belongs to blob `i % 3`. Each blob
/// is itself a [`clustered`] set (6 latent dimensions, 16 modes) shifted by
/// `separation` along coordinate `i % 3`.
pub fn three_blobs(n: usize, dim: usize, separation: f32, seed: u64) -> VectorDataset {
    let parts: Vec<VectorDataset> = (0..3)
        .map(|b| clustered(n / 3 + 1, dim, 6, 16, 0.05, seed + b))
        .collect();
    let mut data = Vec::with_capacity(n * dim);
    for i in 0..n {
        let blob = i % 3;
        for (j, v) in parts[blob].row(i / 3).iter().enumerate() {
            data.push(v + if j == blob { separation } else { 0.0 });
        }
    }
    VectorDataset::new(n, dim, data).unwrap()
}

/// Index of the blob nearest `v` for data from [`three_blobs`].
pub fn blob_of(v: &[f32]) -> usize {
    (0..3).max_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap()
}
