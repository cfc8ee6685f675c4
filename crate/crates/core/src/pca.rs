//! Variance-sorted orthogonal rotation and the principal/residual split.
//!
//! A fitted [`PcaModel`] maps `v` to `rotation * (v - mean)`. The first
//! `d_pca` coordinates form the principal part (the quantized part), the
//! rest the residual. Because the map is a rigid motion, squared distances
//! split exactly into principal plus residual contributions.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::dataset::VectorDataset;
use crate::error::{Error, Result};

/// Default upper bound on the number of vectors used to fit the rotation.
pub const DEFAULT_PCA_SAMPLE: usize = 100_000;

const BALANCE_MAX_SWEEPS: usize = 10;
const BALANCE_TARGET_RATIO: f64 = 2.0;
const COV_CHUNK_ROWS: usize = 4096;

#[derive(Debug, Clone)]
pub struct PcaModel {
    dim: usize,
    d_pca: usize,
    mean: Vec<f32>,
    /// `dim x dim`, row-major; row `i` is the direction of output coordinate `i`.
    rotation: Vec<f32>,
    /// Covariance of the principal coordinates over the training sample.
    /// Only present on freshly fitted models.
    principal_cov: Option<Vec<f64>>,
}

impl PartialEq for PcaModel {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.d_pca == other.d_pca
            && self.mean == other.mean
            && self.rotation == other.rotation
    }
}

impl PcaModel {
    pub fn from_parts(dim: usize, d_pca: usize, mean: Vec<f32>, rotation: Vec<f32>) -> Result<Self> {
        if dim == 0 || d_pca == 0 || d_pca > dim {
            return Err(Error::invalid(format!("d_pca = {d_pca} must be in 1..={dim}")));
        }
        if mean.len() != dim || rotation.len() != dim * dim {
            return Err(Error::format("PCA model size does not match its header"));
        }
        Ok(Self {
            dim,
            d_pca,
            mean,
            rotation,
            principal_cov: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn d_pca(&self) -> usize {
        self.d_pca
    }

    pub fn residual_dim(&self) -> usize {
        self.dim - self.d_pca
    }

    pub fn mean(&self) -> &[f32] {
        &self.mean
    }

    pub fn rotation(&self) -> &[f32] {
        &self.rotation
    }

    pub fn rotation_row(&self, i: usize) -> &[f32] {
        &self.rotation[i * self.dim..(i + 1) * self.dim]
    }

    /// Per-coordinate variance of the principal block over the training
    /// sample, if the model still carries its training statistics.
    pub fn principal_variances(&self) -> Option<Vec<f64>> {
        let cov = self.principal_cov.as_ref()?;
        Some((0..self.d_pca).map(|i| cov[i * self.d_pca + i]).collect())
    }

    /// Full rotated vector `rotation * (v - mean)` written into `out`.
    pub fn transform_into(&self, v: &[f32], out: &mut [f32]) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: v.len(),
            });
        }
        if out.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: out.len(),
            });
        }
        for (o, row) in out.iter_mut().zip(self.rotation.chunks_exact(self.dim)) {
            let mut acc = 0.0f64;
            for ((r, a), m) in row.iter().zip(v).zip(&self.mean) {
                acc += *r as f64 * (a - m) as f64;
            }
            *o = acc as f32;
        }
        Ok(())
    }

    /// Splits `v` into its principal (`d_pca`) and residual (`dim - d_pca`) parts.
    pub fn transform(&self, v: &[f32]) -> Result<(Vec<f32>, Vec<f32>)> {
        let mut full = vec![0.0; self.dim];
        self.transform_into(v, &mut full)?;
        let residual = full.split_off(self.d_pca);
        Ok((full, residual))
    }

    /// Rotates every row of `ds`; returns `count * dim` row-major values.
    pub fn transform_dataset(&self, ds: &VectorDataset) -> Result<Vec<f32>> {
        if ds.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: ds.dim(),
            });
        }
        // Row-wise through `transform_into` so a stored vector and the same
        // vector transformed as a query are bit-identical.
        let d = self.dim;
        let mut out = vec![0.0f32; ds.count() * d];
        out.par_chunks_mut(d)
            .zip(ds.data().par_chunks(d))
            .try_for_each(|(o, v)| self.transform_into(v, o))?;
        Ok(out)
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_u32::<LittleEndian>(self.dim as u32)?;
        w.write_u32::<LittleEndian>(self.d_pca as u32)?;
        for &v in self.mean.iter().chain(&self.rotation) {
            w.write_f32::<LittleEndian>(v)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let dim = r.read_u32::<LittleEndian>()? as usize;
        let d_pca = r.read_u32::<LittleEndian>()? as usize;
        if dim == 0 || dim > 1 << 16 {
            return Err(Error::format(format!("implausible PCA dimension {dim}")));
        }
        let mut mean = vec![0.0; dim];
        r.read_f32_into::<LittleEndian>(&mut mean)?;
        let mut rotation = vec![0.0; dim * dim];
        r.read_f32_into::<LittleEndian>(&mut rotation)?;
        Self::from_parts(dim, d_pca, mean, rotation)
    }

    pub fn serialized_len(&self) -> usize {
        8 + 4 * (self.dim + self.dim * self.dim)
    }
}

/// Fits the variance-sorted rotation and then balances the principal block.
pub fn fit_pca(sample: &VectorDataset, d_pca: usize, seed: u64) -> Result<PcaModel> {
    let model = fit_unbalanced(sample, d_pca)?;
    Ok(balance_rotation(model, seed))
}

/// Eigendecomposition of the sample covariance; rows sorted by descending
/// explained variance. Rank-deficient samples get an arbitrary orthonormal
/// completion of the null space.
pub fn fit_unbalanced(sample: &VectorDataset, d_pca: usize) -> Result<PcaModel> {
    let d = sample.dim();
    if d_pca == 0 || d_pca > d {
        return Err(Error::invalid(format!("d_pca = {d_pca} must be in 1..={d}")));
    }
    let n = sample.count();

    let mut mean = vec![0.0f64; d];
    for row in sample.rows() {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let mut cov = DMatrix::<f64>::zeros(d, d);
    for chunk in sample.data().chunks(COV_CHUNK_ROWS * d) {
        let rows = chunk.len() / d;
        let x = DMatrix::from_fn(rows, d, |i, j| chunk[i * d + j] as f64 - mean[j]);
        cov += x.tr_mul(&x);
    }
    cov /= n as f64;

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let mut rotation = Vec::with_capacity(d * d);
    let mut variances = Vec::with_capacity(d);
    for &c in &order {
        let col = eig.eigenvectors.column(c);
        // Deterministic sign: largest-magnitude component positive.
        let pivot = col
            .iter()
            .copied()
            .max_by(|a, b| a.abs().total_cmp(&b.abs()))
            .unwrap_or(1.0);
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        rotation.extend(col.iter().map(|&x| (x * sign) as f32));
        variances.push(eig.eigenvalues[c].max(0.0));
    }

    let mut principal_cov = vec![0.0f64; d_pca * d_pca];
    for i in 0..d_pca {
        principal_cov[i * d_pca + i] = variances[i];
    }

    Ok(PcaModel {
        dim: d,
        d_pca,
        mean: mean.iter().map(|&m| m as f32).collect(),
        rotation,
        principal_cov: Some(principal_cov),
    })
}

/// Rotates the principal block so its coordinate variances are more even.
///
/// A Haar-random orthogonal matrix is applied first, then sweeps of
/// variance-equalizing Givens rotations pair the highest-variance coordinate
/// with the lowest, the second-highest with the second-lowest, and so on.
/// Sweeps stop once max/min variance drops below 2, or after 10 sweeps.
/// Models without training statistics (e.g. deserialized ones) are returned
/// unchanged.
pub fn balance_rotation(mut model: PcaModel, seed: u64) -> PcaModel {
    let Some(cov_flat) = model.principal_cov.take() else {
        return model;
    };
    let (p, d) = (model.d_pca, model.dim);
    let mut cov = DMatrix::from_row_slice(p, p, &cov_flat);
    let mut rows = DMatrix::from_fn(p, d, |i, j| model.rotation[i * d + j] as f64);

    let q = random_orthogonal(p, seed);
    rows = &q * rows;
    cov = &q * cov * q.transpose();

    for _ in 0..BALANCE_MAX_SWEEPS {
        let vars: Vec<f64> = (0..p).map(|i| cov[(i, i)]).collect();
        let max = vars.iter().copied().fold(f64::MIN, f64::max);
        let min = vars.iter().copied().fold(f64::MAX, f64::min);
        if p < 2 || max < BALANCE_TARGET_RATIO * min {
            break;
        }
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| vars[b].total_cmp(&vars[a]).then(a.cmp(&b)));
        for k in 0..p / 2 {
            let (i, j) = (order[k], order[p - 1 - k]);
            let (a, b, c) = (cov[(i, i)], cov[(j, j)], cov[(i, j)]);
            let theta = 0.5 * (-(a - b)).atan2(2.0 * c);
            givens(&mut cov, &mut rows, i, j, theta);
        }
    }

    for i in 0..p {
        for j in 0..d {
            model.rotation[i * d + j] = rows[(i, j)] as f32;
        }
    }
    model.principal_cov = Some(cov.transpose().as_slice().to_vec());
    model
}

/// Applies `G = [[c, s], [-s, c]]` on coordinates `(i, j)`:
/// `rows <- G rows`, `cov <- G cov G^T`.
fn givens(cov: &mut DMatrix<f64>, rows: &mut DMatrix<f64>, i: usize, j: usize, theta: f64) {
    let (s, c) = theta.sin_cos();
    for col in 0..rows.ncols() {
        let (ri, rj) = (rows[(i, col)], rows[(j, col)]);
        rows[(i, col)] = c * ri + s * rj;
        rows[(j, col)] = -s * ri + c * rj;
    }
    let n = cov.nrows();
    for col in 0..n {
        let (ri, rj) = (cov[(i, col)], cov[(j, col)]);
        cov[(i, col)] = c * ri + s * rj;
        cov[(j, col)] = -s * ri + c * rj;
    }
    for row in 0..n {
        let (ri, rj) = (cov[(row, i)], cov[(row, j)]);
        cov[(row, i)] = c * ri + s * rj;
        cov[(row, j)] = -s * ri + c * rj;
    }
}

/// Haar-distributed orthogonal matrix via QR of a Gaussian matrix.
fn random_orthogonal(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::<f64>::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for k in 0..n {
        if r[(k, k)] < 0.0 {
            q.column_mut(k).neg_mut();
        }
    }
    q
}
