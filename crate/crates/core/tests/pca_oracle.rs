//! PCA against an independent covariance eigendecomposition.

mod common;

use pagegraph::dataset::VectorDataset;
use pagegraph::distance::l2_sq;
use pagegraph::pca::{fit_pca, fit_unbalanced};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Cyclic Jacobi eigenvalues of a symmetric matrix, descending.
fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-22 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

fn covariance(ds: &VectorDataset) -> Vec<Vec<f64>> {
    let (n, d) = (ds.count(), ds.dim());
    let mean: Vec<f64> = (0..d)
        .map(|j| ds.rows().map(|r| r[j] as f64).sum::<f64>() / n as f64)
        .collect();
    let mut c = vec![vec![0.0; d]; d];
    for r in ds.rows() {
        for i in 0..d {
            for j in 0..d {
                c[i][j] += (r[i] as f64 - mean[i]) * (r[j] as f64 - mean[j]);
            }
        }
    }
    c.iter_mut().flatten().for_each(|x| *x /= n as f64);
    c
}

fn diag_gaussian(n: usize, stds: &[f32], seed: u64) -> VectorDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n * stds.len());
    for _ in 0..n {
        for &s in stds {
            let g: f32 = StandardNormal.sample(&mut rng);
            data.push(s * g);
        }
    }
    VectorDataset::new(n, stds.len(), data).unwrap()
}

#[test]
fn rotated_variances_match_independent_eigenvalues() {
    // Variances 10, 9, ..., clamped to stay positive past the tenth axis.
    let stds: Vec<f32> = (0..32).map(|i| ((10.0 - i as f32).max(0.25 + 0.01 * i as f32)).sqrt()).collect();
    let ds = diag_gaussian(1000, &stds, 1);
    let oracle = jacobi_eigenvalues(covariance(&ds));

    let model = fit_unbalanced(&ds, 32).unwrap();
    let rotated = model.transform_dataset(&ds).unwrap();
    let rotated = VectorDataset::new(1000, 32, rotated).unwrap();
    let cov = covariance(&rotated);
    let vars: Vec<f64> = (0..32).map(|i| cov[i][i]).collect();
    for w in vars.windows(2) {
        assert!(w[0] >= w[1] * (1.0 - 1e-6), "not descending: {vars:?}");
    }
    for (v, e) in vars.iter().zip(&oracle) {
        assert!((v - e).abs() <= 1e-3 * e.abs(), "{v} vs {e}");
    }
    let reported = model.principal_variances().unwrap();
    for (v, e) in reported.iter().zip(&oracle) {
        assert!((v - e).abs() <= 1e-3 * e.abs(), "{v} vs {e}");
    }
}

#[test]
fn split_distance_preserved_in_64d() {
    let fit = common::clustered(3000, 64, 16, 8, 0.3, 4);
    let model = fit_pca(&fit, 32, 9).unwrap();
    let test = common::gaussian(400, 64, 5);
    for p in 0..200 {
        let (u, v) = (test.row(2 * p), test.row(2 * p + 1));
        let (pu, ru) = model.transform(u).unwrap();
        let (pv, rv) = model.transform(v).unwrap();
        let split = l2_sq(&pu, &pv) as f64 + l2_sq(&ru, &rv) as f64;
        let direct = l2_sq(u, v) as f64;
        assert!((split - direct).abs() <= 1e-4 * direct);
    }
}

#[test]
fn balanced_model_keeps_principal_subspace_energy() {
    // Balancing rotates within the principal block only, so the principal
    // energy of every vector is unchanged.
    let ds = common::clustered(2000, 32, 8, 4, 0.2, 6);
    let plain = fit_unbalanced(&ds, 8).unwrap();
    let balanced = fit_pca(&ds, 8, 3).unwrap();
    for i in 0..50 {
        let (a, _) = plain.transform(ds.row(i)).unwrap();
        let (b, _) = balanced.transform(ds.row(i)).unwrap();
        let ea: f64 = a.iter().map(|x| (*x as f64).powi(2)).sum();
        let eb: f64 = b.iter().map(|x| (*x as f64).powi(2)).sum();
        assert!((ea - eb).abs() <= 1e-4 * ea.max(1e-6));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn norms_preserved_after_centering(seed in 0u64..1000, d_pca in 1usize..=8) {
        let ds = common::gaussian(64, 8, seed);
        let model = fit_pca(&ds, d_pca, seed).unwrap();
        let v = ds.row(0);
        let centered: Vec<f32> = v.iter().zip(model.mean()).map(|(a, m)| a - m).collect();
        let (p, r) = model.transform(v).unwrap();
        let lhs: f64 = centered.iter().map(|x| (*x as f64).powi(2)).sum();
        let rhs: f64 = p.iter().chain(&r).map(|x| (*x as f64).powi(2)).sum();
        prop_assert!((lhs - rhs).abs() <= 1e-4 * lhs.max(1e-6));
    }
}
