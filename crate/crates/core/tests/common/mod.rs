#![allow(dead_code)]

use std::path::PathBuf;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn spectra_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/spectra")
}

/// Eigenvalues of a real symmetric matrix by cyclic Jacobi rotations,
/// sorted descending.
#[allow(clippy::needless_range_loop)]
pub fn jacobi_symmetric_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        let diag: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum();
        if off <= 1e-30 * diag.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
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
    let mut eig: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    eig.sort_by(|x, y| y.total_cmp(x));
    eig
}

/// Eigenvalues of H·Hᴴ (the squared singular values of H), descending.
///
/// The Hermitian n×n matrix B + iC is embedded as the real symmetric
/// [[B, -C], [C, B]], whose spectrum is that of B + iC with every value
/// repeated twice.
pub fn gram_eigenvalues(h: &DMatrix<Complex64>) -> Vec<f64> {
    let g = h * h.adjoint();
    let n = g.nrows();
    let mut real = vec![vec![0.0; 2 * n]; 2 * n];
    for i in 0..n {
        for j in 0..n {
            let z = g[(i, j)];
            real[i][j] = z.re;
            real[i + n][j + n] = z.re;
            real[i][j + n] = -z.im;
            real[i + n][j] = z.im;
        }
    }
    jacobi_symmetric_eigenvalues(real)
        .chunks(2)
        .map(|pair| 0.5 * (pair[0] + pair[1]))
        .collect()
}

pub fn random_complex_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(rows, cols, |_, _| {
        Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
    })
}

/// Sample mean and the standard error of that mean.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
