//! Synthetic data for tests, benchmarks and calibration runs.

use crate::embedding::Embedding;
use crate::linalg::{dot, norm, Matrix};
use crate::rng::SeededRng;

/// `rows × cols` matrix of i.i.d. `N(0, 1)` entries.
pub fn gaussian_matrix(rng: &mut SeededRng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.standard_normal()).collect();
    Matrix::from_vec_unchecked(rows, cols, data)
}

/// Haar-distributed random orthogonal `d × d` matrix (Gram-Schmidt on a
/// Gaussian matrix with the usual sign correction).
pub fn random_orthogonal(rng: &mut SeededRng, d: usize) -> Matrix {
    loop {
        let g = gaussian_matrix(rng, d, d);
        let mut q: Vec<Vec<f64>> = Vec::with_capacity(d);
        let mut ok = true;
        for row in g.row_iter() {
            let mut v = row.to_vec();
            for _ in 0..2 {
                for b in &q {
                    let p = dot(&v, b);
                    v.iter_mut().zip(b).for_each(|(x, bi)| *x -= p * bi);
                }
            }
            let n = norm(&v);
            if n < 1e-8 {
                ok = false;
                break;
            }
            v.iter_mut().for_each(|x| *x /= n);
            q.push(v);
        }
        if ok {
            let data = q.into_iter().flatten().collect();
            return Matrix::from_vec_unchecked(d, d, data);
        }
    }
}

/// Random orthogonal matrix with determinant −1 (a reflection).
pub fn random_reflection(rng: &mut SeededRng, d: usize) -> Matrix {
    let mut q = random_orthogonal(rng, d);
    if q.determinant().expect("square") > 0.0 {
        for x in q.row_mut(0) {
            *x = -*x;
        }
    }
    q
}

/// Tokens `{prefix}0`, `{prefix}1`, ...
pub fn tokens(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

/// Embedding with Gaussian rows and tokens `w0..w{n-1}`.
pub fn random_embedding(rng: &mut SeededRng, n: usize, d: usize) -> Embedding {
    Embedding::new(tokens("w", n), gaussian_matrix(rng, n, d)).expect("valid synthetic embedding")
}

/// Applies `x ↦ scale · x · rotation + shift` to every row.
pub fn similarity_transform_rows(m: &Matrix, rotation: &Matrix, scale: f64, shift: &[f64]) -> Matrix {
    let mut out = m.matmul(rotation).expect("compatible shapes").scaled(scale);
    for i in 0..out.rows() {
        out.row_mut(i).iter_mut().zip(shift).for_each(|(x, t)| *x += t);
    }
    out
}

/// Adds i.i.d. `N(0, sigma²)` noise to every entry.
pub fn add_noise(rng: &mut SeededRng, m: &Matrix, sigma: f64) -> Matrix {
    let data = m
        .as_slice()
        .iter()
        .map(|x| x + sigma * rng.standard_normal())
        .collect();
    Matrix::from_vec_unchecked(m.rows(), m.cols(), data)
}

/// One "language" view of a shared latent vocabulary: the latent rows
/// rotated by a fresh random orthogonal matrix, plus Gaussian noise.
pub fn language_view(
    rng: &mut SeededRng,
    latent: &Matrix,
    prefix: &str,
    noise: f64,
) -> Embedding {
    let q = random_orthogonal(rng, latent.cols());
    let rotated = latent.matmul(&q).expect("square rotation");
    let noisy = add_noise(rng, &rotated, noise);
    Embedding::new(tokens(prefix, latent.rows()), noisy).expect("valid synthetic embedding")
}
