//! Dense row-major matrices and the handful of kernels alignment needs:
//! centroids, the cross-covariance `H = Σ w_i b_iᵀ a_i`, a one-sided Jacobi
//! SVD, determinants and a Cholesky solve.

use std::fmt;
use std::ops::{Index, IndexMut};

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Maximum number of Jacobi sweeps before the SVD reports failure.
pub const MAX_JACOBI_SWEEPS: usize = 100;

/// Row-major dense matrix of `f64`.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major data, rejecting wrong lengths and
    /// non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::ShapeMismatch(format!(
                "matrix must be non-empty, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Invalid("matrix contains non-finite entries".into()));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub(crate) fn from_vec_unchecked(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Matrix { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(d: usize) -> Self {
        let mut m = Matrix::zeros(d, d);
        for i in 0..d {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let mut m = Matrix::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Builds a matrix from equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::ShapeMismatch(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Matrix::new(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> std::slice::Chunks<'_, f64> {
        self.data.chunks(self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::ShapeMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        out.data
            .par_chunks_mut(other.cols)
            .zip(self.data.par_chunks(self.cols))
            .for_each(|(out_row, lhs_row)| vec_mat_into(lhs_row, other, out_row));
        Ok(out)
    }

    /// Multiplies every entry by `s`.
    pub fn scaled(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    /// Largest absolute entrywise difference. Panics on shape mismatch.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// `‖MᵀM − I‖_max`, the orthogonality defect of a square matrix.
    pub fn orthogonality_defect(&self) -> f64 {
        let gram = self
            .transpose()
            .matmul(self)
            .expect("square matrix times its transpose");
        gram.max_abs_diff(&Matrix::identity(self.cols))
    }

    /// Determinant by LU factorisation with partial pivoting.
    pub fn determinant(&self) -> Result<f64> {
        if !self.is_square() {
            return Err(Error::ShapeMismatch("determinant of a non-square matrix".into()));
        }
        let n = self.rows;
        let mut lu = self.data.clone();
        let mut det = 1.0;
        for k in 0..n {
            let pivot_row = (k..n)
                .max_by(|&a, &b| lu[a * n + k].abs().total_cmp(&lu[b * n + k].abs()))
                .unwrap();
            let pivot = lu[pivot_row * n + k];
            if pivot == 0.0 {
                return Ok(0.0);
            }
            if pivot_row != k {
                for j in 0..n {
                    lu.swap(k * n + j, pivot_row * n + j);
                }
                det = -det;
            }
            det *= pivot;
            for i in k + 1..n {
                let f = lu[i * n + k] / pivot;
                if f != 0.0 {
                    for j in k + 1..n {
                        lu[i * n + j] -= f * lu[k * n + j];
                    }
                }
            }
        }
        Ok(det)
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for row in self.row_iter() {
            writeln!(f, "  {row:?}")?;
        }
        write!(f, "]")
    }
}

/// `out = x · m` for a row vector `x`.
pub(crate) fn vec_mat_into(x: &[f64], m: &Matrix, out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    for (p, &xp) in x.iter().enumerate() {
        if xp == 0.0 {
            continue;
        }
        for (o, &mpq) in out.iter_mut().zip(m.row(p)) {
            *o += xp * mpq;
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Sum of squared entries.
pub fn frobenius_sq(m: &Matrix) -> f64 {
    m.data.iter().map(|x| x * x).sum()
}

fn check_weights(weights: &[f64], n: usize) -> Result<f64> {
    if weights.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{} weights for {n} rows",
            weights.len()
        )));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::Invalid("weights must be finite and nonnegative".into()));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::ZeroWeights);
    }
    Ok(total)
}

/// Mean row, or the weighted mean `Σ w_i x_i / Σ w_i`.
pub fn centroid(points: &Matrix, weights: Option<&[f64]>) -> Result<Vec<f64>> {
    let d = points.cols;
    let mut acc = vec![0.0; d];
    let total = match weights {
        None => {
            for row in points.row_iter() {
                acc.iter_mut().zip(row).for_each(|(a, x)| *a += x);
            }
            points.rows as f64
        }
        Some(w) => {
            let total = check_weights(w, points.rows)?;
            for (row, &wi) in points.row_iter().zip(w) {
                acc.iter_mut().zip(row).for_each(|(a, x)| *a += wi * x);
            }
            total
        }
    };
    acc.iter_mut().for_each(|a| *a /= total);
    Ok(acc)
}

/// Rows per partial sum in [`cross_covariance`]; depends only on `n`, so the
/// summation order never depends on the worker count.
fn block_len(n: usize) -> usize {
    n.div_ceil(64).max(256)
}

/// Cross-covariance `H[p][q] = Σ_i w_i · B[i][p] · A[i][q]`.
///
/// Row blocks are summed in parallel and the block partials are then added in
/// a fixed order, so the result is bit-identical for any thread count.
pub fn cross_covariance(a: &Matrix, b: &Matrix, weights: Option<&[f64]>) -> Result<Matrix> {
    if a.rows != b.rows || a.cols != b.cols {
        return Err(Error::ShapeMismatch(format!(
            "A is {}x{}, B is {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    if let Some(w) = weights {
        check_weights(w, a.rows)?;
    }
    let (n, d) = (a.rows, a.cols);
    let block = block_len(n);
    let starts: Vec<usize> = (0..n).step_by(block).collect();
    let partials: Vec<Vec<f64>> = starts
        .par_iter()
        .map(|&start| {
            let mut h = vec![0.0; d * d];
            for i in start..(start + block).min(n) {
                let wi = weights.map_or(1.0, |w| w[i]);
                let (ai, bi) = (a.row(i), b.row(i));
                for (p, &bp) in bi.iter().enumerate() {
                    let f = wi * bp;
                    if f == 0.0 {
                        continue;
                    }
                    for (hq, &aq) in h[p * d..(p + 1) * d].iter_mut().zip(ai) {
                        *hq += f * aq;
                    }
                }
            }
            h
        })
        .collect();
    let mut h = vec![0.0; d * d];
    for part in &partials {
        h.iter_mut().zip(part).for_each(|(x, y)| *x += y);
    }
    Ok(Matrix::from_vec_unchecked(d, d, h))
}

/// Result of [`svd`]: `input ≈ U · diag(σ) · Vᵀ`.
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub u: Matrix,
    /// Nonincreasing, nonnegative.
    pub singular_values: Vec<f64>,
    pub v: Matrix,
}

impl SvdResult {
    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for i in 0..us.rows {
            for (j, s) in self.singular_values.iter().enumerate() {
                us[(i, j)] *= s;
            }
        }
        us.matmul(&self.v.transpose()).expect("square factors")
    }
}

/// Singular value decomposition of a square matrix by one-sided (Hestenes)
/// Jacobi rotations.
///
/// Columns of a working copy are pairwise orthogonalised until every pair
/// satisfies `|⟨w_j, w_k⟩| ≤ tol · ‖w_j‖‖w_k‖`. Fails with
/// [`Error::IllConditioned`] after [`MAX_JACOBI_SWEEPS`] sweeps.
pub fn svd(m: &Matrix) -> Result<SvdResult> {
    if !m.is_square() {
        return Err(Error::ShapeMismatch(format!(
            "svd expects a square matrix, got {}x{}",
            m.rows, m.cols
        )));
    }
    if m.data.iter().any(|x| !x.is_finite()) {
        return Err(Error::Invalid("svd input contains non-finite entries".into()));
    }
    let d = m.rows;
    // Column-major copies: column j lives at [j*d, (j+1)*d).
    let mut w = m.transpose().data;
    let mut v = Matrix::identity(d).data;
    let tol = f64::EPSILON * (d as f64).sqrt();

    let mut converged = false;
    let mut residual = 0.0;
    for _sweep in 0..MAX_JACOBI_SWEEPS {
        let mut rotated = false;
        residual = 0.0f64;
        for j in 0..d {
            for k in j + 1..d {
                let (alpha, beta, gamma) = {
                    let (wj, wk) = (&w[j * d..(j + 1) * d], &w[k * d..(k + 1) * d]);
                    (dot(wj, wj), dot(wk, wk), dot(wj, wk))
                };
                let scale = (alpha * beta).sqrt();
                if gamma == 0.0 || scale == 0.0 || scale < f64::MIN_POSITIVE {
                    continue;
                }
                let off = gamma.abs() / scale;
                if off <= tol {
                    continue;
                }
                residual = residual.max(off);
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_columns(&mut w, d, j, k, c, s);
                rotate_columns(&mut v, d, j, k, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::IllConditioned {
            sweeps: MAX_JACOBI_SWEEPS,
            residual,
        });
    }

    let sigma: Vec<f64> = (0..d).map(|j| norm(&w[j * d..(j + 1) * d])).collect();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]).then(a.cmp(&b)));

    let sigma_max = sigma[order[0]];
    let cutoff = sigma_max * f64::EPSILON * d as f64;
    let mut u_cols: Vec<Option<Vec<f64>>> = Vec::with_capacity(d);
    let mut singular_values = Vec::with_capacity(d);
    let mut v_sorted = Matrix::zeros(d, d);
    for (dst, &src) in order.iter().enumerate() {
        let s = sigma[src];
        singular_values.push(s);
        let col = &w[src * d..(src + 1) * d];
        u_cols.push((s > cutoff && s > 0.0).then(|| col.iter().map(|x| x / s).collect()));
        for i in 0..d {
            v_sorted[(i, dst)] = v[src * d + i];
        }
    }
    let u_cols = complete_basis(u_cols, d);
    let mut u = Matrix::zeros(d, d);
    for (j, col) in u_cols.iter().enumerate() {
        for i in 0..d {
            u[(i, j)] = col[i];
        }
    }
    Ok(SvdResult {
        u,
        singular_values,
        v: v_sorted,
    })
}

fn rotate_columns(cols: &mut [f64], d: usize, j: usize, k: usize, c: f64, s: f64) {
    let (head, tail) = cols.split_at_mut(k * d);
    let cj = &mut head[j * d..(j + 1) * d];
    let ck = &mut tail[..d];
    for (x, y) in cj.iter_mut().zip(ck.iter_mut()) {
        let (xj, xk) = (*x, *y);
        *x = c * xj - s * xk;
        *y = s * xj + c * xk;
    }
}

/// Fills missing columns (numerically zero singular values) with unit vectors
/// orthogonal to everything already present.
fn complete_basis(cols: Vec<Option<Vec<f64>>>, d: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = cols.iter().flatten().cloned().collect();
    let mut out = Vec::with_capacity(d);
    for col in cols {
        match col {
            Some(c) => out.push(c),
            None => {
                let mut best: Option<(f64, Vec<f64>)> = None;
                for e in 0..d {
                    let mut cand = vec![0.0; d];
                    cand[e] = 1.0;
                    // Two passes of Gram-Schmidt.
                    for _ in 0..2 {
                        for b in &basis {
                            let proj = dot(&cand, b);
                            cand.iter_mut().zip(b).for_each(|(c, bi)| *c -= proj * bi);
                        }
                    }
                    let n = norm(&cand);
                    if best.as_ref().is_none_or(|(bn, _)| n > *bn) {
                        best = Some((n, cand));
                    }
                }
                let (n, mut c) = best.expect("d >= 1");
                c.iter_mut().for_each(|x| *x /= n);
                basis.push(c.clone());
                out.push(c);
            }
        }
    }
    out
}

/// Solves `G · X = rhs` for symmetric positive definite `G` by Cholesky.
pub fn cholesky_solve(g: &Matrix, rhs: &Matrix) -> Result<Matrix> {
    if !g.is_square() || g.rows != rhs.rows {
        return Err(Error::ShapeMismatch(format!(
            "cannot solve {}x{} system with {}x{} right-hand side",
            g.rows, g.cols, rhs.rows, rhs.cols
        )));
    }
    let n = g.rows;
    let max_diag = (0..n).map(|i| g[(i, i)].abs()).fold(0.0, f64::max);
    let floor = max_diag * f64::EPSILON * n as f64;
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut diag = g[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if diag.is_nan() || diag <= floor {
            return Err(Error::Singular("normal matrix is not positive definite"));
        }
        let ljj = diag.sqrt();
        l[(j, j)] = ljj;
        for i in j + 1..n {
            let mut s = g[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    let mut x = rhs.clone();
    for c in 0..rhs.cols {
        // forward: L y = b
        for i in 0..n {
            let mut s = x[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
        // backward: Lᵀ x = y
        for i in (0..n).rev() {
            let mut s = x[(i, c)];
            for k in i + 1..n {
                s -= l[(k, i)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
    }
    Ok(x)
}
