//! Closed-form optimal rotation and scale.
//!
//! With `H = Σ b_iᵀ a_i = U S Vᵀ`, the orthogonal `R` minimising
//! `Σ ‖a_i − b_i R‖²` (equivalently maximising `Σ ⟨a_i, b_i R⟩`) is `U Vᵀ`.

use crate::error::{Error, Result};
use crate::linalg::{dot, svd, Matrix};

/// Whether the recovered map may include a reflection.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RotationChoice {
    /// `true`: any orthogonal matrix (O(d)). `false`: proper rotations only
    /// (SO(d)).
    pub allow_reflection: bool,
}

impl RotationChoice {
    pub const ORTHOGONAL: RotationChoice = RotationChoice {
        allow_reflection: true,
    };
    pub const PROPER: RotationChoice = RotationChoice {
        allow_reflection: false,
    };
}

impl Default for RotationChoice {
    fn default() -> Self {
        RotationChoice::ORTHOGONAL
    }
}

/// `R = U Vᵀ` from the SVD of `h`. For [`RotationChoice::PROPER`], a negative
/// determinant is repaired by flipping the sign paired with the smallest
/// singular value: `R = U I₋ Vᵀ`.
pub fn optimal_rotation(h: &Matrix, choice: RotationChoice) -> Result<Matrix> {
    let dec = svd(h)?;
    let mut u = dec.u;
    if !choice.allow_reflection {
        let det = u.determinant()? * dec.v.determinant()?;
        if det < 0.0 {
            let last = u.cols() - 1;
            for i in 0..u.rows() {
                u[(i, last)] = -u[(i, last)];
            }
        }
    }
    u.matmul(&dec.v.transpose())
}

/// Least-squares scale for an already rotated source.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaleEstimate {
    pub value: f64,
    /// Set when the optimum is `≤ 0`, i.e. the inputs are anti-correlated or
    /// orthogonal. The value is still returned unclamped.
    pub non_positive: bool,
}

/// `s = Σ w_i ⟨a_i, b̃_i⟩ / Σ w_i ‖b̃_i‖²`.
pub fn optimal_scale(
    target: &Matrix,
    rotated_source: &Matrix,
    weights: Option<&[f64]>,
) -> Result<ScaleEstimate> {
    if target.rows() != rotated_source.rows() || target.cols() != rotated_source.cols() {
        return Err(Error::ShapeMismatch(format!(
            "target is {}x{}, source is {}x{}",
            target.rows(),
            target.cols(),
            rotated_source.rows(),
            rotated_source.cols()
        )));
    }
    if let Some(w) = weights {
        if w.len() != target.rows() {
            return Err(Error::ShapeMismatch(format!(
                "{} weights for {} rows",
                w.len(),
                target.rows()
            )));
        }
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, (a, b)) in target.row_iter().zip(rotated_source.row_iter()).enumerate() {
        let w = weights.map_or(1.0, |w| w[i]);
        num += w * dot(a, b);
        den += w * dot(b, b);
    }
    if den == 0.0 {
        return Err(Error::ZeroNorm("rotated source has zero (weighted) norm"));
    }
    let value = num / den;
    Ok(ScaleEstimate {
        value,
        non_positive: value <= 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::cross_covariance;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    fn sse(a: &Matrix, b: &Matrix, r: &Matrix) -> f64 {
        let br = b.matmul(r).unwrap();
        a.as_slice()
            .iter()
            .zip(br.as_slice())
            .map(|(x, y)| (x - y).powi(2))
            .sum()
    }

    #[test]
    fn identity_h_gives_identity() {
        let r = optimal_rotation(&Matrix::identity(3), RotationChoice::ORTHOGONAL).unwrap();
        assert!(r.max_abs_diff(&Matrix::identity(3)) < 1e-12);
    }

    #[test]
    fn quarter_turn_matches_grid_search() {
        let a = m(&[&[1., 0.], &[0., 1.]]);
        // A rotated by −90°.
        let b = m(&[&[0., -1.], &[1., 0.]]);
        let h = cross_covariance(&a, &b, None).unwrap();
        let r = optimal_rotation(&h, RotationChoice::ORTHOGONAL).unwrap();
        assert!(b.matmul(&r).unwrap().max_abs_diff(&a) < 1e-12);

        // Brute force over proper 2D rotations on a 0.001 rad grid.
        let mut best = (f64::INFINITY, 0.0);
        let steps = (std::f64::consts::TAU / 0.001) as usize;
        for k in 0..steps {
            let t = k as f64 * 0.001;
            let q = m(&[&[t.cos(), t.sin()], &[-t.sin(), t.cos()]]);
            let e = sse(&a, &b, &q);
            if e < best.0 {
                best = (e, t);
            }
        }
        let t = best.1;
        let grid = m(&[&[t.cos(), t.sin()], &[-t.sin(), t.cos()]]);
        assert!(r.max_abs_diff(&grid) < 1e-3);
        // 90° rotation in row-vector convention.
        assert!(r.max_abs_diff(&m(&[&[0., 1.], &[-1., 0.]])) < 1e-12);
    }

    #[test]
    fn proper_choice_removes_reflection() {
        let flip = Matrix::diagonal(&[1., 1., -1.]);
        let r = optimal_rotation(&flip, RotationChoice::ORTHOGONAL).unwrap();
        assert!(r.determinant().unwrap() < 0.0);
        let r = optimal_rotation(&flip, RotationChoice::PROPER).unwrap();
        assert!((r.determinant().unwrap() - 1.0).abs() < 1e-12);
        assert!(r.orthogonality_defect() < 1e-12);
    }

    #[test]
    fn scale_examples() {
        let a = m(&[&[1., 2.], &[-3., 0.5]]);
        let s = optimal_scale(&a, &a.scaled(2.0), None).unwrap();
        assert!((s.value - 0.5).abs() < 1e-15);
        assert!(!s.non_positive);
        assert_eq!(optimal_scale(&a, &a, None).unwrap().value, 1.0);

        let s = optimal_scale(&m(&[&[1., 0.]]), &m(&[&[0., 1.]]), None).unwrap();
        assert_eq!(s.value, 0.0);
        assert!(s.non_positive);
    }

    #[test]
    fn scale_errors() {
        let a = m(&[&[1., 0.]]);
        assert!(matches!(
            optimal_scale(&a, &Matrix::zeros(1, 2), None),
            Err(Error::ZeroNorm(_))
        ));
        assert!(matches!(
            optimal_scale(&a, &m(&[&[1., 0., 0.]]), None),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn weighted_scale() {
        let a = m(&[&[2., 0.], &[0., 1.]]);
        let b = m(&[&[1., 0.], &[0., 1.]]);
        // (3·2 + 1·1) / (3·1 + 1·1)
        let s = optimal_scale(&a, &b, Some(&[3., 1.])).unwrap();
        assert!((s.value - 7.0 / 4.0).abs() < 1e-15);
    }
}
