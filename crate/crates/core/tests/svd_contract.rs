use orient_core::linalg::{frobenius_sq, svd, Matrix, SvdResult};
use orient_core::{optimal_rotation, synth, RotationChoice, SeededRng};
use proptest::prelude::*;

fn check_contract(m: &Matrix, r: &SvdResult) {
    assert!(r.u.orthogonality_defect() <= 1e-8, "UᵀU defect");
    assert!(r.v.orthogonality_defect() <= 1e-8, "VᵀV defect");
    assert!(r.singular_values.windows(2).all(|w| w[0] >= w[1]));
    assert!(r.singular_values.iter().all(|&s| s >= 0.0));
    let err = frobenius_sq(&{
        let rec = r.reconstruct();
        let diff: Vec<f64> = rec.as_slice().iter().zip(m.as_slice()).map(|(a, b)| a - b).collect();
        Matrix::new(m.rows(), m.cols(), diff).unwrap()
    })
    .sqrt();
    assert!(err <= 1e-8 * frobenius_sq(m).sqrt().max(1.0), "reconstruction {err}");
}

#[test]
fn thousand_random_5x5() {
    let mut rng = SeededRng::new(2024);
    for _ in 0..1000 {
        let m = synth::gaussian_matrix(&mut rng, 5, 5);
        let r = svd(&m).unwrap();
        check_contract(&m, &r);
    }
}

#[test]
fn singular_values_match_nalgebra() {
    let mut rng = SeededRng::new(77);
    for d in [2, 3, 7, 20, 60] {
        let m = synth::gaussian_matrix(&mut rng, d, d);
        let ours = svd(&m).unwrap().singular_values;
        let na = nalgebra::DMatrix::from_row_slice(d, d, m.as_slice());
        let mut theirs: Vec<f64> = na.singular_values().iter().copied().collect();
        theirs.sort_by(|a, b| b.total_cmp(a));
        for (a, b) in ours.iter().zip(&theirs) {
            assert!((a - b).abs() <= 1e-10 * theirs[0], "d={d}: {a} vs {b}");
        }
    }
}

#[test]
fn scaling_leaves_uvt_unchanged() {
    let mut rng = SeededRng::new(5);
    let h = synth::gaussian_matrix(&mut rng, 6, 6);
    let base = svd(&h).unwrap();
    for s in [0.01, 0.5, 3.0, 1e4] {
        let scaled = svd(&h.scaled(s)).unwrap();
        for (a, b) in scaled.singular_values.iter().zip(&base.singular_values) {
            assert!((a - s * b).abs() <= 1e-10 * s * base.singular_values[0]);
        }
        let uv = |r: &SvdResult| r.u.matmul(&r.v.transpose()).unwrap();
        assert!(uv(&scaled).max_abs_diff(&uv(&base)) < 1e-10);
        let r1 = optimal_rotation(&h, RotationChoice::ORTHOGONAL).unwrap();
        let r2 = optimal_rotation(&h.scaled(s), RotationChoice::ORTHOGONAL).unwrap();
        assert!(r1.max_abs_diff(&r2) < 1e-10);
    }
}

#[test]
fn ill_conditioned_and_repeated_values() {
    // Repeated singular values and a huge dynamic range.
    let mut rng = SeededRng::new(9);
    let q1 = synth::random_orthogonal(&mut rng, 5);
    let q2 = synth::random_orthogonal(&mut rng, 5);
    for diag in [
        [1.0, 1.0, 1.0, 0.5, 0.5],
        [1e8, 1.0, 1e-4, 1e-8, 0.0],
        [2.0, 2.0, 0.0, 0.0, 0.0],
    ] {
        let m = q1
            .matmul(&Matrix::diagonal(&diag))
            .unwrap()
            .matmul(&q2.transpose())
            .unwrap();
        let r = svd(&m).unwrap();
        check_contract(&m, &r);
    }
}

#[test]
fn rejects_non_square() {
    assert!(svd(&Matrix::zeros(2, 3)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn contract_holds_for_arbitrary_entries(
        d in 1usize..8,
        entries in prop::collection::vec(-1e3f64..1e3, 64),
    ) {
        let m = Matrix::new(d, d, entries[..d * d].to_vec()).unwrap();
        let r = svd(&m).unwrap();
        check_contract(&m, &r);
    }
}
