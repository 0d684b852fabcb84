use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::linalg::{heads, poly_project};

fn ord(r: usize) -> DiffOrder {
    DiffOrder::new(r).unwrap()
}

#[test]
fn small_tables() {
    let m = build_matrices(4, ord(1)).unwrap();
    let t = DMatrix::from_row_slice(3, 3, &[2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0]);
    assert_eq!(m.t, t);
    let m = build_matrices(5, ord(2)).unwrap();
    let s = DMatrix::from_row_slice(
        5,
        3,
        &[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 2.0, 1.0, 0.0, 3.0, 2.0, 1.0],
    );
    assert_eq!(m.s, s);
    assert_eq!(m.x.column(1).iter().copied().collect::<Vec<_>>(), vec![0.0, 1.0, 2.0, 3.0, 4.0]);
}

#[test]
fn r1_projection_onto_constants() {
    let n = 9;
    let m = build_matrices(n, ord(1)).unwrap();
    let ones = DMatrix::from_element(n, n, 1.0 / n as f64);
    let direct = m.s.transpose() * &m.s - m.s.transpose() * ones * &m.s;
    assert!((direct - &m.a).amax() < 1e-12);
}

#[test]
fn reconstruction_kernel() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for r in 1..=3 {
        let n = 12;
        let theta: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let m = build_matrices(n, ord(r)).unwrap();
        let h = DVector::from_vec(heads(&theta, ord(r)).unwrap());
        let d = DVector::from_vec(crate::linalg::diff(&theta, ord(r)).unwrap());
        let back = &m.x * h + &m.s * d;
        for i in 0..n {
            assert!((back[i] - theta[i]).abs() < 1e-10);
        }
    }
}

#[test]
fn smallest_case_inverts_directly() {
    for r in 1..=3 {
        let m = build_matrices(r + 2, ord(r)).unwrap();
        let a = &m.a;
        let det = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)];
        let inv = DMatrix::from_row_slice(2, 2, &[a[(1, 1)], -a[(0, 1)], -a[(1, 0)], a[(0, 0)]]) / det;
        assert!((inv - &m.t).amax() < 1e-9);
        assert!(check_inverse(&m, 1e-8));
    }
}

#[test]
fn perturbation_is_detected() {
    let mut m = build_matrices(10, ord(2)).unwrap();
    assert!(check_inverse(&m, 1e-8));
    m.a[(3, 4)] += 1e-3;
    assert!(!check_inverse(&m, 1e-8));
    assert!(!check_persymmetric(&m, 1e-10));
}

#[test]
fn rowsum_example() {
    let m = build_matrices(6, ord(1)).unwrap();
    assert!((m.a.sum() - 17.5).abs() < 1e-10);
    assert!(check_rowsum(&m).unwrap());
}

#[test]
fn first_column_examples() {
    let n = 7;
    let m = build_matrices(n, ord(1)).unwrap();
    for i in 1..n {
        assert!((m.a[(i - 1, 0)] - (n - i) as f64 / n as f64).abs() < 1e-12);
    }
    let m = build_matrices(8, ord(2)).unwrap();
    // C(n+r-1, n-1) = C(9, 7) = 36; x_i = i * C(8-i, 2) / 36
    let expected = [21.0, 2.0 * 15.0, 3.0 * 10.0, 4.0 * 6.0, 5.0 * 3.0, 6.0].map(|v| v / 36.0);
    for (i, e) in expected.iter().enumerate() {
        assert!((m.a[(i, 0)] - e).abs() < 1e-10);
    }
    assert!(check_first_column(&m).unwrap());
    assert!(check_positive(&m));
}

#[test]
fn suite_passes() {
    let rows = identity_suite(40, 1e-8).unwrap();
    assert_eq!(rows.len(), 15);
    for row in rows {
        assert!(row.passed(), "{row:?}");
    }
}

#[test]
fn overflow_is_an_error() {
    assert!(matches!(build_matrices(5000, ord(3)), Err(Error::BinomialOverflow { .. })));
    assert!(build_matrices(3, ord(3)).is_err());
}

#[test]
fn min_diff_bound_is_sharp() {
    for r in 1..=3 {
        let n = 60;
        let m = build_matrices(n, ord(r)).unwrap();
        // the signal with all r-th differences equal to one and no polynomial part
        let raw: Vec<f64> = (&m.s * DVector::from_element(n - r, 1.0)).iter().copied().collect();
        let p = poly_project(&raw, r);
        let theta: Vec<f64> = raw.iter().zip(&p).map(|(a, b)| a - b).collect();
        let ratio = rowsum_closed_form(n, r).unwrap().sqrt() / norm2(&theta);
        assert!((ratio - 1.0).abs() < 1e-9);
        assert!(min_diff_bound(&theta, ord(r)).unwrap());
        let d = crate::linalg::diff(&theta, ord(r)).unwrap();
        assert!(d.iter().all(|v| (v - 1.0).abs() < 1e-6));
    }
    assert!(min_diff_bound(&[0.0; 10], ord(2)).unwrap());
}

#[test]
fn variance_variation_examples() {
    let poly: Vec<f64> = (0..20).map(|i| 1.0 + 2.0 * i as f64).collect();
    assert!(variance_variation(&poly, ord(2)).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let r = rng.random_range(1..=3);
        let n = rng.random_range(r + 2..300);
        let theta: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        assert!(min_diff_bound(&theta, ord(r)).unwrap());
        assert!(variance_variation(&theta, ord(r)).unwrap());
    }
}

proptest! {
    #[test]
    fn inequalities_hold(theta in prop::collection::vec(-5.0f64..5.0, 5..80), r in 1usize..4) {
        prop_assert!(min_diff_bound(&theta, ord(r)).unwrap());
        prop_assert!(variance_variation(&theta, ord(r)).unwrap());
    }
}
