mod common;

use common::*;
use postsel_core::linalg::{
    hermitian_eigenvalues, kron, lu_solve, matrix_exponential, null_space, qr_decompose,
};
use postsel_core::ComplexMatrix;
use proptest::prelude::*;

fn scaled_to_norm(m: ComplexMatrix, target: f64) -> ComplexMatrix {
    let n = m.norm_one();
    if n == 0.0 {
        m
    } else {
        m.scale_real(target / n)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exp_times_inverse_exp_is_identity(m in complex_matrix(5, 5, 1.0), s in 0.0..5.0f64) {
        let a = scaled_to_norm(m, s);
        let p = matrix_exponential(&a).unwrap().matmul(&matrix_exponential(&a.scale_real(-1.0)).unwrap());
        prop_assert!(p.max_abs_diff(&ComplexMatrix::identity(5)) < 1e-10);
    }

    #[test]
    fn exp_of_anti_hermitian_is_unitary(h in hermitian(6, 2.0)) {
        let u = matrix_exponential(&h.scale(common::c(0.0, 1.0))).unwrap();
        prop_assert!(u.matmul(&u.adjoint()).max_abs_diff(&ComplexMatrix::identity(6)) < 1e-12);
    }

    #[test]
    fn exp_of_diagonal_is_elementwise(d in prop::collection::vec((-3.0..3.0f64, -3.0..3.0f64), 4)) {
        let diag: Vec<_> = d.iter().map(|&(a, b)| c(a, b)).collect();
        let e = matrix_exponential(&ComplexMatrix::from_diag(&diag)).unwrap();
        let expect = ComplexMatrix::from_diag(&diag.iter().map(|z| z.exp()).collect::<Vec<_>>());
        prop_assert!(e.max_abs_diff(&expect) < 1e-12 * expect.max_abs().max(1.0));
    }

    #[test]
    fn kron_mixed_product(
        a in complex_matrix(2, 3, 1.0),
        b in complex_matrix(3, 2, 1.0),
        cc in complex_matrix(3, 2, 1.0),
        d in complex_matrix(2, 3, 1.0),
    ) {
        let lhs = kron(&a, &b).matmul(&kron(&cc, &d));
        let rhs = kron(&a.matmul(&cc), &b.matmul(&d));
        prop_assert!(lhs.max_abs_diff(&rhs) < 1e-12);
    }

    #[test]
    fn qr_reconstructs_and_is_deterministic(v in complex_matrix(6, 3, 1.0)) {
        let a = qr_decompose(&v).unwrap();
        let b = qr_decompose(&v).unwrap();
        prop_assert_eq!(a.q.as_slice(), b.q.as_slice());
        prop_assert_eq!(a.r.as_slice(), b.r.as_slice());
        prop_assert!(a.q.matmul(&a.r).max_abs_diff(&v) < 1e-12);
        prop_assert!(a.q.adjoint().matmul(&a.q).max_abs_diff(&ComplexMatrix::identity(3)) < 1e-12);
    }

    #[test]
    fn null_space_of_random_wide_matrix(a in complex_matrix(4, 6, 1.0)) {
        let k = null_space(&a);
        prop_assert_eq!(k.shape(), (6, 2));
        prop_assert!(a.matmul(&k).max_abs() < 1e-10);
        prop_assert!(k.adjoint().matmul(&k).max_abs_diff(&ComplexMatrix::identity(2)) < 1e-12);
    }

    #[test]
    fn null_space_and_qr_rank_agree(b in complex_matrix(6, 2, 1.0), m in complex_matrix(2, 4, 1.0)) {
        // 6x4 of rank 2.
        let v = b.matmul(&m);
        let rank = qr_decompose(&v).unwrap().rank;
        let k = null_space(&v);
        prop_assert_eq!(rank, 2);
        prop_assert_eq!(rank + k.cols(), v.cols());
    }

    #[test]
    fn hermitian_trace_equals_eigenvalue_sum(h in hermitian(7, 3.0)) {
        let ev = hermitian_eigenvalues(&h).unwrap();
        prop_assert!((ev.iter().sum::<f64>() - h.trace().re).abs() < 1e-11);
        prop_assert!(ev.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn lu_solve_solves(a in complex_matrix(5, 5, 1.0), b in complex_matrix(5, 2, 1.0)) {
        let a = &a + &ComplexMatrix::identity(5).scale_real(6.0);
        let x = lu_solve(&a, &b).unwrap();
        prop_assert!(a.matmul(&x).max_abs_diff(&b) < 1e-12);
    }
}

#[test]
fn rank_tolerance_is_relative() {
    let v = ComplexMatrix::from_real(&[&[1e-20, 0.0], &[0.0, 1e-20], &[0.0, 0.0]]).unwrap();
    assert_eq!(qr_decompose(&v).unwrap().rank, 2);
}
