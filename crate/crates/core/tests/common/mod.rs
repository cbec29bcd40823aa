#![allow(dead_code)]

use postsel_core::{ComplexMatrix, C64};
use proptest::prelude::*;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn complex_matrix(rows: usize, cols: usize, scale: f64) -> impl Strategy<Value = ComplexMatrix> {
    prop::collection::vec((-scale..scale, -scale..scale), rows * cols).prop_map(move |v| {
        ComplexMatrix::from_row_major(rows, cols, v.into_iter().map(|(a, b)| c(a, b)).collect())
            .unwrap()
    })
}

pub fn hermitian(n: usize, scale: f64) -> impl Strategy<Value = ComplexMatrix> {
    complex_matrix(n, n, scale).prop_map(|m| m.hermitian_part())
}

/// Random unitary from the QR of a random square matrix.
pub fn unitary(n: usize) -> impl Strategy<Value = ComplexMatrix> {
    complex_matrix(n, n, 1.0).prop_filter_map("rank deficient", move |m| {
        let qr = postsel_core::linalg::qr_decompose(&m).ok()?;
        (qr.rank == n).then_some(qr.q)
    })
}

/// Random density matrix `A A† / Tr`.
pub fn density(n: usize) -> impl Strategy<Value = ComplexMatrix> {
    complex_matrix(n, n, 1.0).prop_map(|a| {
        let m = a.matmul(&a.adjoint());
        let t = m.trace().re;
        m.scale_real(1.0 / t).hermitian_part()
    })
}

pub fn normalized_vector(n: usize) -> impl Strategy<Value = Vec<C64>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), n).prop_filter_map("zero", |v| {
        let v: Vec<C64> = v.into_iter().map(|(a, b)| c(a, b)).collect();
        let norm = postsel_core::linalg::vec_norm(&v);
        (norm > 1e-3).then(|| v.into_iter().map(|z| z / norm).collect())
    })
}
