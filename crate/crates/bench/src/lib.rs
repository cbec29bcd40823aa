//! Benchmark fixtures shared by the criterion targets.

use postsel_core::gaussian::{GaussianState, NeelPhase};
use postsel_core::model::build_skin_chain;
use postsel_core::{ComplexMatrix, OpenSystemSpec, C64};

/// Deterministic dense matrix with entries of order `scale / n`.
pub fn test_matrix(n: usize, scale: f64) -> ComplexMatrix {
    ComplexMatrix::from_fn(n, n, |i, j| {
        let x = ((i * 31 + j * 17) % 23) as f64 / 23.0 - 0.5;
        let y = ((i * 7 + j * 29) % 19) as f64 / 19.0 - 0.5;
        C64::new(x, y).scale(scale / n as f64)
    })
}

/// Skin chain at the default parameters with its Néel state.
pub fn skin_fixture(sites: usize) -> (OpenSystemSpec, GaussianState) {
    let spec = build_skin_chain(sites, 1.0, 0.4, 0.6).expect("valid chain");
    let state = GaussianState::neel(sites, NeelPhase::OccupiedFirst).expect("even chain");
    (spec, state)
}
