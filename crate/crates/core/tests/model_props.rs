mod common;

use common::*;
use postsel_core::model::{
    build_monitored_chain, build_skin_chain, build_two_level_atom, effective_hamiltonian, Boundary,
    HamiltonianScaling,
};
use postsel_core::trajectory::{fock_embed, quadratic_operator};
use postsel_core::{ComplexMatrix, OpenSystemSpec};
use proptest::prelude::*;

fn check_builder(spec: &OpenSystemSpec) -> Result<(), TestCaseError> {
    prop_assert!(spec.hamiltonian().hermiticity_error() < 1e-12);
    for ch in spec.channels() {
        prop_assert!(ch.rate() >= 0.0);
        prop_assert!((0.0..=1.0).contains(&ch.efficiency()));
    }
    Ok(())
}

fn dissipator_sum(spec: &OpenSystemSpec) -> ComplexMatrix {
    let d = spec.dim();
    let mut acc = ComplexMatrix::zeros(d, d);
    for ch in spec.channels() {
        acc += &ch.number_operator().scale_real(ch.rate());
    }
    acc
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn builders_respect_invariants(
        j in 0.1..2.0f64,
        gamma in 0.0..2.0f64,
        eta in 0.0..=1.0f64,
        len in 3usize..12,
    ) {
        check_builder(&build_two_level_atom(j, gamma, eta).unwrap())?;
        check_builder(&build_monitored_chain(len, j, gamma, eta, Boundary::Open).unwrap())?;
        check_builder(&build_monitored_chain(len, j, gamma, eta, Boundary::Periodic).unwrap())?;
        check_builder(&build_skin_chain(len, j, gamma.min(j), eta).unwrap())?;
    }

    #[test]
    fn skin_dissipator_identity(len in 2usize..40, gamma in 0.01..1.0f64) {
        let spec = build_skin_chain(len, 1.0, gamma, 0.5).unwrap();
        let sum = dissipator_sum(&spec);
        // Real-symmetric part γI, imaginary antisymmetric part the current coupling.
        let re = (&sum + &sum.conj()).scale_real(0.5);
        let im = (&sum - &sum.conj()).scale_real(0.5);
        prop_assert!(sum.hermiticity_error() < 1e-14);
        prop_assert!(re.max_abs_diff(&ComplexMatrix::identity(len).scale_real(gamma)) < 1e-12);
        let mut expect = ComplexMatrix::zeros(len, len);
        for l in 0..len - 1 {
            expect[(l, l + 1)] = c(0.0, gamma / 2.0);
            expect[(l + 1, l)] = c(0.0, -gamma / 2.0);
        }
        prop_assert!(im.max_abs_diff(&expect) < 1e-12);
    }

    #[test]
    fn effective_hamiltonian_difference(len in 2usize..10, gamma in 0.01..1.0f64, eta in 0.0..=1.0f64) {
        for spec in [
            build_skin_chain(len, 1.0, gamma, eta).unwrap(),
            build_two_level_atom(1.0, gamma, eta).unwrap(),
        ] {
            let full = effective_hamiltonian(&spec, HamiltonianScaling::FullGamma).matrix;
            let part = effective_hamiltonian(&spec, HamiltonianScaling::EtaGamma).matrix;
            let diff = &full - &part;
            prop_assert!(diff.hermitian_part().max_abs() < 1e-14);
            let mut expect = ComplexMatrix::zeros(spec.dim(), spec.dim());
            for ch in spec.channels() {
                expect += &ch.number_operator().scale(c(0.0, -0.5 * (1.0 - ch.efficiency()) * ch.rate()));
            }
            prop_assert!(diff.max_abs_diff(&expect) < 1e-14);
        }
    }
}

#[test]
fn skin_chain_fock_identity() {
    // Σ γ_l L†L = γ(N̂ + ½ Σ ĵ_l) on the full Fock space.
    let (len, gamma) = (5, 0.4);
    let spec = build_skin_chain(len, 1.0, gamma, 0.6).unwrap();
    let fock = fock_embed(&spec).unwrap();
    let lhs = dissipator_sum(fock.spec());
    let mut rhs = fock.total_number();
    for l in 0..len - 1 {
        rhs += &fock.current_operator(l).scale_real(0.5);
    }
    let rhs = rhs.scale_real(gamma);
    assert!(lhs.max_abs_diff(&rhs) < 1e-12, "{}", lhs.max_abs_diff(&rhs));
    assert!(lhs.max_abs_diff(&quadratic_operator(len, &dissipator_sum(&spec))) < 1e-12);
}

#[test]
fn hatano_nelson_hoppings_at_default_parameters() {
    let spec = build_skin_chain(6, 1.0, 0.4, 0.6).unwrap();
    let hn = effective_hamiltonian(&spec, HamiltonianScaling::EtaGamma).hatano_nelson_form();
    for l in 0..5 {
        assert!((hn[(l, l + 1)] - c(1.06, 0.0)).norm() < 1e-12);
        assert!((hn[(l + 1, l)] - c(0.94, 0.0)).norm() < 1e-12);
    }
}
