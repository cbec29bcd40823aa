use postsel_core::master_eq::{evolve_nlme_strided, DensityMatrix};
use postsel_core::model::build_two_level_atom;
use postsel_core::trajectory::{
    run_ensemble, EnsembleEstimate, Method, Observable, PureState, TrajectoryConfig,
};
use postsel_core::ComplexMatrix;

fn excited() -> Observable {
    Observable::new("P_e", ComplexMatrix::from_real_diag(&[1.0, 0.0]))
}

fn config(method: Method, n_traj: usize, seed: u64) -> TrajectoryConfig {
    TrajectoryConfig {
        dt: 0.005,
        horizon: 5.0,
        n_traj,
        method,
        master_seed: seed,
        record_stride: 20,
        ..TrajectoryConfig::default()
    }
}

fn reference(eta: f64) -> Vec<f64> {
    let spec = build_two_level_atom(1.0, 0.5, eta).unwrap();
    let run = evolve_nlme_strided(&spec, &DensityMatrix::basis_state(2, 0).unwrap(), 5.0, 0.005, 20)
        .unwrap();
    run.states.iter().map(|s| s.populations()[0]).collect()
}

fn ensemble(eta: f64, cfg: &TrajectoryConfig) -> EnsembleEstimate {
    let spec = build_two_level_atom(1.0, 0.5, eta).unwrap();
    run_ensemble(&spec, &PureState::basis(2, 0).unwrap(), cfg, &[excited()]).unwrap()
}

/// Largest deviation from the reference in units of the standard error,
/// with an absolute floor for the deterministic early records.
fn max_z(est: &EnsembleEstimate, reference: &[f64]) -> f64 {
    let (mean, se) = est.series("P_e").unwrap();
    assert_eq!(mean.len(), reference.len());
    mean.iter()
        .zip(se)
        .zip(reference)
        .map(|((m, s), r)| (m - r).abs() / s.max(1e-3))
        .fold(0.0, f64::max)
}

#[test]
fn qt2_converges_to_nlme() {
    let reference = reference(0.4);
    let small = ensemble(0.4, &config(Method::Qt2, 500, 1));
    let large = ensemble(0.4, &config(Method::Qt2, 2000, 2));
    assert!(max_z(&small, &reference) < 4.5);
    assert!(max_z(&large, &reference) < 4.5);
    // Quadrupling the ensemble halves the error bars.
    let avg = |e: &EnsembleEstimate| {
        let (_, se) = e.series("P_e").unwrap();
        se.iter().sum::<f64>() / se.len() as f64
    };
    let ratio = avg(&small) / avg(&large);
    assert!((ratio - 2.0).abs() < 0.3, "stderr ratio {ratio}");
}

#[test]
fn qt1_agrees_with_nlme_and_qt2() {
    let reference = reference(0.4);
    let qt1 = ensemble(0.4, &config(Method::Qt1, 3000, 3));
    let qt2 = ensemble(0.4, &config(Method::Qt2, 1000, 4));
    assert!(*qt1.survivors.last().unwrap() >= 300);
    assert!(max_z(&qt1, &reference) < 4.5);
    let (m1, s1) = qt1.series("P_e").unwrap();
    let (m2, s2) = qt2.series("P_e").unwrap();
    for k in 0..m1.len() {
        let joint = (s1[k] * s1[k] + s2[k] * s2[k]).sqrt().max(1e-3);
        assert!((m1[k] - m2[k]).abs() < 4.5 * joint, "record {k}");
    }
}

#[test]
fn zero_efficiency_reproduces_lme() {
    let reference = reference(0.0);
    for method in [Method::Qt1, Method::Qt2] {
        let est = ensemble(0.0, &config(method, 1000, 5));
        assert_eq!(*est.survivors.last().unwrap(), 1000);
        assert!(max_z(&est, &reference) < 4.5, "{method:?}");
    }
}

#[test]
fn ensembles_are_bit_reproducible() {
    for method in [Method::Qt1, Method::Qt2] {
        let cfg = config(method, 64, 42);
        let a = ensemble(0.6, &cfg);
        let b = ensemble(0.6, &cfg);
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.seeds, b.seeds);
        let other = ensemble(0.6, &config(method, 64, 43));
        assert_ne!(a.to_csv(), other.to_csv());
    }
}

#[test]
fn halving_dt_changes_means_at_first_order() {
    let coarse = TrajectoryConfig {
        dt: 0.02,
        record_stride: 5,
        ..config(Method::Qt2, 2000, 6)
    };
    let fine = TrajectoryConfig {
        dt: 0.01,
        record_stride: 10,
        ..config(Method::Qt2, 2000, 7)
    };
    let a = ensemble(0.4, &coarse);
    let b = ensemble(0.4, &fine);
    let (ma, sa) = a.series("P_e").unwrap();
    let (mb, sb) = b.series("P_e").unwrap();
    assert_eq!(a.times.len(), b.times.len());
    for k in 0..ma.len() {
        let joint = (sa[k] * sa[k] + sb[k] * sb[k]).sqrt();
        // Statistical noise plus an O(dt) systematic shift.
        assert!((ma[k] - mb[k]).abs() < 4.5 * joint + 0.02, "record {k}");
    }
}
