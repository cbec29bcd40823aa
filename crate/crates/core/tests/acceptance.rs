//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process exits non-zero when any criterion fails.
//!
//! `POSTSEL_ACCEPTANCE=1,3,6` restricts the run to the listed criteria.

use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;

use postsel_core::analysis::{
    beta_gamma_scan, chain_midpoint, skin_steady_state, taee_interval, BetaScan,
    EntropyRecord, OccupationProfile,
};
use postsel_core::gaussian::{
    correlation_matrix, entanglement_entropy, run_gaussian_ensemble, GaussianEngine,
    GaussianRunConfig, GaussianState, NeelPhase,
};
use postsel_core::master_eq::{
    evolve_nlme, evolve_nlme_strided, reduced_lme_equivalence, single_site_occupation,
    DensityMatrix, EvolutionResult,
};
use postsel_core::model::{
    build_monitored_chain, build_skin_chain, build_two_level_atom, Boundary, Representation,
};
use postsel_core::rng::trajectory_rng;
use postsel_core::trajectory::{
    fock_embed, run_ensemble, Method, Observable, PureState, Splitting, TrajectoryConfig,
    TrajectoryEngine,
};
use postsel_core::{ComplexMatrix, JumpChannel, OpenSystemSpec, C64};

const SEED: u64 = 1;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn fail(detail: impl std::fmt::Display) -> Outcome {
    Outcome::new(false, format!("error: {detail}"))
}

macro_rules! tryo {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(e) => return fail(e),
        }
    };
}

fn skin_config(horizon: f64, n_traj: usize, sites: usize) -> GaussianRunConfig {
    GaussianRunConfig {
        dt: 0.005,
        horizon,
        n_traj,
        master_seed: SEED,
        record_stride: 200,
        window_fraction: 0.1,
        intervals: vec![(chain_midpoint(sites), sites)],
        keep_final_states: false,
    }
}

/// Three-method agreement on the two-level atom.
fn criterion_1() -> Outcome {
    let spec = tryo!(build_two_level_atom(1.0, 0.5, 0.2));
    let excited = Observable::new("P_e", ComplexMatrix::from_real_diag(&[1.0, 0.0]));
    let psi0 = tryo!(PureState::basis(2, 0));
    let reference = tryo!(evolve_nlme_strided(
        &spec,
        &tryo!(DensityMatrix::basis_state(2, 0)),
        10.0,
        0.005,
        20
    ));
    let p_ref: Vec<f64> = reference.states.iter().map(|s| s.populations()[0]).collect();
    let base = TrajectoryConfig {
        dt: 0.005,
        horizon: 10.0,
        record_stride: 20,
        master_seed: SEED,
        ..TrajectoryConfig::default()
    };
    let mut details = Vec::new();
    let mut pass = true;
    for (method, n_traj) in [(Method::Qt2, 10_000), (Method::Qt1, 3_000)] {
        let cfg = TrajectoryConfig {
            method,
            n_traj,
            ..base.clone()
        };
        let est = tryo!(run_ensemble(&spec, &psi0, &cfg, std::slice::from_ref(&excited)));
        let (mean, se) = est.series("P_e").unwrap();
        let mut worst: f64 = 0.0;
        let mut ok = mean.len() == p_ref.len();
        for k in 0..mean.len().min(p_ref.len()) {
            let dev = (mean[k] - p_ref[k]).abs();
            ok &= dev < (3.0 * se[k]).max(0.02);
            worst = worst.max(dev);
        }
        let survivors = *est.survivors.last().unwrap();
        if method == Method::Qt1 {
            ok &= survivors >= 1_000;
        }
        pass &= ok;
        details.push(format!(
            "{method:?}: max|ΔP_e|={worst:.4} survivors={survivors}/{n_traj}"
        ));
    }
    Outcome::new(pass, details.join(", "))
}

fn time_average(run: &EvolutionResult, name: &str) -> f64 {
    let v = run.observable(name).unwrap();
    // Trapezoid rule over the uniform grid.
    let inner: f64 = v[1..v.len() - 1].iter().sum();
    let dt = run.times[1] - run.times[0];
    (inner + 0.5 * (v[0] + v[v.len() - 1])) * dt / (run.times[v.len() - 1] - run.times[0])
}

/// Purity grows with η; η = 1 stays pure.
fn criterion_2() -> Outcome {
    let rho0 = tryo!(DensityMatrix::basis_state(2, 0));
    let mut averages = Vec::new();
    let mut pure_dev: f64 = 0.0;
    for eta in [0.0, 0.4, 0.8, 1.0] {
        let spec = tryo!(build_two_level_atom(1.0, 0.5, eta));
        let run = tryo!(evolve_nlme(&spec, &rho0, 10.0, 0.005));
        averages.push(time_average(&run, "purity"));
        if eta == 1.0 {
            pure_dev = run
                .observable("purity")
                .unwrap()
                .iter()
                .map(|p| (p - 1.0).abs())
                .fold(0.0, f64::max);
        }
    }
    let increasing = averages.windows(2).all(|w| w[1] > w[0]);
    let pass = increasing && pure_dev < 1e-8;
    Outcome::new(
        pass,
        format!(
            "mean purity η=0,0.4,0.8,1: {:.4}, {:.4}, {:.4}, {:.4}; η=1 max|purity−1|={pure_dev:.1e}",
            averages[0], averages[1], averages[2], averages[3]
        ),
    )
}

fn single_site_spec(gamma: f64, eta: f64) -> postsel_core::Result<OpenSystemSpec> {
    let n = ComplexMatrix::from_real_diag(&[0.0, 1.0]);
    OpenSystemSpec::new(
        "single-site",
        Representation::FewLevel { dim: 2 },
        ComplexMatrix::zeros(2, 2),
        vec![JumpChannel::dense(n, gamma, eta)?],
    )
}

fn single_site_state(n0: f64) -> postsel_core::Result<DensityMatrix> {
    DensityMatrix::pure(&[C64::new((1.0 - n0).sqrt(), 0.0), C64::new(n0.sqrt(), 0.0)])
}

/// Trace and Hermiticity along every run of a test matrix.
fn criterion_3() -> Outcome {
    let mut runs: Vec<(String, OpenSystemSpec, DensityMatrix)> = Vec::new();
    for eta in [0.0, 0.2, 0.4, 0.8, 1.0] {
        runs.push((
            format!("atom η={eta}"),
            tryo!(build_two_level_atom(1.0, 0.5, eta)),
            tryo!(DensityMatrix::basis_state(2, 0)),
        ));
    }
    for (n0, eta, gamma) in [(0.3, 0.2, 0.4), (0.9, 1.0, 1.0)] {
        runs.push((
            format!("single site n0={n0}"),
            tryo!(single_site_spec(gamma, eta)),
            tryo!(single_site_state(n0)),
        ));
    }
    let monitored = tryo!(fock_embed(&tryo!(build_monitored_chain(
        4,
        1.0,
        0.3,
        0.5,
        Boundary::Open
    ))));
    let k = monitored.basis_index(&[true, false, true, false]);
    runs.push((
        "monitored chain L=4".into(),
        monitored.spec().clone(),
        tryo!(DensityMatrix::basis_state(monitored.dim(), k)),
    ));
    let skin = tryo!(fock_embed(&tryo!(build_skin_chain(4, 1.0, 0.4, 0.6))));
    let psi = tryo!(skin.slater_state(&tryo!(GaussianState::neel(4, NeelPhase::OccupiedFirst))));
    runs.push((
        "skin chain L=4".into(),
        skin.spec().clone(),
        tryo!(psi.density_matrix()),
    ));

    let mut worst_trace: f64 = 0.0;
    let mut worst_herm: f64 = 0.0;
    for (_, spec, rho0) in &runs {
        let run = tryo!(evolve_nlme(spec, rho0, 10.0, 0.005));
        for s in &run.states {
            worst_trace = worst_trace.max((s.matrix().trace().re - 1.0).abs());
            worst_herm = worst_herm.max(s.matrix().hermiticity_error());
        }
    }
    Outcome::new(
        worst_trace < 1e-8 && worst_herm < 1e-9,
        format!(
            "{} runs: max|Trρ−1|={worst_trace:.1e}, max‖ρ−ρ†‖={worst_herm:.1e}",
            runs.len()
        ),
    )
}

/// RK4 against the closed-form single-site occupation.
fn criterion_4() -> Outcome {
    let number = ComplexMatrix::from_real_diag(&[0.0, 1.0]);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for n0 in [0.3, 0.5, 0.9] {
        for eta in [0.2, 1.0] {
            for gamma in [0.4, 1.0] {
                let spec = tryo!(single_site_spec(gamma, eta));
                let run = tryo!(evolve_nlme(&spec, &tryo!(single_site_state(n0)), 10.0, 0.005));
                for (t, s) in run.times.iter().zip(&run.states) {
                    let exact = tryo!(single_site_occupation(*t, n0, gamma, eta));
                    worst = worst.max((s.expectation(&number) - exact).abs());
                }
                cases += 1;
            }
        }
    }
    Outcome::new(worst < 1e-6, format!("{cases} cases: max|n−n_exact|={worst:.1e}"))
}

/// Trivial-class reduction of the monitored chain.
fn criterion_5() -> Outcome {
    let chain = tryo!(build_monitored_chain(4, 1.0, 0.3, 0.5, Boundary::Open));
    let fock = tryo!(fock_embed(&chain));
    let k = fock.basis_index(&[true, false, true, false]);
    let rho0 = tryo!(DensityMatrix::basis_state(fock.dim(), k));
    let dev = tryo!(reduced_lme_equivalence(fock.spec(), &rho0, 10.0, 0.005));
    Outcome::new(dev < 1e-6, format!("max‖ρ_NLME−ρ_LME‖={dev:.1e}"))
}

/// Gaussian and exact-Fock trajectories under shared draws.
fn criterion_6() -> Outcome {
    let len = 6;
    let spec = tryo!(build_skin_chain(len, 1.0, 0.4, 0.6));
    let fock = tryo!(fock_embed(&spec));
    let mut gaussian = tryo!(GaussianEngine::new(&spec, 0.005));
    let mut exact = tryo!(TrajectoryEngine::new(fock.spec(), 0.005, Splitting::Fused));
    let mut state = tryo!(GaussianState::neel(len, NeelPhase::OccupiedFirst));
    let mut psi = tryo!(fock.slater_state(&state));
    let mut rng = trajectory_rng(SEED, 0);
    let (a, b) = tryo!(taee_interval(len, chain_midpoint(len), len / 2));
    let mut worst_c: f64 = 0.0;
    let mut worst_s: f64 = 0.0;
    let mut jumps = 0;
    let mut branch_mismatch = None;
    for step in 0..10_000 {
        let draws: Vec<f64> = (0..spec.channels().len()).map(|_| rng.random()).collect();
        let mut it = draws.iter().copied();
        let jg = tryo!(gaussian.step_with(&mut state, || it.next().unwrap()));
        let mut it = draws.iter().copied();
        let jf = tryo!(exact.step_qt2_with(&mut psi, || it.next().unwrap()));
        if jg != jf {
            branch_mismatch = Some(step);
            break;
        }
        jumps += jg.len();
        worst_c = worst_c
            .max(correlation_matrix(&state).max_abs_diff(&fock.correlation(psi.amplitudes())));
        let sg = tryo!(entanglement_entropy(&state, a, b));
        let sf = tryo!(fock.interval_entropy(psi.amplitudes(), a, b));
        worst_s = worst_s.max((sg - sf).abs());
    }
    if let Some(step) = branch_mismatch {
        return Outcome::new(false, format!("branch decisions diverged at step {step}"));
    }
    Outcome::new(
        worst_c < 1e-8 && worst_s < 1e-8,
        format!("10000 steps, {jumps} jumps: max|ΔC|={worst_c:.1e}, max|ΔS|={worst_s:.1e}"),
    )
}

/// Postselected skin effect at L = 50 and the uniform η = 0 profile.
fn criterion_7() -> Outcome {
    let len = 50;
    let cfg = skin_config(300.0, 60, len);
    let (_, point) = tryo!(skin_steady_state(
        len,
        1.0,
        0.4,
        0.6,
        NeelPhase::OccupiedFirst,
        &cfg
    ));
    let spec = tryo!(build_skin_chain(len, 1.0, 0.4, 0.0));
    let ens = tryo!(run_gaussian_ensemble(
        &spec,
        &tryo!(GaussianState::neel(len, NeelPhase::OccupiedFirst)),
        &cfg
    ));
    let uniform = tryo!(OccupationProfile::from_ensemble(&ens, 0.4, 0.0));
    let flat = uniform.max_deviation_from_half();
    let fit = &point.fit;
    let pass = (0.025..=0.055).contains(&fit.beta) && fit.residual < 0.05 && flat < 0.05;
    Outcome::new(
        pass,
        format!(
            "η=0.6: β={:.4} ({:?}) rms={:.4} window=[{}, {}]; η=0: max|n−½|={flat:.4}",
            fit.beta, fit.side, fit.residual, point.profile.t_start, point.profile.t_end
        ),
    )
}

/// `(γ, S, stderr)` of the half-chain interval.
fn half_chain(record: &[EntropyRecord]) -> (f64, f64) {
    (record[0].s, record[0].stderr)
}

fn strictly_decreasing(values: &[(f64, f64)]) -> bool {
    values
        .windows(2)
        .all(|w| w[0].0 - w[1].0 > 2.0 * (w[0].1.powi(2) + w[1].1.powi(2)).sqrt())
}

fn non_decreasing(values: &[(f64, f64)]) -> bool {
    values
        .windows(2)
        .all(|w| w[1].0 - w[0].0 > -2.0 * (w[0].1.powi(2) + w[1].1.powi(2)).sqrt())
}

const SCAN_SITES: usize = 30;

fn run_scan() -> postsel_core::Result<BetaScan> {
    beta_gamma_scan(
        SCAN_SITES,
        1.0,
        &[0.2, 0.4, 0.6, 0.8],
        0.6,
        NeelPhase::OccupiedFirst,
        &skin_config(200.0, 60, SCAN_SITES),
    )
}

/// Linear dependence of β on γ.
fn criterion_8(scan: &postsel_core::Result<BetaScan>) -> Outcome {
    let scan = match scan {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    let betas: Vec<String> = scan
        .points
        .iter()
        .map(|p| format!("{:.4}", p.fit.beta))
        .collect();
    Outcome::new(
        scan.r_squared > 0.95 && scan.intercept.abs() < 0.01,
        format!(
            "β(γ=0.2..0.8)=[{}], k={:.4}, intercept={:.4}, R²={:.4}",
            betas.join(", "),
            scan.k,
            scan.intercept,
            scan.r_squared
        ),
    )
}

/// TAEE falls with γ and does not fall with η.
fn criterion_9(scan: &postsel_core::Result<BetaScan>) -> Outcome {
    let scan = match scan {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    let by_gamma: Vec<(f64, f64)> = [0.2, 0.4, 0.8]
        .iter()
        .map(|g| {
            let p = scan.points.iter().find(|p| p.gamma == *g).unwrap();
            half_chain(&p.taee)
        })
        .collect();
    let mut by_eta = Vec::new();
    for eta in [0.2, 0.6, 0.9] {
        let record = if eta == 0.6 {
            scan.points.iter().find(|p| p.gamma == 0.4).unwrap().taee.clone()
        } else {
            let (_, p) = tryo!(skin_steady_state(
                SCAN_SITES,
                1.0,
                0.4,
                eta,
                NeelPhase::OccupiedFirst,
                &skin_config(200.0, 60, SCAN_SITES)
            ));
            p.taee
        };
        by_eta.push(half_chain(&record));
    }
    let fmt = |v: &[(f64, f64)]| {
        v.iter()
            .map(|(s, e)| format!("{s:.3}±{e:.3}"))
            .collect::<Vec<_>>()
            .join(", ")
    };
    Outcome::new(
        strictly_decreasing(&by_gamma) && non_decreasing(&by_eta),
        format!(
            "S(γ=0.2,0.4,0.8)=[{}]; S(η=0.2,0.6,0.9)=[{}]",
            fmt(&by_gamma),
            fmt(&by_eta)
        ),
    )
}

fn half_chain_entropy(sites: usize, gamma: f64, horizon: f64, n_traj: usize) -> postsel_core::Result<(f64, f64)> {
    let (_, p) = skin_steady_state(
        sites,
        1.0,
        gamma,
        0.6,
        NeelPhase::OccupiedFirst,
        &skin_config(horizon, n_traj, sites),
    )?;
    Ok(half_chain(&p.taee))
}

/// Saturating versus volume-law growth of the half-chain entropy.
fn criterion_10() -> Outcome {
    let (s20, e20) = tryo!(half_chain_entropy(20, 0.4, 200.0, 60));
    let (s40, e40) = tryo!(half_chain_entropy(40, 0.4, 200.0, 60));
    // Without dissipation the evolution is deterministic; a few copies suffice.
    let (u20, _) = tryo!(half_chain_entropy(20, 0.0, 60.0, 4));
    let (u40, _) = tryo!(half_chain_entropy(40, 0.0, 60.0, 4));
    let ratio = s40 / s20;
    let free = u40 / u20;
    Outcome::new(
        ratio < 1.3 && free > 1.6,
        format!(
            "γ=0.4: S(40)/S(20)={ratio:.3} ({s40:.3}±{e40:.3} / {s20:.3}±{e20:.3}); γ=0: {free:.3} ({u40:.3} / {u20:.3})"
        ),
    )
}

fn main() -> ExitCode {
    let selected: Option<Vec<usize>> = std::env::var("POSTSEL_ACCEPTANCE")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let wanted = |k: usize| selected.as_ref().is_none_or(|v| v.contains(&k));

    let names = [
        "three-method agreement",
        "purity and coherence trends",
        "conservation suite",
        "analytic single-site solution",
        "trivial-class reduction",
        "cross-engine oracle",
        "postselected skin effect",
        "linearity of β in γ",
        "entropy trends",
        "two-segment scaling",
    ];
    let scan = (wanted(8) || wanted(9)).then(run_scan);
    let mut failures = 0;
    let mut ran = 0;
    for (k, name) in names.iter().enumerate() {
        let id = k + 1;
        if !wanted(id) {
            continue;
        }
        let start = Instant::now();
        let outcome = match id {
            1 => criterion_1(),
            2 => criterion_2(),
            3 => criterion_3(),
            4 => criterion_4(),
            5 => criterion_5(),
            6 => criterion_6(),
            7 => criterion_7(),
            8 => criterion_8(scan.as_ref().unwrap()),
            9 => criterion_9(scan.as_ref().unwrap()),
            _ => criterion_10(),
        };
        ran += 1;
        if !outcome.pass {
            failures += 1;
        }
        println!(
            "criterion {id:>2} {name}: {} [{:.1}s] {}",
            if outcome.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            outcome.detail
        );
    }
    println!("acceptance: {}/{ran} passed", ran - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
