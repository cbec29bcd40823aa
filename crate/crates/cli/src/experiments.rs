//! One pipeline per experiment. Each writes its CSV/JSON files into the
//! output directory and reports seeds and invariant violations.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use postsel_core::analysis::{
    chain_midpoint, ensemble_steady_state, entropy_table_csv, fit_tanh, log_interval_grid,
    taee_from_ensemble, EntropyRecord, OccupationProfile, SteadyStateReport, TanhFit,
};
use postsel_core::gaussian::{
    run_gaussian_ensemble, GaussianEnsemble, GaussianRunConfig, GaussianState, NeelPhase,
};
use postsel_core::master_eq::{evolve_nlme_strided, trivial_class_check, DensityMatrix};
use postsel_core::model::{
    build_monitored_chain, build_skin_chain, build_two_level_atom, Boundary,
};
use postsel_core::stats::linear_fit;
use postsel_core::trajectory::{
    fock_embed, run_ensemble, Method, Observable, PureState, TrajectoryConfig,
};
use postsel_core::ComplexMatrix;

use crate::config::{BoundaryKind, Experiment, ExperimentConfig, Filling, Phase};
use crate::manifest::write_atomic;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Core(#[from] postsel_core::Error),
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
}

/// What a pipeline produced.
#[derive(Debug, Default)]
pub struct RunReport {
    pub outputs: Vec<String>,
    pub child_seeds: BTreeMap<String, Vec<u64>>,
    pub violations: Vec<String>,
}

struct Sink<'a> {
    dir: &'a Path,
    report: RunReport,
}

impl Sink<'_> {
    fn write(&mut self, name: &str, contents: &str) -> Result<(), RunError> {
        write_atomic(self.dir, name, contents.as_bytes())?;
        self.report.outputs.push(name.to_string());
        Ok(())
    }

    fn json(&mut self, name: &str, value: &impl Serialize) -> Result<(), RunError> {
        let text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
        self.write(name, &(text + "\n"))
    }

    fn violation(&mut self, message: String) {
        log::warn!("invariant violation: {message}");
        self.report.violations.push(message);
    }
}

pub fn run(cfg: &ExperimentConfig, dir: &Path) -> Result<RunReport, RunError> {
    let mut sink = Sink {
        dir,
        report: RunReport::default(),
    };
    match cfg.experiment {
        Experiment::AtomPurity => atom_purity(cfg, &mut sink)?,
        Experiment::AtomMethodCompare => atom_method_compare(cfg, &mut sink)?,
        Experiment::TrivialChain => trivial_chain(cfg, &mut sink)?,
        Experiment::SkinSteadyState => skin_steady_state(cfg, &mut sink)?,
        Experiment::BetaScan => beta_scan(cfg, &mut sink)?,
        Experiment::EntropyScan => entropy_scan(cfg, &mut sink)?,
    }
    Ok(sink.report)
}

/// Output directory: absolute paths as given, relative ones under `root`.
pub fn resolve_output(dir: &Path, root: Option<&Path>) -> PathBuf {
    match root {
        Some(r) if dir.is_relative() => r.join(dir),
        _ => dir.to_path_buf(),
    }
}

const TRACE_TOL: f64 = 1e-8;
const HERMITICITY_TOL: f64 = 1e-9;

fn check_conservation(sink: &mut Sink, label: &str, states: &[DensityMatrix], times: &[f64]) {
    for (s, t) in states.iter().zip(times) {
        let tr = (s.matrix().trace().re - 1.0).abs();
        let h = s.matrix().hermiticity_error();
        if tr > TRACE_TOL || h > HERMITICITY_TOL {
            sink.violation(format!(
                "{label}: t={t}: |Tr ρ − 1| = {tr:e}, ‖ρ − ρ†‖ = {h:e}"
            ));
            return;
        }
    }
}

fn atom_purity(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<(), RunError> {
    let (m, r) = (&cfg.model, &cfg.run);
    let rho0 = DensityMatrix::basis_state(2, 0)?;
    let mut runs = Vec::new();
    for &eta in &cfg.scan.etas {
        let spec = build_two_level_atom(m.hopping, m.gamma, eta)?;
        let run = evolve_nlme_strided(&spec, &rho0, r.horizon, r.dt, r.record_stride)?;
        check_conservation(sink, &format!("eta={eta}"), &run.states, &run.times);
        runs.push((eta, run));
    }
    let mut csv = String::from("time");
    for (eta, _) in &runs {
        let _ = write!(csv, ",purity_eta{eta},p_e_eta{eta}");
    }
    csv.push('\n');
    let times = &runs[0].1.times;
    let mut averages = Vec::new();
    for (k, t) in times.iter().enumerate() {
        let _ = write!(csv, "{t}");
        for (_, run) in &runs {
            let s = &run.states[k];
            let _ = write!(csv, ",{},{}", s.purity(), s.populations()[0]);
        }
        csv.push('\n');
    }
    for (eta, run) in &runs {
        let p = run.observable("purity").unwrap();
        averages.push(json!({"eta": eta, "mean_purity": p.iter().sum::<f64>() / p.len() as f64}));
    }
    sink.write("atom_purity.csv", &csv)?;
    sink.json("summary.json", &json!({ "runs": averages }))
}

fn excited() -> Observable {
    Observable::new("p_e", ComplexMatrix::from_real_diag(&[1.0, 0.0]))
}

fn atom_method_compare(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<(), RunError> {
    let (m, r) = (&cfg.model, &cfg.run);
    let spec = build_two_level_atom(m.hopping, m.gamma, m.eta)?;
    let rho0 = DensityMatrix::basis_state(2, 0)?;
    let nlme = evolve_nlme_strided(&spec, &rho0, r.horizon, r.dt, r.record_stride)?;
    check_conservation(sink, "nlme", &nlme.states, &nlme.times);
    let mut csv = String::from("time,p_e\n");
    for (t, s) in nlme.times.iter().zip(&nlme.states) {
        let _ = writeln!(csv, "{t},{}", s.populations()[0]);
    }
    sink.write("nlme.csv", &csv)?;

    let psi0 = PureState::basis(2, 0)?;
    for (method, n_traj, name) in [
        (Method::Qt2, r.n_traj, "qt2"),
        (Method::Qt1, r.n_traj_qt1, "qt1"),
    ] {
        let tc = TrajectoryConfig {
            dt: r.dt,
            horizon: r.horizon,
            n_traj,
            method,
            master_seed: r.master_seed,
            record_stride: r.record_stride,
            ..TrajectoryConfig::default()
        };
        let est = run_ensemble(&spec, &psi0, &tc, &[excited()])?;
        let mut csv = String::from("time,p_e,stderr,survivors\n");
        let (mean, se) = est.series("p_e").unwrap();
        for k in 0..est.times.len() {
            let _ = writeln!(csv, "{},{},{},{}", est.times[k], mean[k], se[k], est.survivors[k]);
        }
        sink.write(&format!("{name}.csv"), &csv)?;
        sink.report.child_seeds.insert(name.into(), est.seeds);
    }
    Ok(())
}

fn occupied_sites(sites: usize, filling: Filling, phase: Phase) -> Vec<usize> {
    match filling {
        Filling::Half => {
            let first = usize::from(phase == Phase::EmptyFirst);
            (first..sites).step_by(2).collect()
        }
        // Evenly spread particles.
        Filling::Particles(n) => (0..n).map(|k| k * sites / n).collect(),
    }
}

fn initial_gaussian(cfg: &ExperimentConfig, sites: usize) -> postsel_core::Result<GaussianState> {
    match cfg.model.filling {
        Filling::Half => GaussianState::neel(
            sites,
            match cfg.model.phase {
                Phase::OccupiedFirst => NeelPhase::OccupiedFirst,
                Phase::EmptyFirst => NeelPhase::EmptyFirst,
            },
        ),
        f => GaussianState::from_sites(sites, &occupied_sites(sites, f, cfg.model.phase)),
    }
}

fn trivial_chain(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<(), RunError> {
    let (m, r) = (&cfg.model, &cfg.run);
    let boundary = match m.boundary {
        BoundaryKind::Open => Boundary::Open,
        BoundaryKind::Periodic => Boundary::Periodic,
    };
    let chain = build_monitored_chain(m.sites, m.hopping, m.gamma, m.eta, boundary)?;
    let fock = fock_embed(&chain)?;
    let occupied = occupied_sites(m.sites, m.filling, m.phase);
    let pattern: Vec<bool> = (0..m.sites).map(|x| occupied.contains(&x)).collect();
    let rho0 = DensityMatrix::basis_state(fock.dim(), fock.basis_index(&pattern))?;
    let report = trivial_class_check(fock.spec(), &rho0)?;
    if !report.is_trivial {
        sink.violation(format!("not in the trivial class: {}", report.failures.join("; ")));
    }
    let nlme = evolve_nlme_strided(fock.spec(), &rho0, r.horizon, r.dt, r.record_stride)?;
    let lme = evolve_nlme_strided(&fock.spec().reduced_lme(), &rho0, r.horizon, r.dt, r.record_stride)?;
    check_conservation(sink, "nlme", &nlme.states, &nlme.times);
    check_conservation(sink, "lme", &lme.states, &lme.times);
    let numbers: Vec<ComplexMatrix> = (0..m.sites).map(|x| fock.number_operator(x)).collect();
    let mut csv = String::from("time,deviation");
    for x in 1..=m.sites {
        let _ = write!(csv, ",n{x}");
    }
    csv.push('\n');
    let mut worst: f64 = 0.0;
    for k in 0..nlme.times.len() {
        let dev = nlme.states[k].matrix().max_abs_diff(lme.states[k].matrix());
        worst = worst.max(dev);
        let _ = write!(csv, "{},{dev}", nlme.times[k]);
        for n in &numbers {
            let _ = write!(csv, ",{}", nlme.states[k].expectation(n));
        }
        csv.push('\n');
    }
    if report.is_trivial && worst > 1e-6 {
        sink.violation(format!("NLME and reduced LME differ by {worst:e}"));
    }
    sink.write("trivial_chain.csv", &csv)?;
    sink.json(
        "trivial_check.json",
        &json!({ "report": report, "max_deviation": worst }),
    )
}

fn gaussian_config(cfg: &ExperimentConfig, intervals: Vec<(usize, usize)>) -> GaussianRunConfig {
    let r = &cfg.run;
    GaussianRunConfig {
        dt: r.dt,
        horizon: r.horizon,
        n_traj: r.n_traj,
        master_seed: r.master_seed,
        record_stride: r.record_stride,
        window_fraction: r.window_fraction,
        intervals,
        keep_final_states: false,
    }
}

struct SkinRun {
    ensemble: GaussianEnsemble,
    profile: OccupationProfile,
    fit: TanhFit,
    steady: SteadyStateReport,
    taee: Vec<EntropyRecord>,
}

fn run_skin(
    cfg: &ExperimentConfig,
    sites: usize,
    gamma: f64,
    eta: f64,
    intervals: Vec<(usize, usize)>,
    sink: &mut Sink,
) -> Result<SkinRun, RunError> {
    let spec = build_skin_chain(sites, cfg.model.hopping, gamma, eta)?;
    let init = initial_gaussian(cfg, sites)?;
    let ensemble = run_gaussian_ensemble(&spec, &init, &gaussian_config(cfg, intervals))?;
    let profile = OccupationProfile::from_ensemble(&ensemble, gamma, eta)?;
    let mut fit = fit_tanh(&profile)?;
    if gamma > 0.0 {
        fit.k = Some(fit.beta / gamma);
    }
    let steady = ensemble_steady_state(&ensemble)?;
    let taee = (0..ensemble.intervals.len())
        .map(|i| taee_from_ensemble(&ensemble, i))
        .collect();
    let label = format!("L={sites},gamma={gamma},eta={eta}");
    let n = init.particles() as f64;
    if (profile.total() - n).abs() > 2.0 * profile.total_stderr() + 1e-9 {
        sink.violation(format!(
            "{label}: Σn = {} but N = {n}",
            profile.total()
        ));
    }
    sink.report.child_seeds.insert(label, ensemble.seeds.clone());
    Ok(SkinRun {
        ensemble,
        profile,
        fit,
        steady,
        taee,
    })
}

fn half_chain(sites: usize) -> Vec<(usize, usize)> {
    vec![(chain_midpoint(sites), sites)]
}

fn skin_steady_state(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<(), RunError> {
    let m = &cfg.model;
    let run = run_skin(cfg, m.sites, m.gamma, m.eta, half_chain(m.sites), sink)?;
    if !run.steady.reached {
        log::warn!("steady state not reached within T = {}", cfg.run.horizon);
    }
    sink.write("profile.csv", &run.profile.to_csv())?;
    sink.write("occupation_series.csv", &run.ensemble.occupation_csv())?;
    sink.write("entropy_series.csv", &run.ensemble.entropy_csv())?;
    let w = &run.ensemble.window;
    sink.json(
        "tanh_fit.json",
        &json!({
            "fit": run.fit,
            "steady_state": run.steady,
            "window": [w.t_start, w.t_end],
            "half_chain_entropy": run.taee[0],
            "current": {"mean": w.current, "stderr": w.current_stderr},
            "total_jumps": run.ensemble.total_jumps,
        }),
    )
}

fn beta_scan(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<(), RunError> {
    let m = &cfg.model;
    let mut csv = String::from("gamma,eta,L,beta,residual,side,steady\n");
    let mut profiles = String::from("gamma,site,n,stderr\n");
    let mut betas = Vec::new();
    let mut points = Vec::new();
    for &gamma in &cfg.scan.gammas {
        let run = run_skin(cfg, m.sites, gamma, m.eta, half_chain(m.sites), sink)?;
        if !run.steady.reached {
            sink.violation(format!(
                "gamma={gamma}: steady state not reached within T = {}",
                cfg.run.horizon
            ));
        }
        let _ = writeln!(
            csv,
            "{gamma},{},{},{},{},{:?},{}",
            m.eta, m.sites, run.fit.beta, run.fit.residual, run.fit.side, run.steady.reached
        );
        for (x, (n, e)) in run.profile.n.iter().zip(&run.profile.stderr).enumerate() {
            let _ = writeln!(profiles, "{gamma},{},{n},{e}", x + 1);
        }
        betas.push(run.fit.beta);
        points.push(json!({"gamma": gamma, "fit": run.fit, "steady_state": run.steady, "half_chain_entropy": run.taee[0]}));
    }
    let line = linear_fit(&cfg.scan.gammas, &betas);
    sink.write("beta_scan.csv", &csv)?;
    sink.write("profiles.csv", &profiles)?;
    sink.json(
        "beta_fit.json",
        &json!({"k": line.slope, "intercept": line.intercept, "r_squared": line.r_squared, "points": points}),
    )
}

fn entropy_bound(sites: usize, particles: usize, len: usize) -> f64 {
    len.min(sites - len).min(particles).min(sites - particles) as f64 * std::f64::consts::LN_2
}

fn check_entropy(sink: &mut Sink, sites: usize, particles: usize, records: &[EntropyRecord]) {
    for r in records {
        let cap = entropy_bound(sites, particles, r.delta);
        if r.s > cap + 1e-9 {
            sink.violation(format!(
                "L={sites}: S({}, Δ={}) = {} exceeds {cap}",
                r.x_c, r.delta, r.s
            ));
        }
    }
}

fn entropy_scan(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<(), RunError> {
    let m = &cfg.model;
    let x_c = chain_midpoint(m.sites);
    let intervals: Vec<(usize, usize)> = log_interval_grid(m.sites, cfg.scan.delta_points)
        .into_iter()
        .map(|d| (x_c, x_c + d - 1))
        .filter(|&(_, b)| b <= m.sites)
        .collect();
    let mut by_delta = String::from("gamma,eta,L,x_c,delta,S,stderr\n");
    let mut by_size = String::from("gamma,eta,L,S,stderr\n");
    for &gamma in &cfg.scan.gammas {
        let run = run_skin(cfg, m.sites, gamma, m.eta, intervals.clone(), sink)?;
        check_entropy(sink, m.sites, run.ensemble.particles, &run.taee);
        for line in entropy_table_csv(&run.taee).lines().skip(1) {
            let _ = writeln!(by_delta, "{gamma},{},{},{line}", m.eta, m.sites);
        }
        for &sites in &cfg.scan.sizes {
            let run = run_skin(cfg, sites, gamma, m.eta, half_chain(sites), sink)?;
            check_entropy(sink, sites, run.ensemble.particles, &run.taee);
            let r = &run.taee[0];
            let _ = writeln!(by_size, "{gamma},{},{sites},{},{}", m.eta, r.s, r.stderr);
        }
    }
    sink.write("entropy_delta.csv", &by_delta)?;
    if !cfg.scan.sizes.is_empty() {
        sink.write("entropy_size.csv", &by_size)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spread_particles() {
        assert_eq!(occupied_sites(6, Filling::Half, Phase::OccupiedFirst), vec![0, 2, 4]);
        assert_eq!(occupied_sites(6, Filling::Half, Phase::EmptyFirst), vec![1, 3, 5]);
        assert_eq!(occupied_sites(10, Filling::Particles(3), Phase::OccupiedFirst), vec![0, 3, 6]);
    }

    #[test]
    fn relative_outputs_follow_root() {
        let root = Path::new("/data");
        assert_eq!(resolve_output(Path::new("x"), Some(root)), PathBuf::from("/data/x"));
        assert_eq!(resolve_output(Path::new("/abs"), Some(root)), PathBuf::from("/abs"));
        assert_eq!(resolve_output(Path::new("x"), None), PathBuf::from("x"));
    }
}
