//! Stochastic stepping and ensembles of Gaussian trajectories.

use std::collections::HashMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    apply_number_jump, bond_currents, correlation_matrix, entanglement_entropy, GaussianState,
    ModeVector,
};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_qr, matrix_exponential, qr_decompose, ComplexMatrix, PrunedMatrix, I};
use crate::model::OpenSystemSpec;
use crate::rng::{child_seed, trajectory_rng};
use crate::stats::MeanAccumulator;

/// Relative cutoff below which propagator entries are dropped.
const PRUNE_TOLERANCE: f64 = 1e-17;
/// Jump sets whose propagators are memoized per engine.
const CACHE_LIMIT: usize = 512;
/// Trajectories run in parallel between reductions.
const CHUNK: usize = 32;

#[derive(Clone, Debug)]
struct Channel {
    mode: ModeVector,
    rate: f64,
    efficiency: f64,
}

/// Fused QT2 stepper for quadratic fermion specs.
///
/// Each step visits the channels in order. Channel `l` jumps with
/// probability `(1−η_l) δp_l`, `δp_l = γ_l dt ⟨d†_l d_l⟩` evaluated on the
/// current frame. Channels that did not jump contribute `−½ γ_l dt α_l α_l†`
/// to a generator `M`, and the step ends with `Q ← 𝒩 e^{M − iH dt} Q`.
/// `e^{M − iH dt}` depends only on which channels jumped, so it is memoized.
#[derive(Clone, Debug)]
pub struct GaussianEngine {
    dt: f64,
    channels: Vec<Channel>,
    /// `−iH dt − ½ Σ γ_l dt α_l α_l†`.
    base: ComplexMatrix,
    no_jump: PrunedMatrix,
    cache: HashMap<Vec<usize>, PrunedMatrix>,
    scratch: ComplexMatrix,
    warned: bool,
}

impl GaussianEngine {
    pub fn new(spec: &OpenSystemSpec, dt: f64) -> Result<Self> {
        if spec.is_few_level() {
            return Err(Error::Contract(
                "Gaussian engine needs a quadratic fermion spec".into(),
            ));
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::Range {
                name: "dt",
                value: dt,
                allowed: "dt > 0",
            });
        }
        let channels: Vec<Channel> = spec
            .channels()
            .iter()
            .map(|ch| Channel {
                mode: ch.mode_vector().expect("quadratic channel").clone(),
                rate: ch.rate(),
                efficiency: ch.efficiency(),
            })
            .collect();
        let mut base = spec.hamiltonian().scale(-I * dt);
        for ch in &channels {
            if ch.rate > 0.0 {
                base -= &ch.mode.projector().scale_real(0.5 * ch.rate * dt);
            }
        }
        let no_jump = PrunedMatrix::from_dense(&matrix_exponential(&base)?, PRUNE_TOLERANCE);
        Ok(Self {
            dt,
            channels,
            base,
            no_jump,
            cache: HashMap::new(),
            scratch: ComplexMatrix::zeros(0, 0),
            warned: false,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn sites(&self) -> usize {
        self.base.rows()
    }

    /// Generator `M − iH dt` for a step in which `jumped` channels jumped.
    pub fn step_generator(&self, jumped: &[usize]) -> ComplexMatrix {
        let mut m = self.base.clone();
        for &l in jumped {
            let ch = &self.channels[l];
            m += &ch.mode.projector().scale_real(0.5 * ch.rate * self.dt);
        }
        m
    }

    fn propagator(&mut self, jumped: &[usize]) -> Result<&PrunedMatrix> {
        if jumped.is_empty() {
            return Ok(&self.no_jump);
        }
        if !self.cache.contains_key(jumped) {
            let p = PrunedMatrix::from_dense(
                &matrix_exponential(&self.step_generator(jumped))?,
                PRUNE_TOLERANCE,
            );
            if self.cache.len() >= CACHE_LIMIT {
                self.cache.clear();
            }
            self.cache.insert(jumped.to_vec(), p);
        }
        Ok(&self.cache[jumped])
    }

    /// One step driven by `rng`; returns the indices of the channels that jumped.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        state: &mut GaussianState,
        rng: &mut R,
    ) -> Result<Vec<usize>> {
        self.step_with(state, || rng.random::<f64>())
    }

    /// One step with an explicit source of uniform draws, one per channel.
    pub fn step_with(
        &mut self,
        state: &mut GaussianState,
        mut uniform: impl FnMut() -> f64,
    ) -> Result<Vec<usize>> {
        if state.sites() != self.sites() {
            return Err(Error::Dimension {
                op: "GaussianEngine::step",
                detail: format!("{} sites, engine has {}", state.sites(), self.sites()),
            });
        }
        let mut jumped = Vec::new();
        for l in 0..self.channels.len() {
            let ch = &self.channels[l];
            let r = uniform();
            if ch.rate == 0.0 {
                continue;
            }
            let expectation: f64 = ch
                .mode
                .overlaps(state.frame())
                .iter()
                .map(|z| z.norm_sqr())
                .sum();
            let dp = ch.rate * self.dt * expectation;
            if dp > 0.1 && !self.warned {
                log::warn!("jump probability {dp:.3} > 0.1 per step; reduce dt");
                self.warned = true;
            }
            if r < (1.0 - ch.efficiency) * dp {
                *state = apply_number_jump(&ch.mode, state)?;
                jumped.push(l);
            }
        }
        let n = state.particles();
        let mut scratch = std::mem::replace(&mut self.scratch, ComplexMatrix::zeros(0, 0));
        if scratch.shape() != state.frame().shape() {
            scratch = ComplexMatrix::zeros(state.sites(), n);
        }
        self.propagator(&jumped)?
            .matmul_into(state.frame(), &mut scratch);
        let q = match cholesky_qr(&scratch) {
            Some(q) => q,
            None => {
                let qr = qr_decompose(&scratch)?;
                if qr.rank < n {
                    return Err(Error::DegenerateState {
                        op: "step_gaussian",
                        rank: qr.rank,
                        particles: n,
                    });
                }
                qr.q
            }
        };
        self.scratch = scratch;
        *state.frame_mut() = q;
        Ok(jumped)
    }
}

/// Single fused QT2 step without memoization across calls.
pub fn step_gaussian<R: Rng + ?Sized>(
    spec: &OpenSystemSpec,
    state: &GaussianState,
    rng: &mut R,
    dt: f64,
) -> Result<GaussianState> {
    let mut engine = GaussianEngine::new(spec, dt)?;
    let mut out = state.clone();
    engine.step(&mut out, rng)?;
    Ok(out)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GaussianRunConfig {
    pub dt: f64,
    pub horizon: f64,
    pub n_traj: usize,
    pub master_seed: u64,
    /// Steps between records.
    pub record_stride: usize,
    /// Final fraction of the horizon averaged as the steady state.
    pub window_fraction: f64,
    /// Entropy intervals `[a, b]`, 1-based inclusive.
    pub intervals: Vec<(usize, usize)>,
    /// Keep every trajectory's final frame.
    pub keep_final_states: bool,
}

impl Default for GaussianRunConfig {
    fn default() -> Self {
        Self {
            dt: 0.005,
            horizon: 300.0,
            n_traj: 60,
            master_seed: 0,
            record_stride: 200,
            window_fraction: 0.1,
            intervals: Vec::new(),
            keep_final_states: false,
        }
    }
}

impl GaussianRunConfig {
    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    fn validate(&self, sites: usize) -> Result<()> {
        crate::error::check_range("dt", self.dt, f64::MIN_POSITIVE, f64::MAX, "dt > 0")?;
        crate::error::check_range("T", self.horizon, 0.0, f64::MAX, "T >= 0")?;
        crate::error::check_range(
            "window_fraction",
            self.window_fraction,
            0.0,
            1.0,
            "window fraction in [0, 1]",
        )?;
        if self.n_traj == 0 {
            return Err(Error::Range {
                name: "n_traj",
                value: 0.0,
                allowed: "n_traj >= 1",
            });
        }
        if self.record_stride == 0 {
            return Err(Error::Range {
                name: "record_stride",
                value: 0.0,
                allowed: "record_stride >= 1",
            });
        }
        for &(a, b) in &self.intervals {
            if a < 1 || a > b || b > sites {
                return Err(Error::InvalidInterval { a, b, len: sites });
            }
        }
        Ok(())
    }

    fn record_steps(&self) -> Vec<usize> {
        let n = self.steps();
        let mut steps: Vec<usize> = (0..=n).step_by(self.record_stride).collect();
        if *steps.last().unwrap() != n {
            steps.push(n);
        }
        steps
    }

    fn window_start(&self) -> f64 {
        self.steps() as f64 * self.dt * (1.0 - self.window_fraction)
    }
}

/// Records of one trajectory.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GaussianTrajectory {
    pub seed: u64,
    pub times: Vec<f64>,
    /// `occupations[k][x]` at record `k`.
    pub occupations: Vec<Vec<f64>>,
    /// `entropies[k][i]` for interval `i` of the config.
    pub entropies: Vec<Vec<f64>>,
    /// Total current `⟨Σ_l ĵ_l⟩`.
    pub currents: Vec<f64>,
    pub jumps: usize,
    pub final_state: Option<GaussianState>,
}

pub fn run_gaussian_trajectory(
    engine: &GaussianEngine,
    initial: &GaussianState,
    config: &GaussianRunConfig,
    index: usize,
) -> Result<GaussianTrajectory> {
    let mut engine = engine.clone();
    let seed = child_seed(config.master_seed, index as u64);
    let mut rng = trajectory_rng(config.master_seed, index as u64);
    let mut state = initial.clone();
    let records = config.record_steps();
    let mut out = GaussianTrajectory {
        seed,
        times: Vec::with_capacity(records.len()),
        occupations: Vec::with_capacity(records.len()),
        entropies: Vec::with_capacity(records.len()),
        currents: Vec::with_capacity(records.len()),
        jumps: 0,
        final_state: None,
    };
    let mut step = 0;
    for &target in &records {
        while step < target {
            out.jumps += engine.step(&mut state, &mut rng)?.len();
            step += 1;
        }
        let c = correlation_matrix(&state);
        out.times.push(step as f64 * config.dt);
        out.occupations.push((0..c.rows()).map(|x| c[(x, x)].re).collect());
        out.currents.push(bond_currents(&c).iter().sum());
        out.entropies.push(
            config
                .intervals
                .iter()
                .map(|&(a, b)| entanglement_entropy(&state, a, b))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    if config.keep_final_states {
        out.final_state = Some(state);
    }
    Ok(out)
}

/// Steady-state averages over the final window: each trajectory is first
/// averaged over the window records, then mean and standard error are
/// taken across trajectories.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WindowSummary {
    pub t_start: f64,
    pub t_end: f64,
    pub records: usize,
    pub profile: Vec<f64>,
    pub profile_stderr: Vec<f64>,
    pub entropy: Vec<f64>,
    pub entropy_stderr: Vec<f64>,
    pub current: f64,
    pub current_stderr: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GaussianEnsemble {
    pub sites: usize,
    pub particles: usize,
    pub n_traj: usize,
    pub times: Vec<f64>,
    /// `occupation[k][x]` ensemble mean and standard error.
    pub occupation: Vec<Vec<f64>>,
    pub occupation_stderr: Vec<Vec<f64>>,
    pub entropy: Vec<Vec<f64>>,
    pub entropy_stderr: Vec<Vec<f64>>,
    pub current: Vec<f64>,
    pub current_stderr: Vec<f64>,
    pub intervals: Vec<(usize, usize)>,
    pub window: WindowSummary,
    pub seeds: Vec<u64>,
    pub total_jumps: usize,
    pub final_states: Vec<GaussianState>,
}

struct Accumulators {
    occ: Vec<Vec<MeanAccumulator>>,
    ent: Vec<Vec<MeanAccumulator>>,
    cur: Vec<MeanAccumulator>,
    w_occ: Vec<MeanAccumulator>,
    w_ent: Vec<MeanAccumulator>,
    w_cur: MeanAccumulator,
}

pub fn run_gaussian_ensemble(
    spec: &OpenSystemSpec,
    initial: &GaussianState,
    config: &GaussianRunConfig,
) -> Result<GaussianEnsemble> {
    config.validate(initial.sites())?;
    let engine = GaussianEngine::new(spec, config.dt)?;
    if initial.sites() != engine.sites() {
        return Err(Error::Dimension {
            op: "run_gaussian_ensemble",
            detail: format!("state on {} sites, spec has {}", initial.sites(), engine.sites()),
        });
    }
    let (l, ni) = (initial.sites(), config.intervals.len());
    let times: Vec<f64> = config
        .record_steps()
        .iter()
        .map(|&s| s as f64 * config.dt)
        .collect();
    let t_start = config.window_start();
    let in_window: Vec<bool> = times.iter().map(|&t| t >= t_start - 1e-9).collect();
    let n_window = in_window.iter().filter(|&&w| w).count();
    let nt = times.len();
    let mut acc = Accumulators {
        occ: vec![vec![MeanAccumulator::default(); l]; nt],
        ent: vec![vec![MeanAccumulator::default(); ni]; nt],
        cur: vec![MeanAccumulator::default(); nt],
        w_occ: vec![MeanAccumulator::default(); l],
        w_ent: vec![MeanAccumulator::default(); ni],
        w_cur: MeanAccumulator::default(),
    };
    let mut seeds = Vec::with_capacity(config.n_traj);
    let mut final_states = Vec::new();
    let mut total_jumps = 0;

    let indices: Vec<usize> = (0..config.n_traj).collect();
    for chunk in indices.chunks(CHUNK) {
        let runs: Vec<GaussianTrajectory> = chunk
            .par_iter()
            .map(|&i| run_gaussian_trajectory(&engine, initial, config, i))
            .collect::<Result<_>>()?;
        // Reduction in ascending trajectory index.
        for run in runs {
            seeds.push(run.seed);
            total_jumps += run.jumps;
            let mut w_occ = vec![0.0; l];
            let mut w_ent = vec![0.0; ni];
            let mut w_cur = 0.0;
            for k in 0..nt {
                for x in 0..l {
                    acc.occ[k][x].push(run.occupations[k][x]);
                }
                for i in 0..ni {
                    acc.ent[k][i].push(run.entropies[k][i]);
                }
                acc.cur[k].push(run.currents[k]);
                if in_window[k] {
                    for x in 0..l {
                        w_occ[x] += run.occupations[k][x];
                    }
                    for i in 0..ni {
                        w_ent[i] += run.entropies[k][i];
                    }
                    w_cur += run.currents[k];
                }
            }
            let norm = 1.0 / n_window as f64;
            for x in 0..l {
                acc.w_occ[x].push(w_occ[x] * norm);
            }
            for i in 0..ni {
                acc.w_ent[i].push(w_ent[i] * norm);
            }
            acc.w_cur.push(w_cur * norm);
            if let Some(s) = run.final_state {
                final_states.push(s);
            }
        }
    }

    let means = |v: &[MeanAccumulator]| v.iter().map(MeanAccumulator::mean).collect::<Vec<_>>();
    let errs = |v: &[MeanAccumulator]| v.iter().map(MeanAccumulator::stderr).collect::<Vec<_>>();
    Ok(GaussianEnsemble {
        sites: l,
        particles: initial.particles(),
        n_traj: config.n_traj,
        occupation: acc.occ.iter().map(|r| means(r)).collect(),
        occupation_stderr: acc.occ.iter().map(|r| errs(r)).collect(),
        entropy: acc.ent.iter().map(|r| means(r)).collect(),
        entropy_stderr: acc.ent.iter().map(|r| errs(r)).collect(),
        current: means(&acc.cur),
        current_stderr: errs(&acc.cur),
        intervals: config.intervals.clone(),
        window: WindowSummary {
            t_start,
            t_end: *times.last().unwrap(),
            records: n_window,
            profile: means(&acc.w_occ),
            profile_stderr: errs(&acc.w_occ),
            entropy: means(&acc.w_ent),
            entropy_stderr: errs(&acc.w_ent),
            current: acc.w_cur.mean(),
            current_stderr: acc.w_cur.stderr(),
        },
        times,
        seeds,
        total_jumps,
        final_states,
    })
}

impl GaussianEnsemble {
    /// `time,site,n,stderr` rows.
    pub fn occupation_csv(&self) -> String {
        let mut s = String::from("time,site,n,stderr\n");
        for (k, t) in self.times.iter().enumerate() {
            for x in 0..self.sites {
                s.push_str(&format!(
                    "{t},{},{},{}\n",
                    x + 1,
                    self.occupation[k][x],
                    self.occupation_stderr[k][x]
                ));
            }
        }
        s
    }

    /// `time,a,b,length,S,stderr` rows.
    pub fn entropy_csv(&self) -> String {
        let mut s = String::from("time,a,b,length,S,stderr\n");
        for (k, t) in self.times.iter().enumerate() {
            for (i, &(a, b)) in self.intervals.iter().enumerate() {
                s.push_str(&format!(
                    "{t},{a},{b},{},{},{}\n",
                    b - a + 1,
                    self.entropy[k][i],
                    self.entropy_stderr[k][i]
                ));
            }
        }
        s
    }
}
