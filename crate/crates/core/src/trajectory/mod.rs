//! Monte Carlo wave-function ensembles over the exact Hilbert space.
//!
//! Two unravelings of the NLME are provided:
//!
//! * QT1 follows the experiment: jumps happen with probability `δp_μ` and a
//!   second draw decides whether the detector saw it (`r₂ < η_μ`), in which
//!   case the trajectory is discarded. Averages are over survivors.
//! * QT2 folds postselection into the jump probability `(1−η_μ) δp_μ`; no
//!   trajectory is ever discarded.
//!
//! Per step, channels are visited in ascending index with one uniform draw
//! each (plus the detection draw of QT1). With [`Splitting::Sequential`]
//! each no-jump channel applies `𝒩 exp(−½γ_μ L†L dt)` immediately and
//! `e^{−iH dt}` closes the step. [`Splitting::Fused`] instead collects the
//! no-jump channels into one exponential `exp(−iH dt − ½Σγ_μ L†L dt)`,
//! which is the scheme of the Gaussian engine; with the same draws the two
//! engines then follow the same trajectory.

mod fock;

pub use fock::{fock_embed, quadratic_operator, FockEmbedding, FOCK_MAX_SITES};

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_range, Error, Result};
use crate::linalg::{matrix_exponential, vec_norm, ComplexMatrix, C64, I};
use crate::master_eq::DensityMatrix;
use crate::model::OpenSystemSpec;
use crate::rng::{child_seed, trajectory_rng};
use crate::stats::MeanAccumulator;

/// Trajectories run in parallel between reductions.
const CHUNK: usize = 256;
/// Jump sets whose fused propagators are memoized.
const CACHE_LIMIT: usize = 512;

/// Normalized state vector.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PureState {
    amplitudes: Vec<C64>,
}

impl PureState {
    pub fn new(amplitudes: Vec<C64>) -> Result<Self> {
        let n = vec_norm(&amplitudes);
        if !n.is_finite() {
            return Err(Error::NonFinite("PureState"));
        }
        if (n - 1.0).abs() > 1e-10 {
            return Err(Error::Contract(format!("state norm {n}, expected 1")));
        }
        Ok(Self { amplitudes })
    }

    /// `ψ / ‖ψ‖`; a zero vector is rejected.
    pub fn normalized(mut amplitudes: Vec<C64>) -> Result<Self> {
        let n = vec_norm(&amplitudes);
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::Contract("cannot normalize a zero state".into()));
        }
        amplitudes.iter_mut().for_each(|z| *z /= n);
        Ok(Self { amplitudes })
    }

    pub fn basis(dim: usize, k: usize) -> Result<Self> {
        if k >= dim {
            return Err(Error::Dimension {
                op: "PureState::basis",
                detail: format!("index {k} in dimension {dim}"),
            });
        }
        let mut v = vec![C64::new(0.0, 0.0); dim];
        v[k] = C64::new(1.0, 0.0);
        Ok(Self { amplitudes: v })
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    /// `Re ⟨ψ|O|ψ⟩`.
    pub fn expectation(&self, op: &ComplexMatrix) -> f64 {
        op.expectation(&self.amplitudes).re
    }

    pub fn density_matrix(&self) -> Result<DensityMatrix> {
        DensityMatrix::pure(&self.amplitudes)
    }

    fn renormalize(&mut self) -> Result<()> {
        let n = vec_norm(&self.amplitudes);
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::Contract("state collapsed to zero norm".into()));
        }
        self.amplitudes.iter_mut().for_each(|z| *z /= n);
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Qt1,
    Qt2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Splitting {
    Sequential,
    Fused,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrajectoryConfig {
    pub dt: f64,
    pub horizon: f64,
    pub n_traj: usize,
    pub method: Method,
    pub master_seed: u64,
    /// Steps between observable records.
    pub record_stride: usize,
    pub splitting: Splitting,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self {
            dt: 0.005,
            horizon: 10.0,
            n_traj: 60,
            method: Method::Qt2,
            master_seed: 0,
            record_stride: 1,
            splitting: Splitting::Sequential,
        }
    }
}

impl TrajectoryConfig {
    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        check_range("dt", self.dt, f64::MIN_POSITIVE, f64::MAX, "dt > 0")?;
        check_range("T", self.horizon, 0.0, f64::MAX, "T >= 0")?;
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
        Ok(())
    }

    /// Steps at which observables are recorded: multiples of the stride and the last step.
    pub fn record_steps(&self) -> Vec<usize> {
        let n = self.steps();
        let mut steps: Vec<usize> = (0..=n).step_by(self.record_stride).collect();
        if *steps.last().unwrap() != n {
            steps.push(n);
        }
        steps
    }
}

#[derive(Clone, Debug)]
struct Channel {
    op: ComplexMatrix,
    number: ComplexMatrix,
    /// `exp(−½ γ L†L dt)`.
    decay: ComplexMatrix,
    rate: f64,
    efficiency: f64,
}

/// Result of a QT1 step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Qt1Outcome {
    /// Survived; the channels whose (undetected) jumps were applied.
    Continue(Vec<usize>),
    /// A jump on this channel was detected.
    Discard(usize),
}

/// Stepper for few-level specs with cached per-step propagators.
#[derive(Clone, Debug)]
pub struct TrajectoryEngine {
    dt: f64,
    splitting: Splitting,
    channels: Vec<Channel>,
    unitary: ComplexMatrix,
    /// `−iH dt − ½ Σ γ L†L dt`.
    base: ComplexMatrix,
    fused: HashMap<Vec<usize>, ComplexMatrix>,
    warned: bool,
}

impl TrajectoryEngine {
    pub fn new(spec: &OpenSystemSpec, dt: f64, splitting: Splitting) -> Result<Self> {
        if !spec.is_few_level() {
            return Err(Error::Contract(
                "trajectory engine needs a few-level spec; use fock_embed for chains".into(),
            ));
        }
        check_range("dt", dt, f64::MIN_POSITIVE, f64::MAX, "dt > 0")?;
        let mut base = spec.hamiltonian().scale(-I * dt);
        let mut channels = Vec::with_capacity(spec.channels().len());
        for ch in spec.channels() {
            let op = ch.dense_operator().expect("few-level channel").clone();
            let number = op.adjoint().matmul(&op);
            let gen = number.scale_real(-0.5 * ch.rate() * dt);
            base += &gen;
            let decay = if splitting == Splitting::Sequential {
                matrix_exponential(&gen)?
            } else {
                ComplexMatrix::zeros(0, 0)
            };
            channels.push(Channel {
                op,
                number,
                decay,
                rate: ch.rate(),
                efficiency: ch.efficiency(),
            });
        }
        let unitary = matrix_exponential(&spec.hamiltonian().scale(-I * dt))?;
        let mut fused = HashMap::new();
        if splitting == Splitting::Fused {
            fused.insert(Vec::new(), matrix_exponential(&base)?);
        }
        Ok(Self {
            dt,
            splitting,
            channels,
            unitary,
            base,
            fused,
            warned: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.unitary.rows()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn jump_probability(&mut self, mu: usize, psi: &PureState) -> f64 {
        let ch = &self.channels[mu];
        let dp = ch.rate * self.dt * psi.expectation(&ch.number);
        if dp > 0.1 && !self.warned {
            log::warn!("jump probability {dp:.3} > 0.1 per step; reduce dt");
            self.warned = true;
        }
        dp
    }

    fn apply(op: &ComplexMatrix, psi: &mut PureState) -> Result<()> {
        psi.amplitudes = op.matvec(&psi.amplitudes);
        psi.renormalize()
    }

    fn jump(&self, mu: usize, psi: &mut PureState) -> Result<()> {
        let out = self.channels[mu].op.matvec(&psi.amplitudes);
        let n = vec_norm(&out);
        if !(n > 0.0) {
            return Err(Error::ZeroAmplitudeJump { expectation: n * n });
        }
        psi.amplitudes = out;
        psi.renormalize()
    }

    fn no_jump(&self, mu: usize, psi: &mut PureState) -> Result<()> {
        if self.splitting == Splitting::Sequential && self.channels[mu].rate > 0.0 {
            Self::apply(&self.channels[mu].decay, psi)?;
        }
        Ok(())
    }

    fn finish(&mut self, jumped: &[usize], psi: &mut PureState) -> Result<()> {
        match self.splitting {
            Splitting::Sequential => Self::apply(&self.unitary, psi),
            Splitting::Fused => {
                if !self.fused.contains_key(jumped) {
                    let mut m = self.base.clone();
                    for &mu in jumped {
                        let ch = &self.channels[mu];
                        m += &ch.number.scale_real(0.5 * ch.rate * self.dt);
                    }
                    if self.fused.len() >= CACHE_LIMIT {
                        self.fused.retain(|k, _| k.is_empty());
                    }
                    self.fused.insert(jumped.to_vec(), matrix_exponential(&m)?);
                }
                let p = &self.fused[jumped];
                psi.amplitudes = p.matvec(&psi.amplitudes);
                psi.renormalize()
            }
        }
    }

    fn check_dim(&self, psi: &PureState) -> Result<()> {
        if psi.dim() != self.dim() {
            return Err(Error::Dimension {
                op: "trajectory step",
                detail: format!("state of dimension {}, spec has {}", psi.dim(), self.dim()),
            });
        }
        Ok(())
    }

    /// QT2 step driven by `rng`; returns the channels that jumped.
    pub fn step_qt2<R: Rng + ?Sized>(&mut self, psi: &mut PureState, rng: &mut R) -> Result<Vec<usize>> {
        self.step_qt2_with(psi, || rng.random::<f64>())
    }

    /// QT2 step with an explicit source of uniform draws, one per channel.
    pub fn step_qt2_with(
        &mut self,
        psi: &mut PureState,
        mut uniform: impl FnMut() -> f64,
    ) -> Result<Vec<usize>> {
        self.check_dim(psi)?;
        let mut jumped = Vec::new();
        for mu in 0..self.channels.len() {
            let r = uniform();
            if self.channels[mu].rate == 0.0 {
                continue;
            }
            let dp = self.jump_probability(mu, psi);
            if r < (1.0 - self.channels[mu].efficiency) * dp {
                self.jump(mu, psi)?;
                jumped.push(mu);
            } else {
                self.no_jump(mu, psi)?;
            }
        }
        self.finish(&jumped, psi)?;
        Ok(jumped)
    }

    /// QT1 step: a jump occurs when `r₁ < δp_μ` and is detected when `r₂ < η_μ`.
    pub fn step_qt1<R: Rng + ?Sized>(&mut self, psi: &mut PureState, rng: &mut R) -> Result<Qt1Outcome> {
        self.check_dim(psi)?;
        let mut jumped = Vec::new();
        for mu in 0..self.channels.len() {
            let r1: f64 = rng.random();
            if self.channels[mu].rate == 0.0 {
                continue;
            }
            let dp = self.jump_probability(mu, psi);
            if r1 < dp {
                let r2: f64 = rng.random();
                if r2 < self.channels[mu].efficiency {
                    return Ok(Qt1Outcome::Discard(mu));
                }
                self.jump(mu, psi)?;
                jumped.push(mu);
            } else {
                self.no_jump(mu, psi)?;
            }
        }
        self.finish(&jumped, psi)?;
        Ok(Qt1Outcome::Continue(jumped))
    }
}

/// Single QT2 step without caching across calls.
pub fn step_qt2<R: Rng + ?Sized>(
    spec: &OpenSystemSpec,
    psi: &PureState,
    rng: &mut R,
    dt: f64,
) -> Result<PureState> {
    let mut engine = TrajectoryEngine::new(spec, dt, Splitting::Sequential)?;
    let mut out = psi.clone();
    engine.step_qt2(&mut out, rng)?;
    Ok(out)
}

/// Single QT1 step; `None` when the trajectory is discarded.
pub fn step_qt1<R: Rng + ?Sized>(
    spec: &OpenSystemSpec,
    psi: &PureState,
    rng: &mut R,
    dt: f64,
) -> Result<Option<PureState>> {
    let mut engine = TrajectoryEngine::new(spec, dt, Splitting::Sequential)?;
    let mut out = psi.clone();
    Ok(match engine.step_qt1(&mut out, rng)? {
        Qt1Outcome::Continue(_) => Some(out),
        Qt1Outcome::Discard(_) => None,
    })
}

/// A named Hermitian observable.
#[derive(Clone, Debug)]
pub struct Observable {
    pub name: String,
    pub op: ComplexMatrix,
}

impl Observable {
    pub fn new(name: impl Into<String>, op: ComplexMatrix) -> Self {
        Self {
            name: name.into(),
            op,
        }
    }
}

/// Records of one trajectory up to its end or discard.
#[derive(Clone, Debug)]
pub struct TrajectoryRecord {
    pub seed: u64,
    /// `values[k][o]` for record `k`; shorter than the time grid if discarded.
    pub values: Vec<Vec<f64>>,
    pub discarded_at: Option<f64>,
    pub jumps: usize,
    pub final_state: PureState,
}

pub fn run_trajectory(
    engine: &TrajectoryEngine,
    psi0: &PureState,
    config: &TrajectoryConfig,
    observables: &[Observable],
    index: usize,
) -> Result<TrajectoryRecord> {
    let mut engine = engine.clone();
    let mut rng = trajectory_rng(config.master_seed, index as u64);
    let mut psi = psi0.clone();
    let records = config.record_steps();
    let mut values = Vec::with_capacity(records.len());
    let mut jumps = 0;
    let mut step = 0;
    let measure = |psi: &PureState| observables.iter().map(|o| psi.expectation(&o.op)).collect();
    for &target in &records {
        while step < target {
            step += 1;
            match config.method {
                Method::Qt2 => jumps += engine.step_qt2(&mut psi, &mut rng)?.len(),
                Method::Qt1 => match engine.step_qt1(&mut psi, &mut rng)? {
                    Qt1Outcome::Continue(j) => jumps += j.len(),
                    Qt1Outcome::Discard(_) => {
                        return Ok(TrajectoryRecord {
                            seed: child_seed(config.master_seed, index as u64),
                            values,
                            discarded_at: Some(step as f64 * config.dt),
                            jumps,
                            final_state: psi,
                        })
                    }
                },
            }
        }
        values.push(measure(&psi));
    }
    Ok(TrajectoryRecord {
        seed: child_seed(config.master_seed, index as u64),
        values,
        discarded_at: None,
        jumps,
        final_state: psi,
    })
}

/// Ensemble means over the trajectories alive at each record time.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnsembleEstimate {
    pub times: Vec<f64>,
    pub names: Vec<String>,
    /// `mean[o][k]` for observable `o` at record `k`.
    pub mean: Vec<Vec<f64>>,
    pub stderr: Vec<Vec<f64>>,
    /// Fraction of trajectories not yet discarded (identically 1 for QT2).
    pub survival_fraction: Vec<f64>,
    pub survivors: Vec<usize>,
    pub n_traj: usize,
    pub total_jumps: usize,
    pub seeds: Vec<u64>,
}

impl EnsembleEstimate {
    pub fn series(&self, name: &str) -> Option<(&[f64], &[f64])> {
        let o = self.names.iter().position(|n| n == name)?;
        Some((&self.mean[o], &self.stderr[o]))
    }

    /// `time,<name>_mean,<name>_stderr,…,survival_fraction`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("time");
        for n in &self.names {
            let _ = write!(s, ",{n}_mean,{n}_stderr");
        }
        s.push_str(",survival_fraction\n");
        for (k, t) in self.times.iter().enumerate() {
            let _ = write!(s, "{t}");
            for o in 0..self.names.len() {
                let _ = write!(s, ",{},{}", self.mean[o][k], self.stderr[o][k]);
            }
            let _ = writeln!(s, ",{}", self.survival_fraction[k]);
        }
        s
    }
}

/// Runs `config.n_traj` trajectories with child seeds `(master_seed, i)` and
/// reduces them in ascending index, so results do not depend on threading.
pub fn run_ensemble(
    spec: &OpenSystemSpec,
    psi0: &PureState,
    config: &TrajectoryConfig,
    observables: &[Observable],
) -> Result<EnsembleEstimate> {
    config.validate()?;
    let engine = TrajectoryEngine::new(spec, config.dt, config.splitting)?;
    engine.check_dim(psi0)?;
    for o in observables {
        if o.op.shape() != (engine.dim(), engine.dim()) {
            return Err(Error::Dimension {
                op: "run_ensemble",
                detail: format!("observable `{}` has shape {:?}", o.name, o.op.shape()),
            });
        }
    }
    let times: Vec<f64> = config
        .record_steps()
        .iter()
        .map(|&s| s as f64 * config.dt)
        .collect();
    let (nt, no) = (times.len(), observables.len());
    let mut acc = vec![vec![MeanAccumulator::default(); nt]; no];
    let mut survivors = vec![0usize; nt];
    let mut seeds = Vec::with_capacity(config.n_traj);
    let mut total_jumps = 0;
    let indices: Vec<usize> = (0..config.n_traj).collect();
    for chunk in indices.chunks(CHUNK) {
        let runs: Vec<TrajectoryRecord> = chunk
            .par_iter()
            .map(|&i| run_trajectory(&engine, psi0, config, observables, i))
            .collect::<Result<_>>()?;
        for run in runs {
            seeds.push(run.seed);
            total_jumps += run.jumps;
            for (k, vals) in run.values.iter().enumerate() {
                survivors[k] += 1;
                for (o, &v) in vals.iter().enumerate() {
                    acc[o][k].push(v);
                }
            }
        }
    }
    if survivors[nt - 1] == 0 {
        return Err(Error::EmptyEnsemble {
            n_traj: config.n_traj,
        });
    }
    Ok(EnsembleEstimate {
        names: observables.iter().map(|o| o.name.clone()).collect(),
        mean: acc.iter().map(|a| a.iter().map(MeanAccumulator::mean).collect()).collect(),
        stderr: acc.iter().map(|a| a.iter().map(MeanAccumulator::stderr).collect()).collect(),
        survival_fraction: survivors
            .iter()
            .map(|&s| s as f64 / config.n_traj as f64)
            .collect(),
        survivors,
        n_traj: config.n_traj,
        total_jumps,
        seeds,
        times,
    })
}
