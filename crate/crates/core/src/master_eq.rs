//! Density-matrix dynamics of few-level systems.
//!
//! Vectorization stacks columns: `vec(ρ)[i + d·j] = ρ_ij`, so that
//! `vec(AρB) = (Bᵀ ⊗ A) vec(ρ)`.
//!
//! The nonlinear term `Σ η_μ γ_μ ⟨L†L⟩ ρ` is a pure renormalization: if
//! `ρ̃(t) = e^{𝓛_lin t} ρ₀` then `ρ̃/Tr ρ̃` solves the NLME. The linear
//! generator [`lme_liouvillian`] therefore gives exact NLME states through
//! [`exact_nlme_state`].

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{check_range, Error, Result};
use crate::linalg::{
    commutator, hermitian_eigenvalues, kron, matrix_exponential, ComplexMatrix, C64, I,
};
use crate::model::OpenSystemSpec;

/// Largest `d` accepted by [`lme_liouvillian`] (`d² × d²` superoperators).
pub const LIOUVILLIAN_MAX_DIM: usize = 64;
/// Tolerance of the commutator and eigen-matrix tests in [`trivial_class_check`].
pub const TRIVIAL_TOLERANCE: f64 = 1e-10;
/// Trace deviation above which a step is renormalized.
pub const RENORMALIZE_THRESHOLD: f64 = 1e-12;
/// Invariant violation treated as divergence.
pub const DIVERGENCE_THRESHOLD: f64 = 1e-6;

/// Hermitian, unit-trace density matrix.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DensityMatrix {
    data: ComplexMatrix,
}

impl DensityMatrix {
    pub fn new(data: ComplexMatrix) -> Result<Self> {
        if !data.is_square() {
            return Err(Error::Dimension {
                op: "DensityMatrix",
                detail: format!("non-square {:?}", data.shape()),
            });
        }
        if !data.is_finite() {
            return Err(Error::NonFinite("DensityMatrix"));
        }
        let herm = data.hermiticity_error();
        if herm > 1e-10 {
            return Err(Error::Contract(format!("density matrix not Hermitian ({herm:e})")));
        }
        let tr = data.trace();
        if (tr - C64::new(1.0, 0.0)).norm() > 1e-8 {
            return Err(Error::Contract(format!("density matrix trace {tr}")));
        }
        Ok(Self { data })
    }

    /// `|ψ⟩⟨ψ|` for normalized `ψ`.
    pub fn pure(psi: &[C64]) -> Result<Self> {
        let d = psi.len();
        Self::new(ComplexMatrix::from_fn(d, d, |i, j| psi[i] * psi[j].conj()))
    }

    /// `|k⟩⟨k|` in dimension `d`.
    pub fn basis_state(d: usize, k: usize) -> Result<Self> {
        if k >= d {
            return Err(Error::Dimension {
                op: "basis_state",
                detail: format!("index {k} in dimension {d}"),
            });
        }
        let mut diag = vec![0.0; d];
        diag[k] = 1.0;
        Self::new(ComplexMatrix::from_real_diag(&diag))
    }

    pub fn dim(&self) -> usize {
        self.data.rows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.data
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.data
    }

    /// `Re Tr(Oρ)`.
    pub fn expectation(&self, op: &ComplexMatrix) -> f64 {
        trace_product(op, &self.data).re
    }

    pub fn purity(&self) -> f64 {
        trace_product(&self.data, &self.data).re
    }

    pub fn populations(&self) -> Vec<f64> {
        self.data.diagonal().iter().map(|z| z.re).collect()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        hermitian_eigenvalues(&self.data)
            .map(|v| v[0])
            .unwrap_or(f64::NAN)
    }
}

/// `Tr(AB)` without forming the product.
pub fn trace_product(a: &ComplexMatrix, b: &ComplexMatrix) -> C64 {
    let n = a.rows();
    let mut s = C64::new(0.0, 0.0);
    for i in 0..n {
        for (k, &aik) in a.row(i).iter().enumerate() {
            s += aik * b[(k, i)];
        }
    }
    s
}

/// Column-stacked `vec(ρ)`.
pub fn vectorize(rho: &ComplexMatrix) -> Vec<C64> {
    let d = rho.rows();
    let mut v = Vec::with_capacity(d * rho.cols());
    for j in 0..rho.cols() {
        for i in 0..d {
            v.push(rho[(i, j)]);
        }
    }
    v
}

pub fn unvectorize(v: &[C64], d: usize) -> ComplexMatrix {
    assert_eq!(v.len(), d * d);
    ComplexMatrix::from_fn(d, d, |i, j| v[i + d * j])
}

/// Linear map on column-stacked density matrices.
#[derive(Clone, Debug)]
pub struct Superoperator {
    data: ComplexMatrix,
    dim: usize,
}

impl Superoperator {
    pub fn matrix(&self) -> &ComplexMatrix {
        &self.data
    }

    /// Dimension `d` of the underlying Hilbert space.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn apply(&self, rho: &ComplexMatrix) -> ComplexMatrix {
        unvectorize(&self.data.matvec(&vectorize(rho)), self.dim)
    }

    /// `e^{𝓛t}` as a superoperator.
    pub fn exponential(&self, t: f64) -> Result<Superoperator> {
        Ok(Superoperator {
            data: matrix_exponential(&self.data.scale_real(t))?,
            dim: self.dim,
        })
    }
}

fn require_few_level(spec: &OpenSystemSpec, op: &str) -> Result<()> {
    if !spec.is_few_level() {
        return Err(Error::Contract(format!(
            "{op} needs a few-level spec; embed quadratic specs with trajectory::fock_embed"
        )));
    }
    Ok(())
}

/// Linear part of the NLME:
/// `−i(I⊗H) + i(Hᵀ⊗I) + Σ γ [(1−η) L*⊗L − ½ I⊗L†L − ½ (L†L)ᵀ⊗I]`.
/// For `η = 0` this is the Lindbladian of the LME.
pub fn lme_liouvillian(spec: &OpenSystemSpec) -> Result<Superoperator> {
    require_few_level(spec, "lme_liouvillian")?;
    let d = spec.dim();
    if d > LIOUVILLIAN_MAX_DIM {
        return Err(Error::Capacity(format!(
            "Liouvillian of dimension {d}² exceeds the limit {LIOUVILLIAN_MAX_DIM}²; \
             use the trajectory or gaussian engines"
        )));
    }
    let id = ComplexMatrix::identity(d);
    let h = spec.hamiltonian();
    let mut data = kron(&id, h).scale(-I) + kron(&h.transpose(), &id).scale(I);
    for ch in spec.channels() {
        let l = ch.dense_operator().expect("few-level channel");
        let g = ch.rate();
        let k = l.adjoint().matmul(l);
        data += &kron(&l.conj(), l).scale_real((1.0 - ch.efficiency()) * g);
        data -= &kron(&id, &k).scale_real(0.5 * g);
        data -= &kron(&k.transpose(), &id).scale_real(0.5 * g);
    }
    Ok(Superoperator { data, dim: d })
}

/// `e^{𝓛_lin t} ρ₀` renormalized to unit trace: the exact NLME state.
pub fn exact_nlme_state(
    liouvillian: &Superoperator,
    rho0: &DensityMatrix,
    t: f64,
) -> Result<DensityMatrix> {
    let raw = liouvillian.exponential(t)?.apply(rho0.matrix());
    let tr = raw.trace().re;
    let m = raw.scale_real(1.0 / tr).hermitian_part();
    DensityMatrix::new(m)
}

/// Precomputed operators for repeated NLME right-hand sides.
#[derive(Clone, Debug)]
pub struct NlmeGenerator {
    /// `H − (i/2) Σ γ L†L`.
    heff: ComplexMatrix,
    /// `(√((1−η)γ) L)` for channels with undetected jumps.
    jumps: Vec<ComplexMatrix>,
    /// `(η γ, L†L)` for channels with detection.
    normalization: Vec<(f64, ComplexMatrix)>,
}

impl NlmeGenerator {
    pub fn new(spec: &OpenSystemSpec) -> Result<Self> {
        require_few_level(spec, "NlmeGenerator")?;
        let mut heff = spec.hamiltonian().clone();
        let mut jumps = Vec::new();
        let mut normalization = Vec::new();
        for ch in spec.channels() {
            let l = ch.dense_operator().expect("few-level channel");
            let g = ch.rate();
            let k = l.adjoint().matmul(l);
            heff -= &k.scale(I * (0.5 * g));
            let undetected = (1.0 - ch.efficiency()) * g;
            if undetected > 0.0 {
                jumps.push(l.scale_real(undetected.sqrt()));
            }
            let detected = ch.efficiency() * g;
            if detected > 0.0 {
                normalization.push((detected, k));
            }
        }
        Ok(Self {
            heff,
            jumps,
            normalization,
        })
    }

    pub fn dim(&self) -> usize {
        self.heff.rows()
    }

    /// `dρ/dt` for any square `ρ` (the trace is not assumed to be 1).
    pub fn rhs(&self, rho: &ComplexMatrix) -> Result<ComplexMatrix> {
        if rho.shape() != self.heff.shape() {
            return Err(Error::Dimension {
                op: "nlme_rhs",
                detail: format!("ρ {:?} for dimension {}", rho.shape(), self.dim()),
            });
        }
        // −i H_eff ρ + i ρ H_eff†
        let mut out = self.heff.matmul(rho).scale(-I);
        out += &rho.matmul(&self.heff.adjoint()).scale(I);
        for l in &self.jumps {
            out += &l.matmul(rho).matmul(&l.adjoint());
        }
        let s: f64 = self
            .normalization
            .iter()
            .map(|(w, k)| w * trace_product(k, rho).re)
            .sum();
        if s != 0.0 {
            out += &rho.scale_real(s);
        }
        Ok(out)
    }

    /// One classic RK4 step, without symmetrization or renormalization.
    pub fn rk4_step(&self, rho: &ComplexMatrix, dt: f64) -> Result<ComplexMatrix> {
        let k1 = self.rhs(rho)?;
        let k2 = self.rhs(&(rho + &k1.scale_real(0.5 * dt)))?;
        let k3 = self.rhs(&(rho + &k2.scale_real(0.5 * dt)))?;
        let k4 = self.rhs(&(rho + &k3.scale_real(dt)))?;
        let incr = k1 + k2.scale_real(2.0) + k3.scale_real(2.0) + k4;
        Ok(rho + &incr.scale_real(dt / 6.0))
    }
}

/// Right-hand side of the NLME,
/// `−i[H,ρ] + Σ γ(−½{L†L,ρ} + (1−η) LρL† + η ⟨L†L⟩ρ)` with
/// `⟨L†L⟩ = Tr(L†Lρ)`. Its trace is `Σ ηγ (Tr ρ − 1) ⟨L†L⟩`.
pub fn nlme_rhs(spec: &OpenSystemSpec, rho: &ComplexMatrix) -> Result<ComplexMatrix> {
    NlmeGenerator::new(spec)?.rhs(rho)
}

pub fn nlme_rk4_step(spec: &OpenSystemSpec, rho: &ComplexMatrix, dt: f64) -> Result<ComplexMatrix> {
    NlmeGenerator::new(spec)?.rk4_step(rho, dt)
}

/// A trace renormalization applied after a step.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TraceCorrection {
    pub step: usize,
    pub time: f64,
    pub deviation: f64,
}

/// Recorded trajectory of an NLME integration.
///
/// Observables: `purity`, `trace_residual` (|Tr ρ − 1| before correction),
/// `hermiticity_residual` (before symmetrization), `min_eigenvalue`, and
/// `population_k` for every basis state `k`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvolutionResult {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
    pub observables: BTreeMap<String, Vec<f64>>,
    pub trace_corrections: Vec<TraceCorrection>,
}

impl EvolutionResult {
    pub fn observable(&self, name: &str) -> Option<&[f64]> {
        self.observables.get(name).map(Vec::as_slice)
    }

    pub fn final_state(&self) -> &DensityMatrix {
        self.states.last().expect("at least the initial state")
    }

    /// One row per record; observable columns in name order.
    pub fn to_csv(&self) -> String {
        let names: Vec<&String> = self.observables.keys().collect();
        let mut s = String::from("time");
        for n in &names {
            s.push(',');
            s.push_str(n);
        }
        s.push('\n');
        for (k, t) in self.times.iter().enumerate() {
            let _ = write!(s, "{t}");
            for n in &names {
                let _ = write!(s, ",{}", self.observables[*n][k]);
            }
            s.push('\n');
        }
        s
    }
}

/// RK4 integration of the NLME recording every step.
pub fn evolve_nlme(
    spec: &OpenSystemSpec,
    rho0: &DensityMatrix,
    horizon: f64,
    dt: f64,
) -> Result<EvolutionResult> {
    evolve_nlme_strided(spec, rho0, horizon, dt, 1)
}

/// RK4 integration of the NLME recording every `stride` steps and the end.
///
/// After each step `ρ` is replaced by its Hermitian part and renormalized
/// when `|Tr ρ − 1| > 1e-12`. Violations above `1e-6` are reported as
/// divergence.
pub fn evolve_nlme_strided(
    spec: &OpenSystemSpec,
    rho0: &DensityMatrix,
    horizon: f64,
    dt: f64,
    stride: usize,
) -> Result<EvolutionResult> {
    check_range("dt", dt, f64::MIN_POSITIVE, f64::MAX, "dt > 0")?;
    check_range("T", horizon, 0.0, f64::MAX, "T >= 0")?;
    if stride == 0 {
        return Err(Error::Range {
            name: "record_stride",
            value: 0.0,
            allowed: "record_stride >= 1",
        });
    }
    let gen = NlmeGenerator::new(spec)?;
    if rho0.dim() != gen.dim() {
        return Err(Error::Dimension {
            op: "evolve_nlme",
            detail: format!("ρ0 of dimension {} for spec of {}", rho0.dim(), gen.dim()),
        });
    }
    let steps = (horizon / dt).round() as usize;
    let mut result = EvolutionResult {
        times: Vec::new(),
        states: Vec::new(),
        observables: BTreeMap::new(),
        trace_corrections: Vec::new(),
    };
    let record = |result: &mut EvolutionResult, t: f64, rho: &DensityMatrix, tr: f64, herm: f64| {
        result.times.push(t);
        let mut push = |name: String, v: f64| result.observables.entry(name).or_default().push(v);
        push("purity".into(), rho.purity());
        push("trace_residual".into(), tr);
        push("hermiticity_residual".into(), herm);
        push("min_eigenvalue".into(), rho.min_eigenvalue());
        for (k, p) in rho.populations().into_iter().enumerate() {
            push(format!("population_{k}"), p);
        }
        result.states.push(rho.clone());
    };
    let mut rho = rho0.matrix().clone();
    record(&mut result, 0.0, rho0, (rho0.matrix().trace().re - 1.0).abs(), 0.0);
    for step in 1..=steps {
        let t = step as f64 * dt;
        let next = gen.rk4_step(&rho, dt)?;
        if !next.is_finite() {
            return Err(Error::IntegrationDiverged {
                step,
                time: t,
                detail: "non-finite density matrix".into(),
            });
        }
        let herm = next.hermiticity_error();
        let mut sym = next.hermitian_part();
        let tr = sym.trace().re;
        let dev = (tr - 1.0).abs();
        if herm > DIVERGENCE_THRESHOLD || dev > DIVERGENCE_THRESHOLD {
            return Err(Error::IntegrationDiverged {
                step,
                time: t,
                detail: format!("trace deviation {dev:e}, Hermiticity error {herm:e}"),
            });
        }
        if dev > RENORMALIZE_THRESHOLD {
            log::debug!("step {step}: renormalizing trace deviation {dev:e}");
            sym = sym.scale_real(1.0 / tr);
            result.trace_corrections.push(TraceCorrection {
                step,
                time: t,
                deviation: dev,
            });
        }
        rho = sym;
        if step % stride == 0 || step == steps {
            let state = DensityMatrix { data: rho.clone() };
            record(&mut result, t, &state, dev, herm);
        }
    }
    debug_assert!(result.observables.values().all(|v| v.len() == result.times.len()));
    Ok(result)
}

/// `n(t) = 1 / (1 + (1/n₀ − 1) e^{ηγt})` for a single monitored site.
pub fn single_site_occupation(t: f64, n0: f64, gamma: f64, eta: f64) -> Result<f64> {
    if !(n0 > 0.0 && n0 <= 1.0) {
        return Err(Error::Range {
            name: "n0",
            value: n0,
            allowed: "0 < n0 <= 1",
        });
    }
    check_range("eta", eta, 0.0, 1.0, "eta in [0, 1]")?;
    check_range("gamma", gamma, 0.0, f64::MAX, "gamma >= 0")?;
    if n0 == 1.0 {
        return Ok(1.0);
    }
    Ok(1.0 / (1.0 + (1.0 / n0 - 1.0) * (eta * gamma * t).exp()))
}

/// Outcome of one sufficient condition for the trivial class.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrivialWitness {
    /// `‖K ρ₀ − λ ρ₀‖_max`, `λ = Tr(K ρ₀)`.
    pub eigen_residual: f64,
    pub lambda: f64,
    /// `‖[K, H]‖_max`.
    pub hamiltonian_commutator: f64,
    /// `max_k ‖[K, L_k]‖_max`.
    pub jump_commutator: f64,
    pub holds: bool,
}

impl TrivialWitness {
    fn evaluate(k: &ComplexMatrix, spec: &OpenSystemSpec, rho0: &ComplexMatrix) -> Self {
        let lambda = trace_product(k, rho0).re;
        let eigen_residual = k.matmul(rho0).max_abs_diff(&rho0.scale_real(lambda));
        let hamiltonian_commutator = commutator(k, spec.hamiltonian()).max_abs();
        let jump_commutator = spec
            .channels()
            .iter()
            .map(|ch| commutator(k, ch.dense_operator().expect("few-level")).max_abs())
            .fold(0.0, f64::max);
        let holds = eigen_residual <= TRIVIAL_TOLERANCE
            && hamiltonian_commutator <= TRIVIAL_TOLERANCE
            && jump_commutator <= TRIVIAL_TOLERANCE;
        Self {
            eigen_residual,
            lambda,
            hamiltonian_commutator,
            jump_commutator,
            holds,
        }
    }

    fn failure(&self) -> Option<&'static str> {
        if self.eigen_residual > TRIVIAL_TOLERANCE {
            Some("initial state is not an eigen-matrix")
        } else if self.hamiltonian_commutator > TRIVIAL_TOLERANCE {
            Some("does not commute with H")
        } else if self.jump_commutator > TRIVIAL_TOLERANCE {
            Some("does not commute with the jump operators")
        } else {
            None
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrivialClassReport {
    pub is_trivial: bool,
    /// Per-channel condition on `K_μ = L_μ†L_μ`.
    pub per_channel: Vec<TrivialWitness>,
    pub per_channel_holds: bool,
    /// Collective condition on `Γ = Σ η_μ γ_μ L_μ†L_μ`.
    pub collective: TrivialWitness,
    /// Human-readable reasons for failed conditions.
    pub failures: Vec<String>,
}

/// Sufficient conditions under which the NLME reduces to the LME with
/// rates `(1−η_μ)γ_μ`: either every `K_μ = L_μ†L_μ` or the weighted sum
/// `Γ = Σ η_μγ_μ K_μ` has `ρ₀` as eigen-matrix and commutes with `H` and
/// every `L_k`.
pub fn trivial_class_check(spec: &OpenSystemSpec, rho0: &DensityMatrix) -> Result<TrivialClassReport> {
    require_few_level(spec, "trivial_class_check")?;
    let rho = rho0.matrix();
    let mut failures = Vec::new();
    let per_channel: Vec<TrivialWitness> = spec
        .channels()
        .iter()
        .enumerate()
        .map(|(mu, ch)| {
            let w = TrivialWitness::evaluate(&ch.number_operator(), spec, rho);
            if let Some(f) = w.failure() {
                failures.push(format!("channel {mu}: L†L {f}"));
            }
            w
        })
        .collect();
    let per_channel_holds = per_channel.iter().all(|w| w.holds);
    let d = spec.dim();
    let mut gamma_op = ComplexMatrix::zeros(d, d);
    for ch in spec.channels() {
        gamma_op += &ch.number_operator().scale_real(ch.efficiency() * ch.rate());
    }
    let collective = TrivialWitness::evaluate(&gamma_op, spec, rho);
    if let Some(f) = collective.failure() {
        failures.push(format!("Γ {f}"));
    }
    Ok(TrivialClassReport {
        is_trivial: per_channel_holds || collective.holds,
        per_channel,
        per_channel_holds,
        collective,
        failures,
    })
}

/// Integrates NLME(γ, η) and LME((1−η)γ) side by side with RK4 and returns
/// the largest `‖ρ_NLME − ρ_LME‖_max` over the grid.
pub fn reduced_lme_equivalence(
    spec: &OpenSystemSpec,
    rho0: &DensityMatrix,
    horizon: f64,
    dt: f64,
) -> Result<f64> {
    let report = trivial_class_check(spec, rho0)?;
    if !report.is_trivial {
        return Err(Error::Contract(format!(
            "system is not in the trivial class: {}",
            report.failures.join("; ")
        )));
    }
    let nlme = evolve_nlme(spec, rho0, horizon, dt)?;
    let lme = evolve_nlme(&spec.reduced_lme(), rho0, horizon, dt)?;
    Ok(nlme
        .states
        .iter()
        .zip(&lme.states)
        .map(|(a, b)| a.matrix().max_abs_diff(b.matrix()))
        .fold(0.0, f64::max))
}

/// `d/dt Tr(Oρ)` under a strong symmetry `[O,H] = [O,L_μ] = 0`:
/// `Σ η_μγ_μ (⟨L†L⟩ Tr(Oρ) − Tr(O L†L ρ))`.
pub fn symmetry_drift_rate(
    spec: &OpenSystemSpec,
    rho: &DensityMatrix,
    observable: &ComplexMatrix,
) -> Result<f64> {
    require_few_level(spec, "symmetry_drift_rate")?;
    let c = commutator(observable, spec.hamiltonian()).max_abs();
    if c > TRIVIAL_TOLERANCE {
        return Err(Error::Contract(format!(
            "observable does not commute with H (‖[O,H]‖ = {c:e})"
        )));
    }
    for (mu, ch) in spec.channels().iter().enumerate() {
        let c = commutator(observable, ch.dense_operator().expect("few-level")).max_abs();
        if c > TRIVIAL_TOLERANCE {
            return Err(Error::Contract(format!(
                "observable does not commute with L_{mu} (‖[O,L]‖ = {c:e})"
            )));
        }
    }
    let r = rho.matrix();
    let o = rho.expectation(observable);
    Ok(spec
        .channels()
        .iter()
        .map(|ch| {
            let k = ch.number_operator();
            let kk = trace_product(&k, r).re;
            let ok = trace_product(&observable.matmul(&k), r).re;
            ch.efficiency() * ch.rate() * (kk * o - ok)
        })
        .sum())
}
