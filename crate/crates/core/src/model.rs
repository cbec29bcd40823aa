//! Open-system specifications: a Hamiltonian plus jump channels, each with
//! its own rate `γ_μ` and detection efficiency `η_μ`, and builders for the
//! two-level atom, the number-monitored chain and the skin chain.
//!
//! Conventions:
//! * two-level atom basis is `(|e⟩, |g⟩)`, index 0 is the excited state;
//! * chain sites are numbered `1..=L` left to right in the physics and
//!   stored 0-based;
//! * for quadratic fermion specs the Hamiltonian is the single-particle
//!   matrix `h` with `H = Σ h_ij a†_i a_j`, and every channel is
//!   `L = d†_α d_α` for a normalized mode vector `α`.

use serde::{Deserialize, Serialize};

use crate::error::{check_range, Error, Result};
use crate::gaussian::ModeVector;
use crate::linalg::{ComplexMatrix, C64, I};

/// Tolerance for the Hermiticity of a specified Hamiltonian.
pub const HAMILTONIAN_HERMITIAN_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Representation {
    /// Operators act on a `dim`-dimensional Hilbert space.
    FewLevel { dim: usize },
    /// Free fermions on `sites` sites; operators are single-particle data.
    QuadraticFermion { sites: usize },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum JumpOperator {
    Dense(ComplexMatrix),
    Mode(ModeVector),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JumpChannel {
    operator: JumpOperator,
    rate: f64,
    efficiency: f64,
}

impl JumpChannel {
    pub fn new(operator: JumpOperator, rate: f64, efficiency: f64) -> Result<Self> {
        check_range("gamma", rate, 0.0, f64::INFINITY, "gamma >= 0")?;
        check_range("eta", efficiency, 0.0, 1.0, "eta in [0, 1]")?;
        Ok(Self {
            operator,
            rate,
            efficiency,
        })
    }

    pub fn dense(op: ComplexMatrix, rate: f64, efficiency: f64) -> Result<Self> {
        Self::new(JumpOperator::Dense(op), rate, efficiency)
    }

    pub fn mode(mode: ModeVector, rate: f64, efficiency: f64) -> Result<Self> {
        Self::new(JumpOperator::Mode(mode), rate, efficiency)
    }

    pub fn operator(&self) -> &JumpOperator {
        &self.operator
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn efficiency(&self) -> f64 {
        self.efficiency
    }

    /// The dense operator of a few-level channel.
    pub fn dense_operator(&self) -> Option<&ComplexMatrix> {
        match &self.operator {
            JumpOperator::Dense(m) => Some(m),
            JumpOperator::Mode(_) => None,
        }
    }

    pub fn mode_vector(&self) -> Option<&ModeVector> {
        match &self.operator {
            JumpOperator::Mode(m) => Some(m),
            JumpOperator::Dense(_) => None,
        }
    }

    /// `L†L` as a matrix: the full operator for few-level channels, the
    /// single-particle coefficient matrix `αα†` of `d†_α d_α` otherwise.
    pub fn number_operator(&self) -> ComplexMatrix {
        match &self.operator {
            JumpOperator::Dense(l) => l.adjoint().matmul(l),
            JumpOperator::Mode(m) => m.projector(),
        }
    }

    fn rescaled(&self, rate: f64, efficiency: f64) -> Self {
        Self {
            operator: self.operator.clone(),
            rate,
            efficiency,
        }
    }
}

/// `H` and jump channels of an open system. Immutable once built.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OpenSystemSpec {
    label: String,
    representation: Representation,
    hamiltonian: ComplexMatrix,
    channels: Vec<JumpChannel>,
}

impl OpenSystemSpec {
    pub fn new(
        label: impl Into<String>,
        representation: Representation,
        hamiltonian: ComplexMatrix,
        channels: Vec<JumpChannel>,
    ) -> Result<Self> {
        let n = match representation {
            Representation::FewLevel { dim } => dim,
            Representation::QuadraticFermion { sites } => sites,
        };
        if n == 0 {
            return Err(Error::Dimension {
                op: "OpenSystemSpec",
                detail: "zero-dimensional system".into(),
            });
        }
        if hamiltonian.shape() != (n, n) {
            return Err(Error::Dimension {
                op: "OpenSystemSpec",
                detail: format!("hamiltonian {:?} for dimension {n}", hamiltonian.shape()),
            });
        }
        let herm = hamiltonian.hermiticity_error();
        if herm > HAMILTONIAN_HERMITIAN_TOL {
            return Err(Error::Contract(format!(
                "hamiltonian not Hermitian (‖H − H†‖_max = {herm:e})"
            )));
        }
        for (mu, ch) in channels.iter().enumerate() {
            match (&ch.operator, representation) {
                (JumpOperator::Dense(l), Representation::FewLevel { dim }) => {
                    if l.shape() != (dim, dim) {
                        return Err(Error::Dimension {
                            op: "OpenSystemSpec",
                            detail: format!("channel {mu} operator {:?}", l.shape()),
                        });
                    }
                }
                (JumpOperator::Mode(m), Representation::QuadraticFermion { sites }) => {
                    if m.len() != sites {
                        return Err(Error::Dimension {
                            op: "OpenSystemSpec",
                            detail: format!("channel {mu} mode of length {}", m.len()),
                        });
                    }
                }
                _ => {
                    return Err(Error::Contract(format!(
                        "channel {mu} operator kind does not match the representation"
                    )))
                }
            }
        }
        Ok(Self {
            label: label.into(),
            representation,
            hamiltonian,
            channels,
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn representation(&self) -> Representation {
        self.representation
    }

    /// Hilbert-space dimension (few-level) or number of sites (quadratic).
    pub fn dim(&self) -> usize {
        self.hamiltonian.rows()
    }

    pub fn is_few_level(&self) -> bool {
        matches!(self.representation, Representation::FewLevel { .. })
    }

    pub fn hamiltonian(&self) -> &ComplexMatrix {
        &self.hamiltonian
    }

    pub fn channels(&self) -> &[JumpChannel] {
        &self.channels
    }

    /// Same system with every efficiency replaced by `eta`.
    pub fn with_efficiency(&self, eta: f64) -> Result<Self> {
        check_range("eta", eta, 0.0, 1.0, "eta in [0, 1]")?;
        let mut out = self.clone();
        for ch in &mut out.channels {
            ch.efficiency = eta;
        }
        Ok(out)
    }

    /// The Lindblad equation this system reduces to in the trivial class:
    /// rates `(1−η_μ)γ_μ` and no detection.
    pub fn reduced_lme(&self) -> Self {
        let mut out = self.clone();
        out.channels = self
            .channels
            .iter()
            .map(|ch| ch.rescaled((1.0 - ch.efficiency) * ch.rate, 0.0))
            .collect();
        out.label = format!("{} [reduced LME]", self.label);
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum HamiltonianScaling {
    /// `H − (i/2) Σ γ_μ L†L`: no-jump evolution of the full unraveling.
    FullGamma,
    /// `H − (i/2) Σ η_μ γ_μ L†L`: the non-Hermitian part left after the
    /// undetected jumps are folded into a pure-measurement term.
    EtaGamma,
}

/// Non-Hermitian effective Hamiltonian (full matrix or single-particle).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EffectiveHamiltonian {
    pub matrix: ComplexMatrix,
    pub scaling: HamiltonianScaling,
}

impl EffectiveHamiltonian {
    /// The matrix with its scalar part `(Tr/n)·I` imaginary component
    /// removed. For the skin chain this is the Hatano–Nelson hopping matrix:
    /// the uniform decay `−(i/2)ηγ·I` only rescales the norm, which every
    /// engine normalizes away.
    pub fn hatano_nelson_form(&self) -> ComplexMatrix {
        let n = self.matrix.rows();
        let shift = self.matrix.trace().im / n as f64;
        let mut m = self.matrix.clone();
        for i in 0..n {
            m[(i, i)] -= I * shift;
        }
        m
    }
}

pub fn effective_hamiltonian(
    spec: &OpenSystemSpec,
    scaling: HamiltonianScaling,
) -> EffectiveHamiltonian {
    let mut matrix = spec.hamiltonian().clone();
    for ch in spec.channels() {
        let s = match scaling {
            HamiltonianScaling::FullGamma => ch.rate(),
            HamiltonianScaling::EtaGamma => ch.efficiency() * ch.rate(),
        };
        if s == 0.0 {
            continue;
        }
        matrix -= &ch.number_operator().scale(I * (0.5 * s));
    }
    EffectiveHamiltonian { matrix, scaling }
}

/// Two-level atom with Rabi coupling `J` and spontaneous emission at rate
/// `γ`, photons detected with efficiency `η`: `H = J(|e⟩⟨g| + h.c.)`,
/// `L = |g⟩⟨e|`, basis `(|e⟩, |g⟩)`.
pub fn build_two_level_atom(coupling: f64, gamma: f64, eta: f64) -> Result<OpenSystemSpec> {
    check_range("J", coupling, f64::MIN, f64::MAX, "finite J")?;
    let h = ComplexMatrix::from_real(&[&[0.0, coupling], &[coupling, 0.0]])?;
    let lowering = ComplexMatrix::from_real(&[&[0.0, 0.0], &[1.0, 0.0]])?;
    let channel = JumpChannel::dense(lowering, gamma, eta)?;
    OpenSystemSpec::new(
        format!("two-level-atom(J={coupling},gamma={gamma},eta={eta})"),
        Representation::FewLevel { dim: 2 },
        h,
        vec![channel],
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Boundary {
    Periodic,
    Open,
}

/// Nearest-neighbour hopping matrix `h` with `H = J Σ (a†_l a_{l+1} + h.c.)`.
pub fn hopping_matrix(sites: usize, hopping: f64, boundary: Boundary) -> ComplexMatrix {
    let mut h = ComplexMatrix::zeros(sites, sites);
    let bonds = match boundary {
        Boundary::Open => sites.saturating_sub(1),
        Boundary::Periodic if sites > 2 => sites,
        Boundary::Periodic => sites.saturating_sub(1),
    };
    for l in 0..bonds {
        let r = (l + 1) % sites;
        h[(l, r)] = C64::new(hopping, 0.0);
        h[(r, l)] = C64::new(hopping, 0.0);
    }
    h
}

/// Free-fermion chain whose every site number `n̂_l` is monitored with rate
/// `γ` and efficiency `η`.
pub fn build_monitored_chain(
    sites: usize,
    hopping: f64,
    gamma: f64,
    eta: f64,
    boundary: Boundary,
) -> Result<OpenSystemSpec> {
    if sites < 1 {
        return Err(Error::Range {
            name: "L",
            value: sites as f64,
            allowed: "L >= 1",
        });
    }
    let channels = (0..sites)
        .map(|x| JumpChannel::mode(ModeVector::site(sites, x), gamma, eta))
        .collect::<Result<Vec<_>>>()?;
    OpenSystemSpec::new(
        format!("monitored-chain(L={sites},J={hopping},gamma={gamma},eta={eta},{boundary:?})"),
        Representation::QuadraticFermion { sites },
        hopping_matrix(sites, hopping, boundary),
        channels,
    )
}

/// Open chain with bond channels `L_l = d†_l d_l`, `d_l = (a_l + i a_{l+1})/√2`
/// at rate `γ` for `l = 1..L−1`, and edge channels `n̂_1`, `n̂_L` at rate
/// `γ/2`. Channel order: `n̂_1`, `d_1 … d_{L−1}`, `n̂_L`.
pub fn build_skin_chain(sites: usize, hopping: f64, gamma: f64, eta: f64) -> Result<OpenSystemSpec> {
    if sites < 2 {
        return Err(Error::Range {
            name: "L",
            value: sites as f64,
            allowed: "L >= 2",
        });
    }
    if gamma > hopping.abs() {
        log::warn!("skin chain with gamma = {gamma} > J = {hopping}; results outside the usual gamma <= J regime");
    }
    let mut channels = Vec::with_capacity(sites + 1);
    channels.push(JumpChannel::mode(ModeVector::site(sites, 0), gamma / 2.0, eta)?);
    for l in 0..sites - 1 {
        channels.push(JumpChannel::mode(ModeVector::skin_bond(sites, l), gamma, eta)?);
    }
    channels.push(JumpChannel::mode(
        ModeVector::site(sites, sites - 1),
        gamma / 2.0,
        eta,
    )?);
    OpenSystemSpec::new(
        format!("skin-chain(L={sites},J={hopping},gamma={gamma},eta={eta})"),
        Representation::QuadraticFermion { sites },
        hopping_matrix(sites, hopping, Boundary::Open),
        channels,
    )
}
