//! Free-fermion trajectories on Slater determinants.
//!
//! An `N`-particle Gaussian state on `L` sites is stored as an `L×N` frame
//! `Q` with orthonormal columns, `|Q⟩ = Π_n c†_{q_n} |0⟩` where
//! `c†_v = Σ_i v_i c†_i`. A quadratic exponential `exp(Σ M_ij c†_i c_j)`
//! maps the frame to `e^M Q`, and a number jump `d†_α d_α` replaces the
//! frame by `α` plus the part of `span(Q)` orthogonal to `α`.

mod engine;

pub use engine::{
    run_gaussian_ensemble, run_gaussian_trajectory, step_gaussian, GaussianEngine,
    GaussianEnsemble, GaussianRunConfig, GaussianTrajectory, WindowSummary,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    hermitian_eigenvalues, matrix_exponential, null_space, qr_decompose, ComplexMatrix, C64,
    RANK_TOLERANCE, ZERO,
};

/// Eigenvalue clipping used by the entropy.
pub const ENTROPY_EPS: f64 = 1e-12;

/// Largest tolerated `‖Q†Q − I‖_max` of a frame.
pub const FRAME_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModeRole {
    /// Number operator of one site (0-based).
    Site(usize),
    /// Bond mode `d_l = (a_l + i a_{l+1})/√2` between sites `l`, `l+1` (0-based).
    Bond(usize),
    General,
}

/// Normalized single-particle mode `α`, the creation coefficients of
/// `d†_α = Σ_i α_i c†_i`. The annihilator is `d_α = Σ_i conj(α_i) c_i`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModeVector {
    coeffs: Vec<C64>,
    role: ModeRole,
    support: Vec<usize>,
}

impl ModeVector {
    pub fn new(coeffs: Vec<C64>, role: ModeRole) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::Dimension {
                op: "ModeVector",
                detail: "empty mode".into(),
            });
        }
        let norm: f64 = coeffs.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if !norm.is_finite() || (norm - 1.0).abs() > 1e-12 {
            return Err(Error::Contract(format!("mode vector norm {norm}, expected 1")));
        }
        let support = (0..coeffs.len()).filter(|&i| coeffs[i] != ZERO).collect();
        Ok(Self {
            coeffs,
            role,
            support,
        })
    }

    /// `e_x`, the mode of `n̂_x`.
    pub fn site(len: usize, x: usize) -> Self {
        assert!(x < len, "site {x} outside chain of {len}");
        let mut coeffs = vec![ZERO; len];
        coeffs[x] = C64::new(1.0, 0.0);
        Self {
            coeffs,
            role: ModeRole::Site(x),
            support: vec![x],
        }
    }

    /// Mode of `d_l = (a_l + i a_{l+1})/√2`: creation coefficients
    /// `α_l = 1/√2`, `α_{l+1} = −i/√2`.
    pub fn skin_bond(len: usize, l: usize) -> Self {
        assert!(l + 1 < len, "bond {l} outside chain of {len}");
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut coeffs = vec![ZERO; len];
        coeffs[l] = C64::new(s, 0.0);
        coeffs[l + 1] = C64::new(0.0, -s);
        Self {
            coeffs,
            role: ModeRole::Bond(l),
            support: vec![l, l + 1],
        }
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn role(&self) -> ModeRole {
        self.role
    }

    /// Indices of the nonzero coefficients.
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    /// Coefficient matrix `αα†` of `d†_α d_α = Σ_ij α_i conj(α_j) c†_i c_j`.
    pub fn projector(&self) -> ComplexMatrix {
        let n = self.len();
        ComplexMatrix::from_fn(n, n, |i, j| self.coeffs[i] * self.coeffs[j].conj())
    }

    /// `Q†α`, using only the support of `α`.
    pub fn overlaps(&self, frame: &ComplexMatrix) -> Vec<C64> {
        let n = frame.cols();
        let mut out = vec![ZERO; n];
        for &i in &self.support {
            let a = self.coeffs[i];
            for (o, q) in out.iter_mut().zip(frame.row(i)) {
                *o += q.conj() * a;
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NeelPhase {
    /// `|1010⋯⟩`: site 1 occupied.
    OccupiedFirst,
    /// `|0101⋯⟩`: site 1 empty.
    EmptyFirst,
}

/// Slater determinant given by an orthonormal `L×N` frame.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GaussianState {
    frame: ComplexMatrix,
}

impl GaussianState {
    /// Wraps a frame that must already be orthonormal.
    pub fn new(frame: ComplexMatrix) -> Result<Self> {
        if frame.cols() > frame.rows() {
            return Err(Error::Dimension {
                op: "GaussianState",
                detail: format!("{} particles on {} sites", frame.cols(), frame.rows()),
            });
        }
        if !frame.is_finite() {
            return Err(Error::NonFinite("GaussianState frame"));
        }
        let s = Self { frame };
        let err = s.orthonormality_error();
        if err > FRAME_TOLERANCE {
            return Err(Error::Contract(format!(
                "frame columns not orthonormal (‖Q†Q − I‖ = {err:e})"
            )));
        }
        Ok(s)
    }

    /// State spanned by the columns of `v`, orthonormalized by QR.
    pub fn from_span(v: &ComplexMatrix) -> Result<Self> {
        let qr = qr_decompose(v)?;
        if qr.rank < v.cols() {
            return Err(Error::DegenerateState {
                op: "from_span",
                rank: qr.rank,
                particles: v.cols(),
            });
        }
        Ok(Self { frame: qr.q })
    }

    /// Product state with the given 0-based sites occupied.
    pub fn from_sites(sites: usize, occupied: &[usize]) -> Result<Self> {
        let mut frame = ComplexMatrix::zeros(sites, occupied.len());
        for (n, &x) in occupied.iter().enumerate() {
            if x >= sites {
                return Err(Error::Dimension {
                    op: "from_sites",
                    detail: format!("site {x} on a chain of {sites}"),
                });
            }
            frame[(x, n)] = C64::new(1.0, 0.0);
        }
        Self::new(frame)
    }

    /// Alternating occupation `|1010⋯⟩` or `|0101⋯⟩`.
    pub fn neel(sites: usize, phase: NeelPhase) -> Result<Self> {
        let first = match phase {
            NeelPhase::OccupiedFirst => 0,
            NeelPhase::EmptyFirst => 1,
        };
        let occupied: Vec<usize> = (first..sites).step_by(2).collect();
        Self::from_sites(sites, &occupied)
    }

    pub fn sites(&self) -> usize {
        self.frame.rows()
    }

    pub fn particles(&self) -> usize {
        self.frame.cols()
    }

    pub fn frame(&self) -> &ComplexMatrix {
        &self.frame
    }

    pub fn into_frame(self) -> ComplexMatrix {
        self.frame
    }

    pub(crate) fn frame_mut(&mut self) -> &mut ComplexMatrix {
        &mut self.frame
    }

    pub fn orthonormality_error(&self) -> f64 {
        let g = self.frame.adjoint().matmul(&self.frame);
        g.max_abs_diff(&ComplexMatrix::identity(self.particles()))
    }

    pub fn correlation_matrix(&self) -> ComplexMatrix {
        correlation_matrix(self)
    }

    /// Site occupations `C_xx = Σ_n |Q_xn|²`.
    pub fn occupations(&self) -> Vec<f64> {
        (0..self.sites())
            .map(|x| self.frame.row(x).iter().map(|z| z.norm_sqr()).sum())
            .collect()
    }
}

/// `C = Q* Qᵀ`, `C_ij = ⟨c†_i c_j⟩`.
pub fn correlation_matrix(state: &GaussianState) -> ComplexMatrix {
    let q = state.frame();
    let l = q.rows();
    let mut c = ComplexMatrix::zeros(l, l);
    for i in 0..l {
        let qi = q.row(i);
        for j in i..l {
            let v: C64 = qi.iter().zip(q.row(j)).map(|(a, b)| a.conj() * b).sum();
            c[(i, j)] = v;
            c[(j, i)] = v.conj();
        }
    }
    c
}

/// `−Σ [λ ln λ + (1−λ) ln(1−λ)]` over eigenvalues `λ` clipped to
/// `[ε, 1−ε]`; eigenvalues at the clip are treated as exactly 0 or 1.
pub fn binary_entropy_sum(eigenvalues: &[f64]) -> f64 {
    eigenvalues
        .iter()
        .map(|&l| {
            let l = l.clamp(ENTROPY_EPS, 1.0 - ENTROPY_EPS);
            if l <= ENTROPY_EPS || l >= 1.0 - ENTROPY_EPS {
                0.0
            } else {
                -(l * l.ln() + (1.0 - l) * (1.0 - l).ln())
            }
        })
        .sum()
}

fn check_interval(sites: usize, a: usize, b: usize) -> Result<()> {
    if a < 1 || a > b || b > sites {
        return Err(Error::InvalidInterval { a, b, len: sites });
    }
    Ok(())
}

/// Entropy of sites `a..=b` (1-based) from a correlation matrix.
pub fn entropy_from_correlation(c: &ComplexMatrix, a: usize, b: usize) -> Result<f64> {
    check_interval(c.rows(), a, b)?;
    let n = b - a + 1;
    let block = ComplexMatrix::from_fn(n, n, |i, j| c[(a - 1 + i, a - 1 + j)]);
    Ok(binary_entropy_sum(&hermitian_eigenvalues(&block)?))
}

/// Entanglement entropy of sites `a..=b` (1-based, inclusive).
pub fn entanglement_entropy(state: &GaussianState, a: usize, b: usize) -> Result<f64> {
    check_interval(state.sites(), a, b)?;
    // Only the block of C is needed.
    let q = state.frame();
    let n = b - a + 1;
    let mut block = ComplexMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v: C64 = q
                .row(a - 1 + i)
                .iter()
                .zip(q.row(a - 1 + j))
                .map(|(x, y)| x.conj() * y)
                .sum();
            block[(i, j)] = v;
            block[(j, i)] = v.conj();
        }
    }
    Ok(binary_entropy_sum(&hermitian_eigenvalues(&block)?))
}

/// Bond currents `⟨ĵ_l⟩ = −2 Im C_{l,l+1}` with
/// `ĵ_l = −i(a†_{l+1} a_l − a†_l a_{l+1})`, for `l = 1..L−1`.
pub fn bond_currents(c: &ComplexMatrix) -> Vec<f64> {
    (0..c.rows().saturating_sub(1))
        .map(|l| -2.0 * c[(l, l + 1)].im)
        .collect()
}

/// Generator `M` of the quadratic operator `Ĵ_M = Σ M_ij c†_i c_j`.
#[derive(Clone, Debug)]
pub struct QuadraticGenerator {
    matrix: ComplexMatrix,
}

impl QuadraticGenerator {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::Dimension {
                op: "QuadraticGenerator",
                detail: format!("non-square {:?}", matrix.shape()),
            });
        }
        if !matrix.is_finite() {
            return Err(Error::NonFinite("QuadraticGenerator"));
        }
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }
}

/// `𝒩 e^{Ĵ_M}|Q⟩ = 𝒩|e^M Q⟩`.
pub fn apply_quadratic_exponential(
    generator: &QuadraticGenerator,
    state: &GaussianState,
) -> Result<GaussianState> {
    let m = generator.matrix();
    if m.rows() != state.sites() {
        return Err(Error::Dimension {
            op: "apply_quadratic_exponential",
            detail: format!("generator {:?} for {} sites", m.shape(), state.sites()),
        });
    }
    let v = matrix_exponential(m)?.matmul(state.frame());
    let qr = qr_decompose(&v)?;
    if qr.rank < state.particles() {
        return Err(Error::DegenerateState {
            op: "apply_quadratic_exponential",
            rank: qr.rank,
            particles: state.particles(),
        });
    }
    Ok(GaussianState { frame: qr.q })
}

/// `⟨Q|d†_α d_α|Q⟩ = ‖Q†α‖²`.
pub fn jump_expectation(mode: &ModeVector, state: &GaussianState) -> f64 {
    mode.overlaps(state.frame()).iter().map(|z| z.norm_sqr()).sum()
}

/// `𝒩 d†_α d_α |Q⟩`.
///
/// `K = ker(Q†)` is the empty-mode complement; `W = ker([α, K]†)` is the
/// part of `span(Q)` orthogonal to `α`, i.e. the frame of `d_α|Q⟩`, and the
/// result is `[α, W]`.
pub fn apply_number_jump(mode: &ModeVector, state: &GaussianState) -> Result<GaussianState> {
    let (l, n) = (state.sites(), state.particles());
    if mode.len() != l {
        return Err(Error::Dimension {
            op: "apply_number_jump",
            detail: format!("mode of length {} on {l} sites", mode.len()),
        });
    }
    if n == l {
        return Err(Error::Contract(
            "number jump on a completely filled chain is not supported".into(),
        ));
    }
    let expectation = jump_expectation(mode, state);
    if expectation <= RANK_TOLERANCE {
        return Err(Error::ZeroAmplitudeJump { expectation });
    }
    let empty = null_space(&state.frame().adjoint());
    let alpha = ComplexMatrix::column_vector(mode.coeffs());
    let w = null_space(&alpha.hstack(&empty).adjoint());
    if w.cols() + 1 != n {
        return Err(Error::DegenerateState {
            op: "apply_number_jump",
            rank: w.cols() + 1,
            particles: n,
        });
    }
    Ok(GaussianState {
        frame: alpha.hstack(&w),
    })
}
