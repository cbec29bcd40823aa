//! Jordan–Wigner embedding of quadratic fermion specs into the occupation
//! basis.
//!
//! Basis index `b` of an `L`-site chain has bit `L−1−x` set when site `x`
//! (0-based) is occupied, so site 1 is the most significant bit and the
//! two-site order is `(00, 01, 10, 11)`. The annihilator of site `x` carries
//! the string sign `(−1)^{number of occupied sites before x}`.

use crate::error::{Error, Result};
use crate::gaussian::GaussianState;
use crate::linalg::{hermitian_eigenvalues, ComplexMatrix, C64, ZERO};
use crate::model::{JumpChannel, OpenSystemSpec, Representation};

use super::PureState;

/// Largest chain accepted by [`fock_embed`]. Operators are stored densely,
/// `2^L × 2^L` each.
pub const FOCK_MAX_SITES: usize = 12;

/// Dense few-level image of a quadratic spec plus helpers on the Fock space.
#[derive(Clone, Debug)]
pub struct FockEmbedding {
    sites: usize,
    spec: OpenSystemSpec,
}

#[inline]
fn mask(sites: usize, x: usize) -> usize {
    1 << (sites - 1 - x)
}

/// `(−1)^{occupied sites before x}`.
#[inline]
fn string_sign(sites: usize, b: usize, x: usize) -> f64 {
    let before = b >> (sites - x);
    if before.count_ones().is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// `a_x |b⟩ = sign |b'⟩`, or `None` if site `x` is empty.
#[inline]
fn annihilate_basis(sites: usize, b: usize, x: usize) -> Option<(f64, usize)> {
    let m = mask(sites, x);
    (b & m != 0).then(|| (string_sign(sites, b, x), b ^ m))
}

/// `a†_x |b⟩ = sign |b'⟩`, or `None` if site `x` is occupied.
#[inline]
fn create_basis(sites: usize, b: usize, x: usize) -> Option<(f64, usize)> {
    let m = mask(sites, x);
    (b & m == 0).then(|| (string_sign(sites, b, x), b | m))
}

fn check_sites(sites: usize) -> Result<()> {
    if sites == 0 || sites > FOCK_MAX_SITES {
        return Err(Error::Capacity(format!(
            "Fock embedding of {sites} sites; supported range is 1..={FOCK_MAX_SITES}"
        )));
    }
    Ok(())
}

/// Canonical anticommutators on every basis state:
/// `{a_i, a†_j} = δ_ij`, `{a_i, a_j} = 0`.
fn verify_car(sites: usize) -> Result<()> {
    let dim = 1usize << sites;
    let fail = |what: &str, i: usize, j: usize| {
        Err(Error::Contract(format!(
            "Jordan–Wigner operators violate {what} for sites ({i}, {j})"
        )))
    };
    for b in 0..dim {
        for i in 0..sites {
            for j in 0..sites {
                // {a_i, a†_j}|b⟩
                let mut acc: Vec<(usize, f64)> = Vec::with_capacity(2);
                if let Some((s1, b1)) = create_basis(sites, b, j) {
                    if let Some((s2, b2)) = annihilate_basis(sites, b1, i) {
                        acc.push((b2, s1 * s2));
                    }
                }
                if let Some((s1, b1)) = annihilate_basis(sites, b, i) {
                    if let Some((s2, b2)) = create_basis(sites, b1, j) {
                        acc.push((b2, s1 * s2));
                    }
                }
                let total = combine(&acc);
                let expected: Vec<(usize, f64)> = if i == j { vec![(b, 1.0)] } else { vec![] };
                if !same(&total, &expected) {
                    return fail("{a_i, a†_j} = δ_ij", i, j);
                }
                // {a_i, a_j}|b⟩
                let mut acc = Vec::with_capacity(2);
                if let Some((s1, b1)) = annihilate_basis(sites, b, j) {
                    if let Some((s2, b2)) = annihilate_basis(sites, b1, i) {
                        acc.push((b2, s1 * s2));
                    }
                }
                if let Some((s1, b1)) = annihilate_basis(sites, b, i) {
                    if let Some((s2, b2)) = annihilate_basis(sites, b1, j) {
                        acc.push((b2, s1 * s2));
                    }
                }
                if !combine(&acc).is_empty() {
                    return fail("{a_i, a_j} = 0", i, j);
                }
            }
        }
    }
    Ok(())
}

fn combine(terms: &[(usize, f64)]) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, f64)> = Vec::new();
    for &(b, v) in terms {
        match out.iter_mut().find(|(c, _)| *c == b) {
            Some(e) => e.1 += v,
            None => out.push((b, v)),
        }
    }
    out.retain(|(_, v)| v.abs() > 1e-12);
    out
}

fn same(a: &[(usize, f64)], b: &[(usize, f64)]) -> bool {
    a.len() == b.len()
        && a.iter()
            .all(|(i, v)| b.iter().any(|(j, w)| i == j && (v - w).abs() <= 1e-12))
}

/// Builds the dense few-level spec of a quadratic fermion spec.
pub fn fock_embed(spec: &OpenSystemSpec) -> Result<FockEmbedding> {
    let sites = match spec.representation() {
        Representation::QuadraticFermion { sites } => sites,
        Representation::FewLevel { .. } => {
            return Err(Error::Contract("fock_embed needs a quadratic fermion spec".into()))
        }
    };
    check_sites(sites)?;
    verify_car(sites)?;
    let h = quadratic_operator(sites, spec.hamiltonian());
    let channels = spec
        .channels()
        .iter()
        .map(|ch| {
            let mode = ch.mode_vector().expect("quadratic channel");
            JumpChannel::dense(
                quadratic_operator(sites, &mode.projector()),
                ch.rate(),
                ch.efficiency(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let embedded = OpenSystemSpec::new(
        format!("fock[{}]", spec.label()),
        Representation::FewLevel { dim: 1 << sites },
        h.hermitian_part(),
        channels,
    )?;
    Ok(FockEmbedding {
        sites,
        spec: embedded,
    })
}

/// `Σ_ij m_ij a†_i a_j` on the `2^L` occupation basis.
pub fn quadratic_operator(sites: usize, m: &ComplexMatrix) -> ComplexMatrix {
    let dim = 1usize << sites;
    let mut out = ComplexMatrix::zeros(dim, dim);
    for b in 0..dim {
        for j in 0..sites {
            let Some((sj, bj)) = annihilate_basis(sites, b, j) else {
                continue;
            };
            for i in 0..sites {
                let v = m[(i, j)];
                if v == ZERO {
                    continue;
                }
                if let Some((si, bi)) = create_basis(sites, bj, i) {
                    out[(bi, b)] += v * (si * sj);
                }
            }
        }
    }
    out
}

impl FockEmbedding {
    pub fn spec(&self) -> &OpenSystemSpec {
        &self.spec
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn dim(&self) -> usize {
        1 << self.sites
    }

    /// Basis index of an occupation pattern (`occupied[x]` for site `x`).
    pub fn basis_index(&self, occupied: &[bool]) -> usize {
        assert_eq!(occupied.len(), self.sites);
        occupied
            .iter()
            .enumerate()
            .filter(|(_, &o)| o)
            .map(|(x, _)| mask(self.sites, x))
            .sum()
    }

    /// Dense `a_x`.
    pub fn annihilation(&self, x: usize) -> ComplexMatrix {
        let dim = self.dim();
        let mut a = ComplexMatrix::zeros(dim, dim);
        for b in 0..dim {
            if let Some((s, b2)) = annihilate_basis(self.sites, b, x) {
                a[(b2, b)] = C64::new(s, 0.0);
            }
        }
        a
    }

    pub fn number_operator(&self, x: usize) -> ComplexMatrix {
        let diag: Vec<f64> = (0..self.dim())
            .map(|b| if b & mask(self.sites, x) != 0 { 1.0 } else { 0.0 })
            .collect();
        ComplexMatrix::from_real_diag(&diag)
    }

    pub fn total_number(&self) -> ComplexMatrix {
        let diag: Vec<f64> = (0..self.dim()).map(|b| b.count_ones() as f64).collect();
        ComplexMatrix::from_real_diag(&diag)
    }

    /// `ĵ_l = −i(a†_{l+1} a_l − a†_l a_{l+1})` for the bond `(l, l+1)`, 0-based.
    pub fn current_operator(&self, l: usize) -> ComplexMatrix {
        let mut m = ComplexMatrix::zeros(self.sites, self.sites);
        m[(l + 1, l)] = C64::new(0.0, -1.0);
        m[(l, l + 1)] = C64::new(0.0, 1.0);
        quadratic_operator(self.sites, &m)
    }

    /// `a_x ψ` without forming the dense operator.
    pub fn apply_annihilation(&self, x: usize, psi: &[C64]) -> Vec<C64> {
        let mut out = vec![ZERO; psi.len()];
        for (b, &amp) in psi.iter().enumerate() {
            if amp == ZERO {
                continue;
            }
            if let Some((s, b2)) = annihilate_basis(self.sites, b, x) {
                out[b2] += amp * s;
            }
        }
        out
    }

    /// `c†_v ψ = Σ_x v_x a†_x ψ`.
    pub fn apply_creation(&self, v: &[C64], psi: &[C64]) -> Vec<C64> {
        let mut out = vec![ZERO; psi.len()];
        for (b, &amp) in psi.iter().enumerate() {
            if amp == ZERO {
                continue;
            }
            for (x, &vx) in v.iter().enumerate() {
                if vx == ZERO {
                    continue;
                }
                if let Some((s, b2)) = create_basis(self.sites, b, x) {
                    out[b2] += amp * vx * s;
                }
            }
        }
        out
    }

    /// `Π_n c†_{q_n} |0⟩` for the frame of `state`.
    pub fn slater_state(&self, state: &GaussianState) -> Result<PureState> {
        if state.sites() != self.sites {
            return Err(Error::Dimension {
                op: "slater_state",
                detail: format!("{} sites, embedding has {}", state.sites(), self.sites),
            });
        }
        let mut psi = vec![ZERO; self.dim()];
        psi[0] = C64::new(1.0, 0.0);
        for col in state.frame().columns().iter().rev() {
            psi = self.apply_creation(col, &psi);
        }
        PureState::normalized(psi)
    }

    /// `C_ij = ⟨ψ| a†_i a_j |ψ⟩`.
    pub fn correlation(&self, psi: &[C64]) -> ComplexMatrix {
        let lowered: Vec<Vec<C64>> = (0..self.sites)
            .map(|x| self.apply_annihilation(x, psi))
            .collect();
        ComplexMatrix::from_fn(self.sites, self.sites, |i, j| {
            lowered[i]
                .iter()
                .zip(&lowered[j])
                .map(|(a, b)| a.conj() * b)
                .sum()
        })
    }

    /// Von Neumann entropy of sites `a..=b` (1-based) from the reduced
    /// density matrix of `ψ`. For a contiguous block the Jordan–Wigner
    /// string only dresses the complement, so the spectrum is the fermionic one.
    pub fn interval_entropy(&self, psi: &[C64], a: usize, b: usize) -> Result<f64> {
        let l = self.sites;
        if a < 1 || a > b || b > l {
            return Err(Error::InvalidInterval { a, b, len: l });
        }
        let inside: Vec<usize> = (a - 1..b).collect();
        let outside: Vec<usize> = (0..l).filter(|x| !inside.contains(x)).collect();
        let (na, nb) = (1usize << inside.len(), 1usize << outside.len());
        // ψ as an (interval × rest) matrix.
        let mut m = ComplexMatrix::zeros(na, nb);
        for (idx, &amp) in psi.iter().enumerate() {
            let pick = |sites: &[usize]| {
                sites
                    .iter()
                    .fold(0usize, |acc, &x| (acc << 1) | usize::from(idx & mask(l, x) != 0))
            };
            m[(pick(&inside), pick(&outside))] = amp;
        }
        let rho = m.matmul(&m.adjoint());
        let eig = hermitian_eigenvalues(&rho)?;
        Ok(eig
            .iter()
            .filter(|&&p| p > 1e-14)
            .map(|&p| -p * p.ln())
            .sum())
    }
}
