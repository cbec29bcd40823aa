//! Factorizations: LU solve, Householder QR, null space, Hermitian spectra.

use nalgebra::{DMatrix, SymmetricEigen};

use super::{inner, vec_norm, ComplexMatrix, C64, ONE, ZERO};
use crate::error::{Error, Result};

/// Relative rank tolerance shared by [`qr_decompose`] and [`null_space`]:
/// a pivot counts as nonzero when its modulus exceeds this times the largest
/// column norm of the factored matrix.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Hermiticity tolerance accepted by [`hermitian_eigenvalues`].
const HERMITIAN_TOL: f64 = 1e-8;

/// Solves `A X = B` by LU with partial pivoting.
pub fn lu_solve(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    let n = a.rows();
    if !a.is_square() || b.rows() != n {
        return Err(Error::Dimension {
            op: "lu_solve",
            detail: format!("A {}x{}, B {}x{}", a.rows(), a.cols(), b.rows(), b.cols()),
        });
    }
    let mut lu = a.clone();
    let mut x = b.clone();
    let m = b.cols();
    let scale = a.max_abs().max(f64::MIN_POSITIVE);
    for k in 0..n {
        let (p, pmax) = (k..n)
            .map(|i| (i, lu[(i, k)].norm()))
            .fold((k, -1.0), |acc, v| if v.1 > acc.1 { v } else { acc });
        if pmax <= f64::EPSILON * scale * 1e-3 {
            return Err(Error::Contract("lu_solve: singular matrix".into()));
        }
        if p != k {
            for j in 0..n {
                let t = lu[(k, j)];
                lu[(k, j)] = lu[(p, j)];
                lu[(p, j)] = t;
            }
            for j in 0..m {
                let t = x[(k, j)];
                x[(k, j)] = x[(p, j)];
                x[(p, j)] = t;
            }
        }
        let pivot = lu[(k, k)];
        for i in k + 1..n {
            let f = lu[(i, k)] / pivot;
            if f == ZERO {
                continue;
            }
            lu[(i, k)] = f;
            for j in k + 1..n {
                let u = lu[(k, j)];
                lu[(i, j)] -= f * u;
            }
            for j in 0..m {
                let xk = x[(k, j)];
                x[(i, j)] -= f * xk;
            }
        }
    }
    for k in (0..n).rev() {
        let pivot = lu[(k, k)];
        for j in 0..m {
            let mut s = x[(k, j)];
            for l in k + 1..n {
                s -= lu[(k, l)] * x[(l, j)];
            }
            x[(k, j)] = s / pivot;
        }
    }
    Ok(x)
}

/// Thin QR factorization `V = Q R` with rank report.
#[derive(Clone, Debug)]
pub struct QrDecomposition {
    /// `L×N`, orthonormal columns.
    pub q: ComplexMatrix,
    /// `N×N`, upper triangular.
    pub r: ComplexMatrix,
    pub rank: usize,
}

/// Householder reflector `H = I − τ v v†` acting on rows `offset..`.
struct Reflector {
    offset: usize,
    v: Vec<C64>,
    tau: f64,
}

impl Reflector {
    /// Reflector mapping `x` to `α e₁` with `α = phase(x₀)‖x‖`, or `None`
    /// when `x` is already aligned with `e₁`.
    fn annihilating(x: &[C64], offset: usize) -> (Option<Self>, C64) {
        let x0 = x[0];
        let a = x0.norm();
        let rest: f64 = x[1..].iter().map(|z| z.norm_sqr()).sum();
        if rest == 0.0 {
            return (None, x0);
        }
        let norm = (a * a + rest).sqrt();
        let phase = if a > 0.0 { x0 / a } else { ONE };
        let alpha = phase * norm;
        let mut v = x.to_vec();
        // v₀ = x₀ − α computed without cancellation.
        v[0] = -phase * (rest / (a + norm));
        let vnorm2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        (
            Some(Self {
                offset,
                v,
                tau: 2.0 / vnorm2,
            }),
            alpha,
        )
    }

    fn apply(&self, col: &mut [C64]) {
        let seg = &mut col[self.offset..];
        let w = inner(&self.v, seg) * self.tau;
        for (c, vi) in seg.iter_mut().zip(&self.v) {
            *c -= vi * w;
        }
    }
}

fn rank_threshold(a: &ComplexMatrix) -> f64 {
    RANK_TOLERANCE * a.max_column_norm()
}

/// Householder QR of a tall `L×N` matrix (`L ≥ N`). No pivoting, so the
/// factorization is a deterministic function of the input. Rank deficiency
/// is reported through `rank`, not as an error.
pub fn qr_decompose(v: &ComplexMatrix) -> Result<QrDecomposition> {
    let (l, n) = v.shape();
    if l < n {
        return Err(Error::Dimension {
            op: "qr_decompose",
            detail: format!("need rows >= cols, got {l}x{n}"),
        });
    }
    let tol = rank_threshold(v);
    let mut cols = v.columns();
    let mut reflectors = Vec::with_capacity(n);
    let mut r = ComplexMatrix::zeros(n, n);
    for k in 0..n {
        let (h, alpha) = Reflector::annihilating(&cols[k][k..], k);
        if let Some(h) = &h {
            for col in cols.iter_mut().skip(k + 1) {
                h.apply(col);
            }
        }
        r[(k, k)] = alpha;
        for j in k + 1..n {
            r[(k, j)] = cols[j][k];
        }
        reflectors.push(h);
    }
    let mut qcols: Vec<Vec<C64>> = (0..n)
        .map(|j| {
            let mut e = vec![ZERO; l];
            e[j] = ONE;
            e
        })
        .collect();
    for (k, h) in reflectors.iter().enumerate().rev() {
        if let Some(h) = h {
            for col in qcols.iter_mut().skip(k) {
                h.apply(col);
            }
        }
    }
    let rank = (0..n).filter(|&k| r[(k, k)].norm() > tol).count();
    Ok(QrDecomposition {
        q: ComplexMatrix::from_columns(&qcols, l),
        r,
        rank,
    })
}

/// Orthonormal basis of `ker A` (possibly zero columns).
///
/// Computed from a column-pivoted Householder QR of `A†`: the trailing
/// `cols(A) − rank` columns of the full orthogonal factor span the
/// orthogonal complement of `range(A†)`, which is `ker A`.
pub fn null_space(a: &ComplexMatrix) -> ComplexMatrix {
    let n = a.cols();
    let tol = rank_threshold(a);
    let b = a.adjoint(); // n × m
    let m = b.cols();
    let mut cols = b.columns();
    let mut reflectors = Vec::new();
    let mut rank = 0;
    for k in 0..m.min(n) {
        // Pivot: remaining column with the largest trailing norm.
        let (p, pnorm) = (k..m)
            .map(|j| (j, vec_norm(&cols[j][k..])))
            .fold((k, -1.0), |acc, v| if v.1 > acc.1 { v } else { acc });
        if pnorm <= tol {
            break;
        }
        cols.swap(k, p);
        let (h, _) = Reflector::annihilating(&cols[k][k..], k);
        if let Some(h) = &h {
            for col in cols.iter_mut().skip(k + 1) {
                h.apply(col);
            }
        }
        reflectors.push(h);
        rank += 1;
    }
    let kernel: Vec<Vec<C64>> = (rank..n)
        .map(|j| {
            let mut e = vec![ZERO; n];
            e[j] = ONE;
            for h in reflectors.iter().rev().flatten() {
                h.apply(&mut e);
            }
            e
        })
        .collect();
    ComplexMatrix::from_columns(&kernel, n)
}

fn to_nalgebra(a: &ComplexMatrix) -> DMatrix<C64> {
    let n = a.rows();
    DMatrix::from_fn(n, n, |i, j| (a[(i, j)] + a[(j, i)].conj()) * 0.5)
}

fn check_hermitian(a: &ComplexMatrix, op: &'static str) -> Result<()> {
    if !a.is_square() {
        return Err(Error::Dimension {
            op,
            detail: format!("non-square {}x{}", a.rows(), a.cols()),
        });
    }
    let err = a.hermiticity_error();
    if err > HERMITIAN_TOL {
        return Err(Error::Contract(format!(
            "{op}: input not Hermitian (‖A − A†‖_max = {err:e})"
        )));
    }
    Ok(())
}

/// Real eigenvalues of a Hermitian matrix, ascending. The input is
/// symmetrized as `(A + A†)/2` after the Hermiticity check.
pub fn hermitian_eigenvalues(a: &ComplexMatrix) -> Result<Vec<f64>> {
    check_hermitian(a, "hermitian_eigenvalues")?;
    let eig = SymmetricEigen::new(to_nalgebra(a));
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    Ok(vals)
}

/// Eigen-decomposition `A = U Λ U†` of a Hermitian matrix, eigenvalues
/// ascending with matching eigenvector columns.
pub fn hermitian_eigh(a: &ComplexMatrix) -> Result<(Vec<f64>, ComplexMatrix)> {
    check_hermitian(a, "hermitian_eigh")?;
    let n = a.rows();
    let eig = SymmetricEigen::new(to_nalgebra(a));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = ComplexMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    Ok((vals, vecs))
}

/// Cholesky QR for frames that are already close to orthonormal:
/// `G = V†V = R†R`, `Q = V R⁻¹`. Returns `None` if `G` is not numerically
/// positive definite, in which case callers fall back to [`qr_decompose`].
pub fn cholesky_qr(v: &ComplexMatrix) -> Option<ComplexMatrix> {
    let (l, n) = v.shape();
    let vd = v.as_slice();
    // Gram matrix, upper triangle.
    let mut g = vec![ZERO; n * n];
    for row in vd.chunks_exact(n) {
        for i in 0..n {
            let ci = row[i].conj();
            if ci == ZERO {
                continue;
            }
            for j in i..n {
                g[i * n + j] += ci * row[j];
            }
        }
    }
    // In-place upper Cholesky: G = R†R.
    let mut r = vec![ZERO; n * n];
    for i in 0..n {
        let mut d = g[i * n + i].re;
        for k in 0..i {
            d -= r[k * n + i].norm_sqr();
        }
        if !(d > 1e-8) {
            return None;
        }
        let rii = d.sqrt();
        r[i * n + i] = C64::new(rii, 0.0);
        for j in i + 1..n {
            let mut s = g[i * n + j];
            for k in 0..i {
                s -= r[k * n + i].conj() * r[k * n + j];
            }
            r[i * n + j] = s / rii;
        }
    }
    // Q = V R⁻¹, row by row: q R = v  ⇒ forward substitution.
    let mut q = ComplexMatrix::zeros(l, n);
    let qd = q.as_mut_slice();
    for (qrow, vrow) in qd.chunks_exact_mut(n).zip(vd.chunks_exact(n)) {
        for j in 0..n {
            let mut s = vrow[j];
            for k in 0..j {
                s -= qrow[k] * r[k * n + j];
            }
            qrow[j] = s / r[j * n + j].re;
        }
    }
    Some(q)
}
