//! Matrix exponential by scaling and squaring with a diagonal Padé core
//! (Higham 2005, "The scaling and squaring method for the matrix exponential
//! revisited"). Orders 3, 5, 7, 9 are used for small 1-norms, otherwise the
//! order-13 approximant on `A / 2^s` followed by `s` squarings.

use super::{lu_solve, ComplexMatrix};
use crate::error::{Error, Result};

const THETA_3: f64 = 1.495585217958292e-2;
const THETA_5: f64 = 2.539398330063230e-1;
const THETA_7: f64 = 9.504178996162932e-1;
const THETA_9: f64 = 2.097847961257068e0;
const THETA_13: f64 = 5.371920351148152e0;

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const B9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// `e^A` for square `A`.
pub fn matrix_exponential(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    if !a.is_square() {
        return Err(Error::Dimension {
            op: "matrix_exponential",
            detail: format!("non-square {}x{}", a.rows(), a.cols()),
        });
    }
    if !a.is_finite() {
        return Err(Error::NonFinite("matrix_exponential input"));
    }
    let norm = a.norm_one();
    if norm <= THETA_3 {
        return pade_low(a, &B3);
    }
    if norm <= THETA_5 {
        return pade_low(a, &B5);
    }
    if norm <= THETA_7 {
        return pade_low(a, &B7);
    }
    if norm <= THETA_9 {
        return pade_low(a, &B9);
    }
    let s = (norm / THETA_13).log2().ceil().max(0.0) as i32;
    let scaled = a.scale_real(0.5f64.powi(s));
    let mut r = pade13(&scaled)?;
    for _ in 0..s {
        r = r.matmul(&r);
    }
    Ok(r)
}

/// Orders 3..9: `U = A Σ_odd b_k A^{k−1}`, `V = Σ_even b_k A^k`.
fn pade_low(a: &ComplexMatrix, b: &[f64]) -> Result<ComplexMatrix> {
    let n = a.rows();
    let a2 = a.matmul(a);
    let mut power = ComplexMatrix::identity(n);
    let mut u_inner = ComplexMatrix::identity(n).scale_real(b[1]);
    let mut v = ComplexMatrix::identity(n).scale_real(b[0]);
    for k in (2..b.len()).step_by(2) {
        power = power.matmul(&a2);
        v += &power.scale_real(b[k]);
        if k + 1 < b.len() {
            u_inner += &power.scale_real(b[k + 1]);
        }
    }
    let u = a.matmul(&u_inner);
    solve_pade(&u, &v)
}

fn pade13(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    let n = a.rows();
    let id = ComplexMatrix::identity(n);
    let a2 = a.matmul(a);
    let a4 = a2.matmul(&a2);
    let a6 = a4.matmul(&a2);
    let b = &B13;

    let u_high = a6.scale_real(b[13]) + a4.scale_real(b[11]) + a2.scale_real(b[9]);
    let u_inner = a6.matmul(&u_high)
        + a6.scale_real(b[7])
        + a4.scale_real(b[5])
        + a2.scale_real(b[3])
        + id.scale_real(b[1]);
    let u = a.matmul(&u_inner);

    let v_high = a6.scale_real(b[12]) + a4.scale_real(b[10]) + a2.scale_real(b[8]);
    let v = a6.matmul(&v_high)
        + a6.scale_real(b[6])
        + a4.scale_real(b[4])
        + a2.scale_real(b[2])
        + id.scale_real(b[0]);
    solve_pade(&u, &v)
}

/// `r = (V − U)^{-1} (V + U)`.
fn solve_pade(u: &ComplexMatrix, v: &ComplexMatrix) -> Result<ComplexMatrix> {
    let p = v + u;
    let q = v - u;
    lu_solve(&q, &p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::C64;

    /// Truncated Taylor series with rescaling, used as an independent oracle.
    fn taylor_exp(a: &ComplexMatrix, terms: usize) -> ComplexMatrix {
        let n = a.rows();
        let mut sum = ComplexMatrix::identity(n);
        let mut term = ComplexMatrix::identity(n);
        for k in 1..terms {
            term = term.matmul(a).scale_real(1.0 / k as f64);
            sum += &term;
        }
        sum
    }

    #[test]
    fn zero_gives_identity() {
        let z = ComplexMatrix::zeros(3, 3);
        assert!(matrix_exponential(&z)
            .unwrap()
            .approx_eq(&ComplexMatrix::identity(3), 0.0));
    }

    #[test]
    fn diagonal_case() {
        let a = ComplexMatrix::from_real_diag(&[1.0, -1.0]);
        let e = matrix_exponential(&a).unwrap();
        let expected = ComplexMatrix::from_real_diag(&[1f64.exp(), (-1f64).exp()]);
        assert!(e.approx_eq(&expected, 1e-14));
    }

    #[test]
    fn rotation_generator_matches_taylor_oracle() {
        let theta = 0.3;
        let a = ComplexMatrix::from_real(&[&[0.0, theta], &[-theta, 0.0]]).unwrap();
        let e = matrix_exponential(&a).unwrap();
        let expected = ComplexMatrix::from_real(&[
            &[theta.cos(), theta.sin()],
            &[-theta.sin(), theta.cos()],
        ])
        .unwrap();
        assert!(e.approx_eq(&expected, 1e-14));
        assert!(e.approx_eq(&taylor_exp(&a, 30), 1e-12));
    }

    #[test]
    fn large_norm_uses_squaring() {
        // ‖A‖₁ ≈ 12 forces s ≥ 2; compare against a Taylor oracle on A/16 squared four times.
        let a = ComplexMatrix::from_fn(4, 4, |i, j| {
            C64::new((i as f64 - j as f64) * 1.3, if i == j { -0.5 } else { 0.7 })
        });
        assert!(a.norm_one() > THETA_13);
        let mut oracle = taylor_exp(&a.scale_real(1.0 / 16.0), 40);
        for _ in 0..4 {
            oracle = oracle.matmul(&oracle);
        }
        let e = matrix_exponential(&a).unwrap();
        let rel = e.max_abs_diff(&oracle) / oracle.max_abs();
        assert!(rel < 1e-12, "relative error {rel}");
    }

    #[test]
    fn non_square_rejected() {
        let a = ComplexMatrix::zeros(2, 3);
        assert!(matches!(
            matrix_exponential(&a),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn scalar_exponential() {
        let z = C64::new(0.2, -1.7);
        let a = ComplexMatrix::from_diag(&[z]);
        let e = matrix_exponential(&a).unwrap();
        assert!((e[(0, 0)] - z.exp()).norm() < 1e-15);
    }
}
