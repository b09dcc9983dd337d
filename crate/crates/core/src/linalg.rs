//! Dense complex linear algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const I: C64 = C64::new(0.0, 1.0);

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(c)
}

pub fn norm1(a: &CMatrix) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn to_faer(a: &CMatrix) -> faer::Mat<C64> {
    faer::Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

fn from_faer(a: faer::MatRef<'_, C64>) -> CMatrix {
    CMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

/// Largest singular value.
pub fn norm2(a: &CMatrix) -> f64 {
    singular_values(a).first().copied().unwrap_or(0.0)
}

/// Singular values in non-increasing order.
pub fn singular_values(a: &CMatrix) -> Vec<f64> {
    if a.is_empty() {
        return Vec::new();
    }
    to_faer(a).singular_values().expect("SVD converges")
}

/// Thin SVD `a = U diag(s) V^*` with non-increasing `s`.
pub fn thin_svd(a: &CMatrix) -> (CMatrix, Vec<f64>, CMatrix) {
    let svd = to_faer(a).thin_svd().expect("SVD converges");
    let s = svd.S().column_vector().iter().copied().map(|z: C64| z.re).collect();
    (from_faer(svd.U()), s, from_faer(svd.V()))
}

/// Numerical rank with threshold `sigma_max * max(rows, cols) * rel`.
pub fn rank(a: &CMatrix, rel: f64) -> usize {
    let s = singular_values(a);
    let smax = s.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return 0;
    }
    let thr = smax * (a.nrows().max(a.ncols()) as f64) * rel;
    s.iter().filter(|&&x| x > thr).count()
}

/// Orthonormal basis of the dominant `k`-dimensional left singular subspace.
pub fn dominant_range(a: &CMatrix, k: usize) -> CMatrix {
    full_left_singular(a).columns(0, k).into_owned()
}

/// Left singular vectors of `a` completed to a unitary basis, ordered by
/// non-increasing singular value.
fn full_left_singular(a: &CMatrix) -> CMatrix {
    let svd = to_faer(a).svd().expect("SVD converges");
    from_faer(svd.U())
}

/// Orthonormal basis for the range of `a` using the given relative rank threshold.
pub fn range_basis(a: &CMatrix, rel: f64) -> CMatrix {
    let r = rank(a, rel);
    dominant_range(a, r)
}

/// Orthonormal basis of the null space of `a`.
pub fn null_basis(a: &CMatrix, rel: f64) -> CMatrix {
    let n = a.ncols();
    let r = rank(a, rel);
    // Null space of a = orthogonal complement of the range of a^*.
    full_left_singular(&a.adjoint()).columns(r, n - r).into_owned()
}

pub fn eigenvalues(a: &CMatrix) -> Result<Vec<C64>> {
    if a.is_empty() {
        return Ok(Vec::new());
    }
    to_faer(a).eigenvalues().map_err(|_| Error::EigenFailure)
}

/// Spectral projector onto the invariant subspace of the eigenvalues flagged
/// in `inside`, along the complementary invariant subspace.
///
/// The two subspaces are read off as ranges of the annihilating products
/// `prod_{outside}(A - l)` and `prod_{inside}(A - l)`, which stays valid for
/// repeated or defective eigenvalues as long as the two groups are disjoint.
pub fn spectral_projector(a: &CMatrix, eigs: &[C64], inside: &[bool]) -> Result<CMatrix> {
    let d = a.nrows();
    let k = inside.iter().filter(|&&b| b).count();
    if k == 0 {
        return Ok(CMatrix::zeros(d, d));
    }
    if k == d {
        return Ok(CMatrix::identity(d, d));
    }
    let scale = norm1(a).max(1.0);
    let product = |pick: bool| {
        let mut p = CMatrix::identity(d, d);
        for (l, &ins) in eigs.iter().zip(inside) {
            if ins == pick {
                let mut f = a - CMatrix::identity(d, d) * *l;
                f /= c(scale.max(l.norm()));
                p = f * p;
            }
        }
        p
    };
    let u_in = dominant_range(&product(false), k);
    let u_out = dominant_range(&product(true), d - k);
    let mut v = CMatrix::zeros(d, d);
    v.view_mut((0, 0), (d, k)).copy_from(&u_in);
    v.view_mut((0, k), (d, d - k)).copy_from(&u_out);
    let vinv = v.clone().try_inverse().ok_or(Error::EigenFailure)?;
    let mut sel = CMatrix::zeros(d, d);
    for i in 0..k {
        sel[(i, i)] = c(1.0);
    }
    Ok(&v * sel * vinv)
}

const PADE13: [f64; 14] = [
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
const THETA13: f64 = 5.371920351148152;

/// Norm budget past which the exponential is refused.
pub const EXPM_NORM_BUDGET: f64 = 1e8;

/// Matrix exponential by degree-13 Padé approximation with scaling and squaring.
pub fn expm(a: &CMatrix) -> Result<CMatrix> {
    let n = a.nrows();
    let norm = norm1(a);
    if !norm.is_finite() || norm > EXPM_NORM_BUDGET {
        return Err(Error::OverflowRisk { norm });
    }
    if norm == 0.0 {
        return Ok(CMatrix::identity(n, n));
    }
    let s = if norm > THETA13 { (norm / THETA13).log2().ceil() as i32 } else { 0 };
    let a = a * c(0.5f64.powi(s));
    let id = CMatrix::identity(n, n);
    let b = &PADE13;
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let cb = |x: f64| c(x);
    let u_inner = &a6 * (&a6 * cb(b[13]) + &a4 * cb(b[11]) + &a2 * cb(b[9]));
    let u = &a * (u_inner + &a6 * cb(b[7]) + &a4 * cb(b[5]) + &a2 * cb(b[3]) + &id * cb(b[1]));
    let v_inner = &a6 * (&a6 * cb(b[12]) + &a4 * cb(b[10]) + &a2 * cb(b[8]));
    let v = v_inner + &a6 * cb(b[6]) + &a4 * cb(b[4]) + &a2 * cb(b[2]) + &id * cb(b[0]);
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q.lu().solve(&p).ok_or(Error::OverflowRisk { norm })?;
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}

/// `(exp(t a), int_0^t exp(s a) ds)` via the augmented block exponential.
pub fn expm_with_integral(a: &CMatrix, t: f64) -> Result<(CMatrix, CMatrix)> {
    let n = a.nrows();
    let mut big = CMatrix::zeros(2 * n, 2 * n);
    big.view_mut((0, 0), (n, n)).copy_from(&(a * c(t)));
    big.view_mut((0, n), (n, n)).copy_from(&(CMatrix::identity(n, n) * c(t)));
    let e = expm(&big)?;
    Ok((e.view((0, 0), (n, n)).into_owned(), e.view((0, n), (n, n)).into_owned()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &CMatrix, b: &CMatrix, tol: f64) -> bool {
        (a - b).iter().all(|z| z.norm() <= tol)
    }

    #[test]
    fn expm_of_diagonal_and_rotation() {
        let a = CMatrix::from_diagonal(&CVector::from_vec(vec![c(-3.0), C64::new(0.0, 2.0)]));
        let e = expm(&a).unwrap();
        assert!((e[(0, 0)] - c((-3.0f64).exp())).norm() < 1e-14);
        assert!((e[(1, 1)] - C64::new(2.0f64.cos(), 2.0f64.sin())).norm() < 1e-14);

        let rot = CMatrix::from_row_slice(2, 2, &[c(0.0), c(-7.5), c(7.5), c(0.0)]);
        let e = expm(&rot).unwrap();
        let want = CMatrix::from_row_slice(
            2,
            2,
            &[c(7.5f64.cos()), c(-7.5f64.sin()), c(7.5f64.sin()), c(7.5f64.cos())],
        );
        assert!(close(&e, &want, 1e-13));
    }

    #[test]
    fn expm_nilpotent_is_polynomial() {
        let a = CMatrix::from_row_slice(3, 3, &[
            c(0.0), c(2.0), c(1.0),
            c(0.0), c(0.0), c(3.0),
            c(0.0), c(0.0), c(0.0),
        ]);
        let want = CMatrix::identity(3, 3) + &a + &a * &a * c(0.5);
        assert!(close(&expm(&a).unwrap(), &want, 1e-13));
    }

    #[test]
    fn integral_block_matches_closed_form() {
        let a = CMatrix::from_row_slice(2, 2, &[c(-1.0), c(0.3), c(0.0), c(-2.0)]);
        let (e, j) = expm_with_integral(&a, 0.7).unwrap();
        // int_0^t e^{sA} ds = A^{-1}(e^{tA} - I) for invertible A.
        let want = a.clone().try_inverse().unwrap() * (&e - CMatrix::identity(2, 2));
        assert!(close(&j, &want, 1e-14));
    }

    #[test]
    fn projector_handles_defective_block() {
        // Jordan block at 0 plus a simple eigenvalue at 5.
        let a = CMatrix::from_row_slice(3, 3, &[
            c(0.0), c(1.0), c(0.2),
            c(0.0), c(0.0), c(0.4),
            c(0.0), c(0.0), c(5.0),
        ]);
        let eigs = eigenvalues(&a).unwrap();
        let inside: Vec<bool> = eigs.iter().map(|l| l.norm() < 1.0).collect();
        let p = spectral_projector(&a, &eigs, &inside).unwrap();
        assert!(close(&(&p * &p), &p, 1e-10));
        assert!(close(&(&p * &a), &(&a * &p), 1e-10));
        assert!((p.trace() - c(2.0)).norm() < 1e-10);
    }

    #[test]
    fn null_and_range_are_complementary() {
        let a = CMatrix::from_row_slice(2, 3, &[c(1.0), c(2.0), c(3.0), c(2.0), c(4.0), c(6.0)]);
        let n = null_basis(&a, 1e-10);
        assert_eq!(n.ncols(), 2);
        assert!((&a * &n).iter().all(|z| z.norm() < 1e-12));
        assert_eq!(range_basis(&a, 1e-10).ncols(), 1);
    }
}
