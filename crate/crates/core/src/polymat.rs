//! Univariate polynomials with complex coefficients and small polynomial
//! matrices: determinants, adjugates and integer root isolation.

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::linalg::{c, eigenvalues, CMatrix, C64};

pub const COEFF_TOL: f64 = 1e-12;
pub const ROOT_TOL: f64 = 1e-8;
pub const ROOT_GUARD: i64 = 64;
pub const MAX_COFACTOR_SIZE: usize = 8;

/// Dense polynomial in ascending powers. Trailing zero coefficients are
/// trimmed, so the zero polynomial has no coefficients.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Poly {
    coeffs: Vec<C64>,
}

impl Poly {
    pub fn new(mut coeffs: Vec<C64>) -> Self {
        while coeffs.last().is_some_and(|z| *z == C64::new(0.0, 0.0)) {
            coeffs.pop();
        }
        Self { coeffs }
    }

    pub fn real(coeffs: &[f64]) -> Self {
        Self::new(coeffs.iter().map(|&x| c(x)).collect())
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(z: C64) -> Self {
        Self::new(vec![z])
    }

    pub fn monomial(z: C64, k: usize) -> Self {
        let mut v = vec![C64::new(0.0, 0.0); k + 1];
        v[k] = z;
        Self::new(v)
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn coeff(&self, j: usize) -> C64 {
        self.coeffs.get(j).copied().unwrap_or_default()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn eval(&self, z: C64) -> C64 {
        self.coeffs.iter().rev().fold(C64::new(0.0, 0.0), |acc, &a| acc * z + a)
    }

    /// `sum |c_j| |x|^j`, the natural size of a value of `self` at `x`.
    pub fn magnitude_at(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, a| acc * x.abs() + a.norm())
    }

    /// Coefficient-wise conjugate: the Hermitian conjugate for real arguments.
    pub fn conj(&self) -> Self {
        Self::new(self.coeffs.iter().map(|z| z.conj()).collect())
    }

    /// Coefficient-wise modulus, used as a majorant for rounding errors.
    pub fn abs(&self) -> Self {
        Self::new(self.coeffs.iter().map(|z| c(z.norm())).collect())
    }

    pub fn scale(&self, z: C64) -> Self {
        Self::new(self.coeffs.iter().map(|a| a * z).collect())
    }

    pub fn derivative(&self) -> Self {
        Self::new(self.coeffs.iter().enumerate().skip(1).map(|(j, a)| a * j as f64).collect())
    }

    /// Drop coefficients that are indistinguishable from rounding noise,
    /// judged against a majorant polynomial of the same computation.
    pub fn cleaned(&self, majorant: &Poly, tol: f64) -> Self {
        let mut v = self.coeffs.clone();
        for (j, z) in v.iter_mut().enumerate() {
            if z.norm() <= tol * majorant.coeff(j).re.abs() {
                *z = C64::new(0.0, 0.0);
            }
        }
        Self::new(v)
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let terms: Vec<String> = self
            .coeffs
            .iter()
            .enumerate()
            .filter(|(_, z)| z.norm() > 0.0)
            .map(|(j, z)| match j {
                0 => format!("({z})"),
                1 => format!("({z})n"),
                _ => format!("({z})n^{j}"),
            })
            .collect();
        write!(f, "{}", terms.join(" + "))
    }
}

impl Add for &Poly {
    type Output = Poly;
    fn add(self, rhs: &Poly) -> Poly {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        Poly::new((0..n).map(|j| self.coeff(j) + rhs.coeff(j)).collect())
    }
}

impl Sub for &Poly {
    type Output = Poly;
    fn sub(self, rhs: &Poly) -> Poly {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        Poly::new((0..n).map(|j| self.coeff(j) - rhs.coeff(j)).collect())
    }
}

impl Mul for &Poly {
    type Output = Poly;
    fn mul(self, rhs: &Poly) -> Poly {
        if self.is_zero() || rhs.is_zero() {
            return Poly::zero();
        }
        let mut v = vec![C64::new(0.0, 0.0); self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in rhs.coeffs.iter().enumerate() {
                v[i + j] += a * b;
            }
        }
        Poly::new(v)
    }
}

impl Neg for &Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        self.scale(c(-1.0))
    }
}

/// Degree of a rational function `num / den`; `None` encodes minus infinity.
pub fn rational_degree(num: &Poly, den: &Poly) -> Option<i64> {
    Some(num.degree()? as i64 - den.degree().expect("nonzero denominator") as i64)
}

/// Row-major matrix of polynomials.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Poly>,
}

impl PolyMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![Poly::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Poly::constant(c(1.0));
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Poly) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn constant(m: &CMatrix) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |i, j| Poly::constant(m[(i, j)]))
    }

    /// `c0 + c1 n + c2 n^2 + ...` from matrix coefficients of equal shape.
    pub fn from_matrix_coeffs(coeffs: &[CMatrix]) -> Self {
        let (r, cl) = (coeffs[0].nrows(), coeffs[0].ncols());
        Self::from_fn(r, cl, |i, j| Poly::new(coeffs.iter().map(|m| m[(i, j)]).collect()))
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn max_degree(&self) -> Option<usize> {
        self.data.iter().filter_map(Poly::degree).max()
    }

    pub fn eval(&self, z: C64) -> CMatrix {
        CMatrix::from_fn(self.rows, self.cols, |i, j| self[(i, j)].eval(z))
    }

    pub fn herm_conjugate(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn abs(&self) -> Self {
        Self::from_fn(self.rows, self.cols, |i, j| self[(i, j)].abs())
    }

    pub fn cleaned(&self, majorant: &PolyMatrix, tol: f64) -> Self {
        Self::from_fn(self.rows, self.cols, |i, j| self[(i, j)].cleaned(&majorant[(i, j)], tol))
    }

    pub fn submatrix(&self, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> Self {
        Self::from_fn(rows.len(), cols.len(), |i, j| self[(rows.start + i, cols.start + j)].clone())
    }

    pub fn hstack(blocks: &[PolyMatrix]) -> Self {
        let rows = blocks[0].rows;
        let cols = blocks.iter().map(|b| b.cols).sum();
        let mut out = Self::zeros(rows, cols);
        let mut off = 0;
        for b in blocks {
            assert_eq!(b.rows, rows);
            for i in 0..rows {
                for j in 0..b.cols {
                    out[(i, off + j)] = b[(i, j)].clone();
                }
            }
            off += b.cols;
        }
        out
    }

    pub fn matmul(&self, rhs: &PolyMatrix) -> Result<PolyMatrix> {
        if self.cols != rhs.rows {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        Ok(Self::from_fn(self.rows, rhs.cols, |i, j| {
            (0..self.cols).fold(Poly::zero(), |acc, k| &acc + &(&self[(i, k)] * &rhs[(k, j)]))
        }))
    }

    pub fn determinant(&self) -> Result<Poly> {
        self.expand(true)
    }

    /// Same expansion as the determinant with every sign positive; applied to
    /// [`PolyMatrix::abs`] it bounds the coefficients of every signed term.
    pub fn permanent(&self) -> Result<Poly> {
        self.expand(false)
    }

    pub fn adjugate(&self) -> Result<PolyMatrix> {
        self.adjugate_with(true)
    }

    /// Adjugate built from permanents of minors; majorant of [`Self::adjugate`].
    pub fn adjugate_majorant(&self) -> Result<PolyMatrix> {
        self.adjugate_with(false)
    }

    fn adjugate_with(&self, signed: bool) -> Result<PolyMatrix> {
        self.check_square()?;
        let n = self.rows;
        if n == 1 {
            return Ok(Self::identity(1));
        }
        let mut out = Self::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                // adj[i][j] = (-1)^{i+j} det(A without row j and column i)
                let minor = Self::from_fn(n - 1, n - 1, |r, s| {
                    let rr = if r < j { r } else { r + 1 };
                    let ss = if s < i { s } else { s + 1 };
                    self[(rr, ss)].clone()
                });
                let m = minor.expand(signed)?;
                out[(i, j)] = if signed && (i + j) % 2 == 1 { -&m } else { m };
            }
        }
        Ok(out)
    }

    fn check_square(&self) -> Result<()> {
        if self.rows != self.cols {
            return Err(Error::DimensionMismatch(format!("{}x{} is not square", self.rows, self.cols)));
        }
        if self.rows > MAX_COFACTOR_SIZE {
            return Err(Error::SizeExceeded { size: self.rows, limit: MAX_COFACTOR_SIZE });
        }
        Ok(())
    }

    /// Laplace expansion along successive rows, memoized on column subsets.
    fn expand(&self, signed: bool) -> Result<Poly> {
        self.check_square()?;
        let n = self.rows;
        if n == 0 {
            return Ok(Poly::constant(c(1.0)));
        }
        // minors[mask] = det of rows 0..popcount(mask) restricted to columns in mask
        let mut minors: HashMap<u32, Poly> = HashMap::new();
        minors.insert(0, Poly::constant(c(1.0)));
        let mut layer: Vec<u32> = vec![0];
        for row in 0..n {
            let mut next: HashMap<u32, Poly> = HashMap::new();
            for &mask in &layer {
                let base = &minors[&mask];
                if base.is_zero() {
                    continue;
                }
                for col in 0..n {
                    if mask & (1 << col) != 0 || self[(row, col)].is_zero() {
                        continue;
                    }
                    let new_mask = mask | (1 << col);
                    // sign of moving the new column past the larger ones already chosen
                    let above = (mask >> (col + 1)).count_ones();
                    let term = &self[(row, col)] * base;
                    let term = if signed && above % 2 == 1 { -&term } else { term };
                    let entry = next.entry(new_mask).or_default();
                    *entry = &*entry + &term;
                }
            }
            layer = next.keys().copied().collect();
            minors = next;
        }
        Ok(minors.remove(&((1u32 << n) - 1)).unwrap_or_default())
    }
}

impl std::ops::Index<(usize, usize)> for PolyMatrix {
    type Output = Poly;
    fn index(&self, (i, j): (usize, usize)) -> &Poly {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for PolyMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Poly {
        &mut self.data[i * self.cols + j]
    }
}

/// Cauchy bound on the moduli of the roots.
fn root_bound(p: &Poly) -> f64 {
    let lead = p.coeffs.last().expect("nonzero").norm();
    1.0 + p.coeffs[..p.coeffs.len() - 1].iter().map(|z| z.norm() / lead).fold(0.0, f64::max)
}

fn companion_roots(p: &Poly) -> Result<Vec<C64>> {
    let deg = p.degree().unwrap_or(0);
    if deg == 0 {
        return Ok(Vec::new());
    }
    let lead = p.coeffs[deg];
    let mut comp = CMatrix::zeros(deg, deg);
    for i in 1..deg {
        comp[(i, i - 1)] = c(1.0);
    }
    for i in 0..deg {
        comp[(i, deg - 1)] = -p.coeffs[i] / lead;
    }
    eigenvalues(&comp)
}

/// Whether `p` vanishes at the integer `n` relative to its natural size there.
pub fn vanishes_at(p: &Poly, n: i64, tol: f64) -> bool {
    let x = n as f64;
    let scale = p.magnitude_at(x);
    scale == 0.0 || p.eval(c(x)).norm() <= tol * scale
}

/// Integer roots of `p`: companion-matrix candidates rounded to integers,
/// plus a scan of `|n| <= guard`, each confirmed by evaluation.
pub fn integer_roots(p: &Poly, tol: f64, guard: i64) -> Result<Vec<i64>> {
    if p.is_zero() {
        return Err(Error::IdenticallyZero);
    }
    if p.degree() == Some(0) {
        return Ok(Vec::new());
    }
    let mut cands: Vec<i64> = (-guard..=guard).collect();
    let bound = root_bound(p);
    if bound > guard as f64 {
        for z in companion_roots(p)? {
            if z.im.abs() <= 1.0 && z.re.abs() <= bound + 1.0 {
                let r = z.re.round() as i64;
                cands.extend([r - 1, r, r + 1]);
            }
        }
    }
    cands.sort_unstable();
    cands.dedup();
    Ok(cands.into_iter().filter(|&n| vanishes_at(p, n, tol)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ci(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn arithmetic_and_degree() {
        let p = Poly::real(&[1.0, 1.0]);
        let q = Poly::real(&[-1.0, 1.0]);
        assert_eq!(&p * &q, Poly::real(&[-1.0, 0.0, 1.0]));
        assert_eq!((&p - &p).degree(), None);
        assert_eq!(Poly::real(&[3.0, 0.0, 0.0]).degree(), Some(0));
        assert_eq!(Poly::real(&[0.0, 0.0, 2.0]).derivative(), Poly::real(&[0.0, 4.0]));
    }

    #[test]
    fn determinant_of_diagonal() {
        // diag(n+1, n-1) -> n^2 - 1
        let mut m = PolyMatrix::zeros(2, 2);
        m[(0, 0)] = Poly::real(&[1.0, 1.0]);
        m[(1, 1)] = Poly::real(&[-1.0, 1.0]);
        assert_eq!(m.determinant().unwrap(), Poly::real(&[-1.0, 0.0, 1.0]));
    }

    #[test]
    fn determinant_of_imaginary_entries() {
        // [[i n, 0], [0, i n]] -> -n^2
        let mut m = PolyMatrix::zeros(2, 2);
        m[(0, 0)] = Poly::monomial(ci(0.0, 1.0), 1);
        m[(1, 1)] = Poly::monomial(ci(0.0, 1.0), 1);
        assert_eq!(m.determinant().unwrap(), Poly::real(&[0.0, 0.0, -1.0]));
    }

    #[test]
    fn determinant_matches_pointwise_evaluation() {
        let m = PolyMatrix::from_fn(4, 4, |i, j| {
            Poly::new(vec![ci(i as f64 - j as f64, 0.5), ci(0.0, (i * j) as f64 * 0.25), c(0.1 * i as f64)])
        });
        let det = m.determinant().unwrap();
        for &x in &[-2.0, 0.3, 1.7] {
            let at = m.eval(c(x)).determinant();
            assert!((det.eval(c(x)) - at).norm() <= 1e-10 * (1.0 + at.norm()));
        }
    }

    #[test]
    fn adjugate_identity() {
        let m = PolyMatrix::from_fn(3, 3, |i, j| Poly::new(vec![c((i + 2 * j) as f64 % 3.0 - 1.0), ci(0.0, (i + j) as f64)]));
        let adj = m.adjugate().unwrap();
        let det = m.determinant().unwrap();
        let prod = m.matmul(&adj).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { det.clone() } else { Poly::zero() };
                let diff = &prod[(i, j)] - &want;
                assert!(diff.coeffs().iter().all(|z| z.norm() < 1e-12), "{diff}");
            }
        }
    }

    #[test]
    fn size_limit() {
        let m = PolyMatrix::identity(9);
        assert_eq!(m.determinant(), Err(Error::SizeExceeded { size: 9, limit: 8 }));
    }

    #[test]
    fn integer_roots_examples() {
        assert_eq!(integer_roots(&Poly::real(&[-4.0, 0.0, 1.0]), ROOT_TOL, ROOT_GUARD).unwrap(), vec![-2, 2]);
        assert_eq!(integer_roots(&Poly::real(&[0.0, 0.0, 1.0]), ROOT_TOL, ROOT_GUARD).unwrap(), vec![0]);
        assert_eq!(integer_roots(&Poly::zero(), ROOT_TOL, ROOT_GUARD), Err(Error::IdenticallyZero));
        // |-n^2 + 9|^2 with purely imaginary linear part vanishing
        let p = &Poly::real(&[9.0, 0.0, -1.0]) * &Poly::real(&[9.0, 0.0, -1.0]);
        assert_eq!(integer_roots(&p, ROOT_TOL, ROOT_GUARD).unwrap(), vec![-3, 3]);
        // complex root near an integer is rejected
        assert!(integer_roots(&Poly::new(vec![ci(-2.0, -0.01), c(1.0)]), ROOT_TOL, ROOT_GUARD).unwrap().is_empty());
    }

    #[test]
    fn integer_roots_beyond_guard() {
        // (n - 100)(n + 3)
        let p = &Poly::real(&[-100.0, 1.0]) * &Poly::real(&[3.0, 1.0]);
        assert_eq!(integer_roots(&p, ROOT_TOL, ROOT_GUARD).unwrap(), vec![-3, 100]);
    }

    #[test]
    fn cleaning_against_majorant() {
        let a = PolyMatrix::from_fn(2, 2, |i, j| Poly::real(&[1.0 + (i + j) as f64 / 3.0, 0.1 * i as f64]));
        // rank-one structure: rows proportional, det should vanish identically
        let mut b = a.clone();
        b[(1, 0)] = a[(0, 0)].scale(c(3.0));
        b[(1, 1)] = a[(0, 1)].scale(c(3.0));
        let det = b.determinant().unwrap();
        let maj = b.abs().permanent().unwrap();
        assert!(det.cleaned(&maj, COEFF_TOL).is_zero());
    }
}
