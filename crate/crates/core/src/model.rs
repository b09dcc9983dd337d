//! System description, hypothesis checks, control-region geometry and the
//! per-mode matrices `B_n = -n^2 B - i n A - K`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, spectral_projector, to_complex, CMatrix, C64, I};
use crate::polymat::PolyMatrix;

pub const TAU: f64 = 2.0 * PI;
pub const DIAG_TOL: f64 = 1e-9;
pub const IMAG_TOL: f64 = 1e-9;
pub const PROJ_TOL: f64 = 1e-8;
pub const GAP_TOL: f64 = 1e-6;
/// Largest |n| probed when searching for the first mode with a clean split.
pub const SPLIT_SCAN: i64 = 512;

/// Finite union of open arcs of the circle `R / 2 pi Z`, stored as sorted,
/// disjoint intervals inside `[0, 2 pi]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct TorusSubset {
    arcs: Vec<(f64, f64)>,
}

impl TorusSubset {
    /// Arcs are given as `(start, end)` with `start < end`; they may wrap and overlap.
    pub fn new(arcs: &[(f64, f64)]) -> Result<Self> {
        let mut pieces = Vec::new();
        for &(a, b) in arcs {
            if !(a.is_finite() && b.is_finite()) || b <= a {
                return Err(Error::InvalidParameter(format!("arc ({a}, {b}) is not an open interval")));
            }
            if b - a >= TAU {
                return Ok(Self { arcs: vec![(0.0, TAU)] });
            }
            let s = a.rem_euclid(TAU);
            let e = s + (b - a);
            if e <= TAU {
                pieces.push((s, e));
            } else {
                pieces.push((s, TAU));
                pieces.push((0.0, e - TAU));
            }
        }
        if pieces.is_empty() {
            return Err(Error::EmptyRegion);
        }
        pieces.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut merged: Vec<(f64, f64)> = Vec::new();
        for (a, b) in pieces {
            match merged.last_mut() {
                Some(last) if a <= last.1 => last.1 = last.1.max(b),
                _ => merged.push((a, b)),
            }
        }
        Ok(Self { arcs: merged })
    }

    pub fn arcs(&self) -> &[(f64, f64)] {
        &self.arcs
    }

    pub fn measure(&self) -> f64 {
        self.arcs.iter().map(|(a, b)| b - a).sum()
    }

    pub fn is_full(&self) -> bool {
        self.measure() >= TAU - 1e-14
    }

    pub fn contains(&self, x: f64) -> bool {
        let x = x.rem_euclid(TAU);
        self.arcs.iter().any(|&(a, b)| a < x && x < b)
    }

    /// Connected components of the complement as `(start, length)`, where a
    /// component may wrap through 0.
    pub fn gaps(&self) -> Vec<(f64, f64)> {
        if self.is_full() {
            return Vec::new();
        }
        let n = self.arcs.len();
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let end = self.arcs[i].1;
            let next = if i + 1 < n { self.arcs[i + 1].0 } else { self.arcs[0].0 + TAU };
            if next > end {
                out.push((end, next - end));
            }
        }
        out
    }

    /// Longest connected component of the complement.
    pub fn largest_gap(&self) -> Option<(f64, f64)> {
        self.gaps().into_iter().max_by(|a, b| a.1.total_cmp(&b.1))
    }
}

impl TryFrom<Vec<(f64, f64)>> for TorusSubset {
    type Error = Error;
    fn try_from(v: Vec<(f64, f64)>) -> Result<Self> {
        Self::new(&v)
    }
}

impl From<TorusSubset> for Vec<(f64, f64)> {
    fn from(s: TorusSubset) -> Self {
        s.arcs
    }
}

/// Sup of the lengths of the connected components of the complement of `omega`.
pub fn ell_omega(omega: &TorusSubset) -> f64 {
    omega.largest_gap().map_or(0.0, |g| g.1)
}

/// Raw coefficients. `diffusion` is the parabolic block `D`; the full
/// second-order matrix is `B = diag(0, D)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemSpec {
    pub d_h: usize,
    pub d_p: usize,
    pub diffusion: DMatrix<f64>,
    pub advection: DMatrix<f64>,
    pub coupling: DMatrix<f64>,
    pub control: DMatrix<f64>,
}

impl SystemSpec {
    pub fn dim(&self) -> usize {
        self.d_h + self.d_p
    }

    pub fn validate(&self) -> Result<System> {
        System::new(self.clone())
    }
}

/// Distinct eigenvalues of the transport block with their spectral projectors.
#[derive(Clone, Debug)]
pub struct TransportSpectrum {
    pub eigenvalues: Vec<f64>,
    pub multiplicities: Vec<usize>,
    pub projectors: Vec<CMatrix>,
}

impl TransportSpectrum {
    /// Diagonalizability and reality check of a real square matrix.
    pub fn of(a: &CMatrix) -> Result<Self> {
        let n = a.nrows();
        let scale = linalg::norm2(a).max(1.0);
        let eigs = linalg::eigenvalues(a)?;
        if let Some(z) = eigs.iter().find(|z| z.im.abs() > IMAG_TOL * scale) {
            return Err(Error::H4Violated(format!("eigenvalue {z} is not real")));
        }
        // Defective eigenvalues split by about sqrt(eps); cluster generously and
        // let the reconstruction test below reject them.
        let cluster_tol = 1e-6 * scale;
        let mut reals: Vec<f64> = eigs.iter().map(|z| z.re).collect();
        reals.sort_by(f64::total_cmp);
        let mut clusters: Vec<Vec<f64>> = Vec::new();
        for x in reals {
            match clusters.last_mut() {
                Some(cl) if x - cl[cl.len() - 1] <= cluster_tol => cl.push(x),
                _ => clusters.push(vec![x]),
            }
        }
        let mut eigenvalues = Vec::new();
        let mut multiplicities = Vec::new();
        let mut projectors = Vec::new();
        let mut recon = CMatrix::zeros(n, n);
        let mut sum = CMatrix::zeros(n, n);
        for cl in &clusters {
            let mu = cl.iter().sum::<f64>() / cl.len() as f64;
            let inside: Vec<bool> = eigs.iter().map(|z| (z.re - mu).abs() <= cluster_tol * cl.len() as f64).collect();
            let p = spectral_projector(a, &eigs, &inside)?;
            if linalg::norm2(&p) > 1.0 / DIAG_TOL {
                return Err(Error::H4Violated("eigenbasis is too ill-conditioned".into()));
            }
            recon += &p * c(mu);
            sum += &p;
            eigenvalues.push(mu);
            multiplicities.push(cl.len());
            projectors.push(p);
        }
        let resid = linalg::norm2(&(&recon - a));
        if resid > DIAG_TOL * scale {
            return Err(Error::H4Violated(format!("reconstruction residual {resid:.3e}")));
        }
        if linalg::norm2(&(&sum - CMatrix::identity(n, n))) > PROJ_TOL {
            return Err(Error::H4Violated("projectors do not resolve the identity".into()));
        }
        Ok(Self { eigenvalues, multiplicities, projectors })
    }

    pub fn index_of(&self, mu: f64) -> Result<usize> {
        let scale = self.eigenvalues.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        self.eigenvalues
            .iter()
            .position(|&x| (x - mu).abs() <= 1e-6 * scale)
            .ok_or(Error::EigenvalueNotInSpectrum { mu })
    }

    pub fn projector(&self, mu: f64) -> Result<&CMatrix> {
        Ok(&self.projectors[self.index_of(mu)?])
    }

    /// Smallest modulus over the spectrum.
    pub fn slowest(&self) -> f64 {
        self.eigenvalues.iter().map(|x| x.abs()).fold(f64::INFINITY, f64::min)
    }

    /// Eigenvalue realizing the smallest modulus.
    pub fn slowest_eigenvalue(&self) -> f64 {
        *self.eigenvalues.iter().min_by(|a, b| a.abs().total_cmp(&b.abs())).expect("nonempty spectrum")
    }
}

/// A system that passed the structural hypotheses, with derived blocks cached.
#[derive(Clone, Debug)]
pub struct System {
    spec: SystemSpec,
    b: CMatrix,
    a: CMatrix,
    k: CMatrix,
    m: CMatrix,
    diffusion: CMatrix,
    diffusion_inv: CMatrix,
    transport: TransportSpectrum,
    split_radius: f64,
}

impl System {
    pub fn new(spec: SystemSpec) -> Result<Self> {
        if spec.d_h < 1 || spec.d_p < 1 {
            return Err(Error::H1Violated);
        }
        let d = spec.dim();
        let check = |name: &str, m: &DMatrix<f64>, r: usize, cl: Option<usize>| {
            if m.nrows() != r || cl.is_some_and(|cl| m.ncols() != cl) {
                return Err(Error::DimensionMismatch(format!("{name} is {}x{}", m.nrows(), m.ncols())));
            }
            if m.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} has non-finite entries")));
            }
            Ok(())
        };
        check("D", &spec.diffusion, spec.d_p, Some(spec.d_p))?;
        check("A", &spec.advection, d, Some(d))?;
        check("K", &spec.coupling, d, Some(d))?;
        check("M", &spec.control, d, None)?;
        if spec.control.ncols() == 0 {
            return Err(Error::DimensionMismatch("M has no columns".into()));
        }
        let diffusion = to_complex(&spec.diffusion);
        let d_eigs = linalg::eigenvalues(&diffusion)?;
        let min_re = d_eigs.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
        if min_re <= 0.0 {
            return Err(Error::H3Violated(min_re));
        }
        let diffusion_inv = diffusion.clone().try_inverse().ok_or(Error::H3Violated(0.0))?;
        let a = to_complex(&spec.advection);
        let transport = TransportSpectrum::of(&a.view((0, 0), (spec.d_h, spec.d_h)).into_owned())?;
        let mut b = CMatrix::zeros(d, d);
        b.view_mut((spec.d_h, spec.d_h), (spec.d_p, spec.d_p)).copy_from(&diffusion);
        Ok(Self {
            b,
            a,
            k: to_complex(&spec.coupling),
            m: to_complex(&spec.control),
            diffusion,
            diffusion_inv,
            transport,
            split_radius: 0.5 * min_re,
            spec,
        })
    }

    pub fn spec(&self) -> &SystemSpec {
        &self.spec
    }
    pub fn d_h(&self) -> usize {
        self.spec.d_h
    }
    pub fn d_p(&self) -> usize {
        self.spec.d_p
    }
    pub fn dim(&self) -> usize {
        self.spec.dim()
    }
    pub fn n_controls(&self) -> usize {
        self.spec.control.ncols()
    }
    pub fn b(&self) -> &CMatrix {
        &self.b
    }
    pub fn a(&self) -> &CMatrix {
        &self.a
    }
    pub fn k(&self) -> &CMatrix {
        &self.k
    }
    pub fn m(&self) -> &CMatrix {
        &self.m
    }
    pub fn diffusion(&self) -> &CMatrix {
        &self.diffusion
    }
    pub fn diffusion_inv(&self) -> &CMatrix {
        &self.diffusion_inv
    }
    pub fn transport(&self) -> &TransportSpectrum {
        &self.transport
    }

    /// Block of a `d x d` matrix with the given (h|p, h|p) indices.
    pub fn block(&self, m: &CMatrix, row_h: bool, col_h: bool) -> CMatrix {
        let (dh, dp) = (self.d_h(), self.d_p());
        let (r0, nr) = if row_h { (0, dh) } else { (dh, dp) };
        let (c0, nc) = if col_h { (0, dh) } else { (dh, dp) };
        m.view((r0, c0), (nr, nc)).into_owned()
    }

    /// `-n^2 B - i n A - K`.
    pub fn mode_matrix(&self, n: i64) -> CMatrix {
        let x = n as f64;
        -(&self.b * c(x * x)) - &self.a * (I * x) - &self.k
    }

    /// `(B_n)^* = -n^2 B^T + i n A^T - K^T` for real coefficients.
    pub fn adjoint_mode_matrix(&self, n: i64) -> CMatrix {
        self.mode_matrix(n).adjoint()
    }

    /// `B_n` as a degree-2 polynomial matrix in `n`.
    pub fn mode_poly(&self) -> PolyMatrix {
        PolyMatrix::from_matrix_coeffs(&[-&self.k, -(&self.a * I), -&self.b])
    }

    /// Minimal control time for `omega`; infinite when some transport speed vanishes.
    pub fn t_star(&self, omega: &TorusSubset) -> f64 {
        let ell = ell_omega(omega);
        let mu = self.transport.slowest();
        if ell == 0.0 {
            0.0
        } else if mu <= 1e-12 * self.transport.eigenvalues.iter().fold(1.0f64, |m, x| m.max(x.abs())) {
            f64::INFINITY
        } else {
            ell / mu
        }
    }

    /// Radius separating the small eigenvalues of `B + zA - z^2 K` from those near `Sp(D)`.
    pub fn split_radius(&self) -> f64 {
        self.split_radius
    }

    /// Hyperbolic/parabolic spectral projectors at mode `n`.
    pub fn eigenprojection_split(&self, n: i64) -> Result<ModeSplit> {
        let d = self.dim();
        let dh = self.d_h();
        if n == 0 {
            let mut ph = CMatrix::zeros(d, d);
            ph.view_mut((0, 0), (dh, dh)).fill_with_identity();
            let pp = CMatrix::identity(d, d) - &ph;
            return Ok(ModeSplit { n, p_h: ph, p_p: pp, eigenvalues: Vec::new() });
        }
        let z = I / n as f64;
        let e = &self.b + &self.a * z - &self.k * (z * z);
        let eigs = linalg::eigenvalues(&e)?;
        let r = self.split_radius;
        if eigs.iter().any(|l| (l.norm() - r).abs() <= GAP_TOL * r.max(1.0)) {
            return Err(Error::GapNotFound { mode: n });
        }
        let inside: Vec<bool> = eigs.iter().map(|l| l.norm() < r).collect();
        if inside.iter().filter(|&&b| b).count() != dh {
            return Err(Error::GapNotFound { mode: n });
        }
        let ph = spectral_projector(&e, &eigs, &inside)?;
        let scale = linalg::norm2(&e).max(1.0) * linalg::norm2(&ph).max(1.0);
        if linalg::norm2(&(&ph * &e - &e * &ph)) > PROJ_TOL * scale {
            return Err(Error::GapNotFound { mode: n });
        }
        let pp = CMatrix::identity(d, d) - &ph;
        Ok(ModeSplit { n, p_h: ph, p_p: pp, eigenvalues: eigs })
    }

    /// Smallest `n_min >= 1` such that every `|n| >= n_min` up to the scan
    /// horizon admits the hyperbolic/parabolic split.
    pub fn n_min(&self) -> i64 {
        let mut last_bad = 0;
        for n in 1..=SPLIT_SCAN {
            if self.eigenprojection_split(n).is_err() || self.eigenprojection_split(-n).is_err() {
                last_bad = n;
            }
        }
        last_bad + 1
    }

    /// First-order expansion `diag(I, 0) - z [[0, A12 D^-1], [D^-1 A21, 0]]` of `P^h(z)`.
    pub fn hyperbolic_projector_expansion(&self, z: C64) -> CMatrix {
        let (dh, d) = (self.d_h(), self.dim());
        let mut out = CMatrix::zeros(d, d);
        out.view_mut((0, 0), (dh, dh)).fill_with_identity();
        let a12 = self.block(&self.a, true, false);
        let a21 = self.block(&self.a, false, true);
        out.view_mut((0, dh), (dh, self.d_p())).copy_from(&(-(a12 * &self.diffusion_inv) * z));
        out.view_mut((dh, 0), (self.d_p(), dh)).copy_from(&(-(&self.diffusion_inv * a21) * z));
        out
    }
}

#[derive(Clone, Debug)]
pub struct ModeSplit {
    pub n: i64,
    pub p_h: CMatrix,
    pub p_p: CMatrix,
    pub eigenvalues: Vec<C64>,
}
