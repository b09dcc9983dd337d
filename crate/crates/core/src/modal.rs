//! Per-mode controllability: Kalman depth, exceptional modes, regularity index,
//! rough-data obstructions and the resulting verdict.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMatrix};
use crate::model::{ell_omega, System, TorusSubset};
use crate::polymat::{integer_roots, rational_degree, Poly, PolyMatrix, COEFF_TOL, ROOT_GUARD, ROOT_TOL};

/// Relative SVD threshold for numerical Kalman ranks.
pub const RANK_TOL: f64 = 1e-10;

/// `[B_n | M]_k` together with the coefficient-modulus majorant used to
/// tell cancellation noise from genuine coefficients.
#[derive(Clone, Debug)]
pub struct KalmanPoly {
    pub matrix: PolyMatrix,
    pub majorant: PolyMatrix,
}

impl KalmanPoly {
    pub fn depth(&self, sys: &System) -> usize {
        self.matrix.ncols() / sys.n_controls()
    }

    /// `K K^*` and its majorant.
    pub fn gram(&self) -> (PolyMatrix, PolyMatrix) {
        let g = self.matrix.matmul(&self.matrix.herm_conjugate()).expect("conformable");
        let gm = self.majorant.matmul(&self.majorant.herm_conjugate()).expect("conformable");
        (g, gm)
    }

    /// Determinant of the Gram matrix with rounding noise removed.
    pub fn gram_determinant(&self) -> Result<Poly> {
        let (g, gm) = self.gram();
        Ok(g.determinant()?.cleaned(&gm.permanent()?, COEFF_TOL))
    }
}

/// `(M, B_n M, ..., B_n^{k-1} M)` as a polynomial matrix in `n`.
pub fn kalman_poly(sys: &System, k: usize) -> KalmanPoly {
    let build = |bn: &PolyMatrix, m: &PolyMatrix| {
        let mut blocks = vec![m.clone()];
        for _ in 1..k {
            let next = bn.matmul(blocks.last().expect("nonempty")).expect("conformable");
            blocks.push(next);
        }
        PolyMatrix::hstack(&blocks)
    };
    let bn = sys.mode_poly();
    let m = PolyMatrix::constant(sys.m());
    KalmanPoly { matrix: build(&bn, &m), majorant: build(&bn.abs(), &m.abs()) }
}

/// Numerical Kalman matrix at mode `n`, with `B_n` rescaled to unit norm so
/// that the columns are comparable; the range is unchanged.
pub fn kalman_numeric(sys: &System, n: i64, k: usize) -> CMatrix {
    let bn = sys.mode_matrix(n);
    let s = linalg::norm2(&bn).max(1.0);
    let bn = bn / c(s);
    let m = sys.m();
    let mut out = CMatrix::zeros(sys.dim(), m.ncols() * k);
    let mut blk = m.clone();
    for j in 0..k {
        out.view_mut((0, j * m.ncols()), (sys.dim(), m.ncols())).copy_from(&blk);
        blk = &bn * blk;
    }
    out
}

pub fn kalman_rank(sys: &System, n: i64, k: usize) -> usize {
    linalg::rank(&kalman_numeric(sys, n, k), RANK_TOL)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KalmanDepth {
    Finite(usize),
    NeverFullRank,
}

/// Smallest `k` whose Gram determinant is not identically zero.
pub fn kalman_depth(sys: &System) -> Result<KalmanDepth> {
    for k in 1..=sys.dim() {
        if !kalman_poly(sys, k).gram_determinant()?.is_zero() {
            return Ok(KalmanDepth::Finite(k));
        }
    }
    Ok(KalmanDepth::NeverFullRank)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ModeStatus {
    Confirmed,
    /// Symbolic and numerical rank tests disagree.
    Ambiguous,
}

#[derive(Clone, Debug)]
pub struct ExceptionalMode {
    pub n: i64,
    /// Orthonormal basis of `range([B_n | M])`.
    pub range_basis: CMatrix,
    pub status: ModeStatus,
}

impl ExceptionalMode {
    /// Distance from `v` to the admissible range, relative to `|v|`.
    pub fn defect(&self, v: &linalg::CVector) -> f64 {
        let proj = &self.range_basis * (self.range_basis.adjoint() * v);
        let nv = v.norm();
        if nv == 0.0 {
            0.0
        } else {
            (v - proj).norm() / nv
        }
    }
}

/// Integer modes where `rank [B_n | M]_d < d`. Returns an empty set when the
/// Kalman condition fails identically.
pub fn exceptional_modes(sys: &System) -> Result<Vec<ExceptionalMode>> {
    let d = sys.dim();
    let kp = kalman_poly(sys, d);
    let det = kp.gram_determinant()?;
    if det.is_zero() {
        return Ok(Vec::new());
    }
    let symbolic = integer_roots(&det, ROOT_TOL, ROOT_GUARD)?;
    let mut cands: Vec<i64> = (-ROOT_GUARD..=ROOT_GUARD).chain(symbolic.iter().copied()).collect();
    cands.sort_unstable();
    cands.dedup();
    let mut out = Vec::new();
    for n in cands {
        let sym = symbolic.contains(&n);
        let k = kalman_numeric(sys, n, d);
        let deficient = linalg::rank(&k, RANK_TOL) < d;
        if !sym && !deficient {
            continue;
        }
        let status = if sym == deficient { ModeStatus::Confirmed } else { ModeStatus::Ambiguous };
        let range_basis = if deficient { linalg::range_basis(&k, RANK_TOL) } else { CMatrix::identity(d, d) };
        out.push(ExceptionalMode { n, range_basis, status });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Regularity {
    pub depth: usize,
    /// `None` when every hyperbolic block of the pseudo-inverse vanishes.
    pub p_index: Option<i64>,
    pub p_bound: i64,
    /// Degrees of the blocks `L^h_{n,j}`, `j = 1..depth`.
    pub block_degrees: Vec<Option<i64>>,
    pub pinv_degree: Option<i64>,
    pub pinv_bound: i64,
}

/// Regularity index from the rational pseudo-inverse
/// `[B_n|M]^* Adj(G) / det(G)` at depth `k0`.
pub fn regularity_index(sys: &System, k0: usize) -> Result<Regularity> {
    let (d, dh, m) = (sys.dim(), sys.d_h(), sys.n_controls());
    let kp = kalman_poly(sys, k0);
    let (g, gm) = kp.gram();
    let det = g.determinant()?.cleaned(&gm.permanent()?, COEFF_TOL);
    if det.is_zero() {
        return Err(Error::InvalidParameter(format!("Kalman Gram determinant vanishes at depth {k0}")));
    }
    let q = kp.matrix.herm_conjugate().matmul(&g.adjugate()?)?;
    let qm = kp.majorant.herm_conjugate().matmul(&gm.adjugate_majorant()?)?;
    let q = q.cleaned(&qm, COEFF_TOL);
    let block_degrees: Vec<Option<i64>> = (0..k0)
        .map(|j| {
            let mut best: Option<i64> = None;
            for r in j * m..(j + 1) * m {
                for col in 0..dh {
                    best = best.max(rational_degree(&q[(r, col)], &det));
                }
            }
            best
        })
        .collect();
    let p_index = block_degrees.iter().enumerate().filter_map(|(j, deg)| deg.map(|x| j as i64 + x)).max();
    let mut pinv_degree: Option<i64> = None;
    for r in 0..q.nrows() {
        for col in 0..d {
            pinv_degree = pinv_degree.max(rational_degree(&q[(r, col)], &det));
        }
    }
    let km1 = k0 as i64 - 1;
    Ok(Regularity {
        depth: k0,
        p_index,
        p_bound: 4 * d as i64 * km1,
        block_degrees,
        pinv_degree,
        pinv_bound: 2 * km1 * (2 * d as i64 - 1),
    })
}

/// `(P')^* ((K')^* + A21^* (D^*)^{-1} A12^*) (P')^*` for the transport eigenvalue `mu`.
pub fn k_mu_star(sys: &System, mu: f64) -> Result<CMatrix> {
    let p = sys.transport().projector(mu)?.adjoint();
    let kh = sys.block(sys.k(), true, true).adjoint();
    let a21 = sys.block(sys.a(), false, true).adjoint();
    let a12 = sys.block(sys.a(), true, false).adjoint();
    let dinv = sys.diffusion().adjoint().try_inverse().ok_or(Error::H3Violated(0.0))?;
    Ok(&p * (kh + a21 * dinv * a12) * &p)
}

#[derive(Clone, Debug)]
pub struct RoughObstruction {
    pub mu: f64,
    pub obstructed: bool,
    pub witness_dim: usize,
    /// Orthonormal basis of the unobservable directions inside `range((P'_mu)^*)`.
    pub witness: CMatrix,
}

/// Unobservable subspace of `(K_mu^*, g -> M^*(g, 0))` restricted to `range((P'_mu)^*)`.
pub fn rough_obstruction(sys: &System, mu: f64) -> Result<RoughObstruction> {
    let kstar = k_mu_star(sys, mu)?;
    let p = sys.transport().projector(mu)?.adjoint();
    let u = linalg::range_basis(&p, RANK_TOL);
    let r = u.ncols();
    let kr = u.adjoint() * &kstar * &u;
    let mh = sys.m().rows(0, sys.d_h()).into_owned();
    let cr = mh.adjoint() * &u;
    let mrows = cr.nrows();
    let mut obs = CMatrix::zeros(mrows * r, r);
    let mut blk = cr.clone();
    for j in 0..r {
        obs.view_mut((j * mrows, 0), (mrows, r)).copy_from(&blk);
        blk *= &kr;
    }
    let null = linalg::null_basis(&obs, RANK_TOL);
    let witness = &u * null;
    Ok(RoughObstruction { mu, obstructed: witness.ncols() > 0, witness_dim: witness.ncols(), witness })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Never,
    TooShort,
    ControllableRegular,
    /// `T = T*`: reported, never decided.
    Boundary,
}

#[derive(Clone, Debug)]
pub struct AnalysisReport {
    pub ell: f64,
    pub t_star: f64,
    pub horizon: f64,
    pub depth: KalmanDepth,
    pub regularity: Option<Regularity>,
    pub exceptional: Vec<ExceptionalMode>,
    pub obstructions: Vec<RoughObstruction>,
    pub n_min: i64,
    pub verdict: Verdict,
}

impl AnalysisReport {
    pub fn ambiguous_modes(&self) -> Vec<i64> {
        self.exceptional.iter().filter(|m| m.status == ModeStatus::Ambiguous).map(|m| m.n).collect()
    }
}

/// Relative width of the band around `T*` reported as a boundary case.
pub const BOUNDARY_TOL: f64 = 1e-12;

pub fn classify(depth: KalmanDepth, t_star: f64, horizon: f64) -> Verdict {
    if depth == KalmanDepth::NeverFullRank {
        Verdict::Never
    } else if t_star.is_finite() && (horizon - t_star).abs() <= BOUNDARY_TOL * t_star.max(1.0) {
        Verdict::Boundary
    } else if horizon > t_star {
        Verdict::ControllableRegular
    } else {
        Verdict::TooShort
    }
}

pub fn analyze(sys: &System, omega: &TorusSubset, horizon: f64) -> Result<AnalysisReport> {
    let depth = kalman_depth(sys)?;
    let regularity = match depth {
        KalmanDepth::Finite(k) => Some(regularity_index(sys, k)?),
        KalmanDepth::NeverFullRank => None,
    };
    let exceptional = match depth {
        KalmanDepth::Finite(_) => exceptional_modes(sys)?,
        KalmanDepth::NeverFullRank => Vec::new(),
    };
    let obstructions = sys
        .transport()
        .eigenvalues
        .iter()
        .map(|&mu| rough_obstruction(sys, mu))
        .collect::<Result<Vec<_>>>()?;
    let t_star = sys.t_star(omega);
    Ok(AnalysisReport {
        ell: ell_omega(omega),
        t_star,
        horizon,
        depth,
        regularity,
        exceptional,
        obstructions,
        n_min: sys.n_min(),
        verdict: classify(depth, t_star, horizon),
    })
}
