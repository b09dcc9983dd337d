//! Minimum-energy control of the Fourier-truncated system with forcing
//! localized in a region of the circle.
//!
//! Controls are `u(t, x) = sum_{q,m} theta_{q,m} tau_q(t) e^{imx} / sqrt(2 pi)`
//! with an orthonormal time basis `tau_q`, so the `L^2((0,T) x T)` norm of
//! `u` equals the Euclidean norm of `theta`.

use serde::{Deserialize, Serialize};

use crate::dynamics::{indicator_coeffs, propagator, SpectralField, IndicatorSpectrum};
use crate::error::{Error, Result};
use crate::linalg::{c, expm, expm_with_integral, singular_values, thin_svd, CMatrix, CVector, C64};
use crate::model::{System, TorusSubset, TAU};
use crate::quad::{gauss_legendre, Adaptive};

/// Singular values below `SVD_CUTOFF * sigma_max` are discarded.
pub const SVD_CUTOFF: f64 = 1e-10;
/// Tolerance of the adaptive time quadrature.
pub const QUAD_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeBasisKind {
    /// Normalized indicators of a uniform grid of `size` steps.
    PiecewiseConstant,
    /// `(t (T - t))^flatness` times orthogonal polynomials; the first
    /// `flatness` derivatives vanish at both ends.
    Bump { flatness: usize },
}

/// Orthonormal time basis on `[0, horizon]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeBasis {
    kind: TimeBasisKind,
    size: usize,
    horizon: f64,
    norms: Vec<f64>,
}

impl TimeBasis {
    pub fn new(kind: TimeBasisKind, size: usize, horizon: f64) -> Result<Self> {
        if size == 0 || !(horizon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "time basis needs size > 0 and horizon > 0, got {size} and {horizon}"
            )));
        }
        let mut basis = Self { kind, size, horizon, norms: vec![1.0; size] };
        if let TimeBasisKind::Bump { flatness } = kind {
            // Exact for the degree-(4 flatness + 2 size) integrands.
            let rule = gauss_legendre(2 * flatness + size + 1);
            basis.norms = (0..size)
                .map(|q| {
                    let s: f64 = rule.0.iter().zip(&rule.1).map(|(&x, &w)| w * bump_raw(flatness, q, x).powi(2)).sum();
                    (0.5 * horizon * s).sqrt()
                })
                .collect();
        }
        Ok(basis)
    }

    pub fn kind(&self) -> TimeBasisKind {
        self.kind
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.size as f64
    }

    /// Values of every basis function at `t`.
    pub fn eval_all(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.size];
        if !(0.0..=self.horizon).contains(&t) {
            return out;
        }
        match self.kind {
            TimeBasisKind::PiecewiseConstant => {
                let q = ((t / self.step()) as usize).min(self.size - 1);
                out[q] = 1.0 / self.step().sqrt();
            }
            TimeBasisKind::Bump { flatness } => {
                let s = 2.0 * t / self.horizon - 1.0;
                let env = (1.0 - s * s).powi(flatness as i32);
                for (q, p) in jacobi_sym(2 * flatness, self.size, s).into_iter().enumerate() {
                    out[q] = env * p / self.norms[q];
                }
            }
        }
        out
    }

    /// Breakpoints between which every basis function is smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self.kind {
            TimeBasisKind::PiecewiseConstant => (0..=self.size).map(|q| q as f64 * self.step()).collect(),
            TimeBasisKind::Bump { .. } => vec![0.0, self.horizon],
        }
    }
}

/// Symmetric Jacobi polynomials `P_j^{(a,a)}(x)`, `j < count`.
fn jacobi_sym(a: usize, count: usize, x: f64) -> Vec<f64> {
    let a = a as f64;
    let mut out = Vec::with_capacity(count);
    let (mut p0, mut p1) = (1.0, (a + 1.0) * x);
    for j in 0..count {
        match j {
            0 => out.push(p0),
            1 => out.push(p1),
            _ => {
                let n = j as f64;
                let s = 2.0 * n + 2.0 * a;
                let p2 = ((s - 1.0) * s * (s - 2.0) * x * p1 - 2.0 * (n + a - 1.0).powi(2) * s * p0)
                    / (2.0 * n * (n + 2.0 * a) * (s - 2.0));
                p0 = p1;
                p1 = p2;
                out.push(p2);
            }
        }
    }
    out
}

fn bump_raw(flatness: usize, q: usize, s: f64) -> f64 {
    (1.0 - s * s).powi(flatness as i32) * jacobi_sym(2 * flatness, q + 1, s)[q]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Discretization {
    /// State truncation `|n| <= n_max`.
    pub n_max: usize,
    /// Control truncation `|m| <= n_ctrl`.
    pub n_ctrl: usize,
    pub basis: TimeBasisKind,
    pub basis_size: usize,
}

/// Control coefficients together with the basis they refer to.
#[derive(Clone, Debug)]
pub struct ControlPlan {
    pub basis: TimeBasis,
    pub n_ctrl: usize,
    pub n_controls: usize,
    pub theta: CVector,
}

impl ControlPlan {
    fn index(&self, q: usize, m: i64, j: usize) -> usize {
        column_index(self.n_ctrl, self.n_controls, q, m, j)
    }

    pub fn coeff(&self, q: usize, m: i64) -> CVector {
        CVector::from_fn(self.n_controls, |j, _| self.theta[self.index(q, m, j)])
    }

    /// Fourier coefficients of `u(t, .)`.
    pub fn at(&self, t: f64) -> SpectralField {
        let tau = self.basis.eval_all(t);
        let scale = 1.0 / TAU.sqrt();
        SpectralField::from_fn(self.n_ctrl, self.n_controls, |m| {
            let mut v = CVector::zeros(self.n_controls);
            for (q, &w) in tau.iter().enumerate() {
                if w != 0.0 {
                    v += self.coeff(q, m) * c(w * scale);
                }
            }
            v
        })
    }

    /// `L^2((0,T) x T)` norm.
    pub fn l2_norm(&self) -> f64 {
        self.theta.norm()
    }
}

fn column_index(n_ctrl: usize, n_controls: usize, q: usize, m: i64, j: usize) -> usize {
    (q * (2 * n_ctrl + 1) + (m + n_ctrl as i64) as usize) * n_controls + j
}

/// Dense input map from control coefficients to final-state coefficients.
#[derive(Clone, Debug)]
pub struct InputMap {
    sys: System,
    indicator: IndicatorSpectrum,
    basis: TimeBasis,
    n_max: usize,
    n_ctrl: usize,
    matrix: CMatrix,
}

impl InputMap {
    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn n_ctrl(&self) -> usize {
        self.n_ctrl
    }

    pub fn basis(&self) -> &TimeBasis {
        &self.basis
    }

    pub fn apply(&self, theta: &CVector) -> SpectralField {
        SpectralField::from_vector(self.n_max, self.sys.dim(), &(&self.matrix * theta))
    }

    pub fn plan(&self, theta: CVector) -> ControlPlan {
        ControlPlan { basis: self.basis.clone(), n_ctrl: self.n_ctrl, n_controls: self.sys.n_controls(), theta }
    }

    /// `Phi^* g`, assembled from the adjoint propagator and time quadrature
    /// rather than from the stored matrix.
    pub fn adjoint_apply(&self, g: &SpectralField) -> Result<CVector> {
        let sys = &self.sys;
        let nc = sys.n_controls();
        let q_count = self.basis.size();
        let mut out = CVector::zeros(self.matrix.ncols());
        let quad = Adaptive::new(QUAD_TOL);
        let bps = self.basis.breakpoints();
        let horizon = self.basis.horizon();
        for n in g.modes() {
            if n.unsigned_abs() as usize > self.n_max {
                continue;
            }
            let gn = g.get(n).clone();
            // w_q = int tau_q(s) M^* e^{(T-s) B_n^*} g_n ds, stacked as columns.
            let mut w = CMatrix::zeros(nc, q_count);
            for win in bps.windows(2) {
                let part = quad.integrate(
                    |s| {
                        let v = sys.m().adjoint() * (expm(&(sys.adjoint_mode_matrix(n) * c(horizon - s)))? * &gn);
                        let tau = self.basis.eval_all(s);
                        Ok(CMatrix::from_fn(nc, q_count, |j, q| v[j] * tau[q]))
                    },
                    win[0],
                    win[1],
                )?;
                w += part;
            }
            for q in 0..q_count {
                for m in -(self.n_ctrl as i64)..=self.n_ctrl as i64 {
                    let weight = self.indicator.get(n - m).conj() / TAU.sqrt();
                    for j in 0..nc {
                        out[column_index(self.n_ctrl, nc, q, m, j)] += w[(j, q)] * weight;
                    }
                }
            }
        }
        Ok(out)
    }
}

/// `int_0^T e^{(T-s) B_n} tau_q(s) ds` for every basis element, as a
/// `d x (d * size)` block row.
fn mode_time_blocks(sys: &System, n: i64, basis: &TimeBasis) -> Result<Vec<CMatrix>> {
    let d = sys.dim();
    let bn = sys.mode_matrix(n);
    match basis.kind() {
        TimeBasisKind::PiecewiseConstant => {
            let dt = basis.step();
            let (e, j) = expm_with_integral(&bn, dt)?;
            let mut out = vec![CMatrix::zeros(d, d); basis.size()];
            let mut acc = j * c(1.0 / dt.sqrt());
            for q in (0..basis.size()).rev() {
                out[q] = acc.clone();
                acc = &e * acc;
            }
            Ok(out)
        }
        TimeBasisKind::Bump { .. } => {
            let horizon = basis.horizon();
            let size = basis.size();
            let stacked = Adaptive::new(QUAD_TOL).integrate(
                |s| {
                    let e = propagator(sys, n, horizon - s)?;
                    let mut blk = CMatrix::zeros(d, d * size);
                    for (q, tau) in basis.eval_all(s).into_iter().enumerate() {
                        blk.view_mut((0, q * d), (d, d)).copy_from(&(&e * c(tau)));
                    }
                    Ok(blk)
                },
                0.0,
                horizon,
            )?;
            Ok((0..size).map(|q| stacked.view((0, q * d), (d, d)).into_owned()).collect())
        }
    }
}

pub fn assemble_input_map(
    sys: &System,
    omega: &TorusSubset,
    horizon: f64,
    disc: &Discretization,
) -> Result<InputMap> {
    if disc.n_ctrl > disc.n_max {
        return Err(Error::InvalidParameter("control truncation exceeds state truncation".into()));
    }
    let basis = TimeBasis::new(disc.basis, disc.basis_size, horizon)?;
    let indicator = indicator_coeffs(omega, disc.n_max + disc.n_ctrl);
    let (d, nc) = (sys.dim(), sys.n_controls());
    let n_modes = 2 * disc.n_max + 1;
    let n_cols = basis.size() * (2 * disc.n_ctrl + 1) * nc;
    let mut matrix = CMatrix::zeros(n_modes * d, n_cols);
    let norm = 1.0 / TAU.sqrt();
    for n in -(disc.n_max as i64)..=disc.n_max as i64 {
        let row = (n + disc.n_max as i64) as usize * d;
        let blocks = mode_time_blocks(sys, n, &basis)?;
        for (q, g) in blocks.iter().enumerate() {
            let gm = g * sys.m();
            for m in -(disc.n_ctrl as i64)..=disc.n_ctrl as i64 {
                let w = indicator.get(n - m) * norm;
                if w == C64::new(0.0, 0.0) {
                    continue;
                }
                let col = column_index(disc.n_ctrl, nc, q, m, 0);
                matrix.view_mut((row, col), (d, nc)).copy_from(&(&gm * w));
            }
        }
    }
    Ok(InputMap { sys: sys.clone(), indicator, basis, n_max: disc.n_max, n_ctrl: disc.n_ctrl, matrix })
}

#[derive(Clone, Debug)]
pub struct MinNormSolution {
    pub theta: CVector,
    /// `|Phi theta - target| / |target|`, or the absolute misfit for a zero target.
    pub residual: f64,
    /// Smallest retained singular value.
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub retained: usize,
}

/// Least-norm solution of `Phi theta = target` by truncated SVD.
pub fn min_norm_control(map: &InputMap, target: &SpectralField) -> Result<MinNormSolution> {
    let b = target.resized(map.n_max()).to_vector();
    let (u, s, v) = thin_svd(map.matrix());
    let sigma_max = s.first().copied().unwrap_or(0.0);
    let retained = s.iter().take_while(|&&x| x > 0.0 && x >= SVD_CUTOFF * sigma_max).count();
    if retained == 0 {
        return Err(Error::RankCollapse);
    }
    let mut coef = u.columns(0, retained).adjoint() * &b;
    for (k, z) in coef.iter_mut().enumerate() {
        *z /= s[k];
    }
    let theta = v.columns(0, retained) * coef;
    let misfit = (map.matrix() * &theta - &b).norm();
    let bn = b.norm();
    let residual = if bn > 0.0 { misfit / bn } else { misfit };
    Ok(MinNormSolution { theta, residual, sigma_min: s[retained - 1], sigma_max, retained })
}

/// Target for steering `f0` to rest: minus its free evolution at `horizon`.
pub fn null_target(sys: &System, f0: &SpectralField, horizon: f64) -> Result<SpectralField> {
    f0.map_modes(|n, v| Ok(propagator(sys, n, horizon)? * v * c(-1.0)))
}

/// Relative terminal state `|e^{TL} f0 + Phi theta| / |e^{TL} f0|` measured at
/// a possibly finer state truncation `n_check`.
pub fn terminal_residual(
    sys: &System,
    omega: &TorusSubset,
    f0: &SpectralField,
    plan: &ControlPlan,
    n_check: usize,
) -> Result<f64> {
    let disc = Discretization {
        n_max: n_check,
        n_ctrl: plan.n_ctrl,
        basis: plan.basis.kind(),
        basis_size: plan.basis.size(),
    };
    let map = assemble_input_map(sys, omega, plan.basis.horizon(), &disc)?;
    let target = null_target(sys, &f0.resized(n_check), plan.basis.horizon())?.to_vector();
    Ok((map.matrix() * &plan.theta - &target).norm() / target.norm().max(f64::MIN_POSITIVE))
}

/// Smallest of the `(2N+1) d_h` leading singular values of the input map
/// composed with the per-mode hyperbolic projectors.
///
/// The full map always has singular values down to the cutoff because the
/// parabolic components are smoothed; the transport part is what degenerates
/// below the minimal time. Modes where no spectral gap is found use the
/// coordinate split `diag(I, 0)`.
pub fn transport_floor(sys: &System, map: &InputMap) -> f64 {
    let d = sys.dim();
    let phi = map.matrix();
    let mut projected = CMatrix::zeros(phi.nrows(), phi.ncols());
    let coordinate = CMatrix::from_fn(d, d, |i, j| c(if i == j && i < sys.d_h() { 1.0 } else { 0.0 }));
    for n in -(map.n_max as i64)..=map.n_max as i64 {
        let row = (n + map.n_max as i64) as usize * d;
        let p_h = sys.eigenprojection_split(n).map(|s| s.p_h).unwrap_or_else(|_| coordinate.clone());
        let blk = &p_h * phi.rows(row, d);
        projected.rows_mut(row, d).copy_from(&blk);
    }
    let s = singular_values(&projected);
    let k = (2 * map.n_max + 1) * sys.d_h();
    if k == 0 {
        return 0.0;
    }
    s.get(k - 1).copied().unwrap_or(0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub horizon: f64,
    /// Transport floor, see [`transport_floor`].
    pub sigma_min: f64,
    pub residual: f64,
}

pub fn time_sweep(
    sys: &System,
    omega: &TorusSubset,
    f0: &SpectralField,
    horizons: &[f64],
    disc: &Discretization,
) -> Result<Vec<SweepPoint>> {
    horizons
        .iter()
        .map(|&t| {
            let map = assemble_input_map(sys, omega, t, disc)?;
            let sol = min_norm_control(&map, &null_target(sys, f0, t)?)?;
            Ok(SweepPoint { horizon: t, sigma_min: transport_floor(sys, &map), residual: sol.residual })
        })
        .collect()
}

#[cfg(test)]
fn basis_gram(basis: &TimeBasis) -> CMatrix {
    let q = basis.size();
    let mut g = CMatrix::zeros(q, q);
    let rule = gauss_legendre(40);
    for w in basis.breakpoints().windows(2) {
        for (t, wt) in crate::quad::mapped_rule(&rule, w[0], w[1]) {
            let v = basis.eval_all(t);
            for i in 0..q {
                for j in 0..q {
                    g[(i, j)] += c(wt * v[i] * v[j]);
                }
            }
        }
    }
    g
}
