//! Fictitious full-state controls per Fourier mode and their algebraic
//! reduction to controls in the range of `M`.

use serde::{Deserialize, Serialize};

use crate::dynamics::{indicator_coeffs, propagator, SpectralField};
use crate::error::{Error, Result};
use crate::hum::{assemble_input_map, null_target, ControlPlan, Discretization, TimeBasisKind, SVD_CUTOFF};
use crate::linalg::{c, expm, rank, thin_svd, CMatrix, CVector, C64};
use crate::modal::{exceptional_modes, kalman_depth, KalmanDepth, RANK_TOL};
use crate::model::{System, TorusSubset, TAU};
use crate::polymat::Poly;
use crate::quad::{composite_rule, Adaptive};

/// Tolerance for the Duhamel integrals used in verification.
pub const DUHAMEL_TOL: f64 = 1e-13;
/// Relative defect above which initial data is rejected at an exceptional mode.
pub const E_TOL: f64 = 1e-8;

/// `v(t) = (sum_j C_j x^j) e^{(t - t0) G} y` with `x = (t - t0) / span`,
/// a class closed under differentiation and constant left factors.
#[derive(Clone, Debug, PartialEq)]
pub struct SmoothModalControl {
    pub mode: i64,
    pub t0: f64,
    pub span: f64,
    pub generator: CMatrix,
    pub seed: CVector,
    pub coeffs: Vec<CMatrix>,
}

impl SmoothModalControl {
    pub fn zero(mode: i64, t0: f64, span: f64, dim: usize) -> Self {
        Self {
            mode,
            t0,
            span,
            generator: CMatrix::zeros(1, 1),
            seed: CVector::from_element(1, c(1.0)),
            coeffs: vec![CMatrix::zeros(dim, 1)],
        }
    }

    /// `(x (1 - x))^flatness sum_i r_i x^i` for vectors `r_i`.
    pub fn flat_polynomial(mode: i64, t0: f64, span: f64, flatness: usize, r: &[CVector]) -> Self {
        let dim = r.first().map_or(0, |v| v.len());
        let env = &Poly::real(&[0.0, 1.0]) * &Poly::real(&[1.0, -1.0]);
        let mut env_k = Poly::constant(c(1.0));
        for _ in 0..flatness {
            env_k = &env_k * &env;
        }
        let deg = env_k.degree().unwrap_or(0) + r.len();
        let mut coeffs = vec![CMatrix::zeros(dim, 1); deg.max(1)];
        for (a, &e) in env_k.coeffs().iter().enumerate() {
            for (b, v) in r.iter().enumerate() {
                let mut col = coeffs[a + b].column_mut(0);
                col += v * e;
            }
        }
        Self { mode, t0, span, generator: CMatrix::zeros(1, 1), seed: CVector::from_element(1, c(1.0)), coeffs }
    }

    pub fn dim(&self) -> usize {
        self.coeffs[0].nrows()
    }

    pub fn end(&self) -> f64 {
        self.t0 + self.span
    }

    pub fn eval(&self, t: f64) -> Result<CVector> {
        let tau = t - self.t0;
        let x = tau / self.span;
        let mut poly = CMatrix::zeros(self.dim(), self.generator.nrows());
        for cj in self.coeffs.iter().rev() {
            poly = poly * c(x) + cj;
        }
        Ok(poly * (expm(&(&self.generator * c(tau)))? * &self.seed))
    }

    pub fn derivative(&self) -> Self {
        let k = self.coeffs.len();
        let coeffs = (0..k)
            .map(|j| {
                let mut cj = &self.coeffs[j] * &self.generator;
                if j + 1 < k {
                    cj += &self.coeffs[j + 1] * c((j + 1) as f64 / self.span);
                }
                cj
            })
            .collect();
        Self { coeffs, ..self.clone() }
    }

    pub fn nth_derivative(&self, order: usize) -> Self {
        (0..order).fold(self.clone(), |v, _| v.derivative())
    }

    pub fn left_mul(&self, l: &CMatrix) -> Self {
        Self { coeffs: self.coeffs.iter().map(|cj| l * cj).collect(), ..self.clone() }
    }

    /// Rows `start..start + len` of the values.
    pub fn rows(&self, start: usize, len: usize) -> Self {
        Self { coeffs: self.coeffs.iter().map(|cj| cj.rows(start, len).into_owned()).collect(), ..self.clone() }
    }

    /// Sum of two controls sharing time window, generator and seed.
    pub fn add(&self, other: &Self) -> Self {
        debug_assert!(self.generator == other.generator && self.seed == other.seed);
        let k = self.coeffs.len().max(other.coeffs.len());
        let zero = CMatrix::zeros(self.dim(), self.generator.nrows());
        let coeffs = (0..k)
            .map(|j| self.coeffs.get(j).unwrap_or(&zero) + other.coeffs.get(j).unwrap_or(&zero))
            .collect();
        Self { coeffs, ..self.clone() }
    }
}

/// Smooth step `s` on `[0, 1]` with `s(0) = 1`, `s(1) = 0` and the first
/// `flatness` derivatives vanishing at both ends; returns `s'`.
fn flat_step_derivative(flatness: usize) -> Poly {
    let env = &Poly::real(&[0.0, 1.0]) * &Poly::real(&[1.0, -1.0]);
    let mut p = Poly::constant(c(1.0));
    for _ in 0..flatness {
        p = &p * &env;
    }
    // int_0^1 (x(1-x))^k dx = k!^2 / (2k+1)!
    let mut beta = 1.0;
    for j in 1..=flatness {
        beta *= j as f64 / (flatness + j) as f64;
    }
    beta /= (2 * flatness + 1) as f64;
    p.scale(c(-1.0 / beta))
}

/// Full-state control on `[t0, t0 + span]` steering `x0` to zero along
/// `X(t) = e^{(t - t0) B_n} x0 s(t)`, i.e. `v = X' - B_n X = e^{(t-t0) B_n} x0 s'`.
pub fn fictitious_control(sys: &System, n: i64, x0: &CVector, t0: f64, span: f64, flatness: usize) -> Result<SmoothModalControl> {
    if !(span > 0.0) {
        return Err(Error::InvalidParameter(format!("control window must be positive, got {span}")));
    }
    let ds = flat_step_derivative(flatness);
    let coeffs = ds.coeffs().iter().map(|&a| CMatrix::identity(sys.dim(), sys.dim()) * c(a.re / span)).collect();
    Ok(SmoothModalControl { mode: n, t0, span, generator: sys.mode_matrix(n), seed: x0.clone(), coeffs })
}

/// Unscaled `[B_n | M]_k = (M, B_n M, ..., B_n^{k-1} M)`.
pub fn kalman_matrix(sys: &System, n: i64, k: usize) -> CMatrix {
    let bn = sys.mode_matrix(n);
    let (d, m) = (sys.dim(), sys.n_controls());
    let mut out = CMatrix::zeros(d, m * k);
    let mut blk = sys.m().clone();
    for j in 0..k {
        out.view_mut((0, j * m), (d, m)).copy_from(&blk);
        blk = &bn * blk;
    }
    out
}

fn pseudo_inverse(a: &CMatrix) -> CMatrix {
    let (u, s, v) = thin_svd(a);
    let smax = s.first().copied().unwrap_or(0.0);
    let r = s.iter().take_while(|&&x| x > SVD_CUTOFF * smax).count();
    let mut vs = v.columns(0, r).into_owned();
    for (j, mut col) in vs.column_iter_mut().enumerate() {
        col /= c(s[j]);
    }
    vs * u.columns(0, r).adjoint()
}

/// `u = sum_j w_j^{(j-1)}` where `w = [B_n | M]_k^+ v` is split in `k` blocks.
pub fn reduce(sys: &System, n: i64, v: &SmoothModalControl, k: usize) -> Result<SmoothModalControl> {
    let km = kalman_matrix(sys, n, k);
    if rank(&km, RANK_TOL) < sys.dim() {
        return Err(Error::RankDeficientMode { mode: n });
    }
    let w = v.left_mul(&pseudo_inverse(&km));
    Ok(assemble_from_blocks(sys, &w, k))
}

fn assemble_from_blocks(sys: &System, w: &SmoothModalControl, k: usize) -> SmoothModalControl {
    let m = sys.n_controls();
    (1..k).fold(w.rows(0, m), |u, j| u.add(&w.rows(j * m, m).nth_derivative(j)))
}

/// `e^{(t1 - t0) B_n} x0 + int_{t0}^{t1} e^{(t1 - s) B_n} L f(s) ds`.
pub fn duhamel(sys: &System, n: i64, x0: &CVector, l: &CMatrix, f: &SmoothModalControl) -> Result<CVector> {
    let (t0, t1) = (f.t0, f.end());
    let free = propagator(sys, n, t1 - t0)? * x0;
    let bn = sys.mode_matrix(n);
    let forced = Adaptive::new(DUHAMEL_TOL).integrate(
        |s| {
            let e = expm(&(&bn * c(t1 - s)))?;
            Ok(CMatrix::from_column_slice(sys.dim(), 1, (e * (l * f.eval(s)?)).as_slice()))
        },
        t0,
        t1,
    )?;
    Ok(free + forced.column(0))
}

#[derive(Clone, Debug)]
pub struct LemmaCheck {
    pub full: CVector,
    pub reduced: CVector,
    pub gap: f64,
}

/// Integrates `X' = B_n X + [B_n | M]_k w` and `X~' = B_n X~ + M u` with
/// `u = sum_j w_j^{(j-1)}` from the same `x0` and compares the end states.
pub fn verify_lemma(sys: &System, n: i64, x0: &CVector, w: &SmoothModalControl, k: usize) -> Result<LemmaCheck> {
    if w.dim() != k * sys.n_controls() {
        return Err(Error::DimensionMismatch(format!("w has {} components, expected {}", w.dim(), k * sys.n_controls())));
    }
    let full = duhamel(sys, n, x0, &kalman_matrix(sys, n, k), w)?;
    let u = assemble_from_blocks(sys, w, k);
    let reduced = duhamel(sys, n, x0, sys.m(), &u)?;
    let gap = (&full - &reduced).norm();
    Ok(LemmaCheck { full, reduced, gap })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Length of the first stage.
    pub eps: f64,
    /// Modes `|n| <= low_modes` are handled by the first stage.
    pub low_modes: usize,
    /// Control truncation and time basis of the first stage.
    pub stage1_n_ctrl: usize,
    pub stage1_basis_size: usize,
    /// Flatness of the fictitious trajectories is `flatness_factor * k0`.
    pub flatness_factor: usize,
    /// Time nodes per panel and panels for the leakage integral.
    pub leakage_panels: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self { eps: 0.1, low_modes: 2, stage1_n_ctrl: 16, stage1_basis_size: 8, flatness_factor: 2, leakage_panels: 16 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Localized,
    Reduced,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModeResidual {
    pub n: i64,
    pub stage: Stage,
    /// `|X_n(T)|`.
    pub residual: f64,
}

#[derive(Clone, Debug)]
pub struct PipelineReport {
    pub k0: usize,
    pub horizon: f64,
    pub stage1: ControlPlan,
    pub stage1_residual: f64,
    pub stage2: Vec<SmoothModalControl>,
    pub modes: Vec<ModeResidual>,
    /// `|f(T)| / |f0|` over the retained modes.
    pub residual: f64,
    /// Fraction of `|u|^2_{L^2((0,T) x T)}` carried outside `omega`.
    pub leakage: f64,
    pub control_norm: f64,
}

/// Two-stage null control of the truncated field `f0`: localized minimum-norm
/// control of the low and rank-deficient modes on `[0, eps]`, then per-mode
/// reduced fictitious controls on `[eps, T]`.
pub fn pipeline(
    sys: &System,
    omega: &TorusSubset,
    f0: &SpectralField,
    horizon: f64,
    cfg: &PipelineConfig,
) -> Result<PipelineReport> {
    let t_star = sys.t_star(omega);
    if !(horizon > t_star + 2.0 * cfg.eps) {
        return Err(Error::TimeTooShort { t: horizon, bound: t_star + 2.0 * cfg.eps });
    }
    let k0 = match kalman_depth(sys)? {
        KalmanDepth::Finite(k) => k,
        KalmanDepth::NeverFullRank => return Err(Error::RankDeficientMode { mode: 0 }),
    };
    let n_max = f0.n_max();
    for ex in exceptional_modes(sys)? {
        if ex.n.unsigned_abs() as usize <= n_max && ex.defect(f0.get(ex.n)) > E_TOL {
            return Err(Error::NotInE { mode: ex.n });
        }
    }
    let d = sys.dim();
    let low: Vec<i64> = f0
        .modes()
        .filter(|&n| n.unsigned_abs() as usize <= cfg.low_modes || rank(&kalman_matrix(sys, n, k0), RANK_TOL) < d)
        .collect();

    // Stage 1: rows of the low modes only.
    let disc = Discretization {
        n_max,
        n_ctrl: cfg.stage1_n_ctrl.min(n_max),
        basis: TimeBasisKind::Bump { flatness: 2 },
        basis_size: cfg.stage1_basis_size,
    };
    let map = assemble_input_map(sys, omega, cfg.eps, &disc)?;
    let target = null_target(sys, f0, cfg.eps)?;
    let mut rows = CMatrix::zeros(low.len() * d, map.matrix().ncols());
    let mut rhs = CVector::zeros(low.len() * d);
    for (i, &n) in low.iter().enumerate() {
        let r = (n + n_max as i64) as usize * d;
        rows.rows_mut(i * d, d).copy_from(&map.matrix().rows(r, d));
        rhs.rows_mut(i * d, d).copy_from(target.get(n));
    }
    let theta = if low.is_empty() { CVector::zeros(map.matrix().ncols()) } else { pseudo_inverse(&rows) * &rhs };
    let stage1_residual = (&rows * &theta - &rhs).norm() / rhs.norm().max(f64::MIN_POSITIVE);
    let forced = map.apply(&theta);
    let mid = f0.map_modes(|n, v| Ok(propagator(sys, n, cfg.eps)? * v + forced.get(n)))?;

    // Stage 2.
    let span = horizon - cfg.eps;
    let flatness = cfg.flatness_factor.max(1) * k0;
    let mut stage2 = Vec::new();
    let mut modes = Vec::new();
    let mut final_sq = 0.0;
    for n in f0.modes() {
        let x_mid = mid.get(n);
        let (stage, x_end) = if low.contains(&n) {
            (Stage::Localized, propagator(sys, n, span)? * x_mid)
        } else {
            let v = fictitious_control(sys, n, x_mid, cfg.eps, span, flatness)?;
            let u = reduce(sys, n, &v, k0)?;
            let x_end = duhamel(sys, n, x_mid, sys.m(), &u)?;
            stage2.push(u);
            (Stage::Reduced, x_end)
        };
        final_sq += x_end.norm_squared();
        modes.push(ModeResidual { n, stage, residual: x_end.norm() });
    }
    let residual = final_sq.sqrt() / f0.to_vector().norm().max(f64::MIN_POSITIVE);

    let plan = map.plan(theta);
    let stage1_energy = plan.l2_norm().powi(2);
    let (inside, outside) = stage2_energy(omega, &stage2, cfg)?;
    let total = stage1_energy + inside + outside;
    let leakage = if total > 0.0 { outside / total } else { 0.0 };
    Ok(PipelineReport {
        k0,
        horizon,
        stage1: plan,
        stage1_residual,
        stage2,
        modes,
        residual,
        leakage,
        control_norm: total.sqrt(),
    })
}

/// `int |u|^2` over `omega x (eps, T)` and over its complement for
/// `u(t, x) = sum_n u_n(t) e^{inx}`.
fn stage2_energy(omega: &TorusSubset, controls: &[SmoothModalControl], cfg: &PipelineConfig) -> Result<(f64, f64)> {
    let Some(first) = controls.first() else {
        return Ok((0.0, 0.0));
    };
    let n_max = controls.iter().map(|u| u.mode.unsigned_abs() as usize).max().unwrap_or(0);
    let ind = indicator_coeffs(omega, 2 * n_max);
    let mut inside = 0.0;
    let mut total = 0.0;
    for (t, w) in composite_rule(first.t0, first.end(), cfg.leakage_panels.max(1), 16) {
        let vals: Vec<(i64, CVector)> = controls.iter().map(|u| Ok((u.mode, u.eval(t)?))).collect::<Result<_>>()?;
        let mut acc = C64::new(0.0, 0.0);
        for (n, un) in &vals {
            total += w * TAU * un.norm_squared();
            for (np, unp) in &vals {
                acc += unp.dotc(un) * ind.get(np - n);
            }
        }
        inside += w * TAU * acc.re;
    }
    Ok((inside, (total - inside).max(0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SystemSpec;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn transport_controlled() -> System {
        SystemSpec {
            d_h: 1,
            d_p: 1,
            diffusion: DMatrix::from_element(1, 1, 1.0),
            advection: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 0.0]),
            coupling: DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]),
            control: DMatrix::from_column_slice(2, 1, &[1.0, 0.0]),
        }
        .validate()
        .unwrap()
    }

    fn cvec(rng: &mut ChaCha8Rng, n: usize) -> CVector {
        CVector::from_fn(n, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    #[test]
    fn flat_step_integrates_to_minus_one() {
        for k in [1, 3, 6] {
            let ds = flat_step_derivative(k);
            let total: C64 = ds.coeffs().iter().enumerate().map(|(j, &a)| a / c((j + 1) as f64)).sum();
            assert!((total + c(1.0)).norm() < 1e-13);
        }
    }

    #[test]
    fn fictitious_control_of_static_mode_integrates_to_minus_x0() {
        // K = 0 makes B_0 = 0.
        let sys = SystemSpec {
            d_h: 1,
            d_p: 1,
            diffusion: DMatrix::from_element(1, 1, 1.0),
            advection: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
            coupling: DMatrix::zeros(2, 2),
            control: DMatrix::identity(2, 2),
        }
        .validate()
        .unwrap();
        let x0 = CVector::from_vec(vec![C64::new(0.7, -0.2), c(0.3)]);
        let v = fictitious_control(&sys, 0, &x0, 0.0, 2.0, 3).unwrap();
        let int = Adaptive::new(1e-13)
            .integrate(|t| Ok(CMatrix::from_column_slice(2, 1, v.eval(t)?.as_slice())), 0.0, 2.0)
            .unwrap();
        assert!((int.column(0) + &x0).norm() < 1e-12);
    }

    #[test]
    fn fictitious_control_reaches_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sys = SystemSpec {
            d_h: 1,
            d_p: 2,
            diffusion: DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.0, 1.5]),
            advection: DMatrix::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0)),
            coupling: DMatrix::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0)),
            control: DMatrix::identity(3, 3),
        }
        .validate()
        .unwrap();
        let x0 = cvec(&mut rng, 3);
        let v = fictitious_control(&sys, 7, &x0, 0.0, 1.0, 4).unwrap();
        let x_t = duhamel(&sys, 7, &x0, &CMatrix::identity(3, 3), &v).unwrap();
        assert!(x_t.norm() <= 1e-10, "{}", x_t.norm());
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let sys = transport_controlled();
        let x0 = CVector::from_vec(vec![c(1.0), C64::new(0.0, 0.5)]);
        let v = fictitious_control(&sys, 2, &x0, 0.3, 1.5, 2).unwrap();
        let dv = v.derivative();
        let (t, h) = (0.9, 1e-5);
        let fd = (v.eval(t + h).unwrap() - v.eval(t - h).unwrap()) / c(2.0 * h);
        assert!((fd - dv.eval(t).unwrap()).norm() < 1e-7);
    }

    #[test]
    fn reduced_control_steers_mode_and_is_flat() {
        let sys = transport_controlled();
        let x0 = CVector::from_vec(vec![c(0.4), c(-1.0)]);
        let v = fictitious_control(&sys, 5, &x0, 0.0, 2.0, 4).unwrap();
        let u = reduce(&sys, 5, &v, 2).unwrap();
        assert_eq!(u.dim(), 1);
        let x_t = duhamel(&sys, 5, &x0, sys.m(), &u).unwrap();
        assert!(x_t.norm() < 1e-8, "{}", x_t.norm());
        let scale = v.eval(1.0).unwrap().norm();
        for t in [0.0, 2.0] {
            assert!(u.eval(t).unwrap().norm() <= 1e-12 * scale);
        }
    }

    #[test]
    fn reduce_with_invertible_control_is_inverse() {
        let sys = SystemSpec {
            d_h: 1,
            d_p: 1,
            diffusion: DMatrix::from_element(1, 1, 1.0),
            advection: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
            coupling: DMatrix::zeros(2, 2),
            control: DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 1.0, 1.0]),
        }
        .validate()
        .unwrap();
        let x0 = CVector::from_vec(vec![c(1.0), c(2.0)]);
        let v = fictitious_control(&sys, 1, &x0, 0.0, 1.0, 2).unwrap();
        let u = reduce(&sys, 1, &v, 1).unwrap();
        let back = sys.m() * u.eval(0.4).unwrap();
        assert!((back - v.eval(0.4).unwrap()).norm() < 1e-12);
    }

    #[test]
    fn reduce_rejects_exceptional_mode() {
        let sys = SystemSpec {
            d_h: 1,
            d_p: 1,
            diffusion: DMatrix::from_element(1, 1, 1.0),
            advection: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.7, 0.0]),
            coupling: DMatrix::zeros(2, 2),
            control: DMatrix::from_column_slice(2, 1, &[1.0, 0.0]),
        }
        .validate()
        .unwrap();
        let v = SmoothModalControl::zero(0, 0.0, 1.0, 2);
        assert_eq!(reduce(&sys, 0, &v, 2), Err(Error::RankDeficientMode { mode: 0 }));
    }

    #[test]
    fn reduction_gap_vanishes_for_zero_and_random_w() {
        let sys = transport_controlled();
        let x0 = CVector::from_vec(vec![c(1.0), c(0.5)]);
        let zero = SmoothModalControl::zero(3, 0.0, 1.0, 2);
        let chk = verify_lemma(&sys, 3, &x0, &zero, 2).unwrap();
        assert_eq!(chk.gap, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let r: Vec<CVector> = (0..3).map(|_| cvec(&mut rng, 2)).collect();
        let w = SmoothModalControl::flat_polynomial(3, 0.0, 1.0, 2, &r);
        let chk = verify_lemma(&sys, 3, &x0, &w, 2).unwrap();
        assert!(chk.gap <= 1e-8 * (1.0 + chk.full.norm()), "gap {}", chk.gap);
    }

    #[test]
    fn pipeline_rejects_short_time_and_data_outside_e() {
        let sys = transport_controlled();
        let omega = TorusSubset::new(&[(0.0, std::f64::consts::PI)]).unwrap();
        let f0 = SpectralField::smooth_random(4, 2, 3.0, 1);
        let cfg = PipelineConfig::default();
        assert!(matches!(pipeline(&sys, &omega, &f0, 2.0, &cfg), Err(Error::TimeTooShort { .. })));

        let ex = SystemSpec {
            d_h: 1,
            d_p: 1,
            diffusion: DMatrix::from_element(1, 1, 1.0),
            advection: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.7, 0.0]),
            coupling: DMatrix::zeros(2, 2),
            control: DMatrix::from_column_slice(2, 1, &[1.0, 0.0]),
        }
        .validate()
        .unwrap();
        let mut bad = SpectralField::zeros(4, 2);
        *bad.get_mut(0) = CVector::from_vec(vec![c(0.0), c(1.0)]);
        assert_eq!(pipeline(&ex, &omega, &bad, 4.0, &cfg).unwrap_err(), Error::NotInE { mode: 0 });
    }

    #[test]
    fn pipeline_steers_single_mode() {
        let sys = transport_controlled();
        let omega = TorusSubset::new(&[(0.0, std::f64::consts::PI)]).unwrap();
        let mut f0 = SpectralField::zeros(6, 2);
        *f0.get_mut(5) = CVector::from_vec(vec![c(1.0), C64::new(0.0, 0.3)]);
        *f0.get_mut(-5) = f0.get(5).conjugate();
        let cfg = PipelineConfig { low_modes: 1, ..PipelineConfig::default() };
        let rep = pipeline(&sys, &omega, &f0, 1.2 * sys.t_star(&omega) + 0.2, &cfg).unwrap();
        for m in rep.modes.iter().filter(|m| m.n.abs() == 5) {
            assert!(m.residual <= 1e-8, "{m:?}");
        }
        assert!((0.0..=1.0).contains(&rep.leakage));
    }
}
