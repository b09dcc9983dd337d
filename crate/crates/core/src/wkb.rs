//! Geometric-optics quasi-solutions of the adjoint system and the
//! observability experiments built on them.
//!
//! The adjoint of `d/dt - B d2/dx2 + A d/dx + K` has the same shape with the
//! triple `(B^T, -A^T, K^T)`, so its transport speeds are `-mu` for `mu` in
//! `Sp(A')`. Quasi-solutions are `g = sum_j h^j Y_j(t, x - nu t) e^{i psi(x - nu t)/h}`
//! with `psi(s) = i phi(s) + n0 s`; profiles live in the moving frame on a
//! Chebyshev grid in time and a uniform Fourier grid in `s`, with the carrier
//! handled analytically.

use serde::{Deserialize, Serialize};

use crate::dynamics::{adjoint_propagator, indicator_coeffs};
use crate::error::{Error, Result};
use crate::linalg::{self, c, CMatrix, CVector, C64};
use crate::modal::rough_obstruction;
use crate::model::{System, TorusSubset, TAU};
use crate::quad::{gauss_legendre, mapped_rule};
use crate::spectral::{ChebyshevGrid, PeriodicGrid};

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Values below this fraction of the datum scale are treated as round-off.
pub const NOISE_FLOOR: f64 = 1e-13;

/// Relative Fourier tail above which a profile grid counts as under-resolved.
const TAIL_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Amplitude {
    /// `1 - cos(s - x0)`: vanishes to second order at `x0` only.
    Well { x0: f64 },
    /// No localization; the quasi-solution is a single Fourier mode.
    Flat,
}

impl Amplitude {
    fn derivatives(&self, s: f64) -> (f64, f64, f64) {
        match *self {
            Amplitude::Well { x0 } => (1.0 - (s - x0).cos(), (s - x0).sin(), (s - x0).cos()),
            Amplitude::Flat => (0.0, 0.0, 0.0),
        }
    }
}

/// Phase `psi(s) = i phi(s) + n0 s` transported along `s = x - nu t`, `nu = -mu`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpec {
    /// Eigenvalue of the transport block of the original system.
    pub mu: f64,
    pub amplitude: Amplitude,
    pub carrier: u32,
}

impl PhaseSpec {
    /// Speed of the adjoint characteristic.
    pub fn speed(&self) -> f64 {
        -self.mu
    }

    /// `(phi, psi', psi'')` at `s`.
    fn jet(&self, s: f64) -> (f64, C64, C64) {
        let (a0, a1, a2) = self.amplitude.derivatives(s);
        (a0, C64::new(self.carrier as f64, a1), C64::new(0.0, a2))
    }
}

/// Grid used for the profile recursion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileGrid {
    /// Uniform points in the moving frame.
    pub points: usize,
    /// Chebyshev–Lobatto time nodes (odd, so `T/2` is a node).
    pub time_nodes: usize,
    /// RK4 steps across the whole horizon.
    pub rk_steps: usize,
}

impl Default for ProfileGrid {
    fn default() -> Self {
        Self { points: 128, time_nodes: 33, rk_steps: 1024 }
    }
}

/// One profile at one time node, split along `range(P) + ker(P)` and the parabolic block.
#[derive(Clone, Debug)]
pub struct ProfileSlice {
    pub mu: CMatrix,
    pub other: CMatrix,
    pub para: CMatrix,
}

impl ProfileSlice {
    fn zeros(dh: usize, dp: usize, n: usize) -> Self {
        Self { mu: CMatrix::zeros(dh, n), other: CMatrix::zeros(dh, n), para: CMatrix::zeros(dp, n) }
    }

    pub fn full(&self) -> CMatrix {
        stack(&(&self.mu + &self.other), &self.para)
    }
}

/// Coefficients of the adjoint operator in block form, with the spectral data at `nu`.
#[derive(Clone, Debug)]
struct AdjointTriple {
    dh: usize,
    dp: usize,
    nu: f64,
    a: CMatrix,
    k: CMatrix,
    diffusion: CMatrix,
    dinv: CMatrix,
    a12: CMatrix,
    k12: CMatrix,
    proj: CMatrix,
    /// `(A' - nu + P)^{-1}`, which inverts `A' - nu` on `ker(P)`.
    shift_inv: CMatrix,
    /// `K' + A12 D^{-1} A21`.
    k_eff: CMatrix,
}

impl AdjointTriple {
    fn new(sys: &System, mu: f64) -> Result<Self> {
        let (dh, dp) = (sys.d_h(), sys.d_p());
        let proj = sys.transport().projector(mu)?.adjoint();
        let a = -sys.a().adjoint();
        let k = sys.k().adjoint();
        let diffusion = sys.diffusion().adjoint();
        let dinv = diffusion.clone().try_inverse().ok_or(Error::H3Violated(0.0))?;
        let nu = -mu;
        let a11 = a.view((0, 0), (dh, dh)).into_owned();
        let a12 = a.view((0, dh), (dh, dp)).into_owned();
        let a21 = a.view((dh, 0), (dp, dh)).into_owned();
        let k11 = k.view((0, 0), (dh, dh)).into_owned();
        let k12 = k.view((0, dh), (dh, dp)).into_owned();
        let shift_inv = (&a11 - CMatrix::identity(dh, dh) * c(nu) + &proj)
            .try_inverse()
            .ok_or_else(|| Error::H4Violated("shifted transport block is singular".into()))?;
        let k_eff = k11 + &a12 * &dinv * a21;
        Ok(Self { dh, dp, nu, a, k, diffusion, dinv, a12, k12, proj, shift_inv, k_eff })
    }

    fn damping(&self) -> CMatrix {
        &self.proj * &self.k_eff * &self.proj
    }

    /// `B Y` for a full `d x n` field.
    fn b_apply(&self, y: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(y.nrows(), y.ncols());
        let p = &self.diffusion * y.rows(self.dh, self.dp);
        out.rows_mut(self.dh, self.dp).copy_from(&p);
        out
    }
}

fn stack(h: &CMatrix, p: &CMatrix) -> CMatrix {
    let mut out = CMatrix::zeros(h.nrows() + p.nrows(), h.ncols());
    out.rows_mut(0, h.nrows()).copy_from(h);
    out.rows_mut(h.nrows(), p.nrows()).copy_from(p);
    out
}

fn scale_cols(m: &CMatrix, f: &[C64]) -> CMatrix {
    let mut out = m.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col *= f[j];
    }
    out
}

/// The three operators of the expansion, acting on profiles sampled on the `s` grid.
struct Operators<'a> {
    triple: &'a AdjointTriple,
    grid: &'a PeriodicGrid,
    psi1: Vec<C64>,
    psi2: Vec<C64>,
}

impl Operators<'_> {
    /// `psi'^2 B`.
    fn l2(&self, y: &CMatrix) -> CMatrix {
        let sq: Vec<C64> = self.psi1.iter().map(|z| z * z).collect();
        scale_cols(&self.triple.b_apply(y), &sq)
    }

    /// `-i nu psi' + i psi' A - i psi'' B - 2 i psi' B d/ds`.
    fn l1(&self, y: &CMatrix) -> CMatrix {
        let t = self.triple;
        let ip1: Vec<C64> = self.psi1.iter().map(|z| I * z).collect();
        let ip2: Vec<C64> = self.psi2.iter().map(|z| I * z).collect();
        let transport = &t.a * y - y * c(t.nu);
        let ys = self.grid.derivative(y, 1);
        scale_cols(&(transport - t.b_apply(&ys) * c(2.0)), &ip1) - scale_cols(&t.b_apply(y), &ip2)
    }

    /// `d/dtau - nu d/ds - B d2/ds2 + A d/ds + K`, given the time derivative.
    fn l0(&self, y: &CMatrix, y_tau: &CMatrix) -> CMatrix {
        let t = self.triple;
        let ys = self.grid.derivative(y, 1);
        let yss = self.grid.derivative(y, 2);
        y_tau - &ys * c(t.nu) - t.b_apply(&yss) + &t.a * &ys + &t.k * y
    }
}

/// Profiles `Y_0..Y_q` on the (time node x moving-frame point) grid.
#[derive(Clone, Debug)]
pub struct WkbProfileSet {
    q: usize,
    phase: PhaseSpec,
    horizon: f64,
    grid: ProfileGrid,
    triple: AdjointTriple,
    s_grid: PeriodicGrid,
    tau: ChebyshevGrid,
    slices: Vec<Vec<ProfileSlice>>,
    full: Vec<Vec<CMatrix>>,
}

impl WkbProfileSet {
    pub fn order(&self) -> usize {
        self.q
    }

    pub fn phase(&self) -> &PhaseSpec {
        &self.phase
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn grid(&self) -> &ProfileGrid {
        &self.grid
    }

    pub fn tau_nodes(&self) -> &[f64] {
        &self.tau.nodes
    }

    pub fn s_points(&self) -> Vec<f64> {
        self.s_grid.points()
    }

    pub fn slice(&self, j: usize, node: usize) -> &ProfileSlice {
        &self.slices[j][node]
    }

    pub fn profile(&self, j: usize, node: usize) -> &CMatrix {
        &self.full[j][node]
    }

    /// Transport projector `P` onto the moving eigenspace of the adjoint.
    pub fn projector(&self) -> &CMatrix {
        &self.triple.proj
    }

    pub fn is_zero(&self) -> bool {
        self.full.iter().flatten().all(|m| m.iter().all(|z| *z == c(0.0)))
    }

    fn operators(&self) -> Operators<'_> {
        operators(&self.triple, &self.s_grid, &self.phase)
    }

    fn profile_or_zero(&self, j: i64, node: usize) -> CMatrix {
        if j < 0 || j as usize > self.q {
            CMatrix::zeros(self.triple.dh + self.triple.dp, self.s_grid.len())
        } else {
            self.full[j as usize][node].clone()
        }
    }

    /// Coefficient `E_k = L2 Y_{k+2} + L1 Y_{k+1} + L0 Y_k` of `h^k` in the residual.
    pub fn residual_coefficient(&self, k: i64, node: usize) -> CMatrix {
        let ops = self.operators();
        let mut out = ops.l2(&self.profile_or_zero(k + 2, node)) + ops.l1(&self.profile_or_zero(k + 1, node));
        if k >= 0 && k as usize <= self.q {
            let y_tau = self.tau.derivative_at(&self.full[k as usize], node);
            out += ops.l0(&self.full[k as usize][node], &y_tau);
        }
        out
    }

    /// Largest relative Fourier coefficient in the top third of the `s` spectrum.
    fn spectral_tail(&self) -> f64 {
        let n = self.s_grid.len();
        let cut = n / 3;
        let mut tail: f64 = 0.0;
        let mut head: f64 = 0.0;
        for m in self.full.iter().flatten() {
            for r in 0..m.nrows() {
                let row: Vec<C64> = m.row(r).iter().copied().collect();
                for (k, z) in self.s_grid.coefficients(&row).into_iter().enumerate() {
                    let w = k.min(n - k);
                    if w >= cut {
                        tail = tail.max(z.norm());
                    } else {
                        head = head.max(z.norm());
                    }
                }
            }
        }
        if head == 0.0 {
            0.0
        } else {
            tail / head
        }
    }

    /// `sum_j h^j Y_j` on a uniform grid of `points` in the moving frame at time node `node`.
    fn amplitude_field(&self, h: f64, node: usize, points: usize) -> CMatrix {
        let mut acc = CMatrix::zeros(self.triple.dh + self.triple.dp, self.s_grid.len());
        for j in (0..=self.q).rev() {
            acc = acc * c(h) + &self.full[j][node];
        }
        if points == self.s_grid.len() {
            acc
        } else {
            self.s_grid.resample(&acc, points)
        }
    }
}

fn operators<'a>(triple: &'a AdjointTriple, grid: &'a PeriodicGrid, phase: &PhaseSpec) -> Operators<'a> {
    let (psi1, psi2) = grid.points().into_iter().map(|s| {
        let (_, p1, p2) = phase.jet(s);
        (p1, p2)
    }).unzip();
    Operators { triple, grid, psi1, psi2 }
}

/// Runs the profile recursion for `j = 0..=q` on `[0, horizon]`. `init` gives the
/// initial value of the moving component of `Y_0`; it is projected onto `range(P)`.
pub fn build_profiles(
    sys: &System,
    phase: PhaseSpec,
    q: usize,
    horizon: f64,
    init: impl Fn(f64) -> CVector,
    grid: ProfileGrid,
) -> Result<WkbProfileSet> {
    if phase.carrier == 0 {
        return Err(Error::PhaseDegenerate);
    }
    if !(horizon > 0.0) || grid.points < 8 || grid.time_nodes < 3 || grid.rk_steps == 0 {
        return Err(Error::InvalidParameter("profile grid or horizon".into()));
    }
    let triple = AdjointTriple::new(sys, phase.mu)?;
    let (dh, dp) = (triple.dh, triple.dp);
    let s_grid = PeriodicGrid::new(grid.points);
    let tau = ChebyshevGrid::new(grid.time_nodes, horizon);
    let ns = s_grid.len();
    let nt = tau.len();
    let ops = operators(&triple, &s_grid, &phase);
    if ops.psi1.iter().any(|z| z.norm() < 1e-12) {
        return Err(Error::PhaseDegenerate);
    }
    let inv_ipsi: Vec<C64> = ops.psi1.iter().map(|z| 1.0 / (I * z)).collect();
    let i_over_psi: Vec<C64> = ops.psi1.iter().map(|z| I / z).collect();
    let neg_inv_sq: Vec<C64> = ops.psi1.iter().map(|z| -1.0 / (z * z)).collect();

    let mut y0 = CMatrix::zeros(dh, ns);
    for (k, s) in s_grid.points().into_iter().enumerate() {
        let v = init(s);
        if v.len() != dh {
            return Err(Error::DimensionMismatch(format!("initial profile has {} components", v.len())));
        }
        y0.set_column(k, &(&triple.proj * v));
    }

    let damping = triple.damping();
    let proj_a12_dinv = &triple.proj * &triple.a12 * &triple.dinv;
    let proj_keff = &triple.proj * &triple.k_eff;
    let eye_minus_p = CMatrix::identity(dh, dh) - &triple.proj;
    let zero_full = CMatrix::zeros(dh + dp, ns);

    let mut slices: Vec<Vec<ProfileSlice>> = Vec::with_capacity(q + 1);
    let mut full: Vec<Vec<CMatrix>> = Vec::with_capacity(q + 1);
    for j in 0..=q {
        // L0 and L1 of the two previous levels at each node
        let l0_of = |level: Option<&Vec<CMatrix>>, i: usize| match level {
            Some(ys) => ops.l0(&ys[i], &tau.derivative_at(ys, i)),
            None => zero_full.clone(),
        };
        let prev = j.checked_sub(1).map(|p| &full[p]);
        let prev2 = j.checked_sub(2).map(|p| &full[p]);
        let mut level = vec![ProfileSlice::zeros(dh, dp, ns); nt];
        let mut forcing = Vec::with_capacity(nt);
        for (i, slot) in level.iter_mut().enumerate() {
            let l0_prev = l0_of(prev, i);
            let l0_prev2 = l0_of(prev2, i);
            let l1_prev = prev.map_or_else(|| zero_full.clone(), |ys| ops.l1(&ys[i]));

            let p_src = l1_prev.rows(dh, dp) + l0_prev2.rows(dh, dp);
            let para = scale_cols(&(&triple.dinv * p_src), &neg_inv_sq);

            let h_src = -(&triple.a12 * &para) - scale_cols(&l0_prev.rows(0, dh).into_owned(), &inv_ipsi);
            let other = &triple.shift_inv * &eye_minus_p * h_src;

            let para_full = stack(&CMatrix::zeros(dh, ns), &para);
            let rest = ops.l1(&para_full).rows(dh, dp) + l0_prev.rows(dh, dp);
            let para_s = s_grid.derivative(&para, 1);
            let f = -(&proj_keff * &other) - &triple.proj * (&triple.a12 * para_s + &triple.k12 * &para)
                + &proj_a12_dinv * scale_cols(&rest.into_owned(), &i_over_psi);
            forcing.push(f);
            slot.other = other;
            slot.para = para;
        }

        let start = if j == 0 { y0.clone() } else { CMatrix::zeros(dh, ns) };
        let moving = integrate_moving(&damping, &forcing, &tau, start, grid.rk_steps);
        for (slot, m) in level.iter_mut().zip(moving) {
            slot.mu = &triple.proj * m;
        }
        full.push(level.iter().map(ProfileSlice::full).collect());
        slices.push(level);
    }
    Ok(WkbProfileSet { q, phase, horizon, grid, triple, s_grid, tau, slices, full })
}

/// RK4 for `Y' = -C Y + F(tau)` with `F` known at the Chebyshev nodes.
fn integrate_moving(damping: &CMatrix, forcing: &[CMatrix], tau: &ChebyshevGrid, start: CMatrix, steps: usize) -> Vec<CMatrix> {
    let horizon = tau.nodes[tau.len() - 1];
    let forced = forcing.iter().any(|f| f.iter().any(|z| *z != c(0.0)));
    let shape = (start.nrows(), start.ncols());
    let f_at = |t: f64| if forced { tau.interpolate(forcing, t) } else { CMatrix::zeros(shape.0, shape.1) };
    let rhs = |t: f64, y: &CMatrix| -(damping * y) + f_at(t);
    let mut out = Vec::with_capacity(tau.len());
    let mut y = start;
    out.push(y.clone());
    for w in tau.nodes.windows(2) {
        let (a, b) = (w[0], w[1]);
        let m = ((steps as f64 * (b - a) / horizon).ceil() as usize).max(2);
        let dt = (b - a) / m as f64;
        for step in 0..m {
            let t = a + step as f64 * dt;
            let k1 = rhs(t, &y);
            let k2 = rhs(t + 0.5 * dt, &(&y + &k1 * c(0.5 * dt)));
            let k3 = rhs(t + 0.5 * dt, &(&y + &k2 * c(0.5 * dt)));
            let k4 = rhs(t + dt, &(&y + &k3 * c(dt)));
            y += (k1 + k2 * c(2.0) + k3 * c(2.0) + k4) * c(dt / 6.0);
        }
        out.push(y.clone());
    }
    out
}

/// Least-squares slope of `ys` against `xs`.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

fn check_h_list(h_list: &[f64]) -> Result<()> {
    if h_list.len() < 2 {
        return Err(Error::InvalidParameter("need at least two values of h".into()));
    }
    for &h in h_list {
        let r = 1.0 / h;
        if !(h > 0.0) || (r - r.round()).abs() > 1e-9 * r {
            return Err(Error::InvalidParameter(format!("h = {h} is not the reciprocal of an integer")));
        }
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct ResidualFit {
    pub h: Vec<f64>,
    /// `sup |r_h|` over the time nodes and the moving-frame grid.
    pub sup: Vec<f64>,
    /// `None` when every residual is exactly zero.
    pub slope: Option<f64>,
}

/// Sup norm of `r_h = sum_k h^k E_k` with the carrier divided out.
pub fn residual_sup(profiles: &WkbProfileSet, h: f64) -> f64 {
    let q = profiles.q as i64;
    let mut sup: f64 = 0.0;
    for node in 0..profiles.tau.len() {
        let mut r = CMatrix::zeros(profiles.triple.dh + profiles.triple.dp, profiles.s_grid.len());
        for k in -2..=q {
            r += profiles.residual_coefficient(k, node) * c(h.powi(k as i32));
        }
        for col in r.column_iter() {
            sup = sup.max(col.norm());
        }
    }
    sup
}

/// Fits `log sup |r_h|` against `log h`.
pub fn residual_order(profiles: &WkbProfileSet, h_list: &[f64]) -> Result<ResidualFit> {
    check_h_list(h_list)?;
    if profiles.spectral_tail() > TAIL_TOL {
        return Err(Error::GridTooCoarse { have: profiles.s_grid.len(), need: 2 * profiles.s_grid.len() });
    }
    let sup: Vec<f64> = h_list.iter().map(|&h| residual_sup(profiles, h)).collect();
    let slope = if sup.iter().all(|&r| r == 0.0) {
        None
    } else {
        let xs: Vec<f64> = h_list.iter().map(|h| h.ln()).collect();
        let ys: Vec<f64> = sup.iter().map(|r| r.ln()).collect();
        Some(fit_slope(&xs, &ys))
    };
    Ok(ResidualFit { h: h_list.to_vec(), sup, slope })
}

/// `int G(s) e^{i psi(s)/h} e^{-i n s} ds` by the trapezoid rule on a uniform grid
/// of `G.ncols()` points (vector valued, one row per component).
fn carrier_overlap(g: &CMatrix, phase: &PhaseSpec, h: f64, n: i64) -> CVector {
    let points = g.ncols();
    let ds = TAU / points as f64;
    let freq = (phase.carrier as f64 / h).round() as i64 - n;
    let mut out = CVector::zeros(g.nrows());
    for k in 0..points {
        let s = k as f64 * ds;
        let (amp, _, _) = phase.jet(s);
        let w = C64::from_polar((-amp / h).exp(), (freq as f64) * s) * ds;
        out += g.column(k) * w;
    }
    out
}

fn fine_points(phase: &PhaseSpec, h: f64, base: usize) -> usize {
    let need = (8.0 * phase.carrier as f64 / h).ceil() as usize;
    need.max(base).next_power_of_two()
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayFit {
    pub h: Vec<f64>,
    /// `|(g_h(t), e_n)|` at `t = 0, T/2, T`.
    pub overlaps: Vec<[f64; 3]>,
    /// Smallest fitted exponent over the three times; infinite when the
    /// overlaps sit below the noise floor for all but one `h`.
    pub exponent: f64,
}

/// Decay in `h` of the `n`-th Fourier coefficient of the quasi-solution.
pub fn nonstationary_decay(profiles: &WkbProfileSet, n: i64, h_list: &[f64]) -> Result<DecayFit> {
    check_h_list(h_list)?;
    if profiles.spectral_tail() > TAIL_TOL {
        return Err(Error::GridTooCoarse { have: profiles.s_grid.len(), need: 2 * profiles.s_grid.len() });
    }
    let nt = profiles.tau.len();
    let nodes = [0, nt / 2, nt - 1];
    let mut overlaps = Vec::with_capacity(h_list.len());
    let mut scale: f64 = 0.0;
    for &h in h_list {
        let points = fine_points(&profiles.phase, h, profiles.s_grid.len());
        let mut row = [0.0; 3];
        for (slot, &node) in row.iter_mut().zip(&nodes) {
            let g = profiles.amplitude_field(h, node, points);
            scale = scale.max(g.column_iter().map(|c| c.norm()).fold(0.0, f64::max));
            // |e^{-i n nu t}| = 1, so the moving-frame overlap has the same modulus
            *slot = carrier_overlap(&g, &profiles.phase, h, n).norm();
        }
        overlaps.push(row);
    }
    if scale == 0.0 {
        return Ok(DecayFit { h: h_list.to_vec(), overlaps, exponent: f64::INFINITY });
    }
    let floor = NOISE_FLOOR * scale;
    let mut exponent = f64::INFINITY;
    for t in 0..3 {
        let (xs, ys): (Vec<f64>, Vec<f64>) = h_list
            .iter()
            .zip(&overlaps)
            .filter(|(_, o)| o[t] > floor)
            .map(|(h, o)| (h.ln(), o[t].ln()))
            .unzip();
        if xs.len() >= 2 {
            exponent = exponent.min(fit_slope(&xs, &ys));
        }
    }
    Ok(DecayFit { h: h_list.to_vec(), overlaps, exponent })
}

/// Settings shared by the two observability experiments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WkbConfig {
    pub h_list: Vec<f64>,
    pub q: usize,
    pub carrier: u32,
    /// Transport eigenvalue to follow; defaults to the slowest one.
    pub mu: Option<f64>,
    /// Modes `|n| <= low_cutoff` are removed from the terminal norm.
    pub low_cutoff: usize,
    /// Fourier truncation; defaults to `n0/h + 8/sqrt(h) + 8` for each `h`.
    pub truncation: Option<usize>,
    pub grid: ProfileGrid,
    /// Gauss–Legendre panels for the observation integral in time.
    pub time_panels: usize,
}

impl Default for WkbConfig {
    fn default() -> Self {
        Self {
            h_list: vec![1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0],
            q: 2,
            carrier: 1,
            mu: None,
            low_cutoff: 2,
            truncation: None,
            grid: ProfileGrid::default(),
            time_panels: 48,
        }
    }
}

impl WkbConfig {
    fn truncation_for(&self, h: f64) -> Result<usize> {
        let need = (self.carrier as f64 / h + 8.0 / h.sqrt()).ceil() as usize;
        match self.truncation {
            Some(n) if n < need => Err(Error::GridTooCoarse { have: n, need }),
            Some(n) => Ok(n),
            None => Ok(need + 8),
        }
    }

    fn mu_for(&self, sys: &System) -> Result<f64> {
        match self.mu {
            Some(mu) => {
                let idx = sys.transport().index_of(mu)?;
                Ok(sys.transport().eigenvalues[idx])
            }
            None => Ok(sys.transport().slowest_eigenvalue()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QuotientRow {
    pub h: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub quotient: f64,
}

/// Terminal norm over `low_cutoff < |n| <= N` and observation norm on `(0, T) x omega`
/// for the true truncated adjoint evolution of the quasi-solution's initial datum.
fn observe(sys: &System, omega: &TorusSubset, profiles: &WkbProfileSet, h: f64, cfg: &WkbConfig) -> Result<QuotientRow> {
    let n_trunc = cfg.truncation_for(h)?;
    let horizon = profiles.horizon;
    let points = fine_points(&profiles.phase, h, 4 * n_trunc + 4);
    let datum = profiles.amplitude_field(h, 0, points);

    // Fourier coefficients of the initial datum on the active band
    let mut modes: Vec<(i64, CVector)> = Vec::new();
    let mut peak: f64 = 0.0;
    for n in -(n_trunc as i64)..=n_trunc as i64 {
        let cn = carrier_overlap(&datum, &profiles.phase, h, n) * c(1.0 / TAU);
        peak = peak.max(cn.norm());
        modes.push((n, cn));
    }
    modes.retain(|(_, v)| v.norm() > 1e-16 * peak);
    if modes.is_empty() {
        return Ok(QuotientRow { h, lhs: 0.0, rhs: 0.0, quotient: f64::NAN });
    }

    let mut lhs2 = 0.0;
    for (n, v) in &modes {
        if n.unsigned_abs() as usize > cfg.low_cutoff {
            lhs2 += (adjoint_propagator(sys, *n, horizon)? * v).norm_squared();
        }
    }
    let lhs = (TAU * lhs2).sqrt();

    let n_lo = modes.first().map(|m| m.0).unwrap_or(0);
    let n_hi = modes.last().map(|m| m.0).unwrap_or(0);
    let indicator = indicator_coeffs(omega, (n_hi - n_lo) as usize);
    let m_adj = sys.m().adjoint();
    let rule = gauss_legendre(10);
    let mut rhs2 = 0.0;
    for (a, b) in time_panels(horizon, cfg.time_panels) {
        for (t, w) in mapped_rule(&rule, a, b) {
            let obs: Vec<CVector> = modes
                .iter()
                .map(|(n, v)| Ok(&m_adj * (adjoint_propagator(sys, *n, t)? * v)))
                .collect::<Result<_>>()?;
            let mut acc = C64::new(0.0, 0.0);
            for (i, (ni, fi)) in modes.iter().zip(&obs).map(|(m, f)| (m.0, f)).enumerate() {
                for (nj, fj) in modes.iter().zip(&obs).skip(i).map(|(m, f)| (m.0, f)) {
                    let term = fj.dotc(fi) * indicator.get(nj - ni);
                    acc += if ni == nj { term } else { term + term.conj() };
                }
            }
            rhs2 += w * TAU * acc.re;
        }
    }
    let rhs = rhs2.max(0.0).sqrt();
    Ok(QuotientRow { h, lhs, rhs, quotient: lhs / rhs })
}

/// Panels on `[0, T]`: geometric near 0 for the parabolic layer, then uniform.
fn time_panels(horizon: f64, uniform: usize) -> Vec<(f64, f64)> {
    let first = horizon / uniform as f64;
    let mut cuts = vec![0.0];
    cuts.extend((1..=16).rev().map(|k| first * 0.5f64.powi(k)));
    cuts.extend((1..=uniform).map(|j| j as f64 * first));
    cuts.windows(2).map(|w| (w[0], w[1])).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct SmallTimeReport {
    pub mu: f64,
    /// Packet center at `t = 0`; it moves to `x0 - mu T`.
    pub x0: f64,
    pub rows: Vec<QuotientRow>,
    /// Slope of `log(lhs/rhs)` against `log(1/h)`.
    pub exponent: f64,
}

/// Observability quotient for a localized quasi-solution whose characteristic
/// stays in the complement of `omega` on `[0, T]`.
pub fn small_time_experiment(sys: &System, omega: &TorusSubset, horizon: f64, cfg: &WkbConfig) -> Result<SmallTimeReport> {
    check_h_list(&cfg.h_list)?;
    let mu = cfg.mu_for(sys)?;
    let travel = mu.abs() * horizon;
    let (start, len) = omega.largest_gap().ok_or(Error::GeometryMismatch { need: travel })?;
    if travel >= len {
        return Err(Error::GeometryMismatch { need: travel });
    }
    let x0 = (start + 0.5 * len + 0.5 * mu * horizon).rem_euclid(TAU);
    quotient_table(sys, omega, horizon, x0, mu, cfg)
}

/// The quotient table for a packet started at `x0`, without the geometric check.
pub fn quotient_table(sys: &System, omega: &TorusSubset, horizon: f64, x0: f64, mu: f64, cfg: &WkbConfig) -> Result<SmallTimeReport> {
    check_h_list(&cfg.h_list)?;
    let phase = PhaseSpec { mu, amplitude: Amplitude::Well { x0 }, carrier: cfg.carrier };
    let basis = linalg::range_basis(sys.transport().projector(mu)?, 1e-10);
    let v0 = basis.column(0).into_owned();
    let profiles = build_profiles(sys, phase, cfg.q, horizon, |_| v0.clone(), cfg.grid)?;
    let rows: Vec<QuotientRow> = cfg.h_list.iter().map(|&h| observe(sys, omega, &profiles, h, cfg)).collect::<Result<_>>()?;
    let xs: Vec<f64> = rows.iter().map(|r| (1.0 / r.h).ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.quotient.ln()).collect();
    Ok(SmallTimeReport { mu, x0, rows, exponent: fit_slope(&xs, &ys) })
}

#[derive(Clone, Debug, Serialize)]
pub struct RoughDataReport {
    pub mu: f64,
    pub v0: Vec<(f64, f64)>,
    pub rows: Vec<QuotientRow>,
    /// `sqrt(2 pi) |e^{-T K_mu^*} V0|`, the predicted limit of `lhs`.
    pub lhs_limit: f64,
    /// Slope of `log rhs` against `log h`.
    pub rhs_exponent: f64,
}

/// Flat-phase quasi-solution along an unobservable direction `V0` of `(K_mu^*, M^*)`.
/// Without `v0` the first witness direction is used.
pub fn rough_data_experiment(
    sys: &System,
    omega: &TorusSubset,
    horizon: f64,
    cfg: &WkbConfig,
    v0: Option<CVector>,
) -> Result<RoughDataReport> {
    check_h_list(&cfg.h_list)?;
    let mu = cfg.mu_for(sys)?;
    let obstruction = rough_obstruction(sys, mu)?;
    if !obstruction.obstructed {
        return Err(Error::NoObstructionWitness { mu });
    }
    let w = &obstruction.witness;
    let v0 = match v0 {
        None => w.column(0).into_owned(),
        Some(v) => {
            let nv = v.norm();
            if nv == 0.0 {
                return Err(Error::InvalidParameter("V0 must be nonzero".into()));
            }
            if v.len() != sys.d_h() || (&v - w * (w.adjoint() * &v)).norm() > 1e-8 * nv {
                return Err(Error::NoObstructionWitness { mu });
            }
            v
        }
    };
    let phase = PhaseSpec { mu, amplitude: Amplitude::Flat, carrier: cfg.carrier };
    let profiles = build_profiles(sys, phase, cfg.q, horizon, |_| v0.clone(), cfg.grid)?;
    let rows: Vec<QuotientRow> = cfg.h_list.iter().map(|&h| observe(sys, omega, &profiles, h, cfg)).collect::<Result<_>>()?;
    let kstar = crate::modal::k_mu_star(sys, mu)?;
    let lhs_limit = TAU.sqrt() * (linalg::expm(&(kstar * c(-horizon)))? * &v0).norm();
    let xs: Vec<f64> = rows.iter().map(|r| r.h.ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.rhs.ln()).collect();
    Ok(RoughDataReport {
        mu,
        v0: v0.iter().map(|z| (z.re, z.im)).collect(),
        rows,
        lhs_limit,
        rhs_exponent: fit_slope(&xs, &ys),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modal::k_mu_star;
    use crate::model::SystemSpec;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn coupled() -> System {
        SystemSpec {
            d_h: 1,
            d_p: 1,
            diffusion: DMatrix::from_element(1, 1, 1.0),
            advection: DMatrix::from_row_slice(2, 2, &[1.0, 0.8, 0.3, 0.2]),
            coupling: DMatrix::from_row_slice(2, 2, &[0.4, 0.5, 0.2, 0.1]),
            control: DMatrix::from_column_slice(2, 1, &[0.0, 1.0]),
        }
        .validate()
        .unwrap()
    }

    fn three_by_three() -> System {
        SystemSpec {
            d_h: 2,
            d_p: 1,
            diffusion: DMatrix::from_element(1, 1, 1.5),
            advection: DMatrix::from_row_slice(3, 3, &[1.0, 0.3, 0.4, 0.2, -0.7, 0.1, 0.5, 0.6, 0.2]),
            coupling: DMatrix::from_row_slice(3, 3, &[0.3, 0.1, 0.2, 0.0, 0.4, 0.3, 0.2, 0.1, 0.5]),
            control: DMatrix::from_column_slice(3, 1, &[0.0, 0.0, 1.0]),
        }
        .validate()
        .unwrap()
    }

    fn well(sys: &System, x0: f64) -> PhaseSpec {
        PhaseSpec { mu: sys.transport().eigenvalues[0], amplitude: Amplitude::Well { x0 }, carrier: 1 }
    }

    fn eigen_init(sys: &System, mu: f64) -> CVector {
        linalg::range_basis(&sys.transport().projector(mu).unwrap().adjoint(), 1e-10).column(0).into_owned()
    }

    #[test]
    fn damping_matches_k_mu_star() {
        for sys in [coupled(), three_by_three()] {
            for &mu in &sys.transport().eigenvalues {
                let t = AdjointTriple::new(&sys, mu).unwrap();
                assert!((t.damping() - k_mu_star(&sys, mu).unwrap()).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn flat_phase_leading_profile_is_exponential() {
        let sys = coupled();
        let mu = sys.transport().eigenvalues[0];
        let v0 = eigen_init(&sys, mu);
        let phase = PhaseSpec { mu, amplitude: Amplitude::Flat, carrier: 2 };
        let set = build_profiles(&sys, phase, 2, 1.3, |_| v0.clone(), ProfileGrid::default()).unwrap();
        let kstar = k_mu_star(&sys, mu).unwrap();
        for (i, &t) in set.tau_nodes().iter().enumerate() {
            let want = linalg::expm(&(&kstar * c(-t))).unwrap() * &v0;
            let got = &set.slice(0, i).mu;
            for col in got.column_iter() {
                assert!((col - &want).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn zero_initial_profile_gives_zero_set() {
        let sys = three_by_three();
        let set = build_profiles(&sys, well(&sys, 1.0), 3, 1.0, |_| CVector::zeros(2), ProfileGrid::default()).unwrap();
        assert!(set.is_zero());
        let fit = residual_order(&set, &[0.5, 0.25]).unwrap();
        assert!(fit.slope.is_none());
        assert_eq!(nonstationary_decay(&set, 0, &[0.5, 0.25]).unwrap().exponent, f64::INFINITY);
    }

    #[test]
    fn leading_parabolic_profile_vanishes_and_split_is_exact() {
        let sys = three_by_three();
        let phase = well(&sys, 2.0);
        let v0 = eigen_init(&sys, phase.mu);
        let set = build_profiles(&sys, phase, 3, 0.8, |s| &v0 * c(1.0 + 0.5 * s.cos()), ProfileGrid::default()).unwrap();
        let p = set.projector().clone();
        let q = CMatrix::identity(2, 2) - &p;
        for i in 0..set.tau_nodes().len() {
            assert_eq!(set.slice(0, i).para.norm(), 0.0);
            for j in 0..=3 {
                let sl = set.slice(j, i);
                let scale = 1.0 + sl.mu.norm() + sl.other.norm();
                assert!((&q * &sl.mu).norm() <= 1e-10 * scale);
                assert!((&p * &sl.other).norm() <= 1e-10 * scale);
            }
        }
    }

    #[test]
    fn recursion_cancels_low_orders_at_random_points() {
        let sys = three_by_three();
        let phase = well(&sys, 0.7);
        let v0 = eigen_init(&sys, phase.mu);
        let set = build_profiles(&sys, phase, 3, 1.0, |s| &v0 * c(1.0 + 0.3 * (2.0 * s).sin()), ProfileGrid::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let node = rng.gen_range(0..set.tau_nodes().len());
            let col = rng.gen_range(0..set.grid().points);
            let scale = 1.0 + set.profile(3, node).norm();
            for k in -2..=1 {
                let e = set.residual_coefficient(k, node);
                assert!(e.column(col).norm() < 1e-7 * scale, "E_{k} = {:e}", e.column(col).norm());
            }
            assert!(set.residual_coefficient(2, node).norm() > 1e-6);
        }
    }

    #[test]
    fn residual_halves_with_h_for_second_order() {
        let sys = coupled();
        let phase = well(&sys, 3.0);
        let v0 = eigen_init(&sys, phase.mu);
        let set = build_profiles(&sys, phase, 2, 1.0, |_| v0.clone(), ProfileGrid::default()).unwrap();
        let hs = [1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0];
        let fit = residual_order(&set, &hs).unwrap();
        for w in fit.sup.windows(2) {
            let ratio = w[1] / w[0];
            assert!((0.35..=0.7).contains(&ratio), "ratio {ratio}");
        }
    }

    fn bessel_i(order: u32, z: f64) -> f64 {
        // power series summed in log space
        let mut total = 0.0;
        for k in 0..400u32 {
            let lg = (2 * k + order) as f64 * (z / 2.0).ln() - ln_factorial(k) - ln_factorial(k + order);
            total += lg.exp();
        }
        total
    }

    fn ln_factorial(n: u32) -> f64 {
        (1..=n).map(|k| (k as f64).ln()).sum()
    }

    #[test]
    fn overlap_of_bare_packet_matches_bessel() {
        let x0 = 1.1;
        let phase = PhaseSpec { mu: 1.0, amplitude: Amplitude::Well { x0 }, carrier: 1 };
        for (h, n) in [(1.0 / 8.0, 0i64), (1.0 / 16.0, 3), (1.0 / 24.0, -2)] {
            let points = fine_points(&phase, h, 64);
            let g = CMatrix::from_element(1, points, c(1.0));
            let got = carrier_overlap(&g, &phase, h, n)[0];
            let m = (1.0 / h).round() as i64 - n;
            let want = TAU * (-1.0 / h).exp() * bessel_i(m.unsigned_abs() as u32, 1.0 / h);
            assert!((got.norm() - want).abs() < 1e-12 * want.max(1e-300) + 1e-15, "h={h} n={n}");
            let phase_factor = C64::from_polar(1.0, m as f64 * x0);
            assert!((got - phase_factor * want).norm() < 1e-9 * want, "{got} vs {}", phase_factor * want);
        }
    }

    #[test]
    fn low_modes_decay_faster_than_any_power() {
        let sys = coupled();
        let phase = well(&sys, 2.5);
        let v0 = eigen_init(&sys, phase.mu);
        let set = build_profiles(&sys, phase, 2, 1.0, |_| v0.clone(), ProfileGrid::default()).unwrap();
        let fit = nonstationary_decay(&set, 1, &[1.0 / 4.0, 1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0]).unwrap();
        assert!(fit.exponent >= 3.0, "exponent {}", fit.exponent);
    }

    #[test]
    fn rejects_degenerate_phase_and_bad_steps() {
        let sys = coupled();
        let phase = PhaseSpec { carrier: 0, ..well(&sys, 0.0) };
        let err = build_profiles(&sys, phase, 1, 1.0, |_| CVector::zeros(1), ProfileGrid::default()).unwrap_err();
        assert_eq!(err, Error::PhaseDegenerate);
        let set = build_profiles(&sys, well(&sys, 0.0), 1, 1.0, |_| CVector::zeros(1), ProfileGrid::default()).unwrap();
        assert!(matches!(residual_order(&set, &[0.3, 0.1]), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn too_long_horizon_is_a_geometry_mismatch() {
        let sys = coupled();
        let omega = TorusSubset::new(&[(0.0, std::f64::consts::PI)]).unwrap();
        let t_star = sys.t_star(&omega);
        let err = small_time_experiment(&sys, &omega, 1.1 * t_star, &WkbConfig::default()).unwrap_err();
        assert!(matches!(err, Error::GeometryMismatch { .. }));
    }

    #[test]
    fn full_observation_keeps_quotient_bounded() {
        let sys = SystemSpec { control: DMatrix::identity(2, 2), ..coupled().spec().clone() }.validate().unwrap();
        let omega = TorusSubset::new(&[(0.0, TAU)]).unwrap();
        let cfg = WkbConfig { h_list: vec![1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0], ..WkbConfig::default() };
        let mu = sys.transport().slowest_eigenvalue();
        let rep = quotient_table(&sys, &omega, 1.0, 2.0, mu, &cfg).unwrap();
        for r in &rep.rows {
            assert!(r.quotient < 5.0, "{r:?}");
        }
    }

    #[test]
    fn fully_observed_hyperbolic_block_has_no_witness() {
        let sys = SystemSpec { control: DMatrix::identity(2, 2), ..coupled().spec().clone() }.validate().unwrap();
        let omega = TorusSubset::new(&[(0.0, 1.0)]).unwrap();
        let err = rough_data_experiment(&sys, &omega, 1.0, &WkbConfig::default(), None).unwrap_err();
        assert!(matches!(err, Error::NoObstructionWitness { .. }));
        let zero = rough_data_experiment(&coupled(), &omega, 1.0, &WkbConfig::default(), Some(CVector::zeros(1)));
        assert!(matches!(zero, Err(Error::InvalidParameter(_))));
    }
}
