//! Fourier-truncated free and adjoint dynamics and localized forcing.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{c, expm, CMatrix, CVector, C64};
use crate::model::{System, TorusSubset, TAU};
use crate::spectral::PeriodicGrid;

/// Tolerance for the hyperbolic-range check on backward evolution.
pub const BACKWARD_TOL: f64 = 1e-8;

/// Fourier coefficients `c_n`, `|n| <= n_max`, of a `C^dim`-valued function
/// `f(x) = sum_n c_n e^{inx}`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    n_max: usize,
    dim: usize,
    coeffs: Vec<CVector>,
}

impl SpectralField {
    pub fn zeros(n_max: usize, dim: usize) -> Self {
        Self { n_max, dim, coeffs: vec![CVector::zeros(dim); 2 * n_max + 1] }
    }

    pub fn from_fn(n_max: usize, dim: usize, mut f: impl FnMut(i64) -> CVector) -> Self {
        let coeffs = (-(n_max as i64)..=n_max as i64)
            .map(|n| {
                let v = f(n);
                assert_eq!(v.len(), dim);
                v
            })
            .collect();
        Self { n_max, dim, coeffs }
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn modes(&self) -> impl Iterator<Item = i64> {
        -(self.n_max as i64)..=self.n_max as i64
    }

    pub fn get(&self, n: i64) -> &CVector {
        &self.coeffs[(n + self.n_max as i64) as usize]
    }

    pub fn get_mut(&mut self, n: i64) -> &mut CVector {
        &mut self.coeffs[(n + self.n_max as i64) as usize]
    }

    pub fn coeff_or_zero(&self, n: i64) -> CVector {
        if n.unsigned_abs() as usize <= self.n_max {
            self.get(n).clone()
        } else {
            CVector::zeros(self.dim)
        }
    }

    /// Same function seen with a different truncation order.
    pub fn resized(&self, n_max: usize) -> Self {
        Self::from_fn(n_max, self.dim, |n| self.coeff_or_zero(n))
    }

    /// `L^2(T)` norm, `sqrt(2 pi sum |c_n|^2)`.
    pub fn l2_norm(&self) -> f64 {
        (TAU * self.coeffs.iter().map(|v| v.norm_squared()).sum::<f64>()).sqrt()
    }

    /// Discrete Sobolev norm `(sum (1 + n^2)^s |c_n|^2)^{1/2}`.
    pub fn sobolev_norm(&self, s: f64) -> f64 {
        self.modes()
            .zip(&self.coeffs)
            .map(|(n, v)| (1.0 + (n * n) as f64).powf(s) * v.norm_squared())
            .sum::<f64>()
            .sqrt()
    }

    /// Whether `c_{-n} = conj(c_n)` up to `tol`, i.e. the field is real-valued.
    pub fn is_conjugate_symmetric(&self, tol: f64) -> bool {
        self.modes().all(|n| (self.get(-n) - self.get(n).conjugate()).norm() <= tol)
    }

    /// Coefficients of a real function sampled on `8 (n_max + 1)` uniform points,
    /// symmetrized so the field is exactly real.
    pub fn from_real_fn(n_max: usize, dim: usize, f: impl Fn(f64) -> Vec<f64>) -> Self {
        let grid = PeriodicGrid::new(8 * (n_max + 1));
        let samples: Vec<Vec<f64>> = grid.points().into_iter().map(&f).collect();
        let rows: Vec<Vec<C64>> = (0..dim)
            .map(|r| grid.coefficients(&samples.iter().map(|v| c(v[r])).collect::<Vec<_>>()))
            .collect();
        let len = grid.len() as i64;
        let mut out = Self::from_fn(n_max, dim, |n| CVector::from_fn(dim, |r, _| rows[r][n.rem_euclid(len) as usize]));
        for n in 0..=n_max as i64 {
            let avg = (out.get(n) + out.get(-n).conjugate()) * c(0.5);
            *out.get_mut(-n) = avg.conjugate();
            *out.get_mut(n) = avg;
        }
        out
    }

    /// `L^2(T)` inner product `int f . conj(g)`.
    pub fn inner(&self, other: &Self) -> C64 {
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| b.dotc(a)).sum::<C64>() * TAU
    }

    pub fn map_modes(&self, mut f: impl FnMut(i64, &CVector) -> Result<CVector>) -> Result<Self> {
        let mut out = Self::zeros(self.n_max, self.dim);
        for n in self.modes() {
            let v = f(n, self.get(n))?;
            out.dim = v.len();
            *out.get_mut(n) = v;
        }
        Ok(out)
    }

    pub fn axpy(&mut self, a: C64, other: &Self) {
        for (x, y) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *x += y * a;
        }
    }

    /// Stacked coefficient vector, modes in increasing order.
    pub fn to_vector(&self) -> CVector {
        let mut v = CVector::zeros(self.coeffs.len() * self.dim);
        for (i, cn) in self.coeffs.iter().enumerate() {
            v.rows_mut(i * self.dim, self.dim).copy_from(cn);
        }
        v
    }

    pub fn from_vector(n_max: usize, dim: usize, v: &CVector) -> Self {
        Self::from_fn(n_max, dim, |n| v.rows((n + n_max as i64) as usize * dim, dim).into_owned())
    }

    /// Random real-valued field with `|c_n| = (1 + n^2)^{-decay}` and unit
    /// random directions, reproducible from `seed`.
    pub fn smooth_random(n_max: usize, dim: usize, decay: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Self::zeros(n_max, dim);
        for n in 0..=n_max as i64 {
            let mut v = CVector::from_fn(dim, |_, _| {
                let re: f64 = rng.gen_range(-1.0..1.0);
                let im: f64 = if n == 0 { 0.0 } else { rng.gen_range(-1.0..1.0) };
                C64::new(re, im)
            });
            let nv = v.norm().max(f64::MIN_POSITIVE);
            v *= c((1.0 + (n * n) as f64).powf(-decay) / nv);
            *out.get_mut(-n) = v.conjugate();
            *out.get_mut(n) = v;
        }
        out
    }
}

/// Fourier coefficients of the indicator of a control region.
#[derive(Clone, Debug)]
pub struct IndicatorSpectrum {
    m_max: usize,
    coeffs: Vec<C64>,
}

impl IndicatorSpectrum {
    pub fn m_max(&self) -> usize {
        self.m_max
    }

    pub fn get(&self, m: i64) -> C64 {
        assert!(m.unsigned_abs() as usize <= self.m_max, "indicator coefficient {m} out of range");
        self.coeffs[(m + self.m_max as i64) as usize]
    }
}

/// `c_m = (1/2pi) int_omega e^{-imx} dx` in closed form, `|m| <= m_max`.
pub fn indicator_coeffs(omega: &TorusSubset, m_max: usize) -> IndicatorSpectrum {
    let coeffs = (-(m_max as i64)..=m_max as i64)
        .map(|m| {
            if m == 0 {
                return c(omega.measure() / TAU);
            }
            let mf = m as f64;
            omega
                .arcs()
                .iter()
                .map(|&(a, b)| {
                    let ea = C64::new(0.0, -mf * a).exp();
                    let eb = C64::new(0.0, -mf * b).exp();
                    (ea - eb) / C64::new(0.0, TAU * mf)
                })
                .sum()
        })
        .collect();
    IndicatorSpectrum { m_max, coeffs }
}

/// `exp(t B_n)`.
pub fn propagator(sys: &System, n: i64, t: f64) -> Result<CMatrix> {
    expm(&(sys.mode_matrix(n) * c(t)))
}

/// `exp(t B_n^*)`, built from the adjoint symbol directly.
pub fn adjoint_propagator(sys: &System, n: i64, t: f64) -> Result<CMatrix> {
    expm(&(sys.adjoint_mode_matrix(n) * c(t)))
}

/// Free evolution over time `t`. Negative times are accepted only for data
/// in the hyperbolic range of every mode.
pub fn evolve_free(sys: &System, f: &SpectralField, t: f64) -> Result<SpectralField> {
    if t < 0.0 {
        for n in f.modes() {
            let v = f.get(n);
            let nv = v.norm();
            if nv == 0.0 {
                continue;
            }
            let split = sys.eigenprojection_split(n).map_err(|_| Error::BackwardParabolic { mode: n })?;
            if (&split.p_p * v).norm() > BACKWARD_TOL * nv {
                return Err(Error::BackwardParabolic { mode: n });
            }
        }
    }
    f.map_modes(|n, v| Ok(propagator(sys, n, t)? * v))
}

/// Evolution under the adjoint dynamics `g' = B_n^* g` over time `t >= 0`.
pub fn evolve_adjoint(sys: &System, g: &SpectralField, t: f64) -> Result<SpectralField> {
    g.map_modes(|n, v| Ok(adjoint_propagator(sys, n, t)? * v))
}

/// Forcing coefficients of `M (u 1_omega)` for a control field `u` with
/// `|m| <= u.n_max()`, truncated to `|n| <= n_max`.
pub fn apply_localized_control(
    sys: &System,
    u: &SpectralField,
    indicator: &IndicatorSpectrum,
    n_max: usize,
) -> Result<SpectralField> {
    if u.dim() != sys.n_controls() {
        return Err(Error::DimensionMismatch(format!("control has {} components", u.dim())));
    }
    if indicator.m_max() < n_max + u.n_max() {
        return Err(Error::DimensionMismatch("indicator spectrum too short".into()));
    }
    Ok(SpectralField::from_fn(n_max, sys.dim(), |n| {
        let mut acc = CVector::zeros(u.dim());
        for m in u.modes() {
            acc += u.get(m) * indicator.get(n - m);
        }
        sys.m() * acc
    }))
}
