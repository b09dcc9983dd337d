use nalgebra::DMatrix;
use ptctl::algsolv::PipelineConfig;
use ptctl::dynamics::SpectralField;
use ptctl::hum::{Discretization, TimeBasisKind};
use ptctl::linalg::{CVector, C64};
use ptctl::model::{SystemSpec, TorusSubset};
use ptctl::wkb::WkbConfig;
use ptctl::{Error, Result};
use serde::{Deserialize, Serialize};

/// Coefficient matrices as row-major nested arrays.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemBlock {
    pub d_h: usize,
    pub d_p: usize,
    pub diffusion: Vec<Vec<f64>>,
    pub advection: Vec<Vec<f64>>,
    pub coupling: Vec<Vec<f64>>,
    pub control: Vec<Vec<f64>>,
}

fn matrix(name: &str, rows: &[Vec<f64>], nrows: usize, ncols: Option<usize>) -> Result<DMatrix<f64>> {
    let ncols = ncols.unwrap_or_else(|| rows.first().map_or(0, Vec::len));
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::DimensionMismatch(format!("{name} must be {nrows} x {ncols}")));
    }
    Ok(DMatrix::from_row_iterator(nrows, ncols, rows.iter().flatten().copied()))
}

impl SystemBlock {
    pub fn to_spec(&self) -> Result<SystemSpec> {
        let d = self.d_h + self.d_p;
        Ok(SystemSpec {
            d_h: self.d_h,
            d_p: self.d_p,
            diffusion: matrix("diffusion", &self.diffusion, self.d_p, Some(self.d_p))?,
            advection: matrix("advection", &self.advection, d, Some(d))?,
            coupling: matrix("coupling", &self.coupling, d, Some(d))?,
            control: matrix("control", &self.control, d, None)?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscretizationBlock {
    pub n_max: usize,
    pub n_ctrl: usize,
    pub basis: TimeBasisKind,
    pub basis_size: usize,
}

impl Default for DiscretizationBlock {
    fn default() -> Self {
        Self { n_max: 32, n_ctrl: 32, basis: TimeBasisKind::PiecewiseConstant, basis_size: 32 }
    }
}

impl From<DiscretizationBlock> for Discretization {
    fn from(b: DiscretizationBlock) -> Self {
        Discretization { n_max: b.n_max, n_ctrl: b.n_ctrl, basis: b.basis, basis_size: b.basis_size }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeValue {
    pub n: i64,
    pub re: Vec<f64>,
    #[serde(default)]
    pub im: Vec<f64>,
}

/// Initial state, truncated at `discretization.n_max`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialDatum {
    /// Real field with `|c_n| = (1 + n^2)^{-decay}` and directions drawn from `seed`.
    SmoothRandom { decay: f64 },
    /// Explicit Fourier coefficients; unlisted modes are zero.
    Modes { modes: Vec<ModeValue> },
}

impl Default for InitialDatum {
    fn default() -> Self {
        InitialDatum::SmoothRandom { decay: 3.0 }
    }
}

impl InitialDatum {
    pub fn field(&self, n_max: usize, dim: usize, seed: u64) -> Result<SpectralField> {
        match self {
            InitialDatum::SmoothRandom { decay } => Ok(SpectralField::smooth_random(n_max, dim, *decay, seed)),
            InitialDatum::Modes { modes } => {
                let mut f = SpectralField::zeros(n_max, dim);
                for m in modes {
                    if m.n.unsigned_abs() as usize > n_max {
                        return Err(Error::InvalidParameter(format!("mode {} beyond truncation {n_max}", m.n)));
                    }
                    if m.re.len() != dim || !(m.im.is_empty() || m.im.len() == dim) {
                        return Err(Error::DimensionMismatch(format!("mode {} needs {dim} components", m.n)));
                    }
                    *f.get_mut(m.n) = CVector::from_fn(dim, |i, _| C64::new(m.re[i], m.im.get(i).copied().unwrap_or(0.0)));
                }
                Ok(f)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlMethod {
    /// Minimum-norm control over the localized input map.
    #[default]
    Hum,
    /// Localized low modes followed by per-mode reduced controls.
    Pipeline,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlBlock {
    pub method: ControlMethod,
    pub pipeline: PipelineConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepBlock {
    pub horizons: Vec<f64>,
    /// Read `horizons` as multiples of the minimal time.
    pub relative: bool,
}

impl Default for SweepBlock {
    fn default() -> Self {
        Self { horizons: vec![0.6, 0.8, 0.9, 1.1, 1.2, 1.5], relative: true }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    #[default]
    SmallTime,
    RoughData,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentBlock {
    pub kind: ExperimentKind,
    #[serde(flatten)]
    pub wkb: WkbConfig,
    /// Direction for the rough-data experiment; defaults to the first unobservable one.
    pub v0: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemBlock,
    /// Control region as `[start, end]` arcs in radians.
    pub omega: Vec<[f64; 2]>,
    /// Control horizon; defaults to twice the minimal time.
    #[serde(rename = "T", default)]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub discretization: DiscretizationBlock,
    #[serde(default)]
    pub initial: InitialDatum,
    #[serde(default)]
    pub control: ControlBlock,
    #[serde(default)]
    pub sweep: SweepBlock,
    #[serde(default)]
    pub experiment: ExperimentBlock,
    #[serde(default)]
    pub seed: u64,
}

impl RunConfig {
    pub fn region(&self) -> Result<TorusSubset> {
        let arcs: Vec<(f64, f64)> = self.omega.iter().map(|a| (a[0], a[1])).collect();
        TorusSubset::new(&arcs)
    }

    /// Fills the horizon from the minimal time when it was left out.
    pub fn resolve_horizon(&mut self, t_star: f64) -> Result<f64> {
        match self.horizon {
            Some(t) if t > 0.0 && t.is_finite() => Ok(t),
            Some(t) => Err(Error::InvalidParameter(format!("T = {t} must be positive"))),
            None if t_star.is_finite() => {
                let t = 2.0 * t_star;
                self.horizon = Some(t);
                Ok(t)
            }
            None => Err(Error::InvalidParameter("T is required when the minimal time is infinite".into())),
        }
    }
}
