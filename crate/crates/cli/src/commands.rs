use std::fs;
use std::path::{Path, PathBuf};

use ptctl::algsolv::{pipeline, ModeResidual, E_TOL};
use ptctl::casebook::{self, CaseOutcome};
use ptctl::hum::{self, Discretization, SweepPoint};
use ptctl::linalg::{CMatrix, CVector, C64};
use ptctl::modal::{self, exceptional_modes, AnalysisReport, KalmanDepth, ModeStatus, Regularity, Verdict};
use ptctl::model::{System, TorusSubset};
use ptctl::wkb::{self, QuotientRow};
use ptctl::Error;
use serde::Serialize;

use crate::config::{ControlMethod, ExperimentKind, RunConfig};

/// Failure carrying the process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::H1Violated
            | Error::H3Violated(_)
            | Error::H4Violated(_)
            | Error::DimensionMismatch(_)
            | Error::EmptyRegion
            | Error::InvalidParameter(_)
            | Error::EigenvalueNotInSpectrum { .. }
            | Error::PhaseDegenerate
            | Error::GridTooCoarse { .. }
            | Error::NoObstructionWitness { .. } => 2,
            Error::TimeTooShort { .. } | Error::GeometryMismatch { .. } => 3,
            Error::NotInE { .. } => 4,
            _ => 5,
        };
        Failure::new(code, e.to_string())
    }
}

pub type Outcome<T> = std::result::Result<T, Failure>;

fn pair(z: &C64) -> [f64; 2] {
    [z.re, z.im]
}

fn columns(m: &CMatrix) -> Vec<Vec<[f64; 2]>> {
    m.column_iter().map(|c| c.iter().map(pair).collect()).collect()
}

fn vector(v: &CVector) -> Vec<[f64; 2]> {
    v.iter().map(pair).collect()
}

fn write_json(out: &Path, name: &str, value: &impl Serialize) -> Outcome<PathBuf> {
    fs::create_dir_all(out).map_err(|e| Failure::new(1, format!("cannot create {}: {e}", out.display())))?;
    let path = out.join(name);
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::new(1, e.to_string()))?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Failure::new(1, format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

fn write_csv<R: Serialize>(out: &Path, name: &str, header: &[&str], rows: &[R]) -> Outcome<PathBuf> {
    fs::create_dir_all(out).map_err(|e| Failure::new(1, format!("cannot create {}: {e}", out.display())))?;
    let path = out.join(name);
    let io = |e: csv::Error| Failure::new(1, format!("cannot write {}: {e}", path.display()));
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(&path).map_err(io)?;
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.serialize(r).map_err(io)?;
    }
    w.flush().map_err(|e| Failure::new(1, e.to_string()))?;
    Ok(path)
}

struct Setup {
    sys: System,
    omega: TorusSubset,
    t_star: f64,
    horizon: f64,
}

fn setup(cfg: &mut RunConfig) -> Outcome<Setup> {
    let sys = cfg.system.to_spec()?.validate()?;
    let omega = cfg.region()?;
    let t_star = sys.t_star(&omega);
    let horizon = cfg.resolve_horizon(t_star)?;
    Ok(Setup { sys, omega, t_star, horizon })
}

#[derive(Serialize)]
struct ExceptionalEntry {
    n: i64,
    status: ModeStatus,
    /// Readable form of the constraint on `c_n(f0)`.
    constraint: String,
    range: Vec<Vec<[f64; 2]>>,
}

#[derive(Serialize)]
struct ObstructionEntry {
    mu: f64,
    obstructed: bool,
    witness_dim: usize,
    witness: Vec<Vec<[f64; 2]>>,
}

#[derive(Serialize)]
struct AnalyzeReport<'a> {
    command: &'static str,
    config: &'a RunConfig,
    verdict: Verdict,
    t_star: f64,
    ell: f64,
    horizon: f64,
    /// `None` when the Kalman matrix never reaches full rank.
    k0: Option<usize>,
    regularity: Option<Regularity>,
    n_min: i64,
    exceptional: Vec<ExceptionalEntry>,
    obstructions: Vec<ObstructionEntry>,
}

fn describe_range(n: i64, range: &CMatrix) -> String {
    let cols: Vec<String> = range
        .column_iter()
        .map(|c| {
            let parts: Vec<String> = c.iter().map(|z| if z.im.abs() < 1e-14 { format!("{:.6}", z.re) } else { format!("{:.6}{:+.6}i", z.re, z.im) }).collect();
            format!("({})", parts.join(", "))
        })
        .collect();
    format!("c_{n}(f0) in span{{{}}}", cols.join(", "))
}

fn analysis_report<'a>(cfg: &'a RunConfig, report: &AnalysisReport) -> AnalyzeReport<'a> {
    AnalyzeReport {
        command: "analyze",
        config: cfg,
        verdict: report.verdict,
        t_star: report.t_star,
        ell: report.ell,
        horizon: report.horizon,
        k0: match report.depth {
            KalmanDepth::Finite(k) => Some(k),
            KalmanDepth::NeverFullRank => None,
        },
        regularity: report.regularity.clone(),
        n_min: report.n_min,
        exceptional: report
            .exceptional
            .iter()
            .map(|m| ExceptionalEntry { n: m.n, status: m.status, constraint: describe_range(m.n, &m.range_basis), range: columns(&m.range_basis) })
            .collect(),
        obstructions: report
            .obstructions
            .iter()
            .map(|o| ObstructionEntry { mu: o.mu, obstructed: o.obstructed, witness_dim: o.witness_dim, witness: columns(&o.witness) })
            .collect(),
    }
}

pub fn analyze(mut cfg: RunConfig, out: &Path) -> Outcome<String> {
    let s = setup(&mut cfg)?;
    let report = modal::analyze(&s.sys, &s.omega, s.horizon)?;
    let doc = analysis_report(&cfg, &report);
    let path = write_json(out, "report.json", &doc)?;
    let p = report.regularity.as_ref().and_then(|r| r.p_index);
    let modes: Vec<i64> = report.exceptional.iter().map(|m| m.n).collect();
    Ok(format!(
        "verdict {:?}  T* = {:.6}  T = {:.6}  p = {}  exceptional {:?}\nwrote {}",
        report.verdict,
        report.t_star,
        s.horizon,
        p.map_or("-".into(), |p| p.to_string()),
        modes,
        path.display()
    ))
}

#[derive(Serialize)]
struct BasisMeta {
    kind: ptctl::hum::TimeBasisKind,
    size: usize,
    horizon: f64,
    breakpoints: Vec<f64>,
}

#[derive(Serialize)]
struct PlanDump {
    basis: BasisMeta,
    n_ctrl: usize,
    n_controls: usize,
    /// Flat index `(q (2 n_ctrl + 1) + m + n_ctrl) n_controls + j` for time
    /// function `q`, spatial mode `m` and control component `j`.
    layout: &'static str,
    theta: Vec<[f64; 2]>,
}

fn plan_dump(plan: &ptctl::hum::ControlPlan) -> PlanDump {
    PlanDump {
        basis: BasisMeta { kind: plan.basis.kind(), size: plan.basis.size(), horizon: plan.basis.horizon(), breakpoints: plan.basis.breakpoints() },
        n_ctrl: plan.n_ctrl,
        n_controls: plan.n_controls,
        layout: "(q*(2*n_ctrl+1) + m + n_ctrl)*n_controls + j",
        theta: vector(&plan.theta),
    }
}

#[derive(Serialize)]
struct ModalDump {
    mode: i64,
    t0: f64,
    span: f64,
    /// `v(t) = (sum_j C_j x^j) exp((t - t0) G) y` with `x = (t - t0) / span`.
    coeffs: Vec<Vec<Vec<[f64; 2]>>>,
    generator: Vec<Vec<[f64; 2]>>,
    seed: Vec<[f64; 2]>,
}

#[derive(Serialize)]
#[serde(tag = "method", rename_all = "snake_case")]
enum CoeffDump {
    Hum { plan: PlanDump },
    Pipeline { stage1: PlanDump, stage2: Vec<ModalDump> },
}

#[derive(Serialize)]
struct ControlReport<'a> {
    command: &'static str,
    config: &'a RunConfig,
    verdict: Verdict,
    t_star: f64,
    horizon: f64,
    /// Relative misfit of the truncated equation.
    residual: f64,
    /// Terminal state re-simulated at twice the truncation, relative to the free state.
    terminal_residual: Option<f64>,
    sigma_min: Option<f64>,
    sigma_max: Option<f64>,
    control_norm: f64,
    /// Fraction of the control energy outside `omega`.
    leakage: f64,
    modes: Option<Vec<ModeResidual>>,
}

pub fn control(mut cfg: RunConfig, out: &Path) -> Outcome<String> {
    let s = setup(&mut cfg)?;
    let report = modal::analyze(&s.sys, &s.omega, s.horizon)?;
    match report.verdict {
        Verdict::ControllableRegular => {}
        v => {
            return Err(Failure::new(3, format!("verdict {v:?} at T = {:.6} (T* = {:.6}); no control computed", s.horizon, s.t_star)));
        }
    }
    let n_max = cfg.discretization.n_max;
    let f0 = cfg.initial.field(n_max, s.sys.dim(), cfg.seed)?;
    for ex in exceptional_modes(&s.sys)? {
        if ex.n.unsigned_abs() as usize <= n_max && ex.defect(f0.get(ex.n)) > E_TOL {
            return Err(Error::NotInE { mode: ex.n }.into());
        }
    }
    let (doc, dump) = match cfg.control.method {
        ControlMethod::Hum => {
            let disc: Discretization = cfg.discretization.into();
            let map = hum::assemble_input_map(&s.sys, &s.omega, s.horizon, &disc)?;
            let target = hum::null_target(&s.sys, &f0, s.horizon)?;
            let sol = hum::min_norm_control(&map, &target)?;
            let plan = map.plan(sol.theta.clone());
            let terminal = hum::terminal_residual(&s.sys, &s.omega, &f0, &plan, 2 * n_max)?;
            let doc = ControlReport {
                command: "control",
                config: &cfg,
                verdict: report.verdict,
                t_star: s.t_star,
                horizon: s.horizon,
                residual: sol.residual,
                terminal_residual: Some(terminal),
                sigma_min: Some(sol.sigma_min),
                sigma_max: Some(sol.sigma_max),
                control_norm: plan.l2_norm(),
                leakage: 0.0,
                modes: None,
            };
            (doc, CoeffDump::Hum { plan: plan_dump(&plan) })
        }
        ControlMethod::Pipeline => {
            let rep = pipeline(&s.sys, &s.omega, &f0, s.horizon, &cfg.control.pipeline)?;
            let stage2 = rep
                .stage2
                .iter()
                .map(|v| ModalDump {
                    mode: v.mode,
                    t0: v.t0,
                    span: v.span,
                    coeffs: v.coeffs.iter().map(columns).collect(),
                    generator: columns(&v.generator),
                    seed: vector(&v.seed),
                })
                .collect();
            let doc = ControlReport {
                command: "control",
                config: &cfg,
                verdict: report.verdict,
                t_star: s.t_star,
                horizon: s.horizon,
                residual: rep.residual,
                terminal_residual: None,
                sigma_min: None,
                sigma_max: None,
                control_norm: rep.control_norm,
                leakage: rep.leakage,
                modes: Some(rep.modes.clone()),
            };
            (doc, CoeffDump::Pipeline { stage1: plan_dump(&rep.stage1), stage2 })
        }
    };
    let report_path = write_json(out, "report.json", &doc)?;
    let coeff_path = write_json(out, "control_coeffs.json", &dump)?;
    Ok(format!(
        "residual {:.3e}  control norm {:.4e}  leakage {:.3e}\nwrote {} and {}",
        doc.residual,
        doc.control_norm,
        doc.leakage,
        report_path.display(),
        coeff_path.display()
    ))
}

#[derive(Serialize)]
struct SweepRow {
    #[serde(rename = "T")]
    horizon: f64,
    sigma_min: f64,
    residual: f64,
}

#[derive(Serialize)]
struct SweepReport<'a> {
    command: &'static str,
    config: &'a RunConfig,
    t_star: f64,
    points: Vec<SweepPoint>,
}

pub fn sweep(mut cfg: RunConfig, out: &Path) -> Outcome<String> {
    let s = setup(&mut cfg)?;
    let scale = if cfg.sweep.relative {
        if !s.t_star.is_finite() {
            return Err(Failure::new(2, "relative sweep needs a finite minimal time"));
        }
        s.t_star
    } else {
        1.0
    };
    let horizons: Vec<f64> = cfg.sweep.horizons.iter().map(|h| h * scale).collect();
    let f0 = cfg.initial.field(cfg.discretization.n_max, s.sys.dim(), cfg.seed)?;
    let disc: Discretization = cfg.discretization.into();
    let points = hum::time_sweep(&s.sys, &s.omega, &f0, &horizons, &disc)?;
    let rows: Vec<SweepRow> = points.iter().map(|p| SweepRow { horizon: p.horizon, sigma_min: p.sigma_min, residual: p.residual }).collect();
    let csv_path = write_csv(out, "sweep.csv", &["T", "sigma_min", "residual"], &rows)?;
    let doc = SweepReport { command: "sweep", config: &cfg, t_star: s.t_star, points };
    let report_path = write_json(out, "report.json", &doc)?;
    Ok(format!("{} horizons, T* = {:.6}\nwrote {} and {}", rows.len(), s.t_star, csv_path.display(), report_path.display()))
}

#[derive(Serialize)]
struct WkbReport<'a> {
    command: &'static str,
    config: &'a RunConfig,
    t_star: f64,
    kind: ExperimentKind,
    mu: f64,
    /// Packet center at `t = 0` (small-time experiment).
    x0: Option<f64>,
    /// Slope of `log(lhs/rhs)` against `log(1/h)`.
    quotient_exponent: Option<f64>,
    /// Slope of `log rhs` against `log h`.
    rhs_exponent: Option<f64>,
    lhs_limit: Option<f64>,
    rows: Vec<QuotientRow>,
}

pub fn wkb(mut cfg: RunConfig, out: &Path) -> Outcome<String> {
    let s = setup(&mut cfg)?;
    let wcfg = cfg.experiment.wkb.clone();
    let doc = match cfg.experiment.kind {
        ExperimentKind::SmallTime => {
            let rep = wkb::small_time_experiment(&s.sys, &s.omega, s.horizon, &wcfg)?;
            WkbReport {
                command: "wkb",
                config: &cfg,
                t_star: s.t_star,
                kind: ExperimentKind::SmallTime,
                mu: rep.mu,
                x0: Some(rep.x0),
                quotient_exponent: Some(rep.exponent),
                rhs_exponent: None,
                lhs_limit: None,
                rows: rep.rows,
            }
        }
        ExperimentKind::RoughData => {
            let v0 = cfg.experiment.v0.as_ref().map(|v| CVector::from_iterator(v.len(), v.iter().map(|&x| C64::new(x, 0.0))));
            let rep = wkb::rough_data_experiment(&s.sys, &s.omega, s.horizon, &wcfg, v0)?;
            WkbReport {
                command: "wkb",
                config: &cfg,
                t_star: s.t_star,
                kind: ExperimentKind::RoughData,
                mu: rep.mu,
                x0: None,
                quotient_exponent: None,
                rhs_exponent: Some(rep.rhs_exponent),
                lhs_limit: Some(rep.lhs_limit),
                rows: rep.rows,
            }
        }
    };
    let csv_path = write_csv(out, "wkb.csv", &["h", "lhs", "rhs", "quotient"], &doc.rows)?;
    let summary = match doc.kind {
        ExperimentKind::SmallTime => format!("quotient exponent {:.4}", doc.quotient_exponent.unwrap_or(f64::NAN)),
        ExperimentKind::RoughData => format!(
            "rhs exponent {:.4}  lhs limit {:.6}",
            doc.rhs_exponent.unwrap_or(f64::NAN),
            doc.lhs_limit.unwrap_or(f64::NAN)
        ),
    };
    let report_path = write_json(out, "report.json", &doc)?;
    Ok(format!("{summary}\nwrote {} and {}", csv_path.display(), report_path.display()))
}

#[derive(Serialize)]
struct CasebookReport {
    command: &'static str,
    passed: usize,
    total: usize,
    cases: Vec<CaseOutcome>,
}

pub fn casebook(out: Option<&Path>) -> Outcome<String> {
    let cases = casebook::run_all()?;
    let passed = cases.iter().filter(|c| c.passed).count();
    let total = cases.len();
    let mut lines: Vec<String> = cases
        .iter()
        .map(|c| {
            let status = if c.passed { "PASS" } else { "FAIL" };
            let mut line = format!("{status}  {}", c.name);
            for d in &c.diffs {
                line.push_str(&format!("\n      {d}"));
            }
            line
        })
        .collect();
    lines.push(format!("{passed}/{total} cases match"));
    if let Some(dir) = out {
        let path = write_json(dir, "report.json", &CasebookReport { command: "casebook", passed, total, cases })?;
        lines.push(format!("wrote {}", path.display()));
    }
    let text = lines.join("\n");
    if passed == total {
        Ok(text)
    } else {
        Err(Failure::new(1, text))
    }
}
