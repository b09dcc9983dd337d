//! The eleven rank-one-control 2×2 systems (plus a full-control smoke case)
//! with their known controllability signatures.
//!
//! Fixtures are written with the customary 2×2 parameters `(a', a12, a21, a22)`,
//! `(k11, .., k22)`, `d`, `(m1, m2)` for the mode matrix `-n^2 B + i n A + K`.
//! The system form uses `-i n A - K`, so the fixture maps to `A = -A_param`,
//! `K = -K_param`; determinants and exceptional modes then read exactly as
//! in the parameter form, and `T*` depends only on `|a'|`.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::Result;
use crate::linalg::{self, CVector, C64};
use crate::modal::{analyze, Verdict};
use crate::model::{System, SystemSpec, TorusSubset};

#[derive(Clone, Debug, Serialize)]
pub struct Expected {
    pub verdict: Verdict,
    pub p: Option<i64>,
    pub exceptional: Vec<i64>,
    /// Admissible direction at every exceptional mode, when one is pinned down.
    pub range: Option<[f64; 2]>,
    pub obstructed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct Fixture {
    pub name: &'static str,
    /// Row-major `[a', a12, a21, a22]`.
    pub a: [f64; 4],
    /// Row-major `[k11, k12, k21, k22]`.
    pub k: [f64; 4],
    pub d: f64,
    /// Control columns, column-major.
    pub m: Vec<f64>,
    pub expected: Expected,
}

impl Fixture {
    pub fn spec(&self) -> SystemSpec {
        SystemSpec {
            d_h: 1,
            d_p: 1,
            diffusion: DMatrix::from_element(1, 1, self.d),
            advection: -DMatrix::from_row_slice(2, 2, &self.a),
            coupling: -DMatrix::from_row_slice(2, 2, &self.k),
            control: DMatrix::from_column_slice(2, self.m.len() / 2, &self.m),
        }
    }

    pub fn system(&self) -> Result<System> {
        self.spec().validate()
    }
}

/// Control region used for every fixture: one arc of length `pi`.
pub fn region() -> TorusSubset {
    TorusSubset::new(&[(0.0, std::f64::consts::PI)]).expect("valid arc")
}

fn controllable(p: i64, exceptional: Vec<i64>, range: Option<[f64; 2]>, obstructed: bool) -> Expected {
    Expected { verdict: Verdict::ControllableRegular, p: Some(p), exceptional, range, obstructed }
}

fn never(obstructed: bool) -> Expected {
    Expected { verdict: Verdict::Never, p: None, exceptional: Vec::new(), range: None, obstructed }
}

pub fn fixtures() -> Vec<Fixture> {
    let e1 = Some([1.0, 0.0]);
    let e2 = Some([0.0, 1.0]);
    let diag = Some([1.0, 1.0]);
    let hyp = vec![1.0, 0.0];
    let par = vec![0.0, 1.0];
    let both = vec![1.0, 1.0];
    vec![
        Fixture { name: "2x2-h-never", a: [1.0, 0.4, 0.0, 0.3], k: [0.2, 0.5, 0.0, 0.1], d: 1.0, m: hyp.clone(), expected: never(false) },
        Fixture { name: "2x2-h-k21", a: [1.0, 0.4, 0.7, 0.3], k: [0.2, 0.5, 0.6, 0.1], d: 1.0, m: hyp.clone(), expected: controllable(0, vec![], None, false) },
        Fixture { name: "2x2-h-a21", a: [1.0, 0.4, 0.7, 0.3], k: [0.2, 0.5, 0.0, 0.1], d: 1.0, m: hyp, expected: controllable(0, vec![0], e1, false) },
        Fixture { name: "2x2-p-never", a: [1.0, 0.0, 0.6, 0.3], k: [0.2, 0.0, 0.7, 0.1], d: 1.0, m: par.clone(), expected: never(true) },
        Fixture { name: "2x2-p-both", a: [1.0, 0.8, 0.6, 0.3], k: [0.2, 0.5, 0.7, 0.1], d: 1.0, m: par.clone(), expected: controllable(1, vec![], None, true) },
        Fixture { name: "2x2-p-k12zero", a: [1.0, 0.8, 0.6, 0.3], k: [0.2, 0.0, 0.7, 0.1], d: 1.0, m: par.clone(), expected: controllable(1, vec![0], e2, true) },
        Fixture { name: "2x2-p-a12zero", a: [1.0, 0.0, 0.6, 0.3], k: [0.2, 0.5, 0.7, 0.1], d: 1.0, m: par, expected: controllable(2, vec![], None, true) },
        Fixture { name: "2x2-sim-gen-eq", a: [1.0, 0.0, 0.0, 0.4], k: [0.3, 0.0, 0.0, 0.3], d: 1.0, m: both.clone(), expected: controllable(0, vec![0], diag, false) },
        Fixture { name: "2x2-sim-gen-neq", a: [1.0, 0.0, 0.0, 0.4], k: [0.3, 0.0, 0.0, 0.7], d: 1.0, m: both.clone(), expected: controllable(0, vec![], None, false) },
        Fixture { name: "2x2-sim-eq-nonint", a: [1.0, 0.0, 0.0, 1.0], k: [0.5, 0.0, 0.0, 2.5], d: 1.0, m: both.clone(), expected: controllable(0, vec![], None, false) },
        Fixture { name: "2x2-sim-eq-int", a: [1.0, 0.0, 0.0, 1.0], k: [0.5, 0.0, 0.0, 9.5], d: 1.0, m: both, expected: controllable(0, vec![-3, 3], diag, false) },
        Fixture {
            name: "smoke-full-control",
            a: [1.0, 0.4, 0.7, 0.3],
            k: [0.2, 0.5, 0.6, 0.1],
            d: 1.0,
            m: vec![1.0, 0.0, 0.0, 1.0],
            expected: controllable(0, vec![], None, false),
        },
    ]
}

#[derive(Clone, Debug, Serialize)]
pub struct CaseOutcome {
    pub name: &'static str,
    pub passed: bool,
    /// One line per mismatching field, `field: expected X, got Y`.
    pub diffs: Vec<String>,
}

/// Runs `analyze` at `T = 2 T*` on the fixture and compares with its expectations.
pub fn check(fixture: &Fixture) -> Result<CaseOutcome> {
    let sys = fixture.system()?;
    let omega = region();
    let report = analyze(&sys, &omega, 2.0 * sys.t_star(&omega))?;
    let want = &fixture.expected;
    let mut diffs = Vec::new();
    if report.verdict != want.verdict {
        diffs.push(format!("verdict: expected {:?}, got {:?}", want.verdict, report.verdict));
    }
    let p = report.regularity.as_ref().and_then(|r| r.p_index);
    if p != want.p {
        diffs.push(format!("p: expected {:?}, got {:?}", want.p, p));
    }
    let mut modes: Vec<i64> = report.exceptional.iter().map(|m| m.n).collect();
    modes.sort_unstable();
    if modes != want.exceptional {
        diffs.push(format!("exceptional: expected {:?}, got {:?}", want.exceptional, modes));
    }
    if let Some(r) = want.range {
        let v = CVector::from_vec(r.iter().map(|&x| C64::new(x, 0.0)).collect());
        for m in &report.exceptional {
            let defect = m.defect(&v);
            if m.range_basis.ncols() != 1 || defect > 1e-10 {
                diffs.push(format!("range at {}: expected span {:?}, defect {defect:.2e}", m.n, r));
            }
        }
    }
    let obstructed = report.obstructions.iter().any(|o| o.obstructed);
    if obstructed != want.obstructed {
        diffs.push(format!("obstructed: expected {}, got {obstructed}", want.obstructed));
    }
    if want.obstructed {
        for o in report.obstructions.iter().filter(|o| o.obstructed) {
            if o.witness_dim != 1 {
                diffs.push(format!("witness dimension: expected 1, got {}", o.witness_dim));
            }
        }
    }
    Ok(CaseOutcome { name: fixture.name, passed: diffs.is_empty(), diffs })
}

pub fn run_all() -> Result<Vec<CaseOutcome>> {
    fixtures().iter().map(check).collect()
}

/// Coefficients `[c0, c1, c2]` (in `n`) of the closed-form Kalman determinant
/// of a rank-one fixture.
pub fn closed_form_determinant(fixture: &Fixture) -> [C64; 3] {
    let [ap, a12, a21, a22] = fixture.a;
    let [k11, k12, k21, k22] = fixture.k;
    let i = linalg::I;
    match fixture.m.as_slice() {
        [m1, m2] if *m1 != 0.0 && *m2 == 0.0 => [C64::new(k21, 0.0), i * a21, C64::new(0.0, 0.0)],
        [m1, m2] if *m1 == 0.0 && *m2 != 0.0 => [C64::new(-k12, 0.0), -(i * a12), C64::new(0.0, 0.0)],
        _ => [C64::new(k22 - k11, 0.0), i * (a22 - ap), C64::new(-fixture.d, 0.0)],
    }
}
