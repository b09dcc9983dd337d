//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

mod support;

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ptctl::algsolv::{verify_lemma, SmoothModalControl};
use ptctl::casebook::{self, closed_form_determinant};
use ptctl::dynamics::SpectralField;
use ptctl::hum::{assemble_input_map, min_norm_control, null_target, terminal_residual, time_sweep, Discretization, TimeBasisKind};
use ptctl::linalg::{range_basis, CVector, C64};
use ptctl::modal::{kalman_depth, kalman_poly, regularity_index, KalmanDepth};
use ptctl::model::{System, SystemSpec, TorusSubset};
use ptctl::sample::random_spec;
use ptctl::wkb::{build_profiles, residual_order, rough_data_experiment, small_time_experiment, Amplitude, PhaseSpec, ProfileGrid, WkbConfig};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check, Duration);

fn arc() -> TorusSubset {
    TorusSubset::new(&[(0.0, PI)]).unwrap()
}

/// `a' = 1`, `M = e1`, `k21 != 0`.
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

/// Fully coupled, controlled through the parabolic component only.
fn parabolic_controlled() -> System {
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

fn casebook_regression() -> Check {
    let cases = casebook::run_all().map_err(|e| e.to_string())?;
    let failed: Vec<String> = cases.iter().filter(|c| !c.passed).map(|c| format!("{}: {}", c.name, c.diffs.join("; "))).collect();
    if failed.is_empty() {
        Ok(format!("{} cases", cases.len()))
    } else {
        Err(failed.join(" | "))
    }
}

fn determinant_regression() -> Check {
    let mut worst = 0.0f64;
    for fixture in casebook::fixtures().iter().filter(|f| f.m.len() == 2) {
        let sys = fixture.system().map_err(|e| e.to_string())?;
        let det = kalman_poly(&sys, 2).matrix.determinant().map_err(|e| e.to_string())?;
        let want = closed_form_determinant(fixture);
        let scale = want.iter().map(|z| z.norm()).fold(0.0, f64::max);
        for (k, w) in want.iter().enumerate() {
            let rel = (det.coeff(k) - w).norm() / scale;
            worst = worst.max(rel);
        }
        if det.coeffs().len() > 3 && det.coeffs()[3..].iter().any(|z| z.norm() > 1e-12 * scale) {
            return Err(format!("{}: degree above 2", fixture.name));
        }
    }
    if worst <= 1e-12 {
        Ok(format!("max relative coefficient error {worst:.1e}"))
    } else {
        Err(format!("max relative coefficient error {worst:.1e}"))
    }
}

fn cvec(rng: &mut ChaCha8Rng, n: usize) -> CVector {
    CVector::from_fn(n, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

fn reduction_identity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut worst, mut worst_abs) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let sys = random_spec(&mut rng, 4).validate().map_err(|e| e.to_string())?;
        let k = rng.gen_range(1..=4);
        let n = rng.gen_range(-20..=20);
        let x0 = cvec(&mut rng, sys.dim());
        let r: Vec<CVector> = (0..3).map(|_| cvec(&mut rng, k * sys.n_controls())).collect();
        let w = SmoothModalControl::flat_polynomial(n, 0.0, 1.0, k, &r);
        let chk = verify_lemma(&sys, n, &x0, &w, k).map_err(|e| e.to_string())?;
        worst = worst.max(chk.gap / (1.0 + chk.full.norm()));
        worst_abs = worst_abs.max(chk.gap);
    }
    let msg = format!("max gap {worst:.1e} relative to 1 + |X(T)|, {worst_abs:.1e} absolute, 100 instances");
    if worst <= 1e-8 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn degree_bounds() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut checked, mut skipped, mut violations) = (0, 0, Vec::new());
    while checked < 50 {
        let sys = random_spec(&mut rng, 5).validate().map_err(|e| e.to_string())?;
        let KalmanDepth::Finite(k0) = kalman_depth(&sys).map_err(|e| e.to_string())? else {
            skipped += 1;
            continue;
        };
        let reg = regularity_index(&sys, k0).map_err(|e| e.to_string())?;
        let i = checked;
        checked += 1;
        if reg.pinv_degree.is_some_and(|g| g > reg.pinv_bound) || reg.p_index.is_some_and(|p| p > reg.p_bound) {
            violations.push(format!("spec {i}: {reg:?}"));
        }
    }
    if violations.is_empty() {
        Ok(format!("{checked} specs, zero violations ({skipped} never full rank skipped)"))
    } else {
        Err(violations.join("; "))
    }
}

fn minimal_time_signature() -> Check {
    let sys = transport_controlled();
    let omega = arc();
    let ts = sys.t_star(&omega);
    let disc = Discretization { n_max: 64, n_ctrl: 64, basis: TimeBasisKind::PiecewiseConstant, basis_size: 64 };
    let f0 = SpectralField::smooth_random(64, 2, 3.0, 5);
    let pts = time_sweep(&sys, &omega, &f0, &[0.8 * ts, 1.2 * ts], &disc).map_err(|e| e.to_string())?;
    let ratio = pts[0].sigma_min / pts[1].sigma_min;
    let msg = format!("sigma_min ratio {ratio:.2e} ({:.2e} / {:.2e})", pts[0].sigma_min, pts[1].sigma_min);
    if ratio <= 1e-3 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn controllability_residual() -> Check {
    let sys = transport_controlled();
    let omega = arc();
    let horizon = 1.5 * sys.t_star(&omega);
    let f0 = SpectralField::smooth_random(256, 2, 3.0, 6);
    let mut truncated = Vec::new();
    let mut terminal = Vec::new();
    for n in [64, 128] {
        let disc = Discretization { n_max: n, n_ctrl: n, basis: TimeBasisKind::PiecewiseConstant, basis_size: 64 };
        let map = assemble_input_map(&sys, &omega, horizon, &disc).map_err(|e| e.to_string())?;
        let target = null_target(&sys, &f0.resized(n), horizon).map_err(|e| e.to_string())?;
        let sol = min_norm_control(&map, &target).map_err(|e| e.to_string())?;
        let plan = map.plan(sol.theta);
        truncated.push(sol.residual);
        terminal.push(terminal_residual(&sys, &omega, &f0, &plan, 2 * n).map_err(|e| e.to_string())?);
    }
    let msg = format!(
        "residual {:.1e} (N=64), {:.1e} (N=128); terminal at 2N {:.2e} -> {:.2e}",
        truncated[0], truncated[1], terminal[0], terminal[1]
    );
    if truncated.iter().all(|&r| r <= 1e-4) && terminal[1] < terminal[0] {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn wkb_residual_order() -> Check {
    let sys = parabolic_controlled();
    let mu = sys.transport().eigenvalues[0];
    let proj = sys.transport().projector(mu).map_err(|e| e.to_string())?.adjoint();
    let v0 = range_basis(&proj, 1e-10).column(0).into_owned();
    let phase = PhaseSpec { mu, amplitude: Amplitude::Well { x0: 3.0 }, carrier: 1 };
    let hs = [1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0, 1.0 / 256.0];
    let mut slopes = Vec::new();
    for q in [2, 3] {
        let set = build_profiles(&sys, phase, q, 1.0, |_| v0.clone(), ProfileGrid::default()).map_err(|e| e.to_string())?;
        let fit = residual_order(&set, &hs).map_err(|e| e.to_string())?;
        slopes.push(fit.slope.ok_or("residual vanished")?);
    }
    let msg = format!("slope q=2 {:.3}, q=3 {:.3}", slopes[0], slopes[1]);
    if (0.7..=1.3).contains(&slopes[0]) && (1.6..=2.4).contains(&slopes[1]) {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn small_time_blowup() -> Check {
    let sys = transport_controlled();
    let omega = arc();
    let rep = small_time_experiment(&sys, &omega, 0.7 * sys.t_star(&omega), &WkbConfig::default()).map_err(|e| e.to_string())?;
    let rhs: Vec<String> = rep.rows.iter().map(|r| format!("{:.1e}", r.rhs)).collect();
    let msg = format!("quotient exponent {:.3}, rhs {}", rep.exponent, rhs.join(" "));
    if (0.3..=0.7).contains(&rep.exponent) {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn rough_data_obstruction() -> Check {
    let sys = parabolic_controlled();
    let cfg = WkbConfig { h_list: vec![1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0, 1.0 / 256.0], ..WkbConfig::default() };
    let rep = rough_data_experiment(&sys, &arc(), 1.5, &cfg, None).map_err(|e| e.to_string())?;
    let last = rep.rows.last().ok_or("no rows")?;
    let drift = (last.lhs - rep.lhs_limit).abs() / rep.lhs_limit;
    let msg = format!("lhs {:.5} vs limit {:.5}, rhs exponent {:.3}", last.lhs, rep.lhs_limit, rep.rhs_exponent);
    if drift <= 0.1 && rep.rhs_exponent >= 0.4 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn property_suite() -> Check {
    support::run_all(256).map(|n| format!("{n} properties, 256 cases each"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("casebook regression", casebook_regression, Duration::from_secs(5)),
        ("Kalman determinant closed forms", determinant_regression, Duration::from_secs(5)),
        ("algebraic reduction end states", reduction_identity, Duration::from_secs(30)),
        ("pseudo-inverse degree bounds", degree_bounds, Duration::from_secs(60)),
        ("minimal-time signature", minimal_time_signature, Duration::from_secs(120)),
        ("controllability residual", controllability_residual, Duration::from_secs(120)),
        ("WKB residual order", wkb_residual_order, Duration::from_secs(60)),
        ("small-time blowup rate", small_time_blowup, Duration::from_secs(120)),
        ("rough-data obstruction", rough_data_obstruction, Duration::from_secs(120)),
        ("infrastructure properties", property_suite, Duration::from_secs(60)),
    ];
    let mut failures = 0;
    for (i, (name, run, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let (ok, detail) = match outcome {
            Ok(d) if elapsed <= *budget => (true, d),
            Ok(d) => (false, format!("{d}; took {elapsed:.1?}, budget {budget:?}")),
            Err(d) => (false, d),
        };
        failures += usize::from(!ok);
        println!("{} {:>2} {name} [{elapsed:.2?}]: {detail}", if ok { "PASS" } else { "FAIL" }, i + 1);
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} of {} criteria failed", criteria.len());
        ExitCode::FAILURE
    }
}
