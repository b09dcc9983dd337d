//! Property bodies shared by the proptest target and the acceptance runner.

#![allow(dead_code)]

use nalgebra::DMatrix;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use ptctl::dynamics::{adjoint_propagator, evolve_free, indicator_coeffs, propagator, SpectralField};
use ptctl::linalg::{CMatrix, CVector, C64};
use ptctl::modal::exceptional_modes;
use ptctl::model::{System, SystemSpec, TorusSubset};
use ptctl::polymat::{Poly, PolyMatrix, COEFF_TOL};
use ptctl::sample::random_spec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Outcome = Result<(), TestCaseError>;

fn system(seed: u64, max_dim: usize) -> System {
    random_spec(&mut ChaCha8Rng::seed_from_u64(seed), max_dim).validate().unwrap()
}

fn rel_gap(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).norm() / (1.0 + a.norm().max(b.norm()))
}

pub fn poly_matrices() -> impl Strategy<Value = (usize, Vec<i32>)> {
    (1usize..=4, prop::collection::vec(-4i32..=4, 48))
}

pub fn adjugate_identity((size, coeffs): (usize, Vec<i32>)) -> Outcome {
    let m = PolyMatrix::from_fn(size, size, |i, j| {
        let at = 3 * (i * size + j);
        Poly::new(coeffs[at..at + 3].iter().map(|&x| C64::new(x as f64, 0.0)).collect())
    });
    let lhs = m.adjugate().unwrap().matmul(&m).unwrap();
    let det = m.determinant().unwrap();
    for i in 0..size {
        for j in 0..size {
            let want = if i == j { det.clone() } else { Poly::zero() };
            let got = &lhs[(i, j)];
            for k in 0..got.coeffs().len().max(want.coeffs().len()) {
                prop_assert!((got.coeff(k) - want.coeff(k)).norm() <= COEFF_TOL * (1.0 + want.coeff(k).norm()));
            }
        }
    }
    Ok(())
}

pub fn mode_times() -> impl Strategy<Value = (u64, i64, f64, f64)> {
    (any::<u64>(), -12i64..=12, 0.0f64..1.0, 0.0f64..1.0)
}

pub fn semigroup((seed, n, s, t): (u64, i64, f64, f64)) -> Outcome {
    let sys = system(seed, 4);
    let whole = propagator(&sys, n, s + t).unwrap();
    let split = propagator(&sys, n, s).unwrap() * propagator(&sys, n, t).unwrap();
    prop_assert!(rel_gap(&whole, &split) < 1e-9);
    Ok(())
}

pub fn duality((seed, n, t, _): (u64, i64, f64, f64)) -> Outcome {
    let sys = system(seed, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut vec = |d| CVector::from_fn(d, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    let (x, y) = (vec(sys.dim()), vec(sys.dim()));
    let fwd = propagator(&sys, n, 1.5 * t).unwrap() * &x;
    let adj = adjoint_propagator(&sys, n, 1.5 * t).unwrap() * &y;
    prop_assert!((y.dotc(&fwd) - adj.dotc(&x)).norm() <= 1e-9 * (1.0 + fwd.norm() * y.norm()));
    Ok(())
}

pub fn real_fields_stay_real((seed, _, t, _): (u64, i64, f64, f64)) -> Outcome {
    let sys = system(seed, 4);
    let f = SpectralField::smooth_random(10, sys.dim(), 2.0, seed);
    prop_assert!(f.is_conjugate_symmetric(1e-14));
    prop_assert!(evolve_free(&sys, &f, t).unwrap().is_conjugate_symmetric(1e-9));
    Ok(())
}

pub fn arcs() -> impl Strategy<Value = (f64, f64)> {
    (0.0f64..6.0, 0.1f64..6.0)
}

pub fn indicator_symmetry((a, len): (f64, f64)) -> Outcome {
    let ind = indicator_coeffs(&TorusSubset::new(&[(a, a + len)]).unwrap(), 16);
    for m in 0..=16i64 {
        prop_assert!((ind.get(-m) - ind.get(m).conj()).norm() < 1e-14);
    }
    Ok(())
}

fn symmetric(sys: &System) -> Outcome {
    let mut modes: Vec<i64> = exceptional_modes(sys).unwrap().iter().map(|m| m.n).collect();
    let mut mirrored: Vec<i64> = modes.iter().map(|n| -n).collect();
    modes.sort_unstable();
    mirrored.sort_unstable();
    prop_assert_eq!(modes, mirrored);
    Ok(())
}

pub fn exceptional_symmetry(seed: u64) -> Outcome {
    symmetric(&system(seed, 3))
}

/// Random specs almost never have exceptional modes, so this family puts a
/// root pair at `n = +-n0` on purpose.
pub fn tuned_exceptional_pairs() -> Outcome {
    for n0 in 1..=5i64 {
        let spec = SystemSpec {
            d_h: 1,
            d_p: 1,
            diffusion: DMatrix::from_element(1, 1, 1.0),
            advection: DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -1.0]),
            coupling: DMatrix::from_row_slice(2, 2, &[-0.5, 0.0, 0.0, -0.5 - (n0 * n0) as f64]),
            control: DMatrix::from_column_slice(2, 1, &[1.0, 1.0]),
        };
        let sys = spec.validate().unwrap();
        symmetric(&sys)?;
        let modes: Vec<i64> = exceptional_modes(&sys).unwrap().iter().map(|m| m.n.abs()).collect();
        prop_assert!(modes.iter().all(|&n| n == n0) && modes.len() == 2);
    }
    Ok(())
}

fn run<S: Strategy>(runner: &mut TestRunner, strategy: S, test: impl Fn(S::Value) -> Outcome) -> Result<(), String> {
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

/// Every property with `cases` random draws each; returns the number of properties.
pub fn run_all(cases: u32) -> Result<usize, String> {
    let mut runner = TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() });
    run(&mut runner, poly_matrices(), adjugate_identity).map_err(|e| format!("adjugate: {e}"))?;
    run(&mut runner, mode_times(), semigroup).map_err(|e| format!("semigroup: {e}"))?;
    run(&mut runner, mode_times(), duality).map_err(|e| format!("duality: {e}"))?;
    run(&mut runner, mode_times(), real_fields_stay_real).map_err(|e| format!("conjugate symmetry: {e}"))?;
    run(&mut runner, arcs(), indicator_symmetry).map_err(|e| format!("indicator symmetry: {e}"))?;
    run(&mut runner, any::<u64>(), exceptional_symmetry).map_err(|e| format!("exceptional symmetry: {e}"))?;
    tuned_exceptional_pairs().map_err(|e| format!("tuned exceptional pairs: {e}"))?;
    Ok(7)
}
