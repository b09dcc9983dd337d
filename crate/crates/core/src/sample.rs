//! Random valid systems for randomized test suites.

use nalgebra::DMatrix;
use rand::Rng;

use crate::model::SystemSpec;

/// A random system with `2 <= d_h + d_p <= max_dim` satisfying the structural
/// hypotheses: real diagonalizable `A'` with distinct eigenvalues and `D` with
/// positive spectrum. `M` has between one and `d - 1` columns.
pub fn random_spec<R: Rng>(rng: &mut R, max_dim: usize) -> SystemSpec {
    assert!(max_dim >= 2);
    let d = rng.gen_range(2..=max_dim);
    let d_h = rng.gen_range(1..d);
    let d_p = d - d_h;
    let mut u = |lo: f64, hi: f64| rng.gen_range(lo..hi);

    let mut speeds: Vec<f64> = Vec::with_capacity(d_h);
    while speeds.len() < d_h {
        let s = u(0.3, 2.0) * if u(0.0, 1.0) < 0.5 { -1.0 } else { 1.0 };
        if speeds.iter().all(|x: &f64| (x - s).abs() > 0.2) {
            speeds.push(s);
        }
    }
    let basis = DMatrix::from_fn(d_h, d_h, |i, j| if i == j { 1.0 } else { 0.0 } + 0.3 * u(-1.0, 1.0));
    let inv = basis.clone().try_inverse().expect("near-identity basis is invertible");
    let a_h = &basis * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(speeds)) * inv;

    let diffusion = DMatrix::from_fn(d_p, d_p, |i, j| match i.cmp(&j) {
        std::cmp::Ordering::Equal => u(0.5, 2.0),
        std::cmp::Ordering::Less => u(-0.5, 0.5),
        std::cmp::Ordering::Greater => 0.0,
    });
    let mut advection = DMatrix::from_fn(d, d, |_, _| u(-1.0, 1.0));
    advection.view_mut((0, 0), (d_h, d_h)).copy_from(&a_h);
    let coupling = DMatrix::from_fn(d, d, |_, _| u(-1.0, 1.0));
    let m = rng.gen_range(1..d);
    let control = DMatrix::from_fn(d, m, |_, _| rng.gen_range(-1.0..1.0));
    SystemSpec { d_h, d_p, diffusion, advection, coupling, control }
}
