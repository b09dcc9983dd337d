//! Gauss–Legendre rules and adaptive panel quadrature for matrix-valued integrands.

use crate::error::{Error, Result};
use crate::linalg::{c, CMatrix};

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Fixed rule mapped to `[a, b]`: `(nodes, weights)`.
pub fn mapped_rule(rule: &(Vec<f64>, Vec<f64>), a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    rule.0.iter().zip(&rule.1).map(move |(&x, &w)| (mid + half * x, half * w))
}

/// Composite rule with `panels` equal panels of an `order`-point rule.
pub fn composite_rule(a: f64, b: f64, panels: usize, order: usize) -> Vec<(f64, f64)> {
    let rule = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    (0..panels)
        .flat_map(|p| mapped_rule(&rule, a + p as f64 * h, a + (p + 1) as f64 * h).collect::<Vec<_>>())
        .collect()
}

const PANEL_ORDER: usize = 10;
const MAX_DEPTH: usize = 40;

fn frob(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Adaptive bisection: a panel is accepted when the one-panel and two-panel
/// estimates agree to `tol` relative to the running scale of the integral.
pub struct Adaptive {
    rule: (Vec<f64>, Vec<f64>),
    pub tol: f64,
}

impl Adaptive {
    pub fn new(tol: f64) -> Self {
        Self { rule: gauss_legendre(PANEL_ORDER), tol }
    }

    fn panel<F: FnMut(f64) -> Result<CMatrix>>(&self, f: &mut F, a: f64, b: f64) -> Result<CMatrix> {
        let mut acc: Option<CMatrix> = None;
        for (x, w) in mapped_rule(&self.rule, a, b) {
            let v = f(x)? * c(w);
            acc = Some(match acc {
                Some(s) => s + v,
                None => v,
            });
        }
        Ok(acc.expect("nonempty rule"))
    }

    pub fn integrate<F: FnMut(f64) -> Result<CMatrix>>(&self, mut f: F, a: f64, b: f64) -> Result<CMatrix> {
        if b <= a {
            let z = f(a)?;
            return Ok(z * c(0.0));
        }
        // Coarse pass over a few panels fixes the absolute scale.
        let coarse: Vec<CMatrix> = (0..8)
            .map(|p| self.panel(&mut f, a + (b - a) * p as f64 / 8.0, a + (b - a) * (p + 1) as f64 / 8.0))
            .collect::<Result<_>>()?;
        let scale = coarse.iter().map(frob).sum::<f64>().max(f64::MIN_POSITIVE);
        let mut total: Option<CMatrix> = None;
        for (p, whole) in coarse.into_iter().enumerate() {
            let (lo, hi) = (a + (b - a) * p as f64 / 8.0, a + (b - a) * (p + 1) as f64 / 8.0);
            let part = self.refine(&mut f, lo, hi, whole, scale, 0)?;
            total = Some(match total {
                Some(t) => t + part,
                None => part,
            });
        }
        Ok(total.expect("eight panels"))
    }

    fn refine<F: FnMut(f64) -> Result<CMatrix>>(
        &self,
        f: &mut F,
        a: f64,
        b: f64,
        whole: CMatrix,
        scale: f64,
        depth: usize,
    ) -> Result<CMatrix> {
        let m = 0.5 * (a + b);
        let left = self.panel(f, a, m)?;
        let right = self.panel(f, m, b)?;
        let split = &left + &right;
        if frob(&(&split - &whole)) <= self.tol * scale {
            return Ok(split);
        }
        if depth >= MAX_DEPTH {
            return Err(Error::QuadratureFailure { a, b });
        }
        let l = self.refine(f, a, m, left, scale, depth + 1)?;
        let r = self.refine(f, m, b, right, scale, depth + 1)?;
        Ok(l + r)
    }
}
