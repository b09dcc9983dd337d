//! Periodic Fourier and Chebyshev collocation helpers.

use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::linalg::{CMatrix, C64};

/// Uniform grid `s_k = 2 pi k / n` on the circle with FFT-based derivatives.
pub struct PeriodicGrid {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for PeriodicGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PeriodicGrid").field("n", &self.n).finish()
    }
}

impl Clone for PeriodicGrid {
    fn clone(&self) -> Self {
        Self::new(self.n)
    }
}

impl PeriodicGrid {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self { n, forward: planner.plan_fft_forward(n), inverse: planner.plan_fft_inverse(n) }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn point(&self, k: usize) -> f64 {
        std::f64::consts::TAU * k as f64 / self.n as f64
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.point(k)).collect()
    }

    /// Signed wavenumber of FFT slot `k`; the Nyquist slot maps to 0.
    fn wavenumber(&self, k: usize) -> f64 {
        let n = self.n;
        if 2 * k == n {
            0.0
        } else if 2 * k < n {
            k as f64
        } else {
            k as f64 - n as f64
        }
    }

    /// Discrete Fourier coefficients `(1/n) sum_k v_k e^{-i m s_k}` in FFT order.
    pub fn coefficients(&self, row: &[C64]) -> Vec<C64> {
        let mut buf = row.to_vec();
        self.forward.process(&mut buf);
        let scale = 1.0 / self.n as f64;
        buf.iter_mut().for_each(|z| *z *= scale);
        buf
    }

    /// `order`-th derivative of every row of `m`.
    pub fn derivative(&self, m: &CMatrix, order: u32) -> CMatrix {
        if order == 0 {
            return m.clone();
        }
        let mut out = CMatrix::zeros(m.nrows(), m.ncols());
        let mut buf = vec![C64::new(0.0, 0.0); self.n];
        for r in 0..m.nrows() {
            for (k, z) in buf.iter_mut().enumerate() {
                *z = m[(r, k)];
            }
            self.forward.process(&mut buf);
            for (k, z) in buf.iter_mut().enumerate() {
                *z *= C64::new(0.0, self.wavenumber(k)).powu(order) / self.n as f64;
            }
            self.inverse.process(&mut buf);
            for (k, z) in buf.iter().enumerate() {
                out[(r, k)] = *z;
            }
        }
        out
    }

    /// Trigonometric interpolation of every row onto a uniform grid of `n_new >= n` points.
    pub fn resample(&self, m: &CMatrix, n_new: usize) -> CMatrix {
        assert!(n_new >= self.n);
        let mut planner = FftPlanner::new();
        let inv = planner.plan_fft_inverse(n_new);
        let mut out = CMatrix::zeros(m.nrows(), n_new);
        for r in 0..m.nrows() {
            let row: Vec<C64> = (0..self.n).map(|k| m[(r, k)]).collect();
            let c = self.coefficients(&row);
            let mut buf = vec![C64::new(0.0, 0.0); n_new];
            for (k, z) in c.into_iter().enumerate() {
                let w = self.wavenumber(k);
                if w == 0.0 && k != 0 {
                    continue;
                }
                let slot = if w >= 0.0 { w as usize } else { (n_new as f64 + w) as usize };
                buf[slot] = z;
            }
            inv.process(&mut buf);
            for (k, z) in buf.iter().enumerate() {
                out[(r, k)] = *z;
            }
        }
        out
    }
}

/// Chebyshev–Lobatto nodes on `[0, t]` in increasing order with the
/// barycentric weights and differentiation matrix that go with them.
#[derive(Clone, Debug)]
pub struct ChebyshevGrid {
    pub nodes: Vec<f64>,
    weights: Vec<f64>,
    diff: Vec<Vec<f64>>,
}

impl ChebyshevGrid {
    pub fn new(n: usize, t: f64) -> Self {
        assert!(n >= 2);
        let nodes: Vec<f64> = (0..n)
            .map(|i| 0.5 * t * (1.0 - (std::f64::consts::PI * i as f64 / (n - 1) as f64).cos()))
            .collect();
        let weights: Vec<f64> = (0..n)
            .map(|i| {
                let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                if i == 0 || i == n - 1 {
                    0.5 * s
                } else {
                    s
                }
            })
            .collect();
        let mut diff = vec![vec![0.0; n]; n];
        for i in 0..n {
            let mut row_sum = 0.0;
            for j in 0..n {
                if i != j {
                    let v = (weights[j] / weights[i]) / (nodes[i] - nodes[j]);
                    diff[i][j] = v;
                    row_sum += v;
                }
            }
            diff[i][i] = -row_sum;
        }
        Self { nodes, weights, diff }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Time derivative at node `i` of a field sampled at every node.
    pub fn derivative_at(&self, values: &[CMatrix], i: usize) -> CMatrix {
        let mut out = CMatrix::zeros(values[0].nrows(), values[0].ncols());
        for (j, v) in values.iter().enumerate() {
            let w = self.diff[i][j];
            if w != 0.0 {
                out += v * C64::new(w, 0.0);
            }
        }
        out
    }

    /// Barycentric interpolation weights at `t` (exact node hits handled).
    pub fn interpolation_weights(&self, t: f64) -> Vec<f64> {
        if let Some(k) = self.nodes.iter().position(|&x| x == t) {
            let mut w = vec![0.0; self.len()];
            w[k] = 1.0;
            return w;
        }
        let raw: Vec<f64> = self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w / (t - x)).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|r| r / total).collect()
    }

    pub fn interpolate(&self, values: &[CMatrix], t: f64) -> CMatrix {
        let w = self.interpolation_weights(t);
        let mut out = CMatrix::zeros(values[0].nrows(), values[0].ncols());
        for (v, &wi) in values.iter().zip(&w) {
            if wi != 0.0 {
                out += v * C64::new(wi, 0.0);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn periodic_derivative_of_trig_polynomial() {
        let g = PeriodicGrid::new(32);
        let s = g.points();
        let m = CMatrix::from_fn(1, 32, |_, k| C64::new((3.0 * s[k]).sin(), (2.0 * s[k]).cos()));
        let d2 = g.derivative(&m, 2);
        for k in 0..32 {
            let want = C64::new(-9.0 * (3.0 * s[k]).sin(), -4.0 * (2.0 * s[k]).cos());
            assert!((d2[(0, k)] - want).norm() < 1e-12);
        }
        let fine = g.resample(&m, 96);
        let x = std::f64::consts::TAU * 7.0 / 96.0;
        assert!((fine[(0, 7)] - C64::new((3.0 * x).sin(), (2.0 * x).cos())).norm() < 1e-13);
    }

    #[test]
    fn chebyshev_differentiates_exponential() {
        let g = ChebyshevGrid::new(25, 2.0);
        let vals: Vec<CMatrix> = g.nodes.iter().map(|&t| CMatrix::from_element(1, 1, C64::new((-1.3 * t).exp(), 0.0))).collect();
        for i in 0..g.len() {
            let d = g.derivative_at(&vals, i)[(0, 0)].re;
            assert!((d + 1.3 * (-1.3 * g.nodes[i]).exp()).abs() < 1e-11);
        }
        let v = g.interpolate(&vals, 0.77)[(0, 0)].re;
        assert!((v - (-1.3f64 * 0.77).exp()).abs() < 1e-14);
    }
}
