//! Expectations over a standard normal variable.
//!
//! The built-in nonlinearities are analytic on each half-line but `sign` and
//! `relu` have a kink or jump at zero, where Gauss-Hermite rules converge only
//! algebraically. The rule here splits the real line at zero and integrates
//! each half on `[0, 16]` with composite Gauss-Legendre panels, which is exact
//! to rounding for every piecewise-analytic integrand with a break at 0.

use std::f64::consts::PI;

/// Probabilists' Hermite polynomials `He_0..=He_n` at `x`, by the three-term
/// recurrence `He_{k+1} = x He_k - k He_{k-1}`.
pub fn hermite_he_all(n: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(1.0);
    if n >= 1 {
        out.push(x);
    }
    for k in 1..n {
        let next = x * out[k] - k as f64 * out[k - 1];
        out.push(next);
    }
    out
}

pub fn hermite_he(n: usize, x: f64) -> f64 {
    hermite_he_all(n, x)[n]
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d != 0.0 {
            dp = d;
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Quadrature rule for `E[g(xi)]`, `xi ~ N(0, 1)`.
#[derive(Debug, Clone)]
pub struct GaussianRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Default for GaussianRule {
    fn default() -> Self {
        Self::new(16.0, 32, 20)
    }
}

impl GaussianRule {
    /// `panels` Gauss-Legendre panels of `order` nodes on each of
    /// `[-half_width, 0]` and `[0, half_width]`.
    pub fn new(half_width: f64, panels: usize, order: usize) -> Self {
        let (gl_x, gl_w) = gauss_legendre(order);
        let h = half_width / panels as f64;
        let norm = 1.0 / (2.0 * PI).sqrt();
        let mut nodes = Vec::with_capacity(2 * panels * order);
        let mut weights = Vec::with_capacity(2 * panels * order);
        for p in 0..panels {
            let lo = p as f64 * h;
            for (&x, &w) in gl_x.iter().zip(&gl_w) {
                let t = lo + 0.5 * h * (x + 1.0);
                let wt = 0.5 * h * w * norm * (-0.5 * t * t).exp();
                nodes.push(t);
                weights.push(wt);
                nodes.push(-t);
                weights.push(wt);
            }
        }
        Self { nodes, weights }
    }

    pub fn expect<F: Fn(f64) -> f64>(&self, g: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * g(x))
            .sum()
    }

    /// `E[g(xi) He_n(xi)]` for `n = 0..=n_max`, which equals `E[g^(n)(xi)]`
    /// by repeated Gaussian integration by parts.
    pub fn hermite_moments<F: Fn(f64) -> f64>(&self, g: F, n_max: usize) -> Vec<f64> {
        let mut acc = vec![0.0; n_max + 1];
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            let gx = w * g(x);
            if gx == 0.0 {
                continue;
            }
            for (a, he) in acc.iter_mut().zip(hermite_he_all(n_max, x)) {
                *a += gx * he;
            }
        }
        acc
    }
}
