//! Quadrature rules and an adaptive ODE integrator.
//!
//! - Gauss–Legendre nodes by Newton iteration on the three-term recurrence
//! - tanh-sinh (double exponential) integration, robust to endpoint singularities
//! - Dormand–Prince 5(4) with step-size control

use crate::error::{Error, Result};
use crate::math;
use alloc::format;
use alloc::vec::Vec;

/// Gauss–Legendre rule on `[a, b]`.
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// `n`-point rule on `[-1, 1]`.
    pub fn new(n: usize) -> Self {
        assert!(n > 0);
        let mut nodes = alloc::vec![0.0; n];
        let mut weights = alloc::vec![0.0; n];
        for i in 0..(n + 1) / 2 {
            let mut x = math::cos(math::PI * (i as f64 + 0.75) / (n as f64 + 0.5));
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if math::abs(dx) < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }

    /// `n`-point rule mapped to `[a, b]`.
    pub fn on(n: usize, a: f64, b: f64) -> Self {
        let r = GaussLegendre::new(n);
        let h = 0.5 * (b - a);
        let c = 0.5 * (b + a);
        GaussLegendre {
            nodes: r.nodes.iter().map(|x| c + h * x).collect(),
            weights: r.weights.iter().map(|w| h * w).collect(),
        }
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p, d)
}

/// tanh-sinh integral of `f` over `(a, b)`, halving the step until two
/// successive levels agree to `tol` relative to the running magnitude.
/// The integrand is never evaluated at the endpoints.
pub fn tanh_sinh<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    let h2 = 0.5 * (b - a);
    let tmax = 4.0;
    let eval = |t: f64, f: &mut F| -> f64 {
        let s = math::sinh(t);
        let ch = math::cosh(t);
        let u = 0.5 * math::PI * s;
        let th = math::tanh(u);
        let w = 0.5 * math::PI * ch / (math::cosh(u) * math::cosh(u));
        // distance to the nearer endpoint, computed without cancellation
        let d = h2 / (math::exp(math::abs(u)) * math::cosh(u));
        let x = if th >= 0.0 { b - d } else { a + d };
        if d <= 0.0 || !(x > a && x < b) {
            return 0.0;
        }
        let v = f(x);
        if v.is_finite() {
            w * v
        } else {
            0.0
        }
    };
    let mut h = 1.0;
    let mut sum = eval(0.0, &mut f);
    let mut k = 1;
    while k as f64 * h <= tmax {
        let t = k as f64 * h;
        sum += eval(t, &mut f) + eval(-t, &mut f);
        k += 1;
    }
    let mut prev = h2 * h * sum;
    for _level in 0..12 {
        h *= 0.5;
        let mut k = 1;
        while k as f64 * h <= tmax {
            let t = k as f64 * h;
            sum += eval(t, &mut f) + eval(-t, &mut f);
            k += 2;
        }
        let est = h2 * h * sum;
        if math::abs(est - prev) <= tol * math::abs(est).max(1e-300) {
            return Ok(est);
        }
        prev = est;
    }
    Err(Error::Quadrature(format!(
        "tanh-sinh on ({a}, {b}) did not reach tolerance {tol}"
    )))
}

/// tanh-sinh over consecutive breakpoints `pts[0] < pts[1] < …`.
pub fn tanh_sinh_pieces<F: FnMut(f64) -> f64>(mut f: F, pts: &[f64], tol: f64) -> Result<f64> {
    let mut total = 0.0;
    for w in pts.windows(2) {
        total += tanh_sinh(&mut f, w[0], w[1], tol)?;
    }
    Ok(total)
}

/// Outcome of an adaptive ODE integration.
#[derive(Clone, Debug)]
pub struct OdePath {
    pub t: Vec<f64>,
    pub u: Vec<f64>,
    pub rejected: usize,
}

/// Scalar Dormand–Prince 5(4) from `t0` to `t1` with mixed tolerance.
pub fn dopri5<F: FnMut(f64, f64) -> f64>(
    mut f: F,
    t0: f64,
    u0: f64,
    t1: f64,
    rtol: f64,
    atol: f64,
    max_steps: usize,
) -> Result<OdePath> {
    const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [
            19372.0 / 6561.0,
            -25360.0 / 2187.0,
            64448.0 / 6561.0,
            -212.0 / 729.0,
            0.0,
            0.0,
        ],
        [
            9017.0 / 3168.0,
            -355.0 / 33.0,
            46732.0 / 5247.0,
            49.0 / 176.0,
            -5103.0 / 18656.0,
            0.0,
        ],
        [
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
        ],
    ];
    const B5: [f64; 7] = [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
        0.0,
    ];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];
    let mut t = t0;
    let mut u = u0;
    let mut h = ((t1 - t0) * 1e-4).max(1e-8);
    let mut path = OdePath {
        t: alloc::vec![t0],
        u: alloc::vec![u0],
        rejected: 0,
    };
    let mut steps = 0;
    while t < t1 {
        if steps >= max_steps {
            return Err(Error::Quadrature(format!("dopri5 exceeded {max_steps} steps")));
        }
        steps += 1;
        h = h.min(t1 - t);
        let mut k = [0.0; 7];
        for s in 0..7 {
            let mut us = u;
            for (j, kj) in k.iter().enumerate().take(s) {
                us += h * A[s][j] * kj;
            }
            k[s] = f(t + C[s] * h, us);
        }
        let mut u5 = u;
        let mut u4 = u;
        for s in 0..7 {
            u5 += h * B5[s] * k[s];
            u4 += h * B4[s] * k[s];
        }
        let sc = atol + rtol * math::abs(u).max(math::abs(u5));
        let err = math::abs(u5 - u4) / sc;
        if !err.is_finite() {
            h *= 0.2;
            path.rejected += 1;
            if h < 1e-14 {
                return Err(Error::Quadrature(format!("dopri5 step underflow at t = {t}")));
            }
            continue;
        }
        if err <= 1.0 {
            t += h;
            u = u5;
            path.t.push(t);
            path.u.push(u);
        } else {
            path.rejected += 1;
        }
        let fac = if err == 0.0 {
            5.0
        } else {
            (0.9 * math::powf(err, -0.2)).clamp(0.2, 5.0)
        };
        h *= fac;
        if h < 1e-14 {
            return Err(Error::Quadrature(format!("dopri5 step underflow at t = {t}")));
        }
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_exact_for_polynomials() {
        let g = GaussLegendre::new(16);
        assert!((g.weights.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        // ∫_{-1}^{1} x^30 dx = 2/31
        let v = g.integrate(|x| math::powi(x, 30));
        assert!((v - 2.0 / 31.0).abs() < 1e-14);
        let g = GaussLegendre::on(16, 0.0, math::PI);
        assert!((g.integrate(math::sin) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn tanh_sinh_handles_endpoint_singularity() {
        // ∫_0^1 x^{-1/2} dx = 2
        let v = tanh_sinh(|x| 1.0 / math::sqrt(x), 0.0, 1.0, 1e-12).unwrap();
        assert!((v - 2.0).abs() < 1e-10, "{v}");
        let v = tanh_sinh(|x| math::sin(x) * math::sin(x), 0.0, math::PI, 1e-12).unwrap();
        assert!((v - math::PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn dopri5_exponential_decay() {
        let p = dopri5(|_, u| -u, 0.0, 1.0, 5.0, 1e-10, 1e-14, 100_000).unwrap();
        let u = *p.u.last().unwrap();
        assert!((u - math::exp(-5.0)).abs() < 1e-9);
    }
}
