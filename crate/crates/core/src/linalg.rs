//! Small dense linear algebra: pivoted solves, symmetric eigenvalues, line fits.

use crate::math;
use alloc::vec::Vec;

/// Solves `A x = b` for a row-major `n × n` matrix by Gaussian elimination
/// with partial pivoting. Returns `None` when a pivot falls below
/// `rel_tol` times the largest absolute entry.
pub fn solve(a: &[f64], b: &[f64], n: usize, rel_tol: f64) -> Option<Vec<f64>> {
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    let scale = m.iter().fold(0.0f64, |s, v| s.max(math::abs(*v)));
    if scale == 0.0 {
        return None;
    }
    for col in 0..n {
        let mut piv = col;
        for r in col + 1..n {
            if math::abs(m[r * n + col]) > math::abs(m[piv * n + col]) {
                piv = r;
            }
        }
        if math::abs(m[piv * n + col]) <= rel_tol * scale {
            return None;
        }
        if piv != col {
            for c in 0..n {
                m.swap(col * n + c, piv * n + c);
            }
            x.swap(col, piv);
        }
        let d = m[col * n + col];
        for r in col + 1..n {
            let f = m[r * n + col] / d;
            if f != 0.0 {
                for c in col..n {
                    m[r * n + c] -= f * m[col * n + c];
                }
                x[r] -= f * x[col];
            }
        }
    }
    for col in (0..n).rev() {
        let mut s = x[col];
        for c in col + 1..n {
            s -= m[col * n + c] * x[c];
        }
        x[col] = s / m[col * n + col];
    }
    Some(x)
}

/// Eigenvalues of a symmetric row-major `n × n` matrix by cyclic Jacobi
/// rotations, returned in descending order.
pub fn symmetric_eigenvalues(a: &[f64], n: usize) -> Vec<f64> {
    let mut m = a.to_vec();
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += m[p * n + q] * m[p * n + q];
            }
        }
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if math::abs(apq) < 1e-300 {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let sgn = if theta >= 0.0 { 1.0 } else { -1.0 };
                let t = sgn / (math::abs(theta) + math::sqrt(theta * theta + 1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / math::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    let akp = m[k * n + p];
                    let akq = m[k * n + q];
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[p * n + k];
                    let aqk = m[q * n + k];
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[i * n + i]).collect();
    ev.sort_by(|a, b| b.partial_cmp(a).unwrap_or(core::cmp::Ordering::Equal));
    ev
}

/// Least-squares line `y ≈ a + b x`; returns `(a, b)`.
pub fn line_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (xi, yi) in x.iter().zip(y) {
        sxx += (xi - mx) * (xi - mx);
        sxy += (xi - mx) * (yi - my);
    }
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (my - b * mx, b)
}

/// Line fit slope with a leave-one-out band `(slope, lo, hi)`.
pub fn slope_with_band(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let (_, b) = line_fit(x, y);
    let mut lo = b;
    let mut hi = b;
    if x.len() > 2 {
        for skip in 0..x.len() {
            let xs: Vec<f64> = x.iter().enumerate().filter(|(i, _)| *i != skip).map(|(_, v)| *v).collect();
            let ys: Vec<f64> = y.iter().enumerate().filter(|(i, _)| *i != skip).map(|(_, v)| *v).collect();
            let (_, bs) = line_fit(&xs, &ys);
            lo = lo.min(bs);
            hi = hi.max(bs);
        }
    }
    (b, lo, hi)
}
