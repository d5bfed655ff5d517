//! Theorem-level drivers: moment growth and time-averaged convergence,
//! tail-persistence lower bounds, the decay-rate chain along the g-flow,
//! the mild-solution lower envelope, and the minimal tail radius `R(t)`.

use crate::distribution::{
    calibrate_distance_constant, distances, entropy_functionals, gaussian, l1_weighted,
    equilibrium_on_grid, maxwellian_on_grid, random_mixture, tail, Conserved, DensityField, VelocityGrid,
};
use crate::collision::{project_values, CollisionOperator};
use crate::error::{Error, Result};
use crate::kernel::Truncation;
use crate::linalg;
use crate::math;
use crate::oracles::{self, OracleReport};
use crate::quadrature;
use crate::simulator::{run_single, InitialDatum, SimConfig, TimeSeries};
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

/// Decay law `A` of the slow-tail family.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TailLaw {
    /// `A(t) = (1+t)^{−δ}`.
    Power,
    /// `A(t) = 1 / (1 + log(1+t))`.
    Log,
    /// `A(t) = 1 / (1 + log(1 + log(1+t)))`.
    LogLog,
}

impl TailLaw {
    pub fn a(&self, t: f64, delta: f64) -> f64 {
        match self {
            TailLaw::Power => math::powf(1.0 + t, -delta),
            TailLaw::Log => 1.0 / (1.0 + math::ln_1p(t)),
            TailLaw::LogLog => 1.0 / (1.0 + math::ln_1p(math::ln_1p(t))),
        }
    }

    /// `A₁ = −A'`.
    pub fn a1(&self, t: f64, delta: f64) -> f64 {
        match self {
            TailLaw::Power => delta * math::powf(1.0 + t, -delta - 1.0),
            TailLaw::Log => {
                let l = 1.0 + math::ln_1p(t);
                1.0 / ((1.0 + t) * l * l)
            }
            TailLaw::LogLog => {
                let l1 = math::ln_1p(t);
                let l2 = 1.0 + math::ln_1p(l1);
                1.0 / ((1.0 + t) * (1.0 + l1) * l2 * l2)
            }
        }
    }
}

/// Initial-datum families for the tail experiments.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TailProfile {
    /// `f₀ = a G_τ + ε₀⟨v/R₀⟩^{−(N+2+δ)}`.
    PowerTail { eps0: f64, delta: f64, r0: f64 },
    /// `f₀ = a G_τ + ε₀ ρ^{−(N+1)} A₁(ρ)` with `ρ = max(|v|, R₀)`.
    ATail { law: TailLaw, delta: f64, eps0: f64, r0: f64 },
    /// Bimodal Gaussian mixture without a long tail.
    Compact { shift: f64 },
}

/// A profile realized on a grid with unit mass, zero momentum and unit
/// temperature.
#[derive(Clone, Debug)]
pub struct BuiltProfile {
    pub profile: TailProfile,
    pub field: DensityField,
    /// Amplitude and temperature of the Gaussian core.
    pub core: (f64, f64),
}

fn sphere(n: usize) -> f64 {
    math::sphere_area(n - 1)
}

/// `|S^{N−1}| ∫_R^∞ r^{N+1} ρ(r) dr`.
fn radial_tail<F: Fn(f64) -> f64>(rho: F, n: usize, r: f64) -> Result<f64> {
    let g = |x: f64| {
        let d = rho(x);
        if d == 0.0 {
            0.0
        } else {
            math::powi(x, n as i32 + 1) * d
        }
    };
    let mut s = 0.0;
    let start = r.max(1.0);
    if r < 1.0 {
        s += quadrature::tanh_sinh(&g, r, 1.0, 1e-12)?;
    }
    // r = start/x maps (start, ∞) onto (0, 1)
    s += quadrature::tanh_sinh(|x| g(start / x) * start / (x * x), 0.0, 1.0, 1e-12)?;
    Ok(sphere(n) * s)
}

impl TailProfile {
    fn tail_density(&self, n: usize, speed: f64) -> f64 {
        match *self {
            TailProfile::PowerTail { eps0, delta, r0 } => {
                let x = speed / r0;
                eps0 * math::powf(1.0 + x * x, -0.5 * (n as f64 + 2.0 + delta))
            }
            TailProfile::ATail { law, delta, eps0, r0 } => {
                let rho = speed.max(r0);
                eps0 * math::powi(rho, -(n as i32 + 1)) * law.a1(rho, delta)
            }
            TailProfile::Compact { .. } => 0.0,
        }
    }

    /// Realizes the profile on `grid`. The Gaussian core amplitude and
    /// temperature are solved so the grid moments are `(1, 0, N)`.
    pub fn build(&self, grid: &Arc<VelocityGrid>) -> Result<BuiltProfile> {
        let n = grid.dim;
        let unit = Conserved::unit(n);
        if let TailProfile::Compact { shift } = *self {
            let t = 1.0 - shift * shift / n as f64;
            if !(t > 0.0) {
                return Err(Error::InvalidInput(format!("shift {shift} leaves no temperature")));
            }
            let a = gaussian(grid, 0.5, [shift, 0.0, 0.0], [t; 3]);
            let b = gaussian(grid, 0.5, [-shift, 0.0, 0.0], [t; 3]);
            let v: Vec<f64> = a.values.iter().zip(&b.values).map(|(x, y)| x + y).collect();
            let values = project_values(grid, &v, &unit)?;
            return Ok(BuiltProfile { profile: *self, field: DensityField { grid: grid.clone(), values }, core: (1.0, t) });
        }
        match *self {
            TailProfile::PowerTail { eps0, delta, r0 } | TailProfile::ATail { eps0, delta, r0, .. } => {
                if !(eps0 > 0.0) || !(delta > 0.0) || !(r0 >= 0.0) {
                    return Err(Error::InvalidInput("tail parameters must be positive".into()));
                }
                if !(r0 > 0.0) {
                    return Err(Error::InvalidInput("tail radius R₀ must be positive".into()));
                }
            }
            TailProfile::Compact { .. } => {}
        }
        let p: Vec<f64> = grid.speed2.iter().map(|v2| self.tail_density(n, math::sqrt(*v2))).collect();
        let w = grid.cell_volume;
        let mp: f64 = p.iter().sum::<f64>() * w;
        let ep: f64 = p.iter().zip(&grid.speed2).map(|(a, b)| a * b).sum::<f64>() * w;
        if !(mp < 0.9) || !(ep < 0.9 * n as f64) {
            return Err(Error::InvalidInput("tail amplitude leaves no room for the Gaussian core".into()));
        }
        let moments = |tau: f64| {
            let g = gaussian(grid, 1.0, [0.0; 3], [tau; 3]);
            let m = g.values.iter().sum::<f64>() * w;
            let e = g.values.iter().zip(&grid.speed2).map(|(a, b)| a * b).sum::<f64>() * w;
            (m, e)
        };
        // energy per unit core mass increases with τ
        let target = (n as f64 - ep) / (1.0 - mp);
        let (mut lo, mut hi) = (0.02, 1.5);
        let ratio = |tau: f64| {
            let (m, e) = moments(tau);
            e / m - target
        };
        if ratio(lo) > 0.0 || ratio(hi) < 0.0 {
            return Err(Error::InvalidInput("no core temperature matches the tail energy".into()));
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if ratio(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let tau = 0.5 * (lo + hi);
        let (m, _) = moments(tau);
        let a = (1.0 - mp) / m;
        let g = gaussian(grid, a, [0.0; 3], [tau; 3]);
        let v: Vec<f64> = g.values.iter().zip(&p).map(|(x, y)| x + y).collect();
        let values = project_values(grid, &v, &unit)?;
        Ok(BuiltProfile { profile: *self, field: DensityField { grid: grid.clone(), values }, core: (a, tau) })
    }

    pub fn field(&self, grid: &Arc<VelocityGrid>) -> Result<DensityField> {
        Ok(self.build(grid)?.field)
    }
}

impl BuiltProfile {
    /// Energy tail `∫_{|v|>R} |v|² f₀` of the untruncated profile.
    pub fn energy_tail(&self, r: f64) -> Result<f64> {
        let n = self.field.grid.dim;
        let (a, tau) = self.core;
        let core = |x: f64| a * math::powf(2.0 * math::PI * tau, -0.5 * n as f64) * math::exp(-0.5 * x * x / tau);
        match self.profile {
            TailProfile::Compact { .. } => Ok(tail(&self.field, r)),
            TailProfile::PowerTail { .. } => {
                let p = self.profile;
                radial_tail(|x| core(x) + p.tail_density(n, x), n, r)
            }
            TailProfile::ATail { law, delta, eps0, r0 } => {
                let mut s = radial_tail(core, n, r)?;
                let area = sphere(n);
                if r >= r0 {
                    s += eps0 * area * law.a(r, delta);
                } else {
                    let c = eps0 * math::powi(r0, -(n as i32 + 1)) * law.a1(r0, delta);
                    let np2 = n as i32 + 2;
                    s += area * c * (math::powi(r0, np2) - math::powi(r, np2)) / np2 as f64;
                    s += eps0 * area * law.a(r0, delta);
                }
                Ok(s)
            }
        }
    }
}

/// `[x]`, the largest integer not exceeding `x`.
pub fn floor_bracket(x: f64) -> f64 {
    math::floor(x)
}

/// Exponent `2 − [2/s]` of the tail equation.
pub fn time_exponent(s: f64) -> f64 {
    2.0 - floor_bracket(2.0 / s)
}

/// `β = min{s, s − 2 + |γ|}`.
pub fn tail_beta(s: f64, gamma: f64) -> f64 {
    s.min(s - 2.0 + math::abs(gamma))
}

/// Minimal `R > 0` with `R^β T(R) = K(1+t)^{2−[2/s]}`, where `T` is the
/// energy tail. Brackets are scanned upward from `r_min` on a geometric
/// mesh and refined by bisection to `1e-10` relative.
pub fn solve_minimal_r<F: FnMut(f64) -> f64>(
    mut energy_tail: F,
    k: f64,
    s: f64,
    beta: f64,
    t: f64,
    r_min: f64,
    r_max: f64,
) -> Result<f64> {
    if !(k > 0.0) || !(r_min > 0.0) || !(r_max > r_min) {
        return Err(Error::InvalidInput("tail equation needs K > 0 and 0 < R_min < R_max".into()));
    }
    // compared in logs so large R does not overflow R^β
    let target = math::ln(k) + time_exponent(s) * math::ln_1p(t);
    let mut h = |r: f64| {
        let e = energy_tail(r);
        if e > 0.0 {
            beta * math::ln(r) + math::ln(e) - target
        } else {
            f64::NEG_INFINITY
        }
    };
    if h(r_min) >= 0.0 {
        return Err(Error::OutOfRange(format!("tail functional already above K(1+t)^p at R = {r_min}")));
    }
    let ratio = math::powf(10.0, 1.0 / 64.0);
    let mut a = r_min;
    while a < r_max {
        let b = (a * ratio).min(r_max);
        if h(b) >= 0.0 {
            let (mut lo, mut hi) = (a, b);
            while hi - lo > 1e-10 * hi {
                let mid = 0.5 * (lo + hi);
                if h(mid) >= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Ok(0.5 * (lo + hi));
        }
        a = b;
    }
    Err(Error::OutOfRange(format!("no root of the tail equation below R = {r_max}")))
}

/// Power-law fit `y ≈ C(1+t)^{λ̂}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateFit {
    pub t1: f64,
    pub t2: f64,
    pub slope: f64,
    /// Leave-one-out band of the slope.
    pub lo: f64,
    pub hi: f64,
    pub target: f64,
}

/// Least squares on `log y` against `log(1+t)` over the latter half of the
/// positive samples.
pub fn fit_rate(t: &[f64], y: &[f64], target: f64) -> Option<RateFit> {
    let pts: Vec<(f64, f64)> = t.iter().zip(y).filter(|(_, y)| **y > 0.0).map(|(a, b)| (*a, *b)).collect();
    let h = &pts[pts.len() / 2..];
    if h.len() < 3 {
        return None;
    }
    let x: Vec<f64> = h.iter().map(|p| math::ln_1p(p.0)).collect();
    let ly: Vec<f64> = h.iter().map(|p| math::ln(p.1)).collect();
    let (slope, lo, hi) = linalg::slope_with_band(&x, &ly);
    Some(RateFit { t1: h[0].0, t2: h[h.len() - 1].0, slope, lo, hi, target })
}

/// Outcome of one named check.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

fn check(name: &str, pass: bool, detail: String) -> Check {
    Check { name: name.into(), pass, detail }
}

fn trapezoid_running(t: &[f64], y: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out = alloc::vec![0.0; t.len()];
    for i in 1..t.len() {
        acc += 0.5 * (t[i] - t[i - 1]) * (y[i] + y[i - 1]);
        out[i] = acc;
    }
    out
}

/// Linear interpolation of `y` at `x` on the ascending abscissae `t`.
fn interp(t: &[f64], y: &[f64], x: f64) -> f64 {
    if x <= t[0] {
        return y[0];
    }
    for i in 1..t.len() {
        if t[i] >= x {
            let w = (x - t[i - 1]) / (t[i] - t[i - 1]);
            return y[i - 1] * (1.0 - w) + y[i] * w;
        }
    }
    y[t.len() - 1]
}

fn ensure_s(config: &mut SimConfig, s: f64) -> usize {
    match config.s_list.iter().position(|x| *x == s) {
        Some(i) => i,
        None => {
            config.s_list.push(s);
            config.s_list.len() - 1
        }
    }
}

fn leakage_check(series: &TimeSeries) -> Check {
    let worst = series.rows.iter().map(|r| r.leakage).fold(0.0, f64::max);
    let ok = !matches!(series.aborted, Some(Error::Leakage { .. }));
    check("leakage", ok, format!("max leakage ratio {worst:.3e}"))
}

fn aborted_check(series: &TimeSeries) -> Check {
    match &series.aborted {
        None => check("completed", true, format!("reached t = {:.6}", series.t_final())),
        Some(e) => check("completed", false, format!("aborted at t = {:.6}: {e}", series.t_final())),
    }
}

/// Moment growth and time-averaged convergence.
#[derive(Clone, Debug)]
pub struct Theorem1Report {
    pub s: f64,
    pub series: TimeSeries,
    pub t: Vec<f64>,
    /// `‖f‖_{L¹_s}/(1+t)`.
    pub growth: Vec<f64>,
    /// `(1/t)∫₀ᵗ‖f‖_{L¹_{s+γ}}`.
    pub soft_average: Vec<f64>,
    /// `(1/T)∫₀ᵀ ‖f − M‖_{L¹₂}`.
    pub distance_average: Vec<f64>,
    /// `max_{t≥1} growth / growth(1)`.
    pub growth_ratio: f64,
    /// `average(1) / average(T_end)`.
    pub average_drop: f64,
    pub checks: Vec<Check>,
}

pub fn run_theorem1(config: &SimConfig, s: f64) -> Result<Theorem1Report> {
    let gamma = config.kernel.gamma;
    if !(s > 2.0) {
        return Err(Error::InvalidInput(format!("moment order s = {s} must exceed 2")));
    }
    let mut cfg = config.clone();
    let is = ensure_s(&mut cfg, s);
    let isg = ensure_s(&mut cfg, s + gamma);
    let series = run_single(&cfg, None)?;
    let t: Vec<f64> = series.rows.iter().map(|r| r.t).collect();
    let ms: Vec<f64> = series.rows.iter().map(|r| r.l1s[is]).collect();
    let msg: Vec<f64> = series.rows.iter().map(|r| r.l1s[isg]).collect();
    let d: Vec<f64> = series.rows.iter().map(|r| r.d_l12).collect();
    let growth: Vec<f64> = ms.iter().zip(&t).map(|(m, t)| m / (1.0 + t)).collect();
    let int_soft = trapezoid_running(&t, &msg);
    let int_d = trapezoid_running(&t, &d);
    let avg = |i: usize, v: &[f64]| if t[i] > 0.0 { v[i] / t[i] } else { f64::NAN };
    let soft_average: Vec<f64> = (0..t.len()).map(|i| if t[i] > 0.0 { avg(i, &int_soft) } else { msg[0] }).collect();
    let distance_average: Vec<f64> = (0..t.len()).map(|i| if t[i] > 0.0 { avg(i, &int_d) } else { d[0] }).collect();

    let t_end = series.t_final();
    let mut checks = alloc::vec![aborted_check(&series), leakage_check(&series)];
    let (growth_ratio, average_drop);
    if t_end >= 1.0 {
        let g1 = interp(&t, &growth, 1.0);
        growth_ratio = t.iter().zip(&growth).filter(|(t, _)| **t >= 1.0).map(|(_, g)| g / g1).fold(0.0, f64::max);
        checks.push(check(
            "linear moment growth",
            growth_ratio <= 1.2,
            format!("max_(t≥1) ‖f‖_{{L¹_{s}}}/(1+t) is {growth_ratio:.6} × its value at t = 1"),
        ));
        let m_eq = l1_weighted(&maxwellian_on_grid(&series.initial.grid), s + gamma);
        let a1 = interp(&t, &soft_average, 1.0);
        let sup = t.iter().zip(&soft_average).filter(|(t, _)| **t >= 1.0).map(|(_, a)| *a).fold(0.0, f64::max);
        checks.push(check(
            "bounded soft-moment average",
            sup <= 1.2 * a1.max(m_eq),
            format!("sup (1/t)∫‖f‖_{{L¹_{}}} = {sup:.6}, at t = 1 {a1:.6}, equilibrium {m_eq:.6}", s + gamma),
        ));
        let da1 = interp(&t, &distance_average, 1.0);
        let dae = distance_average[t.len() - 1];
        average_drop = da1 / dae;
        let mut monotone = true;
        for i in 1..t.len() {
            if t[i - 1] >= 1.0 && distance_average[i] > distance_average[i - 1] * (1.0 + 1e-9) {
                monotone = false;
            }
        }
        checks.push(check(
            "averaged distance decreasing",
            monotone,
            format!("(1/T)∫‖f−M‖_{{L¹₂}} nonincreasing for T ≥ 1: {monotone}"),
        ));
        checks.push(check(
            "averaged distance drop",
            average_drop >= 5.0,
            format!("average at T = 1 over average at T = {t_end:.4}: {average_drop:.4}"),
        ));
    } else {
        growth_ratio = f64::NAN;
        average_drop = f64::NAN;
        checks.push(check("horizon", false, format!("horizon {t_end} shorter than t = 1")));
    }
    Ok(Theorem1Report { s, series, t, growth, soft_average, distance_average, growth_ratio, average_drop, checks })
}

/// Hypothesis check of the tail experiment.
pub fn check_tail_hypothesis(profile: &TailProfile, s: f64, gamma: f64) -> Result<()> {
    let beta = tail_beta(s, gamma);
    match *profile {
        TailProfile::PowerTail { delta, .. } => {
            if !(s > 2.0) {
                return Err(Error::InvalidInput(format!("hypothesis violated: power tail needs s > 2, got {s}")));
            }
            if !(delta > s - 2.0 && delta < beta) {
                return Err(Error::InvalidInput(format!(
                    "hypothesis violated: δ = {delta} outside ({}, {beta})",
                    s - 2.0
                )));
            }
        }
        TailProfile::ATail { delta, .. } => {
            if s != 2.0 {
                return Err(Error::InvalidInput(format!("hypothesis violated: slow tail needs s = 2, got {s}")));
            }
            if !(delta > 0.0 && delta < beta) {
                return Err(Error::InvalidInput(format!("hypothesis violated: δ = {delta} outside (0, {beta})")));
            }
        }
        TailProfile::Compact { .. } => {
            return Err(Error::InvalidInput("hypothesis violated: compact profile has no energy long tail".into()))
        }
    }
    Ok(())
}

/// Tail-persistence lower bound.
#[derive(Clone, Debug)]
pub struct Theorem2Report {
    pub s: f64,
    pub beta: f64,
    pub k: f64,
    pub series: TimeSeries,
    /// `(t, R(t), lower bound, d_L12)` for rows inside the window.
    pub bound_rows: Vec<(f64, f64, f64, f64)>,
    /// First time at which `R(t) > 0.8 L`.
    pub horizon: Option<f64>,
    /// Analytic lower-bound curve `(t, ∫_{|v|>R(t)}|v|²f₀)`.
    pub analytic: Vec<(f64, f64)>,
    pub fit: Option<RateFit>,
    /// Fitted exponents over successive decades, slow-tail family only.
    pub window_slopes: Vec<(f64, f64, f64)>,
    /// Energy tail of `f₀` outside the grid.
    pub truncated_tail: f64,
    pub checks: Vec<Check>,
}

pub fn run_theorem2(config: &SimConfig, profile: TailProfile, s: f64, k0: f64) -> Result<Theorem2Report> {
    let gamma = config.kernel.gamma;
    check_tail_hypothesis(&profile, s, gamma)?;
    if !(k0 > 0.0) {
        return Err(Error::InvalidInput("K₀ must be positive".into()));
    }
    let beta = tail_beta(s, gamma);
    let grid = config.grid()?;
    let built = profile.build(&grid)?;
    let mut cfg = config.clone();
    cfg.initial = InitialDatum::Tail(profile);
    let series = run_single(&cfg, None)?;
    let f0 = &series.initial;
    let lim = 0.8 * config.extent;
    let r_min = 1e-3;
    let r_max = 1e150;
    let et = |r: f64| built.energy_tail(r).unwrap_or(f64::NAN);
    let d0 = series.rows[0].d_l12;
    let mut k = k0;
    let mut calibrated = false;
    for _ in 0..400 {
        let r = solve_minimal_r(et, k, s, beta, 0.0, r_min, r_max)?;
        if tail(f0, r) <= d0 {
            calibrated = true;
            break;
        }
        k *= 1.25;
    }
    let mut checks = alloc::vec![aborted_check(&series), leakage_check(&series)];
    checks.push(check("K calibration", calibrated, format!("K = {k:.6e} from K₀ = {k0:.3e}")));
    let mut bound_rows = Vec::new();
    let mut horizon = None;
    let mut violations = 0;
    for row in &series.rows {
        let r = solve_minimal_r(et, k, s, beta, row.t, r_min, r_max)?;
        if r > lim {
            horizon.get_or_insert(row.t);
            continue;
        }
        let lb = tail(f0, r);
        if row.d_l12 < lb * (1.0 - 1e-6) {
            violations += 1;
        }
        bound_rows.push((row.t, r, lb, row.d_l12));
    }
    checks.push(check(
        "tail lower bound",
        violations == 0,
        format!("{} rows inside R(t) ≤ {lim}, {violations} violations", bound_rows.len()),
    ));
    let mut analytic = Vec::new();
    for i in 0..=20 {
        let t = 10.0 * math::powf(10.0, i as f64 / 20.0);
        let r = solve_minimal_r(et, k, s, beta, t, r_min, r_max)?;
        analytic.push((t, built.energy_tail(r)?));
    }
    let mut window_slopes = Vec::new();
    let fit = match profile {
        TailProfile::PowerTail { delta, .. } => {
            let target = -2.0 * delta / (beta - delta);
            let ts: Vec<f64> = analytic.iter().map(|p| p.0).collect();
            let ys: Vec<f64> = analytic.iter().map(|p| p.1).collect();
            let x: Vec<f64> = ts.iter().map(|t| math::ln_1p(*t)).collect();
            let ly: Vec<f64> = ys.iter().map(|y| math::ln(*y)).collect();
            let (slope, lo, hi) = linalg::slope_with_band(&x, &ly);
            let fit = RateFit { t1: ts[0], t2: ts[ts.len() - 1], slope, lo, hi, target };
            checks.push(check(
                "lower-envelope slope",
                math::abs(slope - target) <= 0.1 * math::abs(target),
                format!("fitted {slope:.5} over t ∈ [10, 100], target {target:.5}"),
            ));
            Some(fit)
        }
        _ => {
            for j in 0..4 {
                let (a, b) = (math::powf(10.0, j as f64 + 1.0), math::powf(10.0, j as f64 + 2.0));
                let mut x = Vec::new();
                let mut ly = Vec::new();
                for i in 0..=10 {
                    let t = a * math::powf(b / a, i as f64 / 10.0);
                    let r = solve_minimal_r(et, k, s, beta, t, r_min, r_max)?;
                    x.push(math::ln_1p(t));
                    ly.push(math::ln(built.energy_tail(r)?));
                }
                window_slopes.push((a, b, linalg::line_fit(&x, &ly).1));
            }
            let shrinking = window_slopes.windows(2).all(|w| math::abs(w[1].2) <= math::abs(w[0].2));
            checks.push(check(
                "slow decay",
                shrinking,
                format!("fitted exponents per decade {:?}", window_slopes.iter().map(|w| w.2).collect::<Vec<_>>()),
            ));
            None
        }
    };
    let full = built.energy_tail(0.0)?;
    let on_grid = tail(f0, 0.0);
    Ok(Theorem2Report {
        s,
        beta,
        k,
        series,
        bound_rows,
        horizon,
        analytic,
        fit,
        window_slopes,
        truncated_tail: (full - on_grid).max(0.0),
        checks,
    })
}

/// One row of the decay-rate chain along the g-flow.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChainRow {
    pub t: f64,
    /// `C_{H₀} H(g|M)` and `𝒟₂(g)`.
    pub villani: (f64, f64),
    /// `K_* 𝒟₂^{1+ε}` and `D(g) 𝒟_k^ε`.
    pub holder: (f64, f64),
    /// `𝒟_k(g)` and `C(1+t)²`.
    pub dk: (f64, f64),
    /// `c(1+t)^{−2ε} H(g|M)^{1+ε}` and `D(g)`.
    pub assembled: (f64, f64),
    /// `H(g|M)` and `C(1+t)^{−α}`.
    pub gronwall: (f64, f64),
    /// `H(f|M)` and `H(g|M) + (H(f₀|M) + 2 + t)e^{−t−1}`.
    pub relative: (f64, f64),
    /// `d_L12(f)` and `C_N (2H(f|M))^{1/4}`.
    pub distance: (f64, f64),
    /// `d_L12(f)`, envelope `C(1+t)^{−λ}` calibrated on `t ≤ 1`.
    pub rate: (f64, f64),
    /// Entropic moment and `C(1+t)²` calibrated on `t ≤ 1`.
    pub entropic: (f64, f64),
}

/// Decay-rate chain.
#[derive(Clone, Debug)]
pub struct Theorem3Report {
    pub s: f64,
    pub k: f64,
    pub epsilon: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub within_hypothesis: bool,
    pub c_h0: f64,
    pub c_dk: f64,
    pub c_chain: f64,
    pub c_dissipation: f64,
    pub c_gronwall: f64,
    pub c_distance: f64,
    pub series: TimeSeries,
    pub rows: Vec<ChainRow>,
    /// `(t, ΔH(g|M)/Δt + D̄(g), C(1+t)e^{−t})` per interval.
    pub h_inequality: Vec<(f64, f64, f64)>,
    pub fit: Option<RateFit>,
    pub checks: Vec<Check>,
}

/// `sup_{t≥0} (1+t)^p e^{−t}`.
fn sup_poly_exp(p: f64) -> f64 {
    if p <= 1.0 {
        1.0
    } else {
        math::powf(p, p) * math::exp(-(p - 1.0))
    }
}

pub fn run_theorem3(config: &SimConfig, s: f64, distance_fields: usize) -> Result<Theorem3Report> {
    config.kernel.check_theorem3_mode()?;
    let gamma = config.kernel.gamma;
    let n = config.dim as f64;
    let k = s - 2.0;
    if !(k > 2.0) {
        return Err(Error::InvalidInput(format!("s = {s} gives weight order k = {k} ≤ 2")));
    }
    let epsilon = (2.0 + math::abs(gamma)) / (k - 2.0);
    let within_hypothesis = epsilon < 0.5 && s > 10.0;
    let alpha = (1.0 - 2.0 * epsilon) / epsilon;
    let lambda = (s - 10.0) / 12.0;
    let mut cfg = config.clone();
    cfg.g_flow = true;
    cfg.keep_fields = true;
    cfg.weight_k = k;
    let series = run_single(&cfg, None)?;
    let g = &series.g_rows;
    let grid = series.initial.grid.clone();
    let m = equilibrium_on_grid(&grid, &Conserved::of(&series.initial))?;

    let prefactor = math::sphere_area(config.dim - 1) / (4.0 * (2.0 * n + 1.0));
    let min_spread = g.iter().map(|r| r.spread).fold(f64::INFINITY, f64::min);
    let c_h0 = prefactor * min_spread;
    let early = |t: f64| t <= 1.0 + 1e-12;
    let c_dk = g.iter().filter(|r| early(r.t)).map(|r| r.dk / ((1.0 + r.t) * (1.0 + r.t))).fold(0.0, f64::max);
    let k_star = config.kernel.k_star;
    let c_chain = k_star * math::powf(c_h0, 1.0 + epsilon) / math::powf(c_dk, epsilon);
    let c_ent = g.iter().filter(|r| early(r.t)).map(|r| r.entropic / ((1.0 + r.t) * (1.0 + r.t))).fold(0.0, f64::max);

    let mut h_inequality = Vec::new();
    let mut c_dissipation: f64 = 0.0;
    for (i, w) in g.windows(2).enumerate() {
        let dt = w[1].t - w[0].t;
        let tm = 0.5 * (w[0].t + w[1].t);
        let lhs = (w[1].h_rel - w[0].h_rel) / dt + 0.5 * (w[0].dissipation + w[1].dissipation);
        let env = (1.0 + tm) * math::exp(-tm);
        if i == 0 {
            c_dissipation = (lhs / env).max(0.0);
        }
        h_inequality.push((tm, lhs, c_dissipation * env));
    }
    let u0 = g.first().map(|r| r.h_rel).unwrap_or(0.0);
    let p = 1.0 + alpha + 1.0;
    let c_gronwall = u0.max(1.0).max(math::powf((alpha + c_dissipation * sup_poly_exp(p)) / c_chain, 1.0 / epsilon));

    let mut fields = Vec::new();
    for i in 0..distance_fields {
        fields.push(random_mixture(&grid, config.seed ^ 0x5eed, i as u64)?);
    }
    let c_distance = calibrate_distance_constant(&fields, &m);
    let h0 = series.rows[0].h_rel;
    let c_rate = series
        .rows
        .iter()
        .filter(|r| early(r.t))
        .map(|r| r.d_l12 * math::powf(1.0 + r.t, lambda))
        .fold(0.0, f64::max);

    let mut rows = Vec::new();
    for (gr, snap) in g.iter().zip(&series.snapshots) {
        let t = gr.t;
        let f = DensityField { grid: grid.clone(), values: snap.values.clone() };
        let (_, hf, _) = entropy_functionals(&f, &m, 0.0)?;
        let d12 = distances(&f, &m).1;
        rows.push(ChainRow {
            t,
            villani: (c_h0 * gr.h_rel, gr.d2),
            holder: (k_star * math::powf(gr.d2, 1.0 + epsilon), gr.dissipation * math::powf(gr.dk, epsilon)),
            dk: (gr.dk, c_dk * (1.0 + t) * (1.0 + t)),
            assembled: (
                c_chain * math::powf(1.0 + t, -2.0 * epsilon) * math::powf(gr.h_rel.max(0.0), 1.0 + epsilon),
                gr.dissipation,
            ),
            gronwall: (gr.h_rel, c_gronwall * math::powf(1.0 + t, -alpha)),
            relative: (hf, gr.h_rel + (h0 + 2.0 + t) * math::exp(-t - 1.0)),
            distance: (d12, c_distance * math::powf(2.0 * hf.max(0.0), 0.25)),
            rate: (d12, c_rate * math::powf(1.0 + t, -lambda)),
            entropic: (gr.entropic, c_ent * (1.0 + t) * (1.0 + t)),
        });
    }
    let tol = 1e-6;
    let holds = |pair: (f64, f64)| pair.0 <= pair.1 * (1.0 + tol) + 1e-300;
    let count = |f: &dyn Fn(&ChainRow) -> (f64, f64)| rows.iter().filter(|r| !holds(f(r))).count();
    let mut checks = alloc::vec![aborted_check(&series), leakage_check(&series)];
    let links: [(&str, &dyn Fn(&ChainRow) -> (f64, f64)); 9] = [
        ("villani step", &|r| r.villani),
        ("holder step", &|r| r.holder),
        ("weighted dissipation growth", &|r| r.dk),
        ("assembled dissipation bound", &|r| r.assembled),
        ("gronwall envelope", &|r| r.gronwall),
        ("relative entropy transfer", &|r| r.relative),
        ("distance conversion", &|r| r.distance),
        ("decay envelope", &|r| r.rate),
        ("entropic moment growth", &|r| r.entropic),
    ];
    for (name, f) in links {
        let v = count(f);
        checks.push(check(name, v == 0, format!("{v} of {} rows violate", rows.len())));
    }
    let hv = h_inequality.iter().skip(1).filter(|(_, l, r)| *l > *r + tol * l.abs().max(1e-300)).count();
    checks.push(check(
        "g-flow entropy inequality",
        hv == 0,
        format!("{hv} of {} intervals violate with C = {c_dissipation:.4e}", h_inequality.len().saturating_sub(1)),
    ));
    let floor = g.iter().all(|r| r.floor_ratio >= 1.0 - 1e-12);
    checks.push(check("g floor", floor, "g ≥ e^{−t−1}M on every row".into()));
    checks.push(check(
        "hypothesis",
        within_hypothesis,
        if within_hypothesis {
            format!("ε = {epsilon:.4} < 1/2")
        } else {
            format!("outside theorem hypothesis: ε = {epsilon:.4}")
        },
    ));
    let ts: Vec<f64> = series.rows.iter().map(|r| r.t).collect();
    let ds: Vec<f64> = series.rows.iter().map(|r| r.d_l12).collect();
    let fit = fit_rate(&ts, &ds, -lambda);
    Ok(Theorem3Report {
        s,
        k,
        epsilon,
        alpha,
        lambda,
        within_hypothesis,
        c_h0,
        c_dk,
        c_chain,
        c_dissipation,
        c_gronwall,
        c_distance,
        series,
        rows,
        h_inequality,
        fit,
        checks,
    })
}

/// Mild-solution lower envelope.
#[derive(Clone, Debug)]
pub struct Theorem5Report {
    pub alpha: f64,
    pub beta: f64,
    /// `sup |v|^β L(f)(v, t)` over recorded rows.
    pub c: f64,
    pub c1: f64,
    pub c2: f64,
    pub series: TimeSeries,
    pub mild: OracleReport,
    /// `(t, d_L12, C₁ tail(f₀, t^α) − C₂ e^{−t^{2α}/4})`.
    pub envelope: Vec<(f64, f64, f64)>,
    pub checks: Vec<Check>,
}

/// `sup_R e^{R²/4} ∫_{|v|>R} |v|² M` on the grid.
pub fn maxwellian_tail_constant(grid: &Arc<VelocityGrid>) -> f64 {
    let m = maxwellian_on_grid(grid);
    let mut c: f64 = 0.0;
    let rmax = math::sqrt(grid.dim as f64) * grid.extent;
    for i in 0..=400 {
        let r = rmax * i as f64 / 400.0;
        c = c.max(tail(&m, r) * math::exp(0.25 * r * r));
    }
    c
}

pub fn run_theorem5(config: &SimConfig, profile: TailProfile) -> Result<Theorem5Report> {
    if !matches!(config.kernel.truncation, Some(Truncation::BnCap(_))) {
        return Err(Error::InvalidInput(
            "hypothesis violated: the mild lower envelope needs a bounded kernel (bn_cap truncation)".into(),
        ));
    }
    let gamma = config.kernel.gamma;
    let beta = math::abs(gamma).min(2.0);
    let alpha = 1.0 / beta;
    let mut cfg = config.clone();
    cfg.initial = InitialDatum::Tail(profile);
    cfg.keep_fields = true;
    let series = run_single(&cfg, None)?;
    let grid = series.initial.grid.clone();
    let op = CollisionOperator::new(grid.clone(), config.kernel.clone(), config.quadrature.clone())?;
    let mut c: f64 = 0.0;
    for snap in &series.snapshots {
        let f = DensityField { grid: grid.clone(), values: snap.values.clone() };
        let l = op.loss(&f);
        for (i, li) in l.iter().enumerate() {
            c = c.max(math::powf(grid.speed2[i], 0.5 * beta) * li);
        }
    }
    let c1 = math::exp(-c);
    let c2 = maxwellian_tail_constant(&grid);
    let mild = oracles::check_mild_lower_bound(&series, 1e-6)?;
    let mut envelope = Vec::new();
    let mut violations = 0;
    let mut positive = 0;
    for row in &series.rows {
        let r = math::powf(row.t, alpha);
        let e = c1 * tail(&series.initial, r) - c2 * math::exp(-0.25 * math::powf(row.t, 2.0 * alpha));
        if e > 0.0 {
            positive += 1;
        }
        if row.d_l12 < e * (1.0 - 1e-6) {
            violations += 1;
        }
        envelope.push((row.t, row.d_l12, e));
    }
    let mut checks = alloc::vec![aborted_check(&series), leakage_check(&series)];
    checks.push(check(
        "mild lower bound",
        mild.pass,
        format!("{} cells × rows, {} violations, worst margin {:.3e}", mild.samples, mild.violations, mild.worst_margin),
    ));
    checks.push(check(
        "tail envelope",
        violations == 0,
        format!("{violations} violations, envelope positive on {positive} of {} rows", envelope.len()),
    ));
    Ok(Theorem5Report { alpha, beta, c, c1, c2, series, mild, envelope, checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bracket_notation() {
        assert_eq!(time_exponent(2.0), 1.0);
        assert_eq!(time_exponent(4.0), 2.0);
        assert_eq!(time_exponent(2.5), 2.0);
        assert_eq!(tail_beta(4.0, -0.5), 2.5);
    }

    #[test]
    fn minimal_root_of_power_tail() {
        // T(R) = c R^{-δ} gives R = (K(1+t)^2 / c)^{1/(β−δ)}
        let (c, delta, beta, k) = (0.3, 2.25, 2.5, 2.0);
        let r = solve_minimal_r(|r| c * math::powf(r, -delta), k, 4.0, beta, 1.0, 1e-6, 1e9).unwrap();
        let exact = math::powf(k * 4.0 / c, 1.0 / (beta - delta));
        assert!(((r - exact) / exact).abs() < 1e-9, "{r} vs {exact}");
    }

    #[test]
    fn tail_laws_differentiate() {
        for law in [TailLaw::Power, TailLaw::Log, TailLaw::LogLog] {
            for t in [0.5, 3.0, 40.0] {
                let h = 1e-5 * (1.0 + t);
                let d = -(law.a(t + h, 1.3) - law.a(t - h, 1.3)) / (2.0 * h);
                assert!(((d - law.a1(t, 1.3)) / d).abs() < 1e-6);
            }
        }
    }
}
