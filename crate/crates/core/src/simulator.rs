//! Time integration of `∂f/∂t = Q(f)` on the velocity grid, the truncation
//! sequence `B_n = min{B, n}`, per-step diagnostics and the g-flow
//! `g = (1 − e^{−t−1}) f + e^{−t−1} M`.
//!
//! Every step is followed by the conservative projection onto the moments
//! of the initial field, so diagnostics only ever see projected fields.

use crate::collision::{project_values, CollisionOperator, Evaluation, QuadratureOptions};
use crate::distribution::{
    distances, entropy_functionals, equilibrium_on_grid, gaussian, l1_weighted, maxwellian_on_grid, random_mixture,
    t_star, tail, Conserved, DensityField, VelocityGrid,
};
use crate::error::{Error, Result};
use crate::experiments::TailProfile;
use crate::kernel::{KernelSpec, Truncation};
use crate::math;
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

/// Maximum number of step halvings before a run aborts.
pub const MAX_RETRIES: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DtPolicy {
    Fixed(f64),
    /// `dt = c / max L(f)`.
    Cfl(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Integrator {
    Euler,
    /// Heun's two-stage method.
    Rk2,
}

/// Initial datum families.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialDatum {
    /// The grid Maxwellian, unprojected.
    Maxwellian,
    /// `½G(u e₁, T) + ½G(−u e₁, T)` with `T = 1 − u²/N`.
    Bimodal { shift: f64 },
    /// `½G(0, T_c) + ½G(0, 2 − T_c)`.
    TwoTemperature { cold: f64 },
    /// Centered Gaussian with directional temperatures rescaled to mean 1.
    Anisotropic { temps: [f64; 3] },
    /// Seeded random Gaussian mixture.
    Mixture,
    /// Long-tail families.
    Tail(TailProfile),
}

/// Run configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub dim: usize,
    pub points_per_axis: usize,
    pub extent: f64,
    pub kernel: KernelSpec,
    pub quadrature: QuadratureOptions,
    pub t_end: f64,
    /// Step budget, 0 for none.
    pub max_steps: usize,
    pub dt_policy: DtPolicy,
    pub integrator: Integrator,
    /// Caps `n` of `B_n = min{B, n}`; one run per cap when nonempty.
    pub bn_sequence: Vec<f64>,
    /// Record a diagnostics row every `stride` steps.
    pub stride: usize,
    pub s_list: Vec<f64>,
    pub r_list: Vec<f64>,
    /// Weight order `k` of `𝒟_k` and of the entropic moment.
    pub weight_k: f64,
    pub initial: InitialDatum,
    pub seed: u64,
    pub label: String,
    /// Largest admissible leakage relative to the collision mass.
    pub leakage_tolerance: f64,
    /// Negative entries below `−clip_tolerance · max f` reject a step.
    pub clip_tolerance: f64,
    /// Keep fields and loss integrals at recorded rows.
    pub keep_fields: bool,
    /// Evaluate the g-flow at recorded rows (implies `keep_fields`).
    pub g_flow: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dim: 2,
            points_per_axis: 48,
            extent: 6.0,
            kernel: KernelSpec::power_law(2, -0.5).expect("valid default kernel"),
            quadrature: QuadratureOptions::for_dim(2),
            t_end: 40.0,
            max_steps: 200,
            dt_policy: DtPolicy::Cfl(0.5),
            integrator: Integrator::Euler,
            bn_sequence: Vec::new(),
            stride: 1,
            s_list: alloc::vec![2.0, 4.0, 3.5],
            r_list: alloc::vec![2.0, 3.0, 4.0],
            weight_k: 10.0,
            initial: InitialDatum::Bimodal { shift: 1.0 },
            seed: 1,
            label: "default".into(),
            leakage_tolerance: 1e-6,
            clip_tolerance: 1e-6,
            keep_fields: false,
            g_flow: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.kernel.dim != self.dim {
            return bad(format!("kernel dimension {} differs from grid dimension {}", self.kernel.dim, self.dim));
        }
        if !(self.t_end > 0.0) {
            return bad("t_end must be positive".into());
        }
        match self.dt_policy {
            DtPolicy::Fixed(dt) if !(dt > 0.0) => return bad("fixed dt must be positive".into()),
            DtPolicy::Cfl(c) if !(c > 0.0 && c < 1.0) => return bad("cfl safety must lie in (0, 1)".into()),
            _ => {}
        }
        if self.stride == 0 {
            return bad("diagnostic stride must be at least 1".into());
        }
        if self.bn_sequence.iter().any(|n| !(*n > 0.0)) {
            return bad("bn_sequence caps must be positive".into());
        }
        if !(self.weight_k >= 2.0) {
            return bad("weight order k must be at least 2".into());
        }
        if !(self.leakage_tolerance > 0.0) || !(self.clip_tolerance >= 0.0) {
            return bad("tolerances must be positive".into());
        }
        self.quadrature.validate()
    }

    pub fn grid(&self) -> Result<Arc<VelocityGrid>> {
        Ok(Arc::new(VelocityGrid::new(self.dim, self.points_per_axis, self.extent)?))
    }
}

/// Builds the initial field of `config` on `grid`.
pub fn initial_field(config: &SimConfig, grid: &Arc<VelocityGrid>) -> Result<DensityField> {
    let n = grid.dim;
    let unit = Conserved::unit(n);
    let sum = |a: DensityField, b: DensityField| {
        let values = a.values.iter().zip(&b.values).map(|(x, y)| x + y).collect();
        DensityField { grid: grid.clone(), values }
    };
    let project = |f: DensityField| -> Result<DensityField> {
        let values = project_values(grid, &f.values, &unit)?;
        Ok(DensityField { grid: grid.clone(), values })
    };
    match &config.initial {
        InitialDatum::Maxwellian => Ok(maxwellian_on_grid(grid)),
        InitialDatum::Bimodal { shift } => {
            let t = 1.0 - shift * shift / n as f64;
            if !(t > 0.0) {
                return Err(Error::InvalidInput(format!("bimodal shift {shift} leaves no temperature")));
            }
            let a = gaussian(grid, 0.5, [*shift, 0.0, 0.0], [t; 3]);
            let b = gaussian(grid, 0.5, [-*shift, 0.0, 0.0], [t; 3]);
            project(sum(a, b))
        }
        InitialDatum::TwoTemperature { cold } => {
            if !(*cold > 0.0 && *cold < 1.0) {
                return Err(Error::InvalidInput(format!("cold temperature {cold} not in (0, 1)")));
            }
            let a = gaussian(grid, 0.5, [0.0; 3], [*cold; 3]);
            let b = gaussian(grid, 0.5, [0.0; 3], [2.0 - cold; 3]);
            project(sum(a, b))
        }
        InitialDatum::Anisotropic { temps } => {
            if temps.iter().take(n).any(|t| !(*t > 0.0)) {
                return Err(Error::InvalidInput("temperatures must be positive".into()));
            }
            let mean = temps.iter().take(n).sum::<f64>() / n as f64;
            let mut t = [1.0; 3];
            for d in 0..n {
                t[d] = temps[d] / mean;
            }
            project(gaussian(grid, 1.0, [0.0; 3], t))
        }
        InitialDatum::Mixture => random_mixture(grid, config.seed, 0),
        InitialDatum::Tail(p) => p.field(grid),
    }
}

/// One diagnostics row.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosticsRow {
    pub t: f64,
    pub step: usize,
    pub dt: f64,
    pub mass: f64,
    pub momentum: [f64; 3],
    pub energy: f64,
    /// `1 − mass`.
    pub mass_defect: f64,
    pub h: f64,
    pub h_rel: f64,
    pub dissipation: f64,
    /// `‖f‖_{L¹_s}` for each `s` of the configuration.
    pub l1s: Vec<f64>,
    pub d_l1: f64,
    pub d_l12: f64,
    /// `∫_{|v|>R} |v|² f` for each `R` of the configuration.
    pub tails: Vec<f64>,
    pub t_star: f64,
    /// Leakage relative to the collision mass.
    pub leakage: f64,
    pub mixed_zero_events: u64,
    pub max_loss: f64,
    /// Cells clipped to zero by the projection since the previous row.
    pub clipped: usize,
}

/// Scalars of one accepted step from `t` to `t + dt`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub dt: f64,
    pub h0: f64,
    pub h1: f64,
    pub d0: f64,
    pub d1: f64,
    /// Relative moment drift across the step.
    pub drift: f64,
    pub retries: usize,
}

impl StepRecord {
    /// `|ΔH/Δt + D̄| / D̄` with `D̄` the trapezoid mean of `D` over the step.
    pub fn entropy_identity_residual(&self) -> f64 {
        let d = 0.5 * (self.d0 + self.d1);
        math::abs((self.h1 - self.h0) / self.dt + d) / d
    }
}

/// Field and loss integrals at a recorded row.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub values: Vec<f64>,
    /// `∫₀ᵗ L(f)` per cell by the trapezoid rule.
    pub loss_integral: Vec<f64>,
    /// The same integral by the left rectangle rule, for error estimates.
    pub loss_integral_left: Vec<f64>,
}

/// g-flow diagnostics at a recorded time.
#[derive(Clone, Debug, PartialEq)]
pub struct GRow {
    pub t: f64,
    pub h_rel: f64,
    pub dissipation: f64,
    pub d2: f64,
    pub dk: f64,
    /// `‖g log⁺ g‖_{L¹_k}`.
    pub entropic: f64,
    /// `N − T*_g`.
    pub spread: f64,
    /// Minimum over cells of `g / (e^{−t−1} M)`.
    pub floor_ratio: f64,
    /// Maximum over cells of `log⁺(1/g) / ((1+t)⟨v⟩²)`.
    pub log_ratio: f64,
    pub d_l12: f64,
}

/// Output of one run.
#[derive(Clone, Debug)]
pub struct TimeSeries {
    pub label: String,
    pub cap: Option<f64>,
    pub s_list: Vec<f64>,
    pub r_list: Vec<f64>,
    pub rows: Vec<DiagnosticsRow>,
    pub steps: Vec<StepRecord>,
    pub snapshots: Vec<Snapshot>,
    pub g_rows: Vec<GRow>,
    pub initial: DensityField,
    pub last: DensityField,
    /// Reason the run stopped early, if it did.
    pub aborted: Option<Error>,
}

impl TimeSeries {
    /// Largest moment drift of any row relative to the initial field.
    pub fn cumulative_drift(&self) -> f64 {
        let c0 = Conserved::of(&self.initial);
        self.rows
            .iter()
            .map(|r| Conserved { mass: r.mass, momentum: r.momentum, energy: r.energy }.max_relative_drift(&c0))
            .fold(0.0, f64::max)
    }

    pub fn max_step_drift(&self) -> f64 {
        self.steps.iter().map(|s| s.drift).fold(0.0, f64::max)
    }

    /// Largest relative increase of `H` over one step, scaled by `|H|`.
    pub fn max_entropy_increase(&self) -> f64 {
        self.steps
            .iter()
            .map(|s| (s.h1 - s.h0) / math::abs(s.h0).max(1e-300))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Final simulated time.
    pub fn t_final(&self) -> f64 {
        self.rows.last().map(|r| r.t).unwrap_or(0.0)
    }
}

/// Result of one accepted step.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub field: DensityField,
    pub dt: f64,
    pub retries: usize,
    pub clipped: usize,
}

/// A collision operator bound to its moment targets and the grid
/// equilibrium with those moments.
pub struct Simulation {
    pub op: CollisionOperator,
    pub maxwellian: DensityField,
    pub targets: Conserved,
    pub integrator: Integrator,
    pub clip_tolerance: f64,
}

impl Simulation {
    pub fn new(op: CollisionOperator, targets: Conserved, integrator: Integrator, clip_tolerance: f64) -> Result<Self> {
        let maxwellian = equilibrium_on_grid(&op.grid, &targets)?;
        Ok(Simulation { op, maxwellian, targets, integrator, clip_tolerance })
    }

    fn candidate(&self, f: &DensityField, dt: f64, q: &[f64]) -> Option<(Vec<f64>, usize)> {
        let fmax = f.values.iter().cloned().fold(0.0, f64::max);
        let floor = -self.clip_tolerance * fmax;
        let mut out = Vec::with_capacity(f.values.len());
        for (x, dx) in f.values.iter().zip(q) {
            let y = x + dt * dx;
            if y < floor {
                return None;
            }
            out.push(y);
        }
        let neg = out.iter().filter(|y| **y < 0.0).count();
        Some((out, neg))
    }

    fn project(&self, values: &[f64]) -> Result<DensityField> {
        let v = project_values(&self.op.grid, values, &self.targets)?;
        Ok(DensityField { grid: self.op.grid.clone(), values: v })
    }

    /// One update of size at most `dt` given `Q(f)`, halving `dt` when the
    /// candidate goes negative beyond the clip tolerance.
    pub fn step(&self, f: &DensityField, q: &[f64], dt: f64, t: f64) -> Result<StepOutcome> {
        let mut h = dt;
        for retries in 0..=MAX_RETRIES {
            if let Some(out) = self.try_step(f, q, h)? {
                return Ok(StepOutcome { field: out.0, dt: h, retries, clipped: out.1 });
            }
            h *= 0.5;
        }
        Err(Error::PositivityFailure { t, retries: MAX_RETRIES })
    }

    fn try_step(&self, f: &DensityField, q: &[f64], dt: f64) -> Result<Option<(DensityField, usize)>> {
        let Some((c1, n1)) = self.candidate(f, dt, q) else {
            return Ok(None);
        };
        let f1 = self.project(&c1)?;
        match self.integrator {
            Integrator::Euler => Ok(Some((f1, n1))),
            Integrator::Rk2 => {
                let q1 = self.op.evaluate(&f1).q;
                let qm: Vec<f64> = q.iter().zip(&q1).map(|(a, b)| 0.5 * (a + b)).collect();
                let Some((c2, n2)) = self.candidate(f, dt, &qm) else {
                    return Ok(None);
                };
                Ok(Some((self.project(&c2)?, n1.max(n2))))
            }
        }
    }

    fn row(
        &self,
        f: &DensityField,
        e: &Evaluation,
        loss: &[f64],
        t: f64,
        step: usize,
        dt: f64,
        s_list: &[f64],
        r_list: &[f64],
    ) -> Result<DiagnosticsRow> {
        let c = Conserved::of(f);
        let (h, h_rel, _) = entropy_functionals(f, &self.maxwellian, 0.0)?;
        let (d_l1, d_l12) = distances(f, &self.maxwellian);
        Ok(DiagnosticsRow {
            t,
            step,
            dt,
            mass: c.mass,
            momentum: c.momentum,
            energy: c.energy,
            mass_defect: 1.0 - c.mass,
            h,
            h_rel,
            dissipation: e.dissipation,
            l1s: s_list.iter().map(|&s| l1_weighted(f, s)).collect(),
            d_l1,
            d_l12,
            tails: r_list.iter().map(|&r| tail(f, r)).collect(),
            t_star: t_star(f),
            leakage: e.leakage_ratio(),
            mixed_zero_events: e.mixed_zero_events,
            max_loss: loss.iter().cloned().fold(0.0, f64::max),
            clipped: 0,
        })
    }
}

/// Runs `config` once per cap of its `bn_sequence`, or once without a cap.
pub fn run(config: &SimConfig) -> Result<Vec<TimeSeries>> {
    config.validate()?;
    if config.bn_sequence.is_empty() {
        return Ok(alloc::vec![run_single(config, None)?]);
    }
    config.bn_sequence.iter().map(|&n| run_single(config, Some(n))).collect()
}

/// One run with the kernel optionally capped at `n`. Errors raised after
/// the first step end the run and are stored in `aborted`.
pub fn run_single(config: &SimConfig, cap: Option<f64>) -> Result<TimeSeries> {
    config.validate()?;
    let grid = config.grid()?;
    let kernel = match cap {
        Some(n) => config.kernel.with_truncation(Some(Truncation::BnCap(n)))?,
        None => config.kernel.clone(),
    };
    let op = CollisionOperator::new(grid.clone(), kernel, config.quadrature.clone())?;
    let f0 = initial_field(config, &grid)?;
    let sim = Simulation::new(op, Conserved::of(&f0), config.integrator, config.clip_tolerance)?;
    let keep = config.keep_fields || config.g_flow;
    let cells = grid.len();

    let mut f = f0.clone();
    let mut e = sim.op.evaluate(&f);
    let mut loss = sim.op.loss(&f);
    let mut h = entropy_functionals(&f, &sim.maxwellian, 0.0)?.0;
    let mut int_trap = alloc::vec![0.0; cells];
    let mut int_left = alloc::vec![0.0; cells];
    let mut series = TimeSeries {
        label: config.label.clone(),
        cap,
        s_list: config.s_list.clone(),
        r_list: config.r_list.clone(),
        rows: Vec::new(),
        steps: Vec::new(),
        snapshots: Vec::new(),
        g_rows: Vec::new(),
        initial: f0.clone(),
        last: f0.clone(),
        aborted: None,
    };
    let record = |series: &mut TimeSeries, f: &DensityField, e: &Evaluation, loss: &[f64], t, step, dt, clipped, it: &[f64], il: &[f64]| -> Result<()> {
        let mut row = sim.row(f, e, loss, t, step, dt, &config.s_list, &config.r_list)?;
        row.clipped = clipped;
        series.rows.push(row);
        if keep {
            series.snapshots.push(Snapshot { t, values: f.values.clone(), loss_integral: it.to_vec(), loss_integral_left: il.to_vec() });
        }
        Ok(())
    };
    record(&mut series, &f, &e, &loss, 0.0, 0, 0.0, 0, &int_trap, &int_left)?;

    let mut t = 0.0;
    let mut step = 0usize;
    let mut clipped = 0usize;
    while t < config.t_end * (1.0 - 1e-12) && (config.max_steps == 0 || step < config.max_steps) {
        if e.leakage_ratio() > config.leakage_tolerance {
            series.aborted = Some(Error::Leakage { ratio: e.leakage_ratio() });
            break;
        }
        let max_l = loss.iter().cloned().fold(0.0, f64::max);
        let mut dt = match config.dt_policy {
            DtPolicy::Fixed(dt) => dt,
            DtPolicy::Cfl(c) => c / max_l.max(1e-300),
        };
        dt = dt.min(config.t_end - t);
        let out = match sim.step(&f, &e.q, dt, t) {
            Ok(o) => o,
            Err(err) => {
                series.aborted = Some(err);
                break;
            }
        };
        let c_prev = Conserved::of(&f);
        let f1 = out.field;
        let e1 = sim.op.evaluate(&f1);
        let loss1 = sim.op.loss(&f1);
        let h1 = entropy_functionals(&f1, &sim.maxwellian, 0.0)?.0;
        for i in 0..cells {
            int_trap[i] += 0.5 * out.dt * (loss[i] + loss1[i]);
            int_left[i] += out.dt * loss[i];
        }
        series.steps.push(StepRecord {
            t,
            dt: out.dt,
            h0: h,
            h1,
            d0: e.dissipation,
            d1: e1.dissipation,
            drift: Conserved::of(&f1).max_relative_drift(&c_prev),
            retries: out.retries,
        });
        t += out.dt;
        step += 1;
        clipped += out.clipped;
        f = f1;
        e = e1;
        loss = loss1;
        h = h1;
        let done = !(t < config.t_end * (1.0 - 1e-12)) || (config.max_steps != 0 && step >= config.max_steps);
        if step % config.stride == 0 || done {
            record(&mut series, &f, &e, &loss, t, step, out.dt, clipped, &int_trap, &int_left)?;
            clipped = 0;
        }
    }
    if series.rows.last().map(|r| r.step) != Some(step) {
        record(&mut series, &f, &e, &loss, t, step, 0.0, clipped, &int_trap, &int_left)?;
    }
    series.last = f;
    if config.g_flow {
        series.g_rows = g_flow(&sim.op, &series.snapshots, &sim.maxwellian, config.weight_k)?;
    }
    Ok(series)
}

/// `g(t) = (1 − e^{−t−1}) f(t) + e^{−t−1} M`.
pub fn g_field(f: &DensityField, m: &DensityField, t: f64) -> DensityField {
    let w = math::exp(-t - 1.0);
    let values = f.values.iter().zip(&m.values).map(|(a, b)| (1.0 - w) * a + w * b).collect();
    DensityField { grid: f.grid.clone(), values }
}

/// g-flow diagnostics at every snapshot.
pub fn g_flow(op: &CollisionOperator, snapshots: &[Snapshot], m: &DensityField, k: f64) -> Result<Vec<GRow>> {
    let grid = &op.grid;
    let n = grid.dim as f64;
    snapshots
        .iter()
        .map(|s| {
            let f = DensityField { grid: grid.clone(), values: s.values.clone() };
            let g = g_field(&f, m, s.t);
            let e = op.evaluate(&g);
            let (_, h_rel, entropic) = entropy_functionals(&g, m, k)?;
            let w = math::exp(-s.t - 1.0);
            let mut floor_ratio = f64::INFINITY;
            let mut log_ratio: f64 = 0.0;
            for i in 0..grid.len() {
                floor_ratio = floor_ratio.min(g.values[i] / (w * m.values[i]));
                let lp = math::log_plus(1.0 / g.values[i]);
                log_ratio = log_ratio.max(lp / ((1.0 + s.t) * (1.0 + grid.speed2[i])));
            }
            Ok(GRow {
                t: s.t,
                h_rel,
                dissipation: e.dissipation,
                d2: e.weighted_dissipation(op, 2.0),
                dk: e.weighted_dissipation(op, k),
                entropic,
                spread: n - t_star(&g),
                floor_ratio,
                log_ratio,
                d_l12: distances(&g, m).1,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SimConfig {
        let mut c = SimConfig::default();
        c.points_per_axis = 16;
        c.max_steps = 4;
        c.quadrature.threads = 1;
        c.leakage_tolerance = 1e-3;
        c
    }

    #[test]
    fn maxwellian_is_fixed_point() {
        let mut c = small();
        c.initial = InitialDatum::Maxwellian;
        let s = run_single(&c, None).unwrap();
        assert!(s.aborted.is_none());
        let d = s.rows.iter().map(|r| r.d_l1).fold(0.0, f64::max);
        assert!(d < 1e-12, "{d}");
    }

    #[test]
    fn steps_conserve_and_dissipate() {
        let s = run_single(&small(), None).unwrap();
        assert!(s.aborted.is_none(), "{:?}", s.aborted);
        assert_eq!(s.steps.len(), 4);
        assert!(s.max_step_drift() < 1e-12);
        for w in s.rows.windows(2) {
            assert!(w[1].t > w[0].t);
            assert!(w[1].h <= w[0].h);
        }
    }

    #[test]
    fn rejects_bad_config() {
        let mut c = small();
        c.dt_policy = DtPolicy::Cfl(1.5);
        assert!(c.validate().is_err());
        c = small();
        c.stride = 0;
        assert!(c.validate().is_err());
    }
}
