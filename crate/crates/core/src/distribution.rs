//! Velocity grids, density fields and their functionals.
//!
//! All integrals are midpoint (cell-center) sums `Σ g(v_i) f_i Δv^N`.

use crate::error::{Error, Result};
use crate::geometry::{norm2, Vel};
use crate::linalg;
use crate::math;
use crate::rng::Sample;
use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;

/// Uniform Cartesian lattice over `[-L, L)^N` with cell centers at
/// `-L + (k + ½)Δv`, symmetric about the origin.
#[derive(Clone, Debug, PartialEq)]
pub struct VelocityGrid {
    pub dim: usize,
    pub points_per_axis: usize,
    pub extent: f64,
    pub dv: f64,
    /// Cell volume `Δv^N`.
    pub cell_volume: f64,
    /// Cell centers, row-major with the last axis fastest.
    pub centers: Vec<Vel>,
    /// `|v_i|²` per cell.
    pub speed2: Vec<f64>,
}

impl VelocityGrid {
    pub fn new(dim: usize, points_per_axis: usize, extent: f64) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidInput(format!("dimension {dim} not in {{2, 3}}")));
        }
        if points_per_axis < 16 || points_per_axis % 2 != 0 {
            return Err(Error::InvalidInput(format!(
                "points_per_axis = {points_per_axis} must be even and at least 16"
            )));
        }
        if !(extent > 0.0) {
            return Err(Error::InvalidInput("grid extent must be positive".into()));
        }
        let n = points_per_axis;
        let dv = 2.0 * extent / n as f64;
        let axis: Vec<f64> = (0..n).map(|k| -extent + (k as f64 + 0.5) * dv).collect();
        let cells = n.pow(dim as u32);
        let mut centers = Vec::with_capacity(cells);
        for i in 0..cells {
            let mut v = [0.0; 3];
            let mut rem = i;
            for d in (0..dim).rev() {
                v[d] = axis[rem % n];
                rem /= n;
            }
            centers.push(v);
        }
        let speed2 = centers.iter().map(norm2).collect();
        Ok(VelocityGrid {
            dim,
            points_per_axis: n,
            extent,
            dv,
            cell_volume: math::powi(dv, dim as i32),
            centers,
            speed2,
        })
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Row-major strides, last axis contiguous.
    pub fn strides(&self) -> [usize; 3] {
        let n = self.points_per_axis;
        match self.dim {
            2 => [n, 1, 0],
            _ => [n * n, n, 1],
        }
    }

    /// Multi-index of a flat cell index.
    pub fn multi_index(&self, mut i: usize) -> [usize; 3] {
        let n = self.points_per_axis;
        let mut m = [0usize; 3];
        for d in (0..self.dim).rev() {
            m[d] = i % n;
            i /= n;
        }
        m
    }

    /// Continuous lattice coordinate of a velocity component.
    #[inline]
    pub fn lattice_coord(&self, x: f64) -> f64 {
        (x + self.extent) / self.dv - 0.5
    }

    /// Multilinear interpolation of cell values at `v`; zero outside the
    /// hull of cell centers.
    pub fn interpolate(&self, values: &[f64], v: &Vel) -> f64 {
        let n = self.points_per_axis;
        let st = self.strides();
        let mut base = 0usize;
        let mut frac = [0.0; 3];
        for d in 0..self.dim {
            let x = self.lattice_coord(v[d]);
            if !(x >= 0.0 && x <= (n - 1) as f64) {
                return 0.0;
            }
            let k = (math::floor(x) as usize).min(n - 2);
            frac[d] = x - k as f64;
            base += k * st[d];
        }
        let corners = 1usize << self.dim;
        let mut s = 0.0;
        for c in 0..corners {
            let mut w = 1.0;
            let mut off = 0usize;
            for d in 0..self.dim {
                if c >> d & 1 == 1 {
                    w *= frac[d];
                    off += st[d];
                } else {
                    w *= 1.0 - frac[d];
                }
            }
            if w != 0.0 {
                s += w * values[base + off];
            }
        }
        s
    }
}

/// Nonnegative cell values on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityField {
    pub grid: Arc<VelocityGrid>,
    pub values: Vec<f64>,
}

impl DensityField {
    pub fn new(grid: Arc<VelocityGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidField("value count differs from cell count".into()));
        }
        let f = DensityField { grid, values };
        f.validate()?;
        Ok(f)
    }

    pub fn from_fn<F: Fn(&Vel) -> f64>(grid: Arc<VelocityGrid>, f: F) -> Self {
        let values = grid.centers.iter().map(f).collect();
        DensityField { grid, values }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some((i, v)) = self.values.iter().enumerate().find(|(_, v)| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidField(format!("cell {i} has value {v}")));
        }
        Ok(())
    }

    /// `Σ g(v_i) f_i Δv^N`.
    pub fn integrate<G: Fn(&Vel, f64) -> f64>(&self, g: G) -> f64 {
        let mut s = 0.0;
        for (i, f) in self.values.iter().enumerate() {
            if *f != 0.0 {
                s += g(&self.grid.centers[i], self.grid.speed2[i]) * f;
            }
        }
        s * self.grid.cell_volume
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume
    }

    pub fn scaled(&self, s: f64) -> DensityField {
        DensityField { grid: self.grid.clone(), values: self.values.iter().map(|v| v * s).collect() }
    }
}

/// Conserved moments `(mass, momentum, ∫|v|²f)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Conserved {
    pub mass: f64,
    pub momentum: Vel,
    pub energy: f64,
}

impl Conserved {
    pub fn of(f: &DensityField) -> Self {
        let g = &f.grid;
        let mut m = 0.0;
        let mut p = [0.0; 3];
        let mut e = 0.0;
        for (i, v) in f.values.iter().enumerate() {
            m += v;
            e += v * g.speed2[i];
        }
        // cells i and len-1-i are mirror images, so symmetric fields give
        // exactly zero momentum
        let len = f.values.len();
        for i in 0..len / 2 {
            let df = f.values[i] - f.values[len - 1 - i];
            for d in 0..3 {
                p[d] += df * g.centers[i][d];
            }
        }
        let w = g.cell_volume;
        Conserved { mass: m * w, momentum: [p[0] * w, p[1] * w, p[2] * w], energy: e * w }
    }

    /// Unit mass, zero momentum, unit temperature in dimension `dim`.
    pub fn unit(dim: usize) -> Self {
        Conserved { mass: 1.0, momentum: [0.0; 3], energy: dim as f64 }
    }

    /// Largest drift relative to `scale = max(mass, energy)` per component.
    pub fn max_relative_drift(&self, reference: &Conserved) -> f64 {
        let sm = math::abs(reference.mass).max(1e-300);
        let se = math::abs(reference.energy).max(1e-300);
        let sp = math::sqrt(sm * se);
        let mut d = math::abs(self.mass - reference.mass) / sm;
        d = d.max(math::abs(self.energy - reference.energy) / se);
        for k in 0..3 {
            d = d.max(math::abs(self.momentum[k] - reference.momentum[k]) / sp);
        }
        d
    }
}

/// Moments of a field.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentReport {
    pub mass: f64,
    pub momentum: Vel,
    pub energy: f64,
    /// `(s, ‖f‖_{L¹_s})`.
    pub l1s: Vec<(f64, f64)>,
    /// `(R, ∫_{|v|>R} |v|² f)`.
    pub tails: Vec<(f64, f64)>,
}

/// `‖f‖_{L¹_s} = ∫ ⟨v⟩^s f`.
pub fn l1_weighted(f: &DensityField, s: f64) -> f64 {
    f.integrate(|_, v2| math::powf(1.0 + v2, 0.5 * s))
}

/// `∫_{|v|>R} |v|² f`.
pub fn tail(f: &DensityField, r: f64) -> f64 {
    let r2 = r * r;
    f.integrate(|_, v2| if v2 > r2 { v2 } else { 0.0 })
}

pub fn moments(f: &DensityField, s_list: &[f64], r_list: &[f64]) -> MomentReport {
    let c = Conserved::of(f);
    MomentReport {
        mass: c.mass,
        momentum: c.momentum,
        energy: c.energy,
        l1s: s_list.iter().map(|&s| (s, l1_weighted(f, s))).collect(),
        tails: r_list.iter().map(|&r| (r, tail(f, r))).collect(),
    }
}

/// Standard Maxwellian `(2π)^{-N/2} e^{-|v|²/2}` at cell centers.
pub fn maxwellian_on_grid(grid: &Arc<VelocityGrid>) -> DensityField {
    let c = math::powf(2.0 * math::PI, -0.5 * grid.dim as f64);
    DensityField::from_fn(grid.clone(), |v| c * math::exp(-0.5 * norm2(v)))
}

/// Isotropic Gaussian whose grid moments equal `targets`. The sampled
/// Maxwellian misses its moments by the truncation and quadrature error of
/// the grid; this one is the discrete equilibrium a field with `targets`
/// relaxes to.
pub fn equilibrium_on_grid(grid: &Arc<VelocityGrid>, targets: &Conserved) -> Result<DensityField> {
    let dim = grid.dim;
    let temperature = |c: &Conserved| {
        let mut u2 = 0.0;
        for d in 0..dim {
            let u = c.momentum[d] / c.mass;
            u2 += u * u;
        }
        (c.energy / c.mass - u2) / dim as f64
    };
    let t_target = temperature(targets);
    if !(targets.mass > 0.0) || !(t_target > 0.0) || !t_target.is_finite() {
        return Err(Error::InvalidInput("equilibrium needs positive mass and temperature".into()));
    }
    let mut rho = targets.mass;
    let mut u = [0.0; 3];
    for d in 0..dim {
        u[d] = targets.momentum[d] / targets.mass;
    }
    let mut t = t_target;
    for _ in 0..60 {
        let f = gaussian(grid, rho, u, [t; 3]);
        let c = Conserved::of(&f);
        if c.max_relative_drift(targets) <= 1e-15 {
            return Ok(f);
        }
        let ts = temperature(&c);
        if !(c.mass > 0.0) || !(ts > 0.0) {
            break;
        }
        rho *= targets.mass / c.mass;
        for d in 0..dim {
            u[d] += targets.momentum[d] / targets.mass - c.momentum[d] / c.mass;
        }
        t *= t_target / ts;
    }
    let f = gaussian(grid, rho, u, [t; 3]);
    if Conserved::of(&f).max_relative_drift(targets) <= 1e-12 {
        Ok(f)
    } else {
        Err(Error::CannotNormalize)
    }
}

/// Gaussian with mean `u`, mass `rho` and per-axis temperatures.
pub fn gaussian(grid: &Arc<VelocityGrid>, rho: f64, u: Vel, temps: [f64; 3]) -> DensityField {
    let dim = grid.dim;
    let mut c = rho;
    for t in temps.iter().take(dim) {
        c /= math::sqrt(2.0 * math::PI * t);
    }
    DensityField::from_fn(grid.clone(), |v| {
        let mut e = 0.0;
        for d in 0..dim {
            e += (v[d] - u[d]) * (v[d] - u[d]) / temps[d];
        }
        c * math::exp(-0.5 * e)
    })
}

/// `H(f) = Σ f log f`, `H(f|M) = Σ_{f>0} f log(f/M)` and
/// `Σ ⟨v⟩^k f log⁺ f`, with `0 log 0 = 0`.
pub fn entropy_functionals(f: &DensityField, m: &DensityField, k: f64) -> Result<(f64, f64, f64)> {
    f.validate()?;
    let mut h = 0.0;
    let mut hr = 0.0;
    let mut em = 0.0;
    for (i, &x) in f.values.iter().enumerate() {
        if x > 0.0 {
            let lx = math::ln(x);
            h += x * lx;
            hr += x * (lx - math::ln(m.values[i]));
            if x > 1.0 {
                em += math::powf(1.0 + f.grid.speed2[i], 0.5 * k) * x * lx;
            }
        }
    }
    let w = f.grid.cell_volume;
    Ok((h * w, hr * w, em * w))
}

/// `(‖f − M‖_{L¹}, ‖f − M‖_{L¹₂})`.
pub fn distances(f: &DensityField, m: &DensityField) -> (f64, f64) {
    let mut d1 = 0.0;
    let mut d12 = 0.0;
    for (i, (a, b)) in f.values.iter().zip(&m.values).enumerate() {
        let d = math::abs(a - b);
        d1 += d;
        d12 += (1.0 + f.grid.speed2[i]) * d;
    }
    let w = f.grid.cell_volume;
    (d1 * w, d12 * w)
}

/// `∫ v vᵀ f` as a row-major `N × N` matrix.
pub fn second_moment_matrix(f: &DensityField) -> Vec<f64> {
    let n = f.grid.dim;
    let mut s = alloc::vec![0.0; n * n];
    for (i, x) in f.values.iter().enumerate() {
        let v = &f.grid.centers[i];
        for a in 0..n {
            for b in 0..n {
                s[a * n + b] += x * v[a] * v[b];
            }
        }
    }
    for x in s.iter_mut() {
        *x *= f.grid.cell_volume;
    }
    s
}

/// `T*_f`, the largest eigenvalue of `∫ v vᵀ f`.
pub fn t_star(f: &DensityField) -> f64 {
    linalg::symmetric_eigenvalues(&second_moment_matrix(f), f.grid.dim)[0]
}

/// Maps `f` to unit mass, zero momentum and unit temperature by the affine
/// change of variables `v ↦ √T v + u`, resampled by multilinear
/// interpolation with the map refit to the resampled moments, and corrected
/// by the conservative projection.
pub fn normalize_101(f: &DensityField) -> Result<DensityField> {
    let g = &f.grid;
    let n = g.dim;
    let c = Conserved::of(f);
    if !(c.mass > 0.0) || !(c.energy > 0.0) {
        return Err(Error::CannotNormalize);
    }
    let u: Vel = [c.momentum[0] / c.mass, c.momentum[1] / c.mass, c.momentum[2] / c.mass];
    let sm = second_moment_matrix(f);
    let mut central = alloc::vec![0.0; n * n];
    for a in 0..n {
        for b in 0..n {
            central[a * n + b] = sm[a * n + b] / c.mass - u[a] * u[b];
        }
    }
    let ev = linalg::symmetric_eigenvalues(&central, n);
    if !(ev[n - 1] > 1e-12 * ev[0].max(1e-300)) {
        return Err(Error::CannotNormalize);
    }
    let temp = ev.iter().sum::<f64>() / n as f64;
    let mut sig = math::sqrt(temp);
    let mut shift = u;
    let mut scale = 1.0;
    let mut mapped = map_affine(f, sig, &shift, scale / c.mass);
    // Resampling shifts the grid moments; refit the map to them so the
    // projection only removes a small residual.
    for _ in 0..20 {
        let m = Conserved::of(&mapped);
        let um: Vel = [m.momentum[0] / m.mass, m.momentum[1] / m.mass, m.momentum[2] / m.mass];
        let tm = (m.energy / m.mass - (um[0] * um[0] + um[1] * um[1] + um[2] * um[2])) / n as f64;
        if !(m.mass > 0.0) || !(tm > 0.0) {
            return Err(Error::CannotNormalize);
        }
        let drift = math::abs(m.mass - 1.0) + math::abs(tm - 1.0) + um.iter().map(|x| math::abs(*x)).sum::<f64>();
        if drift <= 1e-13 {
            break;
        }
        for d in 0..n {
            shift[d] += sig * um[d];
        }
        sig *= math::sqrt(tm);
        scale /= m.mass;
        mapped = map_affine(f, sig, &shift, scale / c.mass);
    }
    crate::collision::conservative_projection(&mapped, &Conserved::unit(n))
}

/// `v ↦ k σ^N f(σ v + u)` resampled on the grid of `f`.
fn map_affine(f: &DensityField, sig: f64, u: &Vel, k: f64) -> DensityField {
    let g = &f.grid;
    let n = g.dim;
    let jac = k * math::powi(sig, n as i32);
    let values = g
        .centers
        .iter()
        .map(|v| {
            let x = [sig * v[0] + u[0], sig * v[1] + u[1], if n == 3 { sig * v[2] + u[2] } else { 0.0 }];
            jac * g.interpolate(&f.values, &x)
        })
        .collect();
    DensityField { grid: g.clone(), values }
}

/// Random Gaussian mixture with two to four components, normalized to
/// unit mass, zero momentum and unit temperature.
pub fn random_mixture(grid: &Arc<VelocityGrid>, seed: u64, index: u64) -> Result<DensityField> {
    let mut s = Sample::new(seed, index);
    let parts = 2 + s.below(3) as usize;
    let mut vals = alloc::vec![0.0; grid.len()];
    for _ in 0..parts {
        let w = s.range(0.2, 1.0);
        let mut u = [0.0; 3];
        let mut t = [1.0; 3];
        for d in 0..grid.dim {
            u[d] = s.range(-1.6, 1.6);
            t[d] = s.range(0.25, 0.9);
        }
        let g = gaussian(grid, w, u, t);
        for (a, b) in vals.iter_mut().zip(&g.values) {
            *a += b;
        }
    }
    normalize_101(&DensityField { grid: grid.clone(), values: vals })
}

/// Smallest constant `C` with `d_L12 ≤ C √d_L1` over the given fields.
pub fn calibrate_distance_constant(fields: &[DensityField], m: &DensityField) -> f64 {
    fields
        .iter()
        .map(|f| {
            let (d1, d12) = distances(f, m);
            if d1 > 0.0 {
                d12 / math::sqrt(d1)
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max)
}
