//! Conservative pair-event quadrature of the collision operator.
//!
//! An event pairs cells `i` and `j = i + m` with a deflection node `σ`.
//! The post velocities fall between lattice nodes; tensor Lagrange
//! stencils read `log f` there, so the reverse product `f'f'_*` is a
//! geometric interpolation. The four events obtained by swapping the pair
//! or reflecting `σ` form one class of weight `W`. Each class moves the
//! flux `Φ = W(f'f'_* − f f_*)Δv^N` into both pre cells and out of the
//! stencil nodes with the stencil weights. Lagrange stencils reproduce
//! quadratics, so the scheme conserves mass, momentum and energy to
//! rounding, keeps discrete Maxwellians as exact equilibria, and satisfies
//! `dH/dt = −D(f)` as an identity of the semi-discrete system.
//!
//! Events whose stencils leave the grid are dropped and their forward rate
//! is reported as leakage.

use crate::distribution::{Conserved, DensityField, VelocityGrid};
use crate::error::{Error, Result};
use crate::geometry::{self, CollisionFrame, TestFunction, Vel};
use crate::kernel::{KernelSpec, Side, Truncation};
use crate::linalg;
use crate::math;
use crate::quadrature::GaussLegendre;
use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;

/// Largest supported stencil length per axis.
pub const MAX_STENCIL: usize = 7;
/// Cells below this value count as exact zeros.
pub const ZERO_FLOOR: f64 = 1e-300;
/// Cap of `log(f'f'_*)` and of the log ratio in mixed-zero terms.
pub const LOG_CAP: f64 = 700.0;
/// Offsets with `|m|² ≤ NEAR_RADIUS2` (lattice units) use cell-averaged kernels.
pub const NEAR_RADIUS2: i32 = 4;
/// Zero columns appended to each grid row during evaluation.
const ROW_PAD: usize = 16;

/// Quadrature and stencil parameters of the collision sums.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureOptions {
    /// Gauss–Legendre nodes in θ over `[0, π]`, even.
    pub n_theta: usize,
    /// Uniform nodes on `S¹` in 3D; ignored in 2D (two-point sum).
    pub n_omega: usize,
    /// Lagrange points per axis, odd, at least 3.
    pub stencil: usize,
    /// Worker threads, 0 for all available.
    pub threads: usize,
}

impl QuadratureOptions {
    pub fn for_dim(dim: usize) -> Self {
        QuadratureOptions {
            n_theta: 16,
            n_omega: if dim == 2 { 2 } else { 8 },
            stencil: 3,
            threads: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_theta < 2 || self.n_theta % 2 != 0 {
            return Err(Error::InvalidInput(format!("n_theta = {} must be even and positive", self.n_theta)));
        }
        if self.n_omega == 0 {
            return Err(Error::InvalidInput("n_omega must be positive".into()));
        }
        if self.stencil < 3 || self.stencil % 2 == 0 || self.stencil > MAX_STENCIL {
            return Err(Error::InvalidInput(format!(
                "stencil = {} must be odd in [3, {MAX_STENCIL}]",
                self.stencil
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct Group {
    /// Offset in padded internal axes.
    m: [i32; 3],
    /// `|z|²` in velocity units.
    z2: f64,
}

#[derive(Clone, Debug)]
struct Class {
    group: usize,
    /// Kernel class weight `W`.
    w: f64,
    /// Kernel-free event weight.
    we: f64,
    base: [i32; 3],
    alpha: [[f64; MAX_STENCIL]; 3],
    lo: [i32; 3],
    hi: [i32; 3],
}

impl Class {
    fn extent(&self) -> [usize; 3] {
        let mut r = [0usize; 3];
        for d in 0..3 {
            r[d] = if self.hi[d] >= self.lo[d] { (self.hi[d] - self.lo[d] + 1) as usize } else { 0 };
        }
        r
    }

    fn volume(&self) -> usize {
        let r = self.extent();
        r[0] * r[1] * r[2]
    }
}

/// Precomputed classes, stencils and loss weights for one grid and kernel.
#[derive(Clone, Debug)]
pub struct CollisionOperator {
    pub grid: Arc<VelocityGrid>,
    pub spec: KernelSpec,
    pub options: QuadratureOptions,
    shape: [usize; 3],
    sten: [usize; 3],
    groups: Vec<Group>,
    classes: Vec<Class>,
    /// `A(m)Δv^N` over all offsets, padded internal layout.
    loss_kernel: Vec<f64>,
    kshape: [usize; 3],
    origin_excluded: bool,
}

/// Result of one pass over all classes.
#[derive(Clone, Debug)]
pub struct Evaluation {
    /// `Q(f)` per cell.
    pub q: Vec<f64>,
    /// Entropy dissipation `D(f)`.
    pub dissipation: f64,
    /// Forward rate of the dropped off-grid events.
    pub leakage: f64,
    /// Forward rate of all pair events.
    pub collision_mass: f64,
    /// Events with exactly one of `f'f'_*`, `f f_*` zero.
    pub mixed_zero_events: u64,
    /// `Σ_i (P − b)(log P − log b)Δv^{2N}` per class.
    class_terms: Vec<f64>,
}

impl Evaluation {
    /// Leakage relative to the collision mass.
    pub fn leakage_ratio(&self) -> f64 {
        if self.collision_mass > 0.0 {
            self.leakage / self.collision_mass
        } else {
            0.0
        }
    }

    /// `𝒟_k(f)` from the same event sums, kernel replaced by `(1+|z|²)^{k/2}`.
    pub fn weighted_dissipation(&self, op: &CollisionOperator, k: f64) -> f64 {
        let wg: Vec<f64> = op.groups.iter().map(|g| math::powf(1.0 + g.z2, 0.5 * k)).collect();
        op.classes
            .iter()
            .zip(&self.class_terms)
            .map(|(c, t)| c.we * wg[c.group] * t)
            .sum()
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct Partial {
    dissipation: f64,
    leakage: f64,
    collision_mass: f64,
    mixed: u64,
}

#[derive(Default)]
struct Scratch {
    h1: Vec<f64>,
    h2: Vec<f64>,
    gl: Vec<f64>,
    gm: Vec<f64>,
    phi: Vec<f64>,
    tv: Vec<f64>,
    bv: Vec<f64>,
}

/// Lagrange weights of nodes `a, a+1, …, a+s−1` at `u`.
fn lagrange(u: f64, a: i32, s: usize) -> [f64; MAX_STENCIL] {
    let mut w = [0.0; MAX_STENCIL];
    for p in 0..s {
        let mut v = 1.0;
        for q in 0..s {
            if q != p {
                v *= (u - (a + q as i32) as f64) / (p as f64 - q as f64);
            }
        }
        w[p] = v;
    }
    w
}

/// Mean of `B(Δv|m + s|, θ)` over `s ∈ [−½, ½]^N`.
pub fn near_cell_average(spec: &KernelSpec, dv: f64, m: &[f64], theta: f64) -> f64 {
    let gl = GaussLegendre::on(16, -0.5, 0.5);
    let n = gl.nodes.len();
    let mut total = 0.0;
    if spec.dim == 2 {
        for a in 0..n {
            for b in 0..n {
                let x = m[0] + gl.nodes[a];
                let y = m[1] + gl.nodes[b];
                let r = dv * math::sqrt(x * x + y * y);
                total += gl.weights[a] * gl.weights[b] * spec.value_at(r, theta);
            }
        }
    } else {
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    let x = m[0] + gl.nodes[a];
                    let y = m[1] + gl.nodes[b];
                    let z = m[2] + gl.nodes[c];
                    let r = dv * math::sqrt(x * x + y * y + z * z);
                    total += gl.weights[a] * gl.weights[b] * gl.weights[c] * spec.value_at(r, theta);
                }
            }
        }
    }
    total
}

/// `∫₀¹ t^{N−1} B(tρ) dt` for the radial profile `c r^γ` under the
/// kernel truncation; infinite when divergent at the origin.
fn radial_t_integral(spec: &KernelSpec, c: f64, rho: f64) -> f64 {
    if c == 0.0 {
        return 0.0;
    }
    let g = spec.gamma;
    let n = spec.dim as f64;
    let e = g + n;
    let head = c * math::powf(rho, g);
    // ∫_τ^1 t^{γ+N-1} dt
    let upper = |tau: f64| -> f64 {
        if e == 0.0 {
            -math::ln(tau)
        } else {
            (1.0 - math::powf(tau, e)) / e
        }
    };
    match spec.truncation {
        Some(Truncation::BnCap(cap)) => {
            let r0 = math::powf(cap / c, 1.0 / g);
            let t0 = (r0 / rho).min(1.0);
            cap * math::powf(t0, n) / n + if t0 < 1.0 { head * upper(t0) } else { 0.0 }
        }
        Some(Truncation::NearFar { lambda, side }) => {
            let tau = (lambda / rho).min(1.0);
            match side {
                Side::Near => {
                    if e <= 0.0 {
                        f64::INFINITY
                    } else {
                        head * math::powf(tau, e) / e
                    }
                }
                Side::Far => head * upper(tau),
            }
        }
        _ => {
            if e <= 0.0 {
                f64::INFINITY
            } else {
                head / e
            }
        }
    }
}

/// Mean over the origin cell of `∫ B(|z|, σ) dσ`, by pyramids over the
/// cell faces with the radial integral in closed form.
fn origin_loss_average(spec: &KernelSpec, dv: f64, n_theta: usize) -> f64 {
    let dim = spec.dim;
    let area = math::sphere_area(dim - 2);
    let th = GaussLegendre::on(n_theta, 0.0, math::PI);
    let gl = GaussLegendre::on(16, -0.5 * dv, 0.5 * dv);
    let h2 = 0.5 * dv;
    let angular = |rho: f64| -> f64 {
        let mut s = 0.0;
        for (&t, &w) in th.nodes.iter().zip(&th.weights) {
            let sn = math::sin(t);
            if let Some(Truncation::SinEps(e)) = spec.truncation {
                if sn <= e {
                    continue;
                }
            }
            let c = spec.angular.at_theta(t);
            s += w * area * math::powi(sn, dim as i32 - 2) * radial_t_integral(spec, c, rho);
        }
        s
    };
    let mut face = 0.0;
    if dim == 2 {
        for (&y, &w) in gl.nodes.iter().zip(&gl.weights) {
            face += w * angular(math::sqrt(h2 * h2 + y * y));
        }
    } else {
        for (&y, &wy) in gl.nodes.iter().zip(&gl.weights) {
            for (&z, &wz) in gl.nodes.iter().zip(&gl.weights) {
                face += wy * wz * angular(math::sqrt(h2 * h2 + y * y + z * z));
            }
        }
    }
    2.0 * dim as f64 * h2 * face / math::powi(dv, dim as i32)
}

impl CollisionOperator {
    pub fn new(grid: Arc<VelocityGrid>, spec: KernelSpec, options: QuadratureOptions) -> Result<Self> {
        options.validate()?;
        if spec.dim != grid.dim {
            return Err(Error::InvalidInput("kernel and grid dimensions differ".into()));
        }
        if !spec.is_grad_cutoff() {
            return Err(Error::NoGradCutoff);
        }
        let dim = grid.dim;
        let n = grid.points_per_axis;
        let ni = n as i32;
        let off = 3 - dim;
        let shape = if dim == 2 { [1, n, n] } else { [n, n, n] };
        let s = options.stencil;
        let sten = if dim == 2 { [1, s, s] } else { [s, s, s] };
        let half = (s as i32 - 1) / 2;
        let dv = grid.dv;
        let th = GaussLegendre::on(options.n_theta, 0.0, math::PI);
        let nt = options.n_theta;
        let omegas = geometry::omega_nodes(dim, options.n_omega);
        let kshape = [2 * shape[0] - 1, 2 * shape[1] - 1, 2 * shape[2] - 1];
        let mut loss_kernel = alloc::vec![0.0; kshape[0] * kshape[1] * kshape[2]];
        let kidx = |m: &[i32; 3]| -> usize {
            let mut idx = 0usize;
            for d in 0..3 {
                idx = idx * kshape[d] + (m[d] + shape[d] as i32 - 1) as usize;
            }
            idx
        };
        let vol = grid.cell_volume;
        let mut groups = Vec::new();
        let mut classes = Vec::new();
        let range = -(ni - 1)..ni;
        let mut offsets: Vec<[i32; 3]> = Vec::new();
        if dim == 2 {
            for a in range.clone() {
                for b in range.clone() {
                    offsets.push([a, b, 0]);
                }
            }
        } else {
            for a in range.clone() {
                for b in range.clone() {
                    for c in range.clone() {
                        offsets.push([a, b, c]);
                    }
                }
            }
        }
        for mp in offsets {
            // half lattice: first nonzero component positive
            let lead = mp.iter().take(dim).find(|x| **x != 0).copied().unwrap_or(0);
            if lead <= 0 {
                continue;
            }
            let mut mi = [0i32; 3];
            for d in 0..dim {
                mi[off + d] = mp[d];
            }
            let mv: Vel = [mp[0] as f64, mp[1] as f64, mp[2] as f64];
            let rm2: i32 = mp.iter().map(|x| x * x).sum();
            let rm = math::sqrt(rm2 as f64);
            let z = rm * dv;
            let near = rm2 <= NEAR_RADIUS2;
            let k: Vel = [-mv[0] / rm, -mv[1] / rm, -mv[2] / rm];
            let frame = CollisionFrame::from_direction(dim, k);
            let gidx = groups.len();
            groups.push(Group { m: mi, z2: z * z });
            let mut amass = 0.0;
            for q in 0..nt / 2 {
                let t = th.nodes[q];
                let tr = th.nodes[nt - 1 - q];
                let (bt, btr) = if near {
                    (near_cell_average(&spec, dv, &mv, t), near_cell_average(&spec, dv, &mv, tr))
                } else {
                    (spec.value_at(z, t), spec.value_at(z, tr))
                };
                let (st, ct) = (math::sin(t), math::cos(t));
                let ang = th.weights[q] * math::powi(st, dim as i32 - 2);
                for &(phi, wo) in &omegas {
                    let we = ang * wo;
                    let w = 0.5 * we * (bt + btr);
                    amass += 2.0 * w;
                    if w == 0.0 {
                        continue;
                    }
                    let om = frame.omega(phi);
                    let mut c = Class {
                        group: gidx,
                        w,
                        we,
                        base: [0; 3],
                        alpha: [[0.0; MAX_STENCIL]; 3],
                        lo: [0; 3],
                        hi: [0; 3],
                    };
                    c.alpha[0][0] = 1.0;
                    for d in 0..dim {
                        let sig = ct * k[d] + st * om[d];
                        let u = 0.5 * mv[d] + 0.5 * rm * sig;
                        let a = math::floor(u + 0.5) as i32 - half;
                        let ax = off + d;
                        c.base[ax] = a;
                        c.alpha[ax] = lagrange(u, a, s);
                        let m = mp[d];
                        let sm1 = s as i32 - 1;
                        c.lo[ax] = 0.max(-m).max(-a).max(-(m - a - sm1));
                        c.hi[ax] = (ni - 1).min(ni - 1 - m).min(ni - 1 - a - sm1).min(ni - 1 - (m - a));
                    }
                    classes.push(c);
                }
            }
            let neg = [-mi[0], -mi[1], -mi[2]];
            loss_kernel[kidx(&mi)] = amass * vol;
            loss_kernel[kidx(&neg)] = amass * vol;
        }
        let a00 = origin_loss_average(&spec, dv, nt);
        let origin_excluded = !a00.is_finite();
        if !origin_excluded {
            loss_kernel[kidx(&[0, 0, 0])] = a00 * vol;
        }
        Ok(CollisionOperator {
            grid,
            spec,
            options,
            shape,
            sten,
            groups,
            classes,
            loss_kernel,
            kshape,
            origin_excluded,
        })
    }

    /// Default quadrature for the grid dimension.
    pub fn with_defaults(grid: Arc<VelocityGrid>, spec: KernelSpec) -> Result<Self> {
        let o = QuadratureOptions::for_dim(grid.dim);
        CollisionOperator::new(grid, spec, o)
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    /// Number of in-grid events per evaluation.
    pub fn event_count(&self) -> u64 {
        self.classes.iter().map(|c| c.volume() as u64).sum()
    }

    /// True when `|z|^γ` is not integrable at the origin and the
    /// self-interaction term of `L(f)` is left out.
    pub fn origin_excluded(&self) -> bool {
        self.origin_excluded
    }

    /// `A(m)Δv^N`, the loss weight of lattice offset `m`.
    pub fn loss_weight(&self, m: &[i32]) -> f64 {
        let off = 3 - self.grid.dim;
        let mut mi = [0i32; 3];
        for d in 0..self.grid.dim {
            mi[off + d] = m[d];
        }
        let mut idx = 0usize;
        for d in 0..3 {
            let x = mi[d] + self.shape[d] as i32 - 1;
            if x < 0 || x as usize >= self.kshape[d] {
                return 0.0;
            }
            idx = idx * self.kshape[d] + x as usize;
        }
        self.loss_kernel[idx]
    }

    /// Loss convolution `L(f)_i = Σ_j A(j − i) f_j Δv^N`.
    pub fn loss(&self, f: &DensityField) -> Vec<f64> {
        let sh = self.shape;
        let ks = self.kshape;
        let mut out = alloc::vec![0.0; self.grid.len()];
        for i0 in 0..sh[0] {
            for i1 in 0..sh[1] {
                for i2 in 0..sh[2] {
                    let mut s = 0.0;
                    for j0 in 0..sh[0] {
                        let m0 = j0 + sh[0] - 1 - i0;
                        for j1 in 0..sh[1] {
                            let m1 = j1 + sh[1] - 1 - i1;
                            let frow = &f.values[(j0 * sh[1] + j1) * sh[2]..][..sh[2]];
                            let kstart = (m0 * ks[1] + m1) * ks[2] + sh[2] - 1 - i2;
                            let krow = &self.loss_kernel[kstart..][..sh[2]];
                            s += dot(frow, krow);
                        }
                    }
                    out[(i0 * sh[1] + i1) * sh[2] + i2] = s;
                }
            }
        }
        out
    }

    fn thread_count(&self) -> usize {
        #[cfg(feature = "std")]
        {
            if self.options.threads == 0 {
                std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
            } else {
                self.options.threads
            }
        }
        #[cfg(not(feature = "std"))]
        {
            1
        }
    }

    /// One pass over all classes: `Q(f)`, `D(f)`, leakage and the per-class
    /// terms behind the weighted dissipations.
    pub fn evaluate(&self, f: &DensityField) -> Evaluation {
        let cells = self.grid.len();
        let sh = self.shape;
        let plen = self.padded_len();
        let mut fz = alloc::vec![0.0; plen];
        let mut ell = alloc::vec![0.0; plen];
        for r in 0..sh[0] * sh[1] {
            for x in 0..sh[2] {
                let v = f.values[r * sh[2] + x];
                let k = r * self.row_stride() + x;
                if v >= ZERO_FLOOR {
                    fz[k] = v;
                    ell[k] = math::ln(v);
                } else {
                    ell[k] = f64::NAN;
                }
            }
        }
        let threads = self.thread_count().max(1);
        let chunks = self.partition(threads);
        let results: Vec<(Vec<f64>, Vec<f64>, Partial)> = self.run_chunks(&chunks, &fz, &ell);
        let mut qp = alloc::vec![0.0; plen];
        let mut class_terms = Vec::with_capacity(self.classes.len());
        let mut tot = Partial::default();
        for (qq, tt, p) in results {
            add_row(&mut qp, &qq);
            class_terms.extend_from_slice(&tt);
            tot.dissipation += p.dissipation;
            tot.leakage += p.leakage;
            tot.collision_mass += p.collision_mass;
            tot.mixed += p.mixed;
        }
        let mut q = alloc::vec![0.0; cells];
        for r in 0..sh[0] * sh[1] {
            q[r * sh[2]..(r + 1) * sh[2]].copy_from_slice(&qp[r * self.row_stride()..][..sh[2]]);
        }
        Evaluation {
            q,
            dissipation: tot.dissipation,
            leakage: tot.leakage,
            collision_mass: tot.collision_mass,
            mixed_zero_events: tot.mixed,
            class_terms,
        }
    }

    #[cfg(feature = "std")]
    fn run_chunks(&self, chunks: &[(usize, usize)], fz: &[f64], ell: &[f64]) -> Vec<(Vec<f64>, Vec<f64>, Partial)> {
        if chunks.len() <= 1 {
            return chunks.iter().map(|&(a, b)| self.run_range(a, b, fz, ell)).collect();
        }
        std::thread::scope(|s| {
            let handles: Vec<_> = chunks
                .iter()
                .map(|&(a, b)| s.spawn(move || self.run_range(a, b, fz, ell)))
                .collect();
            handles.into_iter().map(|h| h.join().expect("collision worker panicked")).collect()
        })
    }

    #[cfg(not(feature = "std"))]
    fn run_chunks(&self, chunks: &[(usize, usize)], fz: &[f64], ell: &[f64]) -> Vec<(Vec<f64>, Vec<f64>, Partial)> {
        chunks.iter().map(|&(a, b)| self.run_range(a, b, fz, ell)).collect()
    }

    /// Contiguous class ranges of similar event counts.
    fn partition(&self, threads: usize) -> Vec<(usize, usize)> {
        let total: usize = self.classes.iter().map(|c| c.volume() + 1).sum();
        let per = total.div_ceil(threads);
        let mut out = Vec::new();
        let mut start = 0;
        let mut acc = 0;
        for (i, c) in self.classes.iter().enumerate() {
            acc += c.volume() + 1;
            if acc >= per && out.len() + 1 < threads {
                out.push((start, i + 1));
                start = i + 1;
                acc = 0;
            }
        }
        out.push((start, self.classes.len()));
        out
    }

    /// Row stride of the padded layout used inside [`Self::evaluate`].
    fn row_stride(&self) -> usize {
        self.shape[2] + ROW_PAD
    }

    fn padded_len(&self) -> usize {
        (self.shape[0] * self.shape[1] + 1) * self.row_stride()
    }

    fn pair_sum(&self, m: &[i32; 3], fz: &[f64]) -> f64 {
        let sh = self.shape;
        let mut lo = [0usize; 3];
        let mut len = [0usize; 3];
        for d in 0..3 {
            let n = sh[d] as i32;
            let a = 0.max(-m[d]);
            let b = (n - 1).min(n - 1 - m[d]);
            if b < a {
                return 0.0;
            }
            lo[d] = a as usize;
            len[d] = (b - a + 1) as usize;
        }
        let ps = self.row_stride();
        let moff = flat_offset(&sh, ps, m);
        let mut s = 0.0;
        for a in 0..len[0] {
            for b in 0..len[1] {
                let i = ((lo[0] + a) * sh[1] + lo[1] + b) * ps + lo[2];
                let j = (i as isize + moff) as usize;
                s += dot(&fz[i..i + len[2]], &fz[j..j + len[2]]);
            }
        }
        s
    }

    fn run_range(&self, start: usize, end: usize, fz: &[f64], ell: &[f64]) -> (Vec<f64>, Vec<f64>, Partial) {
        let mut q = alloc::vec![0.0; self.padded_len()];
        let mut terms = Vec::with_capacity(end - start);
        let mut part = Partial::default();
        let mut sc = Scratch::default();
        let vol = self.grid.cell_volume;
        let vol2 = vol * vol;
        let mut last_group = usize::MAX;
        let mut gsum = 0.0;
        for c in &self.classes[start..end] {
            if c.group != last_group {
                last_group = c.group;
                gsum = self.pair_sum(&self.groups[c.group].m, fz);
            }
            part.collision_mass += c.w * gsum * vol2;
            let (t, bsum, mixed) = self.run_class(c, fz, ell, &mut q, &mut sc);
            part.leakage += c.w * (gsum - bsum) * vol2;
            part.dissipation += c.w * t;
            part.mixed += mixed;
            terms.push(t);
        }
        (q, terms, part)
    }

    /// Processes one class; returns `(Σ(P−b)(log P − log b)Δv^{2N}, Σ b, mixed)`.
    fn run_class(&self, c: &Class, fz: &[f64], ell: &[f64], q: &mut [f64], sc: &mut Scratch) -> (f64, f64, u64) {
        let r = c.extent();
        let vol = r[0] * r[1] * r[2];
        if vol == 0 {
            return (0.0, 0.0, 0);
        }
        let sh = self.shape;
        let s = self.sten;
        let m = self.groups[c.group].m;
        let lo = [c.lo[0] as usize, c.lo[1] as usize, c.lo[2] as usize];
        let mut o_l = [0usize; 3];
        let mut o_m = [0usize; 3];
        let mut rev = [[0.0; MAX_STENCIL]; 3];
        for d in 0..3 {
            o_l[d] = (c.lo[d] + c.base[d]) as usize;
            o_m[d] = (c.lo[d] + m[d] - c.base[d] - (s[d] as i32 - 1)) as usize;
            for p in 0..s[d] {
                rev[d][p] = c.alpha[d][s[d] - 1 - p];
            }
        }
        // rows are processed at a width rounded up to whole vectors; the
        // extra lanes read row padding and carry zero flux
        let w = r[2];
        let wp = (w + 7) & !7;
        let rp = [r[0], r[1], wp];
        let ps = self.row_stride();
        let mut gl = core::mem::take(&mut sc.gl);
        let mut gm = core::mem::take(&mut sc.gm);
        gather(ell, &sh, ps, o_l, rp, s, &c.alpha, &mut sc.h1, &mut sc.h2, &mut gl);
        gather(ell, &sh, ps, o_m, rp, s, &rev, &mut sc.h1, &mut sc.h2, &mut gm);
        let vol_n = self.grid.cell_volume;
        let wv = c.w * vol_n;
        let moff = flat_offset(&sh, ps, &m);
        sc.phi.clear();
        sc.phi.resize(r[0] * r[1] * wp, 0.0);
        sc.tv.resize(wp, 0.0);
        sc.bv.resize(wp, 0.0);
        let mut tsum = 0.0;
        let mut bsum = 0.0;
        let mut mixed = 0u64;
        for z in 0..r[0] {
            for y in 0..r[1] {
                let i = ((lo[0] + z) * sh[1] + lo[1] + y) * ps + lo[2];
                let j = (i as isize + moff) as usize;
                let row = (z * r[1] + y) * wp;
                let (mx, ts, bs) = pair_row(
                    &gl[row..row + wp],
                    &gm[row..row + wp],
                    &ell[i..i + wp],
                    &ell[j..j + wp],
                    &fz[i..i + wp],
                    &fz[j..j + wp],
                    wv,
                    &mut sc.phi[row..row + wp],
                    &mut sc.tv[..wp],
                    &mut sc.bv[..wp],
                    w,
                );
                mixed += mx;
                tsum += ts;
                bsum += bs;
                let ph = &sc.phi[row..row + wp];
                add_row(&mut q[i..i + wp], ph);
                add_row(&mut q[j..j + wp], ph);
            }
        }
        scatter_sub(q, &sh, ps, o_l, rp, s, &c.alpha, &sc.phi, &mut sc.h1, &mut sc.h2);
        scatter_sub(q, &sh, ps, o_m, rp, s, &rev, &sc.phi, &mut sc.h1, &mut sc.h2);
        sc.gl = gl;
        sc.gm = gm;
        (tsum * vol_n * vol_n, bsum, mixed)
    }

    pub fn apply_q(&self, f: &DensityField) -> Vec<f64> {
        self.evaluate(f).q
    }

    /// Gain term `Q⁺ = Q + f L(f)`.
    pub fn gain(&self, f: &DensityField) -> Vec<f64> {
        let e = self.evaluate(f);
        let l = self.loss(f);
        e.q.iter().zip(&l).zip(&f.values).map(|((q, l), f)| q + f * l).collect()
    }

    pub fn entropy_dissipation(&self, f: &DensityField) -> f64 {
        self.evaluate(f).dissipation
    }

    /// `𝒟_k(f)` for `k ≥ 2`.
    pub fn weighted_dissipation(&self, f: &DensityField, k: f64) -> Result<f64> {
        if !(k >= 2.0) {
            return Err(Error::InvalidInput(format!("weight order k = {k} below 2")));
        }
        Ok(self.evaluate(f).weighted_dissipation(self, k))
    }
}

fn flat_offset(sh: &[usize; 3], ps: usize, m: &[i32; 3]) -> isize {
    (m[0] as isize * sh[1] as isize + m[1] as isize) * ps as isize + m[2] as isize
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut s = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    acc.iter().sum::<f64>() + s
}

#[inline]
fn lane_sum(a: &[f64]) -> f64 {
    let mut acc = [0.0; 8];
    let c = a.chunks_exact(8);
    let r = c.remainder();
    for x in c {
        for l in 0..8 {
            acc[l] += x[l];
        }
    }
    acc.iter().sum::<f64>() + r.iter().sum::<f64>()
}

#[inline]
fn add_row(d: &mut [f64], s: &[f64]) {
    for (a, b) in d.iter_mut().zip(s) {
        *a += b;
    }
}

#[inline]
fn axpy_row(d: &mut [f64], a: f64, s: &[f64]) {
    for (x, y) in d.iter_mut().zip(s) {
        *x = math::fma(a, *y, *x);
    }
}

/// Elementwise pass over one row of a class box; lanes at and beyond
/// `valid` are padding and contribute nothing.
#[allow(clippy::too_many_arguments)]
#[inline]
fn pair_row(
    gl: &[f64],
    gm: &[f64],
    li: &[f64],
    lj: &[f64],
    fi: &[f64],
    fj: &[f64],
    wv: f64,
    phi: &mut [f64],
    tv: &mut [f64],
    bv: &mut [f64],
    valid: usize,
) -> (u64, f64, f64) {
    let w = phi.len();
    let (gl, gm, li, lj, fi, fj) = (&gl[..w], &gm[..w], &li[..w], &lj[..w], &fi[..w], &fj[..w]);
    let (tv, bv) = (&mut tv[..w], &mut bv[..w]);
    let mut mixed = 0u64;
    for x in 0..w {
        let lp = gl[x] + gm[x];
        let lb = li[x] + lj[x];
        let pn = lp.is_nan();
        let bn = lb.is_nan();
        let lpc = if pn { -1000.0 } else { lp.min(LOG_CAP) };
        let p = math::exp_fast(lpc);
        let b = fi[x] * fj[x];
        let keep = x < valid;
        let d = if keep { p - b } else { 0.0 };
        phi[x] = wv * d;
        let mx = keep && pn != bn;
        let t = if mx {
            math::abs(d) * LOG_CAP
        } else if pn || !keep {
            0.0
        } else {
            d * (lpc - lb)
        };
        tv[x] = t;
        bv[x] = if keep { b } else { 0.0 };
        mixed += mx as u64;
    }
    (mixed, lane_sum(tv), lane_sum(bv))
}

#[inline]
fn conv_row<const S: usize>(d: &mut [f64], src: &[f64], a: &[f64; MAX_STENCIL]) {
    let w = d.len();
    let src = &src[..w + S - 1];
    for x in 0..w {
        let mut acc = 0.0;
        for p in 0..S {
            acc = math::fma(a[p], src[x + p], acc);
        }
        d[x] = acc;
    }
}

fn conv_row_dyn(d: &mut [f64], src: &[f64], a: &[f64; MAX_STENCIL], s: usize) {
    match s {
        1 => conv_row::<1>(d, src, a),
        3 => conv_row::<3>(d, src, a),
        5 => conv_row::<5>(d, src, a),
        7 => conv_row::<7>(d, src, a),
        _ => unreachable!("stencil length validated at construction"),
    }
}

/// `out[x] = Σ_p Π_d α_d[p_d] src[o + x + p]` over the box `r`.
#[allow(clippy::too_many_arguments)]
fn gather(
    src: &[f64],
    sh: &[usize; 3],
    ps: usize,
    o: [usize; 3],
    r: [usize; 3],
    s: [usize; 3],
    al: &[[f64; MAX_STENCIL]; 3],
    h1: &mut Vec<f64>,
    h2: &mut Vec<f64>,
    out: &mut Vec<f64>,
) {
    let e0 = r[0] + s[0] - 1;
    let e1 = r[1] + s[1] - 1;
    let w = r[2];
    h1.clear();
    h1.resize(e0 * e1 * w, 0.0);
    for a in 0..e0 {
        for b in 0..e1 {
            let so = ((o[0] + a) * sh[1] + o[1] + b) * ps + o[2];
            let drow = &mut h1[(a * e1 + b) * w..][..w];
            conv_row_dyn(drow, &src[so..so + w + s[2] - 1], &al[2], s[2]);
        }
    }
    h2.clear();
    h2.resize(e0 * r[1] * w, 0.0);
    for a in 0..e0 {
        for y in 0..r[1] {
            let d = &mut h2[(a * r[1] + y) * w..][..w];
            for p in 0..s[1] {
                axpy_row(d, al[1][p], &h1[(a * e1 + y + p) * w..][..w]);
            }
        }
    }
    if s[0] == 1 {
        core::mem::swap(out, h2);
        return;
    }
    let plane = r[1] * w;
    out.clear();
    out.resize(r[0] * plane, 0.0);
    for z in 0..r[0] {
        let d = &mut out[z * plane..][..plane];
        for p in 0..s[0] {
            axpy_row(d, al[0][p], &h2[(z + p) * plane..][..plane]);
        }
    }
}

/// Transpose of [`gather`]: `dst[o + x + p] −= Π_d α_d[p_d] phi[x]`.
#[allow(clippy::too_many_arguments)]
fn scatter_sub(
    dst: &mut [f64],
    sh: &[usize; 3],
    ps: usize,
    o: [usize; 3],
    r: [usize; 3],
    s: [usize; 3],
    al: &[[f64; MAX_STENCIL]; 3],
    phi: &[f64],
    h1: &mut Vec<f64>,
    h2: &mut Vec<f64>,
) {
    let e0 = r[0] + s[0] - 1;
    let e1 = r[1] + s[1] - 1;
    let w = r[2];
    let plane = r[1] * w;
    let stage0: &[f64] = if s[0] == 1 {
        phi
    } else {
        h2.clear();
        h2.resize(e0 * plane, 0.0);
        for z in 0..r[0] {
            let src = &phi[z * plane..][..plane];
            for p in 0..s[0] {
                axpy_row(&mut h2[(z + p) * plane..][..plane], al[0][p], src);
            }
        }
        h2
    };
    h1.clear();
    h1.resize(e0 * e1 * w, 0.0);
    for a in 0..e0 {
        for y in 0..r[1] {
            let src = &stage0[(a * r[1] + y) * w..][..w];
            for p in 0..s[1] {
                axpy_row(&mut h1[(a * e1 + y + p) * w..][..w], al[1][p], src);
            }
        }
    }
    let sp = s[2] - 1;
    let mut padded = alloc::vec![0.0; w + 2 * sp];
    let mut rev = [0.0; MAX_STENCIL];
    for p in 0..s[2] {
        rev[p] = al[2][sp - p];
    }
    for a in 0..e0 {
        for b in 0..e1 {
            let so = ((o[0] + a) * sh[1] + o[1] + b) * ps + o[2];
            padded[sp..sp + w].copy_from_slice(&h1[(a * e1 + b) * w..][..w]);
            conv_row_sub(&mut dst[so..so + w + sp], &padded, &rev, s[2]);
        }
    }
}

/// `d[y] −= Σ_p a[p] src[y + p]`, the fused transpose of one row stencil.
fn conv_row_sub(d: &mut [f64], src: &[f64], a: &[f64; MAX_STENCIL], s: usize) {
    fn run<const S: usize>(d: &mut [f64], src: &[f64], a: &[f64; MAX_STENCIL]) {
        let w = d.len();
        let src = &src[..w + S - 1];
        for x in 0..w {
            let mut acc = 0.0;
            for p in 0..S {
                acc = math::fma(a[p], src[x + p], acc);
            }
            d[x] -= acc;
        }
    }
    match s {
        1 => run::<1>(d, src, a),
        3 => run::<3>(d, src, a),
        5 => run::<5>(d, src, a),
        7 => run::<7>(d, src, a),
        _ => unreachable!("stencil length validated at construction"),
    }
}

/// Moment basis `(1, v_1, …, v_N, |v|²)` at one cell.
fn moment_basis(grid: &VelocityGrid, i: usize) -> [f64; 5] {
    let v = &grid.centers[i];
    let mut b = [0.0; 5];
    b[0] = 1.0;
    for d in 0..grid.dim {
        b[1 + d] = v[d];
    }
    b[grid.dim + 1] = grid.speed2[i];
    b
}

fn target_vector(dim: usize, t: &Conserved) -> [f64; 5] {
    let mut r = [0.0; 5];
    r[0] = t.mass;
    for d in 0..dim {
        r[1 + d] = t.momentum[d];
    }
    r[dim + 1] = t.energy;
    r
}

/// Minimum-norm correction of `values` to the moment targets, with
/// negatives clipped to zero and the correction repeated on the remaining
/// cells until the result is nonnegative.
pub fn project_values(grid: &VelocityGrid, values: &[f64], targets: &Conserved) -> Result<Vec<f64>> {
    let nb = grid.dim + 2;
    let tv = target_vector(grid.dim, targets);
    let mut f = values.to_vec();
    let mut free = alloc::vec![true; f.len()];
    for _ in 0..64 {
        let mut mom = [0.0; 5];
        let mut g = alloc::vec![0.0; nb * nb];
        for i in 0..f.len() {
            let b = moment_basis(grid, i);
            for k in 0..nb {
                mom[k] += f[i] * b[k];
            }
            if free[i] {
                for k in 0..nb {
                    for l in 0..nb {
                        g[k * nb + l] += b[k] * b[l];
                    }
                }
            }
        }
        let rhs: Vec<f64> = (0..nb).map(|k| (tv[k] - mom[k] * grid.cell_volume) / grid.cell_volume).collect();
        let c = linalg::solve(&g, &rhs, nb, 1e-14).ok_or(Error::SingularProjection)?;
        let mut clipped = false;
        for i in 0..f.len() {
            if free[i] {
                let b = moment_basis(grid, i);
                let mut s = 0.0;
                for k in 0..nb {
                    s += c[k] * b[k];
                }
                f[i] += s;
            }
            if f[i] < 0.0 {
                f[i] = 0.0;
                free[i] = false;
                clipped = true;
            }
        }
        if !clipped {
            return Ok(f);
        }
    }
    Err(Error::InvalidField("projection did not reach a nonnegative fixed point".into()))
}

/// The nearest nonnegative field with the target moments.
pub fn conservative_projection(f: &DensityField, targets: &Conserved) -> Result<DensityField> {
    let values = project_values(&f.grid, &f.values, targets)?;
    Ok(DensityField { grid: f.grid.clone(), values })
}

/// Both sides of the weak form `∫ φ Q(f) = ½ ∫∫ L[Δφ] f f_*`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeakForm {
    /// `Σ φ_i Q_i Δv^N` from the solver.
    pub lhs: f64,
    /// Pair sum of `L[Δφ]` from the weak-form operator.
    pub rhs: f64,
    /// `|lhs − rhs| / max(|lhs|, |rhs|)`.
    pub relative: f64,
    /// `|lhs − rhs|` over `Σ |φ_i| (|Q_i| + f_i L_i) Δv^N`.
    pub scaled_absolute: f64,
}

/// Compares the solver's `∫ φ Q(f)` with the pair sum of `L[Δφ]` computed by
/// the geometry module at `n_theta` θ-nodes and `n_omega` ω-nodes. Pairs with
/// `f_i f_j` below `1e-12 max f²` are skipped.
pub fn weak_form_residual<T: TestFunction + ?Sized>(
    op: &CollisionOperator,
    f: &DensityField,
    phi: &T,
    n_theta: usize,
    n_omega: usize,
) -> Result<WeakForm> {
    if op.spec.gamma < -2.0 {
        return Err(Error::InvalidInput("weak-form check requires γ ≥ -2".into()));
    }
    let g = &f.grid;
    let e = op.evaluate(f);
    let l = op.loss(f);
    let vol = g.cell_volume;
    let mut lhs = 0.0;
    let mut scale = 0.0;
    for i in 0..g.len() {
        let p = phi.value(&g.centers[i]);
        lhs += p * e.q[i] * vol;
        scale += math::abs(p) * (math::abs(e.q[i]) + f.values[i] * l[i]) * vol;
    }
    let fmax = f.values.iter().cloned().fold(0.0, f64::max);
    let cut = 1e-12 * fmax * fmax;
    let live: Vec<usize> = (0..g.len()).filter(|&i| f.values[i] * fmax > cut).collect();
    let mut rhs = 0.0;
    for (a, &i) in live.iter().enumerate() {
        for &j in &live[a + 1..] {
            let b = f.values[i] * f.values[j];
            if b <= cut {
                continue;
            }
            let lv = geometry::l_operator(&op.spec, phi, &g.centers[i], &g.centers[j], n_theta, n_omega, None)?;
            rhs += lv * b;
        }
    }
    rhs *= vol * vol;
    let den = math::abs(lhs).max(math::abs(rhs));
    let diff = math::abs(lhs - rhs);
    Ok(WeakForm {
        lhs,
        rhs,
        relative: if den > 0.0 { diff / den } else { 0.0 },
        scaled_absolute: if scale > 0.0 { diff / scale } else { diff },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::{gaussian, maxwellian_on_grid};

    fn setup(n: usize) -> (Arc<VelocityGrid>, CollisionOperator) {
        let g = Arc::new(VelocityGrid::new(2, n, 6.0).unwrap());
        let spec = KernelSpec::power_law(2, -0.5).unwrap();
        let mut o = QuadratureOptions::for_dim(2);
        o.threads = 1;
        let op = CollisionOperator::new(g.clone(), spec, o).unwrap();
        (g, op)
    }

    #[test]
    fn lagrange_partition_of_unity() {
        let w = lagrange(2.3, 0, 5);
        let s: f64 = w.iter().sum();
        assert!((s - 1.0).abs() < 1e-14);
        let m1: f64 = w.iter().enumerate().map(|(p, x)| p as f64 * x).sum();
        assert!((m1 - 2.3).abs() < 1e-13);
    }

    #[test]
    fn maxwellian_is_equilibrium() {
        let (g, op) = setup(16);
        let m = maxwellian_on_grid(&g);
        let e = op.evaluate(&m);
        let qmax = e.q.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        assert!(qmax < 1e-15, "{qmax}");
        assert!(e.dissipation.abs() < 1e-20);
    }

    #[test]
    fn conserves_moments() {
        let (g, op) = setup(16);
        let f = gaussian(&g, 1.0, [0.7, -0.2, 0.0], [0.6, 1.4, 1.0]);
        let e = op.evaluate(&f);
        let qf = DensityField { grid: g.clone(), values: e.q.clone() };
        let c = Conserved::of(&qf);
        let scale = e.q.iter().map(|x| x.abs()).sum::<f64>() * g.cell_volume;
        assert!(c.mass.abs() < 1e-14 * scale.max(1.0));
        assert!(c.momentum[0].abs() < 1e-13 * scale.max(1.0));
        assert!(c.energy.abs() < 1e-12 * scale.max(1.0));
        assert!(e.dissipation > 0.0);
    }

    #[test]
    fn projection_restores_moments() {
        let (g, _) = setup(16);
        let m = maxwellian_on_grid(&g);
        let t = Conserved::of(&m);
        let mut p = m.clone();
        p.values[100] += 1e-3;
        let r = conservative_projection(&p, &t).unwrap();
        assert!(Conserved::of(&r).max_relative_drift(&t) < 1e-12);
        let r2 = conservative_projection(&r, &t).unwrap();
        let d = r.values.iter().zip(&r2.values).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        assert!(d < 1e-13);
    }
}
