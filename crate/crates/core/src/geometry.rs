//! Collision geometry in the `(θ, ω)` parameterization of the sphere.
//!
//! Velocities are stored as `[f64; 3]`; in dimension two the third
//! component is zero, so dot products and norms need no dimension switch.

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::math;
use crate::quadrature::GaussLegendre;

pub type Vel = [f64; 3];

#[inline]
pub fn dot(a: &Vel, b: &Vel) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn norm2(a: &Vel) -> f64 {
    dot(a, a)
}

#[inline]
pub fn norm(a: &Vel) -> f64 {
    math::sqrt(dot(a, a))
}

#[inline]
pub fn sub(a: &Vel, b: &Vel) -> Vel {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn add(a: &Vel, b: &Vel) -> Vel {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn scale(s: f64, a: &Vel) -> Vel {
    [s * a[0], s * a[1], s * a[2]]
}

#[inline]
pub fn axpy(s: f64, a: &Vel, b: &Vel) -> Vel {
    [b[0] + s * a[0], b[1] + s * a[1], b[2] + s * a[2]]
}

fn cross(a: &Vel, b: &Vel) -> Vel {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Unit vector `k` along `v − v_*` and an orthonormal basis of `k^⊥`.
#[derive(Clone, Copy, Debug)]
pub struct CollisionFrame {
    pub dim: usize,
    pub k: Vel,
    /// `basis[0]` spans `k^⊥` in 2D; `basis[0..2]` in 3D.
    pub basis: [Vel; 2],
}

impl CollisionFrame {
    /// Frame for `k = (v − v_*)/|v − v_*|`, with `k = e₁` when `v = v_*`.
    pub fn new(dim: usize, v: &Vel, v_star: &Vel) -> Self {
        let z = sub(v, v_star);
        let r = norm(&z);
        let k = if r > 0.0 { scale(1.0 / r, &z) } else { [1.0, 0.0, 0.0] };
        CollisionFrame::from_direction(dim, k)
    }

    /// Frame around a given unit vector `k`.
    pub fn from_direction(dim: usize, k: Vel) -> Self {
        if dim == 2 {
            return CollisionFrame { dim, k, basis: [[-k[1], k[0], 0.0], [0.0; 3]] };
        }
        // Gram–Schmidt on the first axis of the fixed order e₁, e₂, e₃
        // that is not nearly parallel to k.
        let axes = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let mut e = axes[0];
        for a in axes.iter() {
            if math::abs(dot(a, &k)) < 0.8 {
                e = *a;
                break;
            }
        }
        let b1 = axpy(-dot(&e, &k), &k, &e);
        let b1 = scale(1.0 / norm(&b1), &b1);
        let b2 = cross(&k, &b1);
        CollisionFrame { dim, k, basis: [b1, b2] }
    }

    /// Point of `S^{N-2}(k)`: `±basis[0]` in 2D (`phi ∈ {0, π}`), the
    /// circle `cos φ b₁ + sin φ b₂` in 3D.
    pub fn omega(&self, phi: f64) -> Vel {
        if self.dim == 2 {
            let s = if math::cos(phi) >= 0.0 { 1.0 } else { -1.0 };
            scale(s, &self.basis[0])
        } else {
            axpy(math::sin(phi), &self.basis[1], &scale(math::cos(phi), &self.basis[0]))
        }
    }

    /// `σ = cos θ k + sin θ ω`.
    pub fn sigma(&self, theta: f64, omega: &Vel) -> Vel {
        axpy(math::sin(theta), omega, &scale(math::cos(theta), &self.k))
    }
}

/// Post-collision velocities
/// `v' = cos²(θ/2)v + sin²(θ/2)v_* + ½|v−v_*| sin θ ω` and its partner.
pub fn post_collision(v: &Vel, v_star: &Vel, theta: f64, omega: &Vel) -> Result<(Vel, Vel)> {
    if !(0.0..=math::PI).contains(&theta) {
        return Err(Error::InvalidInput("θ outside [0, π]".into()));
    }
    let z = sub(v, v_star);
    let r = norm(&z);
    let k = if r > 0.0 { scale(1.0 / r, &z) } else { [1.0, 0.0, 0.0] };
    if math::abs(dot(&k, omega)) > 1e-12 || math::abs(norm(omega) - 1.0) > 1e-12 {
        return Err(Error::InvalidInput("ω must be a unit vector orthogonal to k".into()));
    }
    Ok(post_collision_unchecked(v, v_star, theta, omega))
}

#[inline]
pub fn post_collision_unchecked(v: &Vel, v_star: &Vel, theta: f64, omega: &Vel) -> (Vel, Vel) {
    let c2 = math::cos(0.5 * theta);
    let s2 = math::sin(0.5 * theta);
    let (c2, s2) = (c2 * c2, s2 * s2);
    let h = 0.5 * norm(&sub(v, v_star)) * math::sin(theta);
    let mut vp = [0.0; 3];
    let mut vsp = [0.0; 3];
    for d in 0..3 {
        vp[d] = c2 * v[d] + s2 * v_star[d] + h * omega[d];
        vsp[d] = s2 * v[d] + c2 * v_star[d] - h * omega[d];
    }
    (vp, vsp)
}

/// `(|v' − v|, |v' − v_*|) = (|v−v_*| sin(θ/2), |v−v_*| cos(θ/2))`.
pub fn collision_distances(v: &Vel, v_star: &Vel, theta: f64) -> (f64, f64) {
    let r = norm(&sub(v, v_star));
    (r * math::sin(0.5 * theta), r * math::cos(0.5 * theta))
}

/// Scalar test function with analytic derivative bounds on balls.
pub trait TestFunction {
    fn value(&self, v: &Vel) -> f64;
    /// `sup_{|u| ≤ ρ} |∇φ(u)|` (or an upper bound of it).
    fn sup_grad(&self, rho: f64) -> f64;
    /// `sup_{|u| ≤ ρ} ‖∇²φ(u)‖_F` (or an upper bound of it).
    fn sup_hess(&self, rho: f64) -> f64;
}

/// `φ(v) = vᵀAv + b·v + c` with symmetric `A`.
#[derive(Clone, Copy, Debug)]
pub struct Quadratic {
    pub a: [[f64; 3]; 3],
    pub b: Vel,
    pub c: f64,
}

impl Quadratic {
    fn spectral_bound(&self) -> f64 {
        // Frobenius norm bounds the spectral norm.
        let mut s = 0.0;
        for r in &self.a {
            for x in r {
                s += x * x;
            }
        }
        math::sqrt(s)
    }
}

impl TestFunction for Quadratic {
    fn value(&self, v: &Vel) -> f64 {
        let mut q = self.c + dot(&self.b, v);
        for i in 0..3 {
            for j in 0..3 {
                q += v[i] * self.a[i][j] * v[j];
            }
        }
        q
    }
    fn sup_grad(&self, rho: f64) -> f64 {
        2.0 * self.spectral_bound() * rho + norm(&self.b)
    }
    fn sup_hess(&self, _rho: f64) -> f64 {
        2.0 * self.spectral_bound()
    }
}

/// `φ(v) = a exp(−|v − c|²/(2s²))` in dimension `dim`.
#[derive(Clone, Copy, Debug)]
pub struct GaussianBump {
    pub dim: usize,
    pub amp: f64,
    pub center: Vel,
    pub width: f64,
}

impl GaussianBump {
    fn radial_range(&self, rho: f64) -> (f64, f64) {
        let c = norm(&self.center);
        ((c - rho).max(0.0), c + rho)
    }
}

impl TestFunction for GaussianBump {
    fn value(&self, v: &Vel) -> f64 {
        let d2 = norm2(&sub(v, &self.center));
        self.amp * math::exp(-d2 / (2.0 * self.width * self.width))
    }
    fn sup_grad(&self, rho: f64) -> f64 {
        // |∇φ| = |a| r/s² e^{−r²/2s²}, unimodal in r with peak at r = s.
        let (lo, hi) = self.radial_range(rho);
        let s = self.width;
        let g = |r: f64| math::abs(self.amp) * r / (s * s) * math::exp(-r * r / (2.0 * s * s));
        if lo <= s && s <= hi {
            g(s)
        } else if hi < s {
            g(hi)
        } else {
            g(lo)
        }
    }
    fn sup_hess(&self, rho: f64) -> f64 {
        // ‖∇²φ‖_F = |a|/s² e^{−x/2} √((x−1)² + N−1) with x = r²/s², decreasing in x.
        let (lo, _) = self.radial_range(rho);
        let s = self.width;
        let x = lo * lo / (s * s);
        math::abs(self.amp) / (s * s)
            * math::exp(-0.5 * x)
            * math::sqrt((x - 1.0) * (x - 1.0) + (self.dim - 1) as f64)
    }
}

/// Closure test function without derivative information.
pub struct FnTest<F: Fn(&Vel) -> f64>(pub F);

impl<F: Fn(&Vel) -> f64> TestFunction for FnTest<F> {
    fn value(&self, v: &Vel) -> f64 {
        (self.0)(v)
    }
    fn sup_grad(&self, _rho: f64) -> f64 {
        f64::INFINITY
    }
    fn sup_hess(&self, _rho: f64) -> f64 {
        f64::INFINITY
    }
}

/// `Δφ = φ(v') + φ(v'_*) − φ(v) − φ(v_*)`.
pub fn delta_phi<T: TestFunction + ?Sized>(phi: &T, v: &Vel, v_star: &Vel, vp: &Vel, vsp: &Vel) -> f64 {
    phi.value(vp) + phi.value(vsp) - phi.value(v) - phi.value(v_star)
}

/// `Δφ` at the post-collision pair of `(θ, ω)`.
pub fn delta_phi_at<T: TestFunction + ?Sized>(phi: &T, v: &Vel, v_star: &Vel, theta: f64, omega: &Vel) -> f64 {
    let (vp, vsp) = post_collision_unchecked(v, v_star, theta, omega);
    delta_phi(phi, v, v_star, &vp, &vsp)
}

/// Nodes of `S^{N-2}(k)` with weights summing to `|S^{N-2}|`.
pub fn omega_nodes(dim: usize, n_omega: usize) -> alloc::vec::Vec<(f64, f64)> {
    if dim == 2 {
        alloc::vec![(0.0, 1.0), (math::PI, 1.0)]
    } else {
        let w = 2.0 * math::PI / n_omega as f64;
        (0..n_omega).map(|p| (2.0 * math::PI * p as f64 / n_omega as f64, w)).collect()
    }
}

/// `∫_{S^{N-2}(k)} Δφ dω` at fixed θ.
pub fn omega_integral<T: TestFunction + ?Sized>(
    phi: &T,
    frame: &CollisionFrame,
    v: &Vel,
    v_star: &Vel,
    theta: f64,
    n_omega: usize,
) -> f64 {
    omega_nodes(frame.dim, n_omega)
        .iter()
        .map(|&(phi_w, w)| w * delta_phi_at(phi, v, v_star, theta, &frame.omega(phi_w)))
        .sum()
}

/// Weak-form operator
/// `L[Δφ](v, v_*) = ∫₀^π B sin^{N-2}θ (∫_{S^{N-2}(k)} Δφ dω) dθ`,
/// θ by Gauss–Legendre with the ω-integral innermost. `radial` replaces
/// `|v − v_*|^γ` when given (cell-averaged weights near the diagonal).
pub fn l_operator<T: TestFunction + ?Sized>(
    spec: &KernelSpec,
    phi: &T,
    v: &Vel,
    v_star: &Vel,
    n_theta: usize,
    n_omega: usize,
    radial: Option<f64>,
) -> Result<f64> {
    if !spec.is_grad_cutoff() && spec.gamma <= -3.0 {
        return Err(Error::NotConvergent);
    }
    let frame = CollisionFrame::new(spec.dim, v, v_star);
    let r = norm(&sub(v, v_star));
    if r == 0.0 && radial.is_none() {
        return Ok(0.0);
    }
    let gl = GaussLegendre::on(n_theta, 0.0, math::PI);
    let nm2 = (spec.dim - 2) as i32;
    let mut total = 0.0;
    for (&th, &w) in gl.nodes.iter().zip(&gl.weights) {
        let b = match radial {
            Some(g) => spec.angular.at_theta(th) * g,
            None => spec.value_at(r, th),
        };
        if b == 0.0 {
            continue;
        }
        let inner = omega_integral(phi, &frame, v, v_star, th, n_omega);
        total += w * b * math::powi(math::sin(th), nm2) * inner;
    }
    Ok(total)
}
