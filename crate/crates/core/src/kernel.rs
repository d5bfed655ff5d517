//! Collision kernels `B(z, σ) = b(cos θ)|z|^γ` with truncations and the
//! angular constants derived from them.
//!
//! - `A₀ = |S^{N-2}| ∫₀^π b sin^{N-2}θ dθ`, the Grad angular mass
//! - `A*` with `∫ B sin²θ dσ ≤ A*|z|^γ`
//! - `A_*` with `∫ B sin²θ dσ ≥ A_*(1+|z|²)^{γ/2}`

use crate::error::{Error, Result};
use crate::math;
use crate::quadrature;
use alloc::format;
use alloc::vec::Vec;

/// Relative tolerance of the adaptive angular integrals.
pub const ANGULAR_TOL: f64 = 1e-12;

/// Angular factor `b(cos θ)`.
#[derive(Clone, Debug, PartialEq)]
pub enum AngularLaw {
    /// `b ≡ c`.
    Constant { c: f64 },
    /// `b = c (sin θ)^{-ν}`.
    Power { c: f64, nu: f64 },
    /// Values on a uniform θ-grid over `[0, π]`, linearly interpolated.
    Table { values: Vec<f64> },
}

impl AngularLaw {
    /// `b` as a function of the deflection angle.
    pub fn at_theta(&self, theta: f64) -> f64 {
        match self {
            AngularLaw::Constant { c } => *c,
            AngularLaw::Power { c, nu } => c * math::powf(math::sin(theta), -nu),
            AngularLaw::Table { values } => {
                let n = values.len() - 1;
                let x = (theta / math::PI).clamp(0.0, 1.0) * n as f64;
                let k = (math::floor(x) as usize).min(n - 1);
                let t = x - k as f64;
                values[k] * (1.0 - t) + values[k + 1] * t
            }
        }
    }

    /// Breakpoints in θ where the law is not smooth.
    fn breakpoints(&self) -> Vec<f64> {
        match self {
            AngularLaw::Table { values } => {
                let n = values.len() - 1;
                (0..=n).map(|k| math::PI * k as f64 / n as f64).collect()
            }
            _ => alloc::vec![0.0, math::PI],
        }
    }

    fn infimum(&self) -> f64 {
        match self {
            AngularLaw::Constant { c } => *c,
            AngularLaw::Power { c, nu } => {
                if *nu >= 0.0 {
                    *c
                } else {
                    0.0
                }
            }
            AngularLaw::Table { values } => values.iter().cloned().fold(f64::INFINITY, f64::min),
        }
    }
}

/// Which side of `|z| = λ` the near/far splitting keeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    /// `B^λ = 1_{|z| ≤ λ} B`.
    Near,
    /// `B_λ = 1_{|z| > λ} B`.
    Far,
}

/// Optional truncation of the kernel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Truncation {
    /// `B_n = min{B, n}`.
    BnCap(f64),
    /// Keep one side of `|z| = λ`.
    NearFar { lambda: f64, side: Side },
    /// Zero out `sin θ ≤ ε`.
    SinEps(f64),
}

/// Immutable description of a collision kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelSpec {
    /// Velocity dimension `N ∈ {2, 3}`.
    pub dim: usize,
    /// Velocity exponent `γ ∈ [-4, 0)`.
    pub gamma: f64,
    pub angular: AngularLaw,
    /// Lower-bound constant `K_* > 0`.
    pub k_star: f64,
    pub truncation: Option<Truncation>,
}

impl KernelSpec {
    pub fn new(
        dim: usize,
        gamma: f64,
        angular: AngularLaw,
        k_star: f64,
        truncation: Option<Truncation>,
    ) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidInput(format!("dimension {dim} not in {{2, 3}}")));
        }
        if !(-4.0..0.0).contains(&gamma) {
            return Err(Error::InvalidInput(format!("gamma {gamma} not in [-4, 0)")));
        }
        if !(k_star > 0.0) {
            return Err(Error::InvalidInput(format!("k_star {k_star} must be positive")));
        }
        match &angular {
            AngularLaw::Constant { c } if !(*c >= 0.0) => {
                return Err(Error::InvalidInput("angular constant must be nonnegative".into()))
            }
            AngularLaw::Power { c, nu } => {
                if !(*c >= 0.0) {
                    return Err(Error::InvalidInput("angular constant must be nonnegative".into()));
                }
                if *nu >= (dim + 1) as f64 {
                    return Err(Error::NotConvergent);
                }
            }
            AngularLaw::Table { values } => {
                if values.len() < 2 || values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                    return Err(Error::InvalidInput(
                        "angular table needs at least two finite nonnegative values".into(),
                    ));
                }
            }
            _ => {}
        }
        match truncation {
            Some(Truncation::BnCap(n)) if !(n > 0.0) => {
                return Err(Error::InvalidInput("bn_cap must be positive".into()))
            }
            Some(Truncation::NearFar { lambda, .. }) if !(lambda > 0.0) => {
                return Err(Error::InvalidInput("near/far radius must be positive".into()))
            }
            Some(Truncation::SinEps(e)) if !(e > 0.0 && e < 1.0) => {
                return Err(Error::InvalidInput("sin_eps must lie in (0, 1)".into()))
            }
            _ => {}
        }
        Ok(KernelSpec { dim, gamma, angular, k_star, truncation })
    }

    /// Constant angular law `b ≡ 1` without truncation.
    pub fn power_law(dim: usize, gamma: f64) -> Result<Self> {
        KernelSpec::new(dim, gamma, AngularLaw::Constant { c: 1.0 }, 1.0, None)
    }

    pub fn with_truncation(&self, t: Option<Truncation>) -> Result<Self> {
        KernelSpec::new(self.dim, self.gamma, self.angular.clone(), self.k_star, t)
    }

    /// True when `∫ b sin^{N-2}θ dθ` is finite after the configured cutoff.
    pub fn is_grad_cutoff(&self) -> bool {
        match (&self.angular, self.truncation) {
            (_, Some(Truncation::SinEps(_))) => true,
            (AngularLaw::Power { nu, .. }, _) => *nu < (self.dim - 1) as f64,
            _ => true,
        }
    }

    fn angle_kept(&self, sin_theta: f64) -> bool {
        !matches!(self.truncation, Some(Truncation::SinEps(e)) if sin_theta <= e)
    }

    /// Kernel value from speed and deflection angle; zero speed returns the
    /// cap or zero under truncation and `∞` otherwise.
    #[inline]
    pub fn value_at(&self, rel_speed: f64, theta: f64) -> f64 {
        let s = math::sin(theta);
        if !self.angle_kept(s) {
            return 0.0;
        }
        if let Some(Truncation::NearFar { lambda, side }) = self.truncation {
            let near = rel_speed <= lambda;
            if near != (side == Side::Near) {
                return 0.0;
            }
        }
        let b = self.angular.at_theta(theta);
        let raw = if rel_speed > 0.0 {
            b * math::powf(rel_speed, self.gamma)
        } else if b > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        match self.truncation {
            Some(Truncation::BnCap(n)) => raw.min(n),
            _ => raw,
        }
    }

    /// Untruncated kernel value.
    pub fn untruncated_at(&self, rel_speed: f64, theta: f64) -> f64 {
        self.angular.at_theta(theta) * math::powf(rel_speed, self.gamma)
    }

    /// `B(z, σ)` from `|z|` and `cos θ`.
    pub fn eval_b(&self, rel_speed: f64, cos_theta: f64) -> Result<f64> {
        if !(rel_speed >= 0.0) {
            return Err(Error::InvalidInput("negative relative speed".into()));
        }
        if !(-1.0..=1.0).contains(&cos_theta) {
            return Err(Error::InvalidInput(format!("cos θ = {cos_theta} outside [-1, 1]")));
        }
        let theta = math::acos(cos_theta);
        if rel_speed == 0.0 {
            return match self.truncation {
                Some(Truncation::BnCap(_)) | Some(Truncation::NearFar { side: Side::Far, .. }) => {
                    Ok(self.value_at(0.0, theta))
                }
                _ => Err(Error::SingularEvaluation),
            };
        }
        Ok(self.value_at(rel_speed, theta))
    }

    fn theta_pieces(&self) -> Vec<f64> {
        let mut pts = self.angular.breakpoints();
        if let Some(Truncation::SinEps(e)) = self.truncation {
            let a = math::asin(e);
            pts.retain(|t| *t > a && *t < math::PI - a);
            pts.insert(0, a);
            pts.push(math::PI - a);
        }
        pts
    }

    /// `|S^{N-2}| ∫₀^π g(θ) b(θ) sin^{N-2}θ dθ` over the kept angles.
    fn angular_integral<G: Fn(f64) -> f64>(&self, g: G) -> Result<f64> {
        let nm2 = (self.dim - 2) as i32;
        let area = math::sphere_area(self.dim - 2);
        let pts = self.theta_pieces();
        let v = quadrature::tanh_sinh_pieces(
            |t| g(t) * self.angular.at_theta(t) * math::powi(math::sin(t), nm2),
            &pts,
            ANGULAR_TOL,
        )?;
        Ok(area * v)
    }

    /// Grad angular mass `A₀`.
    pub fn angular_mass_a0(&self) -> Result<f64> {
        if !self.is_grad_cutoff() {
            return Err(Error::NoGradCutoff);
        }
        self.angular_integral(|_| 1.0)
    }

    /// `∫_{S^{N-1}} B sin²θ dσ` at relative speed `|z| > 0`.
    pub fn sin2_angular_integral(&self, rel_speed: f64) -> Result<f64> {
        if !(rel_speed > 0.0) {
            return Err(Error::InvalidInput("relative speed must be positive".into()));
        }
        match self.truncation {
            Some(Truncation::BnCap(_)) => {
                let nm2 = (self.dim - 2) as i32;
                let area = math::sphere_area(self.dim - 2);
                let pts = self.theta_pieces();
                let v = quadrature::tanh_sinh_pieces(
                    |t| {
                        let s = math::sin(t);
                        self.value_at(rel_speed, t) * s * s * math::powi(s, nm2)
                    },
                    &pts,
                    ANGULAR_TOL,
                )?;
                Ok(area * v)
            }
            Some(Truncation::NearFar { lambda, side }) => {
                if (rel_speed <= lambda) != (side == Side::Near) {
                    return Ok(0.0);
                }
                Ok(self.sin2_constant()? * math::powf(rel_speed, self.gamma))
            }
            _ => Ok(self.sin2_constant()? * math::powf(rel_speed, self.gamma)),
        }
    }

    /// `|S^{N-2}| ∫ b sin^N θ dθ`, the angular factor of the mild cutoff.
    pub fn sin2_constant(&self) -> Result<f64> {
        self.angular_integral(|t| {
            let s = math::sin(t);
            s * s
        })
    }

    /// Upper constant `A*` of the mild angular cutoff.
    pub fn a_star(&self) -> Result<f64> {
        self.sin2_constant()
    }

    /// Lower constant `A_*`; truncated kernels take the infimum over a
    /// logarithmic sweep of `|z| ∈ [1e-4, 1e4]`.
    pub fn a_lower(&self) -> Result<f64> {
        let c = match self.truncation {
            None | Some(Truncation::SinEps(_)) => self.sin2_constant()?,
            _ => {
                let mut inf = f64::INFINITY;
                for i in 0..=400 {
                    let r = math::powf(10.0, -4.0 + 8.0 * i as f64 / 400.0);
                    let v = self.sin2_angular_integral(r)? / math::powf(1.0 + r * r, 0.5 * self.gamma);
                    inf = inf.min(v);
                }
                inf
            }
        };
        if c > 0.0 {
            Ok(c)
        } else {
            Err(Error::InvalidInput("kernel has no positive lower constant".into()))
        }
    }

    /// Checks the hypotheses of the decay-rate regime: `γ ∈ [-1, 0)` and
    /// `K_*(1+|z|²)^{γ/2} ≤ B` for every `(z, σ)`.
    pub fn check_theorem3_mode(&self) -> Result<()> {
        if !(-1.0..0.0).contains(&self.gamma) {
            return Err(Error::InvalidInput(format!("gamma {} outside [-1, 0)", self.gamma)));
        }
        let binf = self.angular.infimum();
        let ok = match self.truncation {
            None => self.k_star <= binf,
            Some(Truncation::BnCap(n)) => self.k_star <= binf.min(n),
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(
                "K_*(1+|z|²)^{γ/2} ≤ B fails for the configured kernel".into(),
            ))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(dim: usize, gamma: f64) -> KernelSpec {
        KernelSpec::power_law(dim, gamma).unwrap()
    }

    #[test]
    fn eval_b_examples() {
        let k = constant(2, -1.0);
        assert_eq!(k.eval_b(2.0, 0.3).unwrap(), 0.5);
        let capped = k.with_truncation(Some(Truncation::BnCap(5.0))).unwrap();
        assert_eq!(capped.eval_b(0.1, 0.3).unwrap(), 5.0);
        assert_eq!(k.eval_b(0.0, 0.1), Err(Error::SingularEvaluation));
    }

    #[test]
    fn a0_constant_laws() {
        let a2 = constant(2, -0.5).angular_mass_a0().unwrap();
        assert!((a2 - 2.0 * math::PI).abs() < 1e-12);
        let a3 = constant(3, -0.5).angular_mass_a0().unwrap();
        assert!((a3 - 4.0 * math::PI).abs() < 1e-12);
    }

    #[test]
    fn a0_rejects_non_grad_power() {
        let k = KernelSpec::new(2, -0.5, AngularLaw::Power { c: 1.0, nu: 1.5 }, 1.0, None).unwrap();
        assert_eq!(k.angular_mass_a0(), Err(Error::NoGradCutoff));
    }

    #[test]
    fn sin2_example() {
        let v = constant(2, -1.0).sin2_angular_integral(1.0).unwrap();
        assert!((v - math::PI).abs() < 1e-12);
    }

    #[test]
    fn table_equal_to_constant() {
        let t = KernelSpec::new(2, -0.5, AngularLaw::Table { values: alloc::vec![3.0; 5] }, 1.0, None)
            .unwrap();
        let a = t.angular_mass_a0().unwrap();
        assert!((a - 3.0 * 2.0 * math::PI).abs() < 1e-11);
    }
}
