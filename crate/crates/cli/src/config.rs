//! Plain-text run configuration: one `key = value` per line, `#` starts a
//! comment, unknown keys are errors.

use softboltz::collision::QuadratureOptions;
use softboltz::experiments::{TailLaw, TailProfile};
use softboltz::kernel::{AngularLaw, KernelSpec, Side, Truncation};
use softboltz::simulator::{DtPolicy, InitialDatum, Integrator, SimConfig};
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("key `{key}`: cannot parse {value:?} as {expected}")]
    BadValue { key: String, value: String, expected: &'static str },
    #[error("key `{key}`: {message}")]
    Invalid { key: String, message: String },
    #[error("{0}")]
    Core(softboltz::Error),
}

/// Typed config values.
pub trait ConfigValue: Sized {
    const EXPECTED: &'static str;
    fn parse_value(s: &str) -> Option<Self>;
    fn format_value(&self) -> String;
}

/// Floats are echoed with 17 significant digits so they round trip.
pub fn format_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

impl ConfigValue for f64 {
    const EXPECTED: &'static str = "a number";
    fn parse_value(s: &str) -> Option<Self> {
        s.parse().ok()
    }
    fn format_value(&self) -> String {
        format_f64(*self)
    }
}

impl ConfigValue for usize {
    const EXPECTED: &'static str = "a nonnegative integer";
    fn parse_value(s: &str) -> Option<Self> {
        s.parse().ok()
    }
    fn format_value(&self) -> String {
        self.to_string()
    }
}

impl ConfigValue for u64 {
    const EXPECTED: &'static str = "a nonnegative integer";
    fn parse_value(s: &str) -> Option<Self> {
        s.parse().ok()
    }
    fn format_value(&self) -> String {
        self.to_string()
    }
}

impl ConfigValue for bool {
    const EXPECTED: &'static str = "true or false";
    fn parse_value(s: &str) -> Option<Self> {
        s.parse().ok()
    }
    fn format_value(&self) -> String {
        self.to_string()
    }
}

impl ConfigValue for String {
    const EXPECTED: &'static str = "a word";
    fn parse_value(s: &str) -> Option<Self> {
        Some(s.to_string())
    }
    fn format_value(&self) -> String {
        self.clone()
    }
}

impl ConfigValue for Vec<f64> {
    const EXPECTED: &'static str = "a comma-separated list of numbers";
    fn parse_value(s: &str) -> Option<Self> {
        if s.trim().is_empty() {
            return Some(Vec::new());
        }
        s.split(',').map(|x| x.trim().parse().ok()).collect()
    }
    fn format_value(&self) -> String {
        self.iter().map(|x| format_f64(*x)).collect::<Vec<_>>().join(", ")
    }
}

macro_rules! settings {
    ($($key:literal => $field:ident: $ty:ty = $default:expr, $doc:literal;)*) => {
        /// Every configurable value, flat, keyed by its dotted name.
        #[derive(Clone, Debug, PartialEq)]
        pub struct Settings {
            $(pub $field: $ty,)*
        }

        impl Default for Settings {
            fn default() -> Self {
                Settings { $($field: $default,)* }
            }
        }

        /// `(key, default, description)` for every key.
        pub fn key_table() -> Vec<(&'static str, String, &'static str)> {
            let d = Settings::default();
            vec![$(($key, ConfigValue::format_value(&d.$field), $doc),)*]
        }

        impl Settings {
            /// Sets one key from its text value.
            pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
                match key {
                    $($key => {
                        self.$field = <$ty as ConfigValue>::parse_value(value).ok_or_else(|| ConfigError::BadValue {
                            key: key.to_string(),
                            value: value.to_string(),
                            expected: <$ty as ConfigValue>::EXPECTED,
                        })?;
                    })*
                    _ => return Err(ConfigError::UnknownKey(key.to_string())),
                }
                Ok(())
            }

            /// Effective values in key order.
            pub fn entries(&self) -> Vec<(&'static str, String)> {
                vec![$(($key, ConfigValue::format_value(&self.$field)),)*]
            }
        }
    };
}

settings! {
    "grid.dim" => dim: usize = 2, "velocity dimension N, 2 or 3";
    "grid.points_per_axis" => points_per_axis: usize = 48, "cells per axis, even, at least 16";
    "grid.extent" => extent: f64 = 6.0, "half width L of the box [-L, L]^N";
    "kernel.gamma" => gamma: f64 = -0.5, "velocity exponent γ in [-4, 0)";
    "kernel.angular" => angular: String = "constant".into(), "angular law: constant, power or table";
    "kernel.angular_c" => angular_c: f64 = 1.0, "constant c of b = c or b = c sin^{-ν}θ";
    "kernel.angular_nu" => angular_nu: f64 = 0.0, "exponent ν of the power law";
    "kernel.angular_table" => angular_table: Vec<f64> = Vec::new(), "b on a uniform θ-grid over [0, π]";
    "kernel.k_star" => k_star: f64 = 1.0, "lower-bound constant K_*";
    "kernel.truncation" => truncation: String = "none".into(), "none, bn_cap, near, far or sin_eps";
    "kernel.truncation_value" => truncation_value: f64 = 1.0, "cap n, radius λ or ε of the truncation";
    "kernel.n_theta" => n_theta: usize = 16, "Gauss-Legendre nodes in θ, even";
    "kernel.n_omega" => n_omega: usize = 8, "nodes on S¹ in 3D";
    "kernel.stencil" => stencil: usize = 0, "Lagrange points per axis, odd; 0 picks 3";
    "time.t_end" => t_end: f64 = 40.0, "final time";
    "time.max_steps" => max_steps: usize = 200, "step budget, 0 for none";
    "time.cfl" => cfl: f64 = 0.5, "safety c of dt = c / max L(f)";
    "time.dt" => dt: f64 = 0.0, "fixed step; 0 selects the cfl rule";
    "time.integrator" => integrator: String = "euler".into(), "euler or rk2";
    "time.bn_sequence" => bn_sequence: Vec<f64> = Vec::new(), "caps n of B_n = min{B, n}, one run each";
    "initial.kind" => initial: String = "bimodal".into(),
        "maxwellian, bimodal, two_temperature, anisotropic, mixture, power_tail, a_tail or compact";
    "initial.shift" => shift: f64 = 1.0, "bimodal and compact half separation u";
    "initial.cold" => cold: f64 = 0.5, "cold temperature of two_temperature";
    "initial.temps" => temps: Vec<f64> = vec![1.5, 0.5, 1.0], "directional temperatures of anisotropic";
    "initial.eps0" => eps0: f64 = 0.08, "tail amplitude ε₀";
    "initial.delta" => delta: f64 = 2.25, "tail exponent δ";
    "initial.r0" => r0: f64 = 2.0, "tail radius R₀";
    "initial.law" => law: String = "log".into(), "a_tail law: power, log or loglog";
    "diagnostics.stride" => stride: usize = 1, "record a row every stride steps";
    "diagnostics.s_list" => s_list: Vec<f64> = vec![2.0, 4.0, 3.5], "moment orders s of the L¹_s columns";
    "diagnostics.r_list" => r_list: Vec<f64> = vec![2.0, 3.0, 4.0], "radii R of the energy-tail columns";
    "diagnostics.weight_k" => weight_k: f64 = 10.0, "weight order k of 𝒟_k and the entropic moment";
    "diagnostics.leakage_tolerance" => leakage_tolerance: f64 = 1e-6, "largest leakage ratio before a run aborts";
    "diagnostics.clip_tolerance" => clip_tolerance: f64 = 1e-6, "negative values below -tol·max f reject a step";
    "diagnostics.keep_fields" => keep_fields: bool = false, "keep fields and loss integrals at rows";
    "diagnostics.g_flow" => g_flow: bool = false, "evaluate the g-flow at rows";
    "experiment.label" => label: String = "default".into(), "run label used in file names";
    "experiment.seed" => seed: u64 = 1, "seed of random fields and oracle samples";
    "experiment.threads" => threads: usize = 0, "worker threads, 0 for all available";
    "experiment.s" => s: f64 = 4.0, "moment order s of the theorem experiments";
    "experiment.k0" => k0: f64 = 1.0, "starting K of the tail-bound calibration";
    "experiment.distance_fields" => distance_fields: usize = 20, "random fields calibrating the distance constant";
    "experiment.samples" => samples: u64 = 100_000, "samples per pointwise oracle suite";
    "experiment.cases" => cases: u64 = 100, "quadrature cases of the isotropic suite";
    "experiment.ode_cases" => ode_cases: u64 = 20, "cases of the Gronwall suite";
    "experiment.fields" => fields: usize = 20, "fields of the dissipation suites";
    "experiment.oracle_points" => oracle_points: usize = 24, "cells per axis of the dissipation suites";
    "experiment.lemma22_m" => lemma22_m: f64 = 1.0, "exponent m of the dissipation integral suite";
}

impl Settings {
    /// Reads `path` over the defaults.
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        let mut s = Settings::default();
        s.apply_text(&text)?;
        Ok(s)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::Syntax { line: i + 1, text: raw.to_string() })?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    /// Applies one `key=value` override.
    pub fn apply_override(&mut self, kv: &str) -> Result<(), ConfigError> {
        let (k, v) = kv.split_once('=').ok_or_else(|| ConfigError::Syntax { line: 0, text: kv.to_string() })?;
        self.set(k.trim(), v.trim())
    }

    /// The effective configuration as config text.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError::Invalid { key: key.to_string(), message: message.into() }
    }

    pub fn kernel(&self) -> Result<KernelSpec, ConfigError> {
        let angular = match self.angular.as_str() {
            "constant" => AngularLaw::Constant { c: self.angular_c },
            "power" => AngularLaw::Power { c: self.angular_c, nu: self.angular_nu },
            "table" => AngularLaw::Table { values: self.angular_table.clone() },
            other => return Err(Self::invalid("kernel.angular", format!("unknown law {other:?}"))),
        };
        let v = self.truncation_value;
        let truncation = match self.truncation.as_str() {
            "none" => None,
            "bn_cap" => Some(Truncation::BnCap(v)),
            "near" => Some(Truncation::NearFar { lambda: v, side: Side::Near }),
            "far" => Some(Truncation::NearFar { lambda: v, side: Side::Far }),
            "sin_eps" => Some(Truncation::SinEps(v)),
            other => return Err(Self::invalid("kernel.truncation", format!("unknown truncation {other:?}"))),
        };
        KernelSpec::new(self.dim, self.gamma, angular, self.k_star, truncation).map_err(ConfigError::Core)
    }

    pub fn tail_profile(&self) -> Result<TailProfile, ConfigError> {
        let law = match self.law.as_str() {
            "power" => TailLaw::Power,
            "log" => TailLaw::Log,
            "loglog" => TailLaw::LogLog,
            other => return Err(Self::invalid("initial.law", format!("unknown law {other:?}"))),
        };
        match self.initial.as_str() {
            "power_tail" => Ok(TailProfile::PowerTail { eps0: self.eps0, delta: self.delta, r0: self.r0 }),
            "a_tail" => Ok(TailProfile::ATail { law, delta: self.delta, eps0: self.eps0, r0: self.r0 }),
            "compact" => Ok(TailProfile::Compact { shift: self.shift }),
            other => Err(Self::invalid("initial.kind", format!("{other:?} is not a tail profile"))),
        }
    }

    /// The simulator configuration, validated.
    pub fn sim(&self) -> Result<SimConfig, ConfigError> {
        let kernel = self.kernel()?;
        let mut quadrature = QuadratureOptions::for_dim(self.dim);
        quadrature.n_theta = self.n_theta;
        if self.dim == 3 {
            quadrature.n_omega = self.n_omega;
        }
        if self.stencil != 0 {
            quadrature.stencil = self.stencil;
        }
        quadrature.threads = self.threads;
        let integrator = match self.integrator.as_str() {
            "euler" => Integrator::Euler,
            "rk2" => Integrator::Rk2,
            other => return Err(Self::invalid("time.integrator", format!("unknown integrator {other:?}"))),
        };
        let dt_policy = if self.dt > 0.0 { DtPolicy::Fixed(self.dt) } else { DtPolicy::Cfl(self.cfl) };
        if self.temps.len() < self.dim {
            return Err(Self::invalid("initial.temps", format!("needs {} values", self.dim)));
        }
        let initial = match self.initial.as_str() {
            "maxwellian" => InitialDatum::Maxwellian,
            "bimodal" => InitialDatum::Bimodal { shift: self.shift },
            "two_temperature" => InitialDatum::TwoTemperature { cold: self.cold },
            "anisotropic" => {
                let mut t = [1.0; 3];
                t[..self.dim].copy_from_slice(&self.temps[..self.dim]);
                InitialDatum::Anisotropic { temps: t }
            }
            "mixture" => InitialDatum::Mixture,
            "power_tail" | "a_tail" | "compact" => InitialDatum::Tail(self.tail_profile()?),
            other => return Err(Self::invalid("initial.kind", format!("unknown initial datum {other:?}"))),
        };
        let config = SimConfig {
            dim: self.dim,
            points_per_axis: self.points_per_axis,
            extent: self.extent,
            kernel,
            quadrature,
            t_end: self.t_end,
            max_steps: self.max_steps,
            dt_policy,
            integrator,
            bn_sequence: self.bn_sequence.clone(),
            stride: self.stride,
            s_list: self.s_list.clone(),
            r_list: self.r_list.clone(),
            weight_k: self.weight_k,
            initial,
            seed: self.seed,
            label: self.label.clone(),
            leakage_tolerance: self.leakage_tolerance,
            clip_tolerance: self.clip_tolerance,
            keep_fields: self.keep_fields,
            g_flow: self.g_flow,
        };
        config.validate().map_err(ConfigError::Core)?;
        config.grid().map_err(ConfigError::Core)?;
        if self.label.is_empty() || !self.label.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            return Err(Self::invalid("experiment.label", "use letters, digits, '_' or '-'"));
        }
        Ok(config)
    }
}
