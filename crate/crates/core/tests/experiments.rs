use softboltz::distribution::{Conserved, VelocityGrid};
use softboltz::experiments::{
    check_tail_hypothesis, fit_rate, floor_bracket, maxwellian_tail_constant, run_theorem1, run_theorem3,
    run_theorem5, solve_minimal_r, tail_beta, time_exponent, TailLaw, TailProfile,
};
use softboltz::kernel::KernelSpec;
use softboltz::simulator::SimConfig;
use softboltz::Error;
use std::f64::consts::PI;
use std::sync::Arc;

#[test]
fn exponent_helpers() {
    assert_eq!(floor_bracket(2.7), 2.0);
    assert_eq!(floor_bracket(-0.5), -1.0);
    assert_eq!(time_exponent(2.0), 1.0);
    assert_eq!(time_exponent(4.0), 2.0);
    assert_eq!(time_exponent(1.5), 1.0);
    assert_eq!(time_exponent(0.5), -2.0);
    assert_eq!(tail_beta(4.0, -0.5), 2.5);
    assert_eq!(tail_beta(3.0, -3.0), 3.0);
}

#[test]
fn minimal_radius_closed_form() {
    // T(R) = R^{−p}: R^{β−p} = K(1+t)^{2−[2/s]}
    let (beta, p, k, s) = (2.5, 1.5, 3.0, 4.0);
    let mut last = 0.0;
    for t in [0.0, 1.0, 3.0, 10.0] {
        let r = solve_minimal_r(|r| r.powf(-p), k, s, beta, t, 1e-3, 1e6).unwrap();
        let exact = (k * (1.0 + t).powi(2)).powf(1.0 / (beta - p));
        assert!((r - exact).abs() <= 1e-9 * exact, "{t} {r} {exact}");
        // fixed point of the defining equation
        assert!((r.powf(beta) * r.powf(-p) / (k * (1.0 + t).powi(2)) - 1.0).abs() <= 1e-8);
        assert!(r > last);
        last = r;
    }
}

#[test]
fn minimal_radius_takes_the_first_root() {
    // R²T(R) with T = e^{−(R−3)²} crosses K twice
    let tail = |r: f64| (-(r - 3.0) * (r - 3.0)).exp();
    let h = |r: f64| r * r * tail(r);
    let r = solve_minimal_r(tail, 4.0, 2.0, 2.0, 0.0, 0.1, 100.0).unwrap();
    assert!((h(r) - 4.0).abs() <= 1e-8);
    assert!(r < 3.0);
    let mut x = 0.1;
    while x < r * (1.0 - 1e-9) {
        assert!(h(x) < 4.0);
        x *= 1.001;
    }
}

#[test]
fn minimal_radius_errors() {
    let t = |r: f64| r.powf(-1.5);
    assert!(matches!(solve_minimal_r(t, 0.0, 4.0, 2.5, 0.0, 1e-3, 1e6), Err(Error::InvalidInput(_))));
    assert!(matches!(solve_minimal_r(t, 1.0, 4.0, 2.5, 0.0, 2.0, 1.0), Err(Error::InvalidInput(_))));
    // already above the target at R_min
    assert!(matches!(solve_minimal_r(t, 1e-6, 4.0, 2.5, 0.0, 1.0, 1e6), Err(Error::OutOfRange(_))));
    // no root below R_max
    assert!(matches!(solve_minimal_r(t, 1e9, 4.0, 2.5, 0.0, 1e-3, 1e3), Err(Error::OutOfRange(_))));
}

#[test]
fn rate_fit_recovers_a_power_law() {
    let t: Vec<f64> = (0..40).map(|i| 0.25 * i as f64).collect();
    let y: Vec<f64> = t.iter().map(|t| 5.0 * (1.0 + t).powf(-1.5)).collect();
    let f = fit_rate(&t, &y, -1.0).unwrap();
    assert!((f.slope + 1.5).abs() < 1e-12);
    assert!(f.lo <= f.slope + 1e-12 && f.hi >= f.slope - 1e-12);
    assert_eq!(f.t1, t[20]);
    assert_eq!(f.target, -1.0);
    assert!(fit_rate(&t[..4], &y[..4], -1.0).is_none());
}

#[test]
fn tail_laws_have_consistent_derivatives() {
    for law in [TailLaw::Power, TailLaw::Log, TailLaw::LogLog] {
        for t in [0.5f64, 3.0, 40.0] {
            let h = 1e-5 * (1.0 + t);
            let d = -(law.a(t + h, 0.7) - law.a(t - h, 0.7)) / (2.0 * h);
            assert!((d - law.a1(t, 0.7)).abs() <= 1e-6 * law.a1(t, 0.7), "{law:?} {t}");
        }
        assert!((law.a(0.0, 0.7) - 1.0).abs() < 1e-15);
    }
}

#[test]
fn tail_hypotheses() {
    let power = TailProfile::PowerTail { eps0: 0.08, delta: 2.25, r0: 2.0 };
    assert!(check_tail_hypothesis(&power, 4.0, -1.0).is_ok());
    assert!(check_tail_hypothesis(&power, 4.0, -0.1).is_err());
    assert!(check_tail_hypothesis(&power, 2.0, -1.0).is_err());
    let slow = TailProfile::ATail { law: TailLaw::Log, delta: 0.5, eps0: 0.05, r0: 2.0 };
    assert!(check_tail_hypothesis(&slow, 2.0, -1.0).is_ok());
    assert!(check_tail_hypothesis(&slow, 3.0, -1.0).is_err());
    assert!(check_tail_hypothesis(&TailProfile::Compact { shift: 1.0 }, 4.0, -1.0).is_err());
}

#[test]
fn built_profiles_are_normalized() {
    let g = Arc::new(VelocityGrid::new(2, 64, 16.0).unwrap());
    let power = TailProfile::PowerTail { eps0: 0.05, delta: 2.0, r0: 1.0 };
    let slow = TailProfile::ATail { law: TailLaw::LogLog, delta: 0.5, eps0: 0.05, r0: 2.0 };
    for p in [power, slow, TailProfile::Compact { shift: 1.0 }] {
        let b = p.build(&g).unwrap();
        assert!(Conserved::of(&b.field).max_relative_drift(&Conserved::unit(2)) <= 1e-12, "{p:?}");
        assert!(b.core.0 > 0.0 && b.core.1 > 0.0);
        let mut last = f64::INFINITY;
        for r in [0.5, 1.0, 2.0, 4.0, 8.0] {
            let e = b.energy_tail(r).unwrap();
            assert!(e >= 0.0 && (e < last || e == 0.0), "{p:?} {r} {e} {last}");
            last = e;
        }
    }
    // beyond R₀ the slow tail carries ε₀|S¹|A(R) once the core is negligible
    let b = slow.build(&g).unwrap();
    let exact = 0.05 * 2.0 * PI * TailLaw::LogLog.a(30.0, 0.5);
    assert!((b.energy_tail(30.0).unwrap() - exact).abs() <= 1e-8 * exact);
    assert!(TailProfile::PowerTail { eps0: 5.0, delta: 2.0, r0: 1.0 }.build(&g).is_err());
    assert!(TailProfile::PowerTail { eps0: 0.05, delta: 2.0, r0: 0.0 }.build(&g).is_err());
    assert!(TailProfile::Compact { shift: 2.0 }.build(&g).is_err());
}

#[test]
fn maxwellian_tail_constant_matches_its_supremum() {
    // sup_R (R² + 2)e^{−R²/4} = 4e^{−1/2} at R² = 2
    let g = Arc::new(VelocityGrid::new(2, 64, 8.0).unwrap());
    let c = maxwellian_tail_constant(&g);
    let exact = 4.0 * (-0.5f64).exp();
    assert!((c - exact).abs() <= 0.03 * exact, "{c} {exact}");
}

#[test]
fn drivers_reject_violated_hypotheses() {
    let c = SimConfig::default();
    assert!(run_theorem1(&c, 2.0).is_err());
    // the decay chain needs k = s − 2 > 2 and a kernel in its regime
    assert!(run_theorem3(&c, 4.0, 4).is_err());
    let mut strong = c.clone();
    strong.kernel = KernelSpec::power_law(2, -1.5).unwrap();
    assert!(run_theorem3(&strong, 12.0, 4).is_err());
    // the mild envelope needs a bounded kernel
    let profile = TailProfile::PowerTail { eps0: 0.08, delta: 2.25, r0: 2.0 };
    assert!(matches!(run_theorem5(&c, profile), Err(Error::InvalidInput(_))));
}
