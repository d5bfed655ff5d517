use proptest::prelude::*;
use softboltz::kernel::{AngularLaw, KernelSpec, Side, Truncation};
use softboltz::Error;
use std::f64::consts::PI;

fn constant(dim: usize, gamma: f64, t: Option<Truncation>) -> KernelSpec {
    KernelSpec::new(dim, gamma, AngularLaw::Constant { c: 1.0 }, 1.0, t).unwrap()
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs())
}

#[test]
fn eval_b_hand_values() {
    let k = constant(2, -1.0, None);
    for c in [-1.0, -0.3, 0.0, 0.7, 1.0] {
        assert!(close(k.eval_b(2.0, c).unwrap(), 0.5, 1e-15));
    }
    let capped = constant(2, -1.0, Some(Truncation::BnCap(5.0)));
    assert_eq!(capped.eval_b(0.1, 0.2).unwrap(), 5.0);
    assert_eq!(capped.eval_b(0.0, 0.2).unwrap(), 5.0);
    assert!(close(capped.eval_b(1.0, 0.2).unwrap(), 1.0, 1e-15));
}

#[test]
fn zero_speed_without_truncation_is_singular() {
    let k = constant(2, -0.5, None);
    assert!(matches!(k.eval_b(0.0, 0.5), Err(Error::SingularEvaluation)));
    let near = constant(2, -0.5, Some(Truncation::NearFar { lambda: 1.0, side: Side::Near }));
    assert!(matches!(near.eval_b(0.0, 0.5), Err(Error::SingularEvaluation)));
    let far = constant(2, -0.5, Some(Truncation::NearFar { lambda: 1.0, side: Side::Far }));
    assert_eq!(far.eval_b(0.0, 0.5).unwrap(), 0.0);
}

#[test]
fn angular_mass_closed_forms() {
    assert!(close(constant(2, -0.5, None).angular_mass_a0().unwrap(), 2.0 * PI, 1e-10));
    assert!(close(constant(3, -0.5, None).angular_mass_a0().unwrap(), 4.0 * PI, 1e-10));
    let table = KernelSpec::new(2, -0.5, AngularLaw::Table { values: vec![2.5; 9] }, 1.0, None).unwrap();
    assert!(close(table.angular_mass_a0().unwrap(), 2.5 * 2.0 * PI, 1e-10));
    let table3 = KernelSpec::new(3, -0.5, AngularLaw::Table { values: vec![0.5; 5] }, 1.0, None).unwrap();
    assert!(close(table3.angular_mass_a0().unwrap(), 0.5 * 4.0 * PI, 1e-10));
}

#[test]
fn non_integrable_angular_law_is_rejected() {
    let k = KernelSpec::new(2, -0.5, AngularLaw::Power { c: 1.0, nu: 1.5 }, 1.0, None).unwrap();
    assert!(!k.is_grad_cutoff());
    assert!(matches!(k.angular_mass_a0(), Err(Error::NoGradCutoff)));
    // the ε-cutoff restores integrability
    let cut = k.with_truncation(Some(Truncation::SinEps(0.1))).unwrap();
    assert!(cut.angular_mass_a0().unwrap().is_finite());
    assert!(KernelSpec::new(2, -0.5, AngularLaw::Power { c: 1.0, nu: 3.0 }, 1.0, None).is_err());
}

#[test]
fn sin2_integral_closed_form() {
    // 2 ∫₀^π sin²θ dθ = π at |z| = 1
    let k = constant(2, -1.0, None);
    assert!(close(k.sin2_angular_integral(1.0).unwrap(), PI, 1e-10));
    // 2π ∫₀^π sin³θ dθ = 8π/3 in 3D
    let k3 = constant(3, -1.0, None);
    assert!(close(k3.sin2_angular_integral(1.0).unwrap(), 8.0 * PI / 3.0, 1e-10));
}

#[test]
fn mild_cutoff_upper_and_lower_bounds() {
    for (dim, gamma) in [(2, -0.5), (2, -1.0), (3, -2.0), (3, -3.5)] {
        let k = constant(dim, gamma, None);
        let a_star = k.a_star().unwrap();
        let a_lower = k.a_lower().unwrap();
        for i in 0..=40 {
            let z = 10f64.powf(-2.0 + 4.0 * i as f64 / 40.0);
            let s = k.sin2_angular_integral(z).unwrap();
            assert!(s <= a_star * z.powf(gamma) * (1.0 + 1e-12));
            assert!(s >= a_lower * (1.0 + z * z).powf(0.5 * gamma) * (1.0 - 1e-12));
        }
    }
    let capped = constant(2, -1.0, Some(Truncation::BnCap(2.0)));
    let a_lower = capped.a_lower().unwrap();
    for i in 0..=20 {
        let z = 10f64.powf(-3.0 + 6.0 * i as f64 / 20.0);
        let s = capped.sin2_angular_integral(z).unwrap();
        assert!(s >= a_lower * (1.0 + z * z).powf(-0.5) * (1.0 - 1e-9));
    }
}

#[test]
fn sin2_integral_scales_as_power() {
    for gamma in [-0.5, -1.0, -2.5] {
        let k = KernelSpec::new(3, gamma, AngularLaw::Power { c: 0.7, nu: 0.8 }, 0.1, None).unwrap();
        let base = k.sin2_angular_integral(1.0).unwrap();
        for z in [0.3, 1.7, 3.0, 9.9] {
            let r = k.sin2_angular_integral(z).unwrap() * z.powf(-gamma);
            assert!(close(r, base, 1e-9), "{gamma} {z}");
        }
    }
}

#[test]
fn decay_regime_hypotheses() {
    assert!(constant(2, -0.5, None).check_theorem3_mode().is_ok());
    assert!(constant(2, -1.5, None).check_theorem3_mode().is_err());
    let strong = KernelSpec::new(2, -0.5, AngularLaw::Constant { c: 1.0 }, 2.0, None).unwrap();
    assert!(strong.check_theorem3_mode().is_err());
}

#[test]
fn invalid_specs_are_rejected() {
    assert!(KernelSpec::power_law(4, -0.5).is_err());
    assert!(KernelSpec::power_law(2, 0.0).is_err());
    assert!(KernelSpec::power_law(2, -4.5).is_err());
    assert!(KernelSpec::new(2, -0.5, AngularLaw::Constant { c: 1.0 }, 0.0, None).is_err());
    assert!(KernelSpec::new(2, -0.5, AngularLaw::Table { values: vec![1.0] }, 1.0, None).is_err());
    assert!(constant(2, -0.5, None).with_truncation(Some(Truncation::BnCap(0.0))).is_err());
    assert!(constant(2, -0.5, None).with_truncation(Some(Truncation::SinEps(1.0))).is_err());
}

fn any_law() -> impl Strategy<Value = AngularLaw> {
    prop_oneof![
        (0.1f64..3.0).prop_map(|c| AngularLaw::Constant { c }),
        (0.1f64..3.0, -1.0f64..0.9).prop_map(|(c, nu)| AngularLaw::Power { c, nu }),
        prop::collection::vec(0.0f64..3.0, 2..12).prop_map(|values| AngularLaw::Table { values }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernel_is_nonnegative_and_cap_bounds_it(
        law in any_law(),
        gamma in -4.0f64..-0.01,
        cap in 0.01f64..10.0,
        lambda in 0.05f64..5.0,
        samples in prop::collection::vec((1e-3f64..20.0, -1.0f64..1.0), 150),
    ) {
        let k = KernelSpec::new(3, gamma, law, 0.1, None).unwrap();
        let capped = k.with_truncation(Some(Truncation::BnCap(cap))).unwrap();
        let near = k.with_truncation(Some(Truncation::NearFar { lambda, side: Side::Near })).unwrap();
        let far = k.with_truncation(Some(Truncation::NearFar { lambda, side: Side::Far })).unwrap();
        for (z, c) in samples {
            let b = k.eval_b(z, c).unwrap();
            let bn = capped.eval_b(z, c).unwrap();
            prop_assert!(b >= 0.0);
            prop_assert!(bn <= b);
            prop_assert_eq!(bn, b.min(cap));
            if z != lambda {
                let split = near.eval_b(z, c).unwrap() + far.eval_b(z, c).unwrap();
                prop_assert_eq!(split, b);
            }
        }
    }
}
