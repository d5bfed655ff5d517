use proptest::prelude::*;
use softboltz::collision::{
    conservative_projection, near_cell_average, CollisionOperator, QuadratureOptions, NEAR_RADIUS2,
};
use softboltz::distribution::{gaussian, maxwellian_on_grid, random_mixture, Conserved, DensityField, VelocityGrid};
use softboltz::geometry::{omega_nodes, CollisionFrame};
use softboltz::kernel::{AngularLaw, KernelSpec, Truncation};
use softboltz::quadrature::GaussLegendre;
use std::f64::consts::PI;
use std::sync::Arc;

fn grid(dim: usize, n: usize, l: f64) -> Arc<VelocityGrid> {
    Arc::new(VelocityGrid::new(dim, n, l).unwrap())
}

fn options(dim: usize, n_theta: usize, n_omega: usize, stencil: usize) -> QuadratureOptions {
    let mut o = QuadratureOptions::for_dim(dim);
    o.n_theta = n_theta;
    o.n_omega = n_omega;
    o.stencil = stencil;
    o.threads = 1;
    o
}

fn op(g: &Arc<VelocityGrid>, spec: KernelSpec, o: QuadratureOptions) -> CollisionOperator {
    CollisionOperator::new(g.clone(), spec, o).unwrap()
}

fn max_abs(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |a, b| a.max(b.abs()))
}

/// Lagrange weights of the `s` nodes starting at `a`, evaluated at `u`.
fn lagrange(u: f64, a: i64, s: usize) -> [f64; 7] {
    let mut w = [0.0; 7];
    for (p, x) in w.iter_mut().enumerate().take(s) {
        *x = (0..s).filter(|&q| q != p).map(|q| (u - (a + q as i64) as f64) / (p as f64 - q as f64)).product();
    }
    w
}

struct Reference {
    q: Vec<f64>,
    dissipation: f64,
    leakage: f64,
}

/// Event-by-event sum over cell pairs: the flux `W(f'f'_* − f f_*)Δv^N`
/// enters both pre cells and leaves the Lagrange nodes of both post
/// velocities, with `log f` interpolated at the post velocities.
fn reference(f: &DensityField, spec: &KernelSpec, o: &QuadratureOptions) -> Reference {
    let g = &f.grid;
    let dim = g.dim;
    let n = g.points_per_axis as i64;
    let s = o.stencil;
    let half = (s as i64 - 1) / 2;
    let vol = g.cell_volume;
    let th = GaussLegendre::on(o.n_theta, 0.0, PI);
    let nt = o.n_theta;
    let omegas = omega_nodes(dim, o.n_omega);
    let idx = |m: &[i64]| -> Option<usize> {
        let mut k = 0usize;
        for &x in m.iter().take(dim) {
            if x < 0 || x >= n {
                return None;
            }
            k = k * n as usize + x as usize;
        }
        Some(k)
    };
    let logs: Vec<f64> = f.values.iter().map(|v| v.ln()).collect();
    let mut q = vec![0.0; g.len()];
    let mut dissipation = 0.0;
    let mut leakage = 0.0;
    let cells = g.len();
    let mut nodes: Vec<(usize, usize, f64)> = Vec::with_capacity(343);
    for i in 0..cells {
        let mi = g.multi_index(i);
        for j in 0..cells {
            let mj = g.multi_index(j);
            let mut m = [0i64; 3];
            for d in 0..dim {
                m[d] = mj[d] as i64 - mi[d] as i64;
            }
            if m.iter().copied().find(|x| *x != 0).unwrap_or(0) <= 0 {
                continue;
            }
            let mv = [m[0] as f64, m[1] as f64, if dim == 3 { m[2] as f64 } else { 0.0 }];
            let rm2: i64 = m.iter().map(|x| x * x).sum();
            let rm = (rm2 as f64).sqrt();
            let z = rm * g.dv;
            let k = [-mv[0] / rm, -mv[1] / rm, -mv[2] / rm];
            let frame = CollisionFrame::from_direction(dim, k);
            let b = f.values[i] * f.values[j];
            for qn in 0..nt / 2 {
                let t = th.nodes[qn];
                let tr = th.nodes[nt - 1 - qn];
                let (bt, btr) = if rm2 <= NEAR_RADIUS2 as i64 {
                    (near_cell_average(spec, g.dv, &mv, t), near_cell_average(spec, g.dv, &mv, tr))
                } else {
                    (spec.value_at(z, t), spec.value_at(z, tr))
                };
                for &(phi, wo) in &omegas {
                    let we = th.weights[qn] * t.sin().powi(dim as i32 - 2) * wo;
                    let w = 0.5 * we * (bt + btr);
                    if w == 0.0 {
                        continue;
                    }
                    let om = frame.omega(phi);
                    // per axis: first node and weights of v' (offset u from
                    // cell i) and of v'_* (offset m − u)
                    let mut post = [(0i64, [0.0; 7]); 3];
                    for d in 0..dim {
                        let sig = t.cos() * k[d] + t.sin() * om[d];
                        let u = 0.5 * mv[d] + 0.5 * rm * sig;
                        let a = (u + 0.5).floor() as i64 - half;
                        post[d] = (a, lagrange(u, a, s));
                    }
                    nodes.clear();
                    let mut inside = true;
                    let count = s.pow(dim as u32);
                    for c in 0..count {
                        let mut rem = c;
                        let mut pa = [0i64; 3];
                        let mut pb = [0i64; 3];
                        let mut w = 1.0;
                        for d in (0..dim).rev() {
                            let p = rem % s;
                            rem /= s;
                            pa[d] = mi[d] as i64 + post[d].0 + p as i64;
                            pb[d] = mi[d] as i64 + m[d] - post[d].0 - p as i64;
                            w *= post[d].1[p];
                        }
                        match (idx(&pa), idx(&pb)) {
                            (Some(x), Some(y)) => nodes.push((x, y, w)),
                            _ => {
                                inside = false;
                                break;
                            }
                        }
                    }
                    if !inside {
                        leakage += w * b * vol * vol;
                        continue;
                    }
                    let lp: f64 = nodes.iter().map(|(x, y, w)| w * (logs[*x] + logs[*y])).sum();
                    let lp = lp.min(700.0);
                    let p = lp.exp();
                    let flux = w * vol * (p - b);
                    q[i] += flux;
                    q[j] += flux;
                    for (x, y, wn) in &nodes {
                        q[*x] -= wn * flux;
                        q[*y] -= wn * flux;
                    }
                    dissipation += w * (p - b) * (lp - b.ln()) * vol * vol;
                }
            }
        }
    }
    Reference { q, dissipation, leakage }
}

fn compare_with_reference(f: &DensityField, spec: KernelSpec, o: QuadratureOptions) {
    let r = reference(f, &spec, &o);
    let e = op(&f.grid, spec, o).evaluate(f);
    let scale = max_abs(&r.q);
    for (a, b) in e.q.iter().zip(&r.q) {
        assert!((a - b).abs() <= 1e-11 * scale, "{a} {b}");
    }
    assert!((e.dissipation - r.dissipation).abs() <= 1e-11 * r.dissipation);
    assert!((e.leakage - r.leakage).abs() <= 1e-11 * r.leakage.max(1e-300), "{} {}", e.leakage, r.leakage);
}

#[test]
fn matches_event_reference_2d() {
    let g = grid(2, 16, 4.0);
    let f = gaussian(&g, 1.0, [0.4, -0.3, 0.0], [0.5, 0.9, 1.0]);
    for (gamma, stencil) in [(-0.5, 3), (-1.5, 5), (-0.5, 7)] {
        let spec = KernelSpec::new(2, gamma, AngularLaw::Power { c: 0.7, nu: 0.4 }, 0.1, None).unwrap();
        compare_with_reference(&f, spec, options(2, 8, 2, stencil));
    }
    let capped = KernelSpec::power_law(2, -3.0).unwrap().with_truncation(Some(Truncation::BnCap(2.0))).unwrap();
    compare_with_reference(&f, capped, options(2, 6, 2, 3));
}

#[test]
fn matches_event_reference_3d() {
    let g = grid(3, 16, 4.5);
    let f = gaussian(&g, 1.0, [0.3, 0.0, -0.2], [0.6, 0.8, 1.1]);
    let spec = KernelSpec::power_law(3, -1.0).unwrap();
    compare_with_reference(&f, spec, options(3, 2, 3, 3));
}

#[test]
fn maxwellians_are_equilibria() {
    for (dim, n) in [(2, 32), (3, 16)] {
        let g = grid(dim, n, 6.0);
        let m = maxwellian_on_grid(&g);
        for stencil in [3, 5] {
            let o = op(&g, KernelSpec::power_law(dim, -1.0).unwrap(), options(dim, 8, 4, stencil));
            let e = o.evaluate(&m);
            let loss: Vec<f64> = o.loss(&m).iter().zip(&m.values).map(|(l, f)| l * f).collect();
            assert!(max_abs(&e.q) <= 1e-13 * max_abs(&loss), "{dim} {stencil} {}", max_abs(&e.q));
            assert!(e.dissipation.abs() <= 1e-20);
        }
    }
}

#[test]
fn gain_of_a_maxwellian_is_its_loss() {
    let g = grid(2, 32, 6.0);
    let m = maxwellian_on_grid(&g);
    let o = op(&g, KernelSpec::power_law(2, -0.5).unwrap(), options(2, 16, 2, 3));
    let gain = o.gain(&m);
    let loss = o.loss(&m);
    for ((a, l), f) in gain.iter().zip(&loss).zip(&m.values) {
        assert!((a - f * l).abs() <= 1e-13 * (f * l).max(1e-300) + 1e-300, "{a} {}", f * l);
    }
}

#[test]
fn gain_and_loss_carry_the_same_mass() {
    let g = grid(2, 32, 6.0);
    let o = op(&g, KernelSpec::power_law(2, -1.0).unwrap(), options(2, 16, 2, 3));
    for index in 0..5 {
        let f = random_mixture(&g, 3, index).unwrap();
        let gain: f64 = o.gain(&f).iter().sum::<f64>() * g.cell_volume;
        let loss: f64 = o.loss(&f).iter().zip(&f.values).map(|(l, v)| l * v).sum::<f64>() * g.cell_volume;
        assert!((gain - loss).abs() <= 1e-8 * loss, "{gain} {loss}");
    }
}

#[test]
fn random_fields_conserve_and_dissipate() {
    let g = grid(2, 32, 6.0);
    let o = op(&g, KernelSpec::power_law(2, -1.5).unwrap(), options(2, 16, 2, 3));
    for index in 0..50 {
        let f = random_mixture(&g, 17, index).unwrap();
        let e = o.evaluate(&f);
        let scale = e.q.iter().map(|x| x.abs()).sum::<f64>() * g.cell_volume;
        let c = Conserved::of(&DensityField { grid: g.clone(), values: e.q.clone() });
        assert!(c.mass.abs() <= 1e-13 * scale);
        assert!(c.momentum[0].abs().max(c.momentum[1].abs()) <= 1e-13 * scale);
        assert!(c.energy.abs() <= 1e-12 * scale);
        assert!(e.dissipation >= 0.0);
    }
}

#[test]
fn loss_weight_follows_the_power_law() {
    // Beyond the near-cell radius A(m)Δv^N = A₀ |z|^γ Δv^N, and A₀ = 2π for
    // the constant angular law in 2D.
    let g = grid(2, 32, 6.0);
    for gamma in [-0.5, -1.5, -3.0] {
        let o = op(&g, KernelSpec::power_law(2, gamma).unwrap(), options(2, 16, 2, 3));
        for m in [[3, 0], [2, 2], [-5, 1], [7, -7], [0, 31]] {
            let z = g.dv * ((m[0] * m[0] + m[1] * m[1]) as f64).sqrt();
            let exact = 2.0 * PI * z.powf(gamma) * g.cell_volume;
            let a = o.loss_weight(&m);
            assert!((a - exact).abs() <= 1e-12 * exact, "{gamma} {m:?} {a} {exact}");
        }
    }
}

#[test]
fn loss_of_a_point_mass_scales_with_distance() {
    let g = grid(2, 32, 6.0);
    let gamma = -1.0;
    let o = op(&g, KernelSpec::power_law(2, gamma).unwrap(), options(2, 16, 2, 3));
    let center = (16 * 32 + 16) as usize;
    let mut f = DensityField { grid: g.clone(), values: vec![0.0; g.len()] };
    f.values[center] = 1.0;
    let l = o.loss(&f);
    let c = g.centers[center];
    for (i, v) in g.centers.iter().enumerate() {
        let r2 = (v[0] - c[0]).powi(2) + (v[1] - c[1]).powi(2);
        if r2 > 5.0 * g.dv * g.dv {
            let exact = 2.0 * PI * r2.sqrt().powf(gamma) * g.cell_volume;
            assert!((l[i] - exact).abs() <= 1e-12 * exact);
        }
    }
}

#[test]
fn loss_is_positive_on_positive_fields() {
    let g = grid(2, 32, 6.0);
    for gamma in [-0.5, -2.5] {
        let o = op(&g, KernelSpec::power_law(2, gamma).unwrap(), options(2, 16, 2, 3));
        let f = random_mixture(&g, 5, 1).unwrap();
        assert!(o.loss(&f).iter().all(|x| *x > 0.0));
    }
}

#[test]
fn weighted_dissipation_is_monotone_and_log_convex() {
    let g = grid(2, 32, 6.0);
    let o = op(&g, KernelSpec::power_law(2, -1.0).unwrap(), options(2, 16, 2, 3));
    for index in 0..10 {
        let f = random_mixture(&g, 23, index).unwrap();
        let e = o.evaluate(&f);
        let ks = [2.0, 3.0, 4.0, 5.0, 6.0];
        let d: Vec<f64> = ks.iter().map(|k| e.weighted_dissipation(&o, *k)).collect();
        for w in d.windows(2) {
            assert!(w[1] >= w[0]);
        }
        // Hölder in the weight exponent: 𝒟_{(a+b)/2}² ≤ 𝒟_a 𝒟_b
        for (a, b, c) in [(0, 2, 4), (0, 1, 2), (1, 2, 3)] {
            let (ka, kb) = (ks[a], ks[c]);
            assert_eq!(ks[b], 0.5 * (ka + kb));
            assert!(d[b] * d[b] <= d[a] * d[c] * (1.0 + 1e-12));
        }
    }
    assert!(o.weighted_dissipation(&maxwellian_on_grid(&g), 1.0).is_err());
}

#[test]
fn thread_count_does_not_change_the_sums() {
    let g = grid(2, 32, 6.0);
    let f = random_mixture(&g, 9, 0).unwrap();
    let spec = KernelSpec::power_law(2, -1.0).unwrap();
    let one = op(&g, spec.clone(), options(2, 16, 2, 3)).evaluate(&f);
    let mut o3 = options(2, 16, 2, 3);
    o3.threads = 3;
    let three = op(&g, spec, o3).evaluate(&f);
    let scale = max_abs(&one.q);
    for (a, b) in one.q.iter().zip(&three.q) {
        assert!((a - b).abs() <= 1e-14 * scale);
    }
    assert!((one.dissipation - three.dissipation).abs() <= 1e-13 * one.dissipation);
}

#[test]
fn invalid_options_are_rejected() {
    let g = grid(2, 16, 4.0);
    let spec = KernelSpec::power_law(2, -1.0).unwrap();
    for (nt, no, s) in [(7, 2, 3), (0, 2, 3), (8, 0, 3), (8, 2, 4), (8, 2, 9), (8, 2, 1)] {
        assert!(CollisionOperator::new(g.clone(), spec.clone(), options(2, nt, no, s)).is_err());
    }
    assert!(CollisionOperator::new(g.clone(), KernelSpec::power_law(3, -1.0).unwrap(), options(2, 8, 2, 3)).is_err());
    let strong = KernelSpec::new(2, -0.5, AngularLaw::Power { c: 1.0, nu: 1.5 }, 1.0, None).unwrap();
    assert!(CollisionOperator::new(g, strong, options(2, 8, 2, 3)).is_err());
}

#[test]
fn projection_keeps_fields_with_exact_moments() {
    let g = grid(2, 32, 6.0);
    let f = random_mixture(&g, 31, 2).unwrap();
    let p = conservative_projection(&f, &Conserved::of(&f)).unwrap();
    for (a, b) in p.values.iter().zip(&f.values) {
        assert!((a - b).abs() <= 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn projection_hits_targets_and_is_idempotent(
        index in 0u64..1000,
        noise in prop::collection::vec(-1e-3f64..1e-3, 16),
        mass in 0.5f64..2.0,
        ux in -0.5f64..0.5,
        energy in 1.5f64..3.0,
    ) {
        let g = grid(2, 32, 6.0);
        let mut f = random_mixture(&g, 41, index).unwrap();
        for (k, e) in noise.iter().enumerate() {
            let i = (k * 61 + 200) % g.len();
            f.values[i] = (f.values[i] + e).max(0.0);
        }
        let targets = Conserved { mass, momentum: [ux * mass, 0.0, 0.0], energy: energy * mass };
        let p = conservative_projection(&f, &targets).unwrap();
        prop_assert!(p.values.iter().all(|x| *x >= 0.0));
        prop_assert!(Conserved::of(&p).max_relative_drift(&targets) <= 1e-12);
        let q = conservative_projection(&p, &targets).unwrap();
        for (a, b) in p.values.iter().zip(&q.values) {
            prop_assert!((a - b).abs() <= 1e-13);
        }
    }
}
