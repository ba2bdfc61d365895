use std::f64::consts::PI;

use coulomb_lab::energy::*;
use coulomb_lab::potential::{solve_equilibrium_radial, Potential};
use coulomb_lab::{Configuration, Vec2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_in_ball(rng: &mut impl Rng, n: usize, radius: f64) -> Configuration {
    Configuration::new(
        (0..n)
            .map(|_| loop {
                let p = Vec2::new(rng.gen_range(-radius..radius), rng.gen_range(-radius..radius));
                if p.norm() <= radius {
                    break p;
                }
            })
            .collect(),
    )
}

fn points_strategy(max_n: usize, radius: f64) -> impl Strategy<Value = Configuration> {
    prop::collection::vec((-radius..radius, -radius..radius), 1..=max_n)
        .prop_map(|v| Configuration::new(v.into_iter().map(|(x, y)| Vec2::new(x, y)).collect()))
        .prop_filter("distinct points", |c| c.check().is_ok())
}

fn potential_strategy() -> impl Strategy<Value = Potential> {
    prop_oneof![
        Just(Potential::Quadratic),
        Just(Potential::quartic()),
        (0.1..2.0f64, 0.0..1.0f64, 0.0..0.5f64)
            .prop_map(|(a, b, c)| Potential::RadialPoly { coeffs: vec![0.3, a, b, c] }),
    ]
}

#[test]
fn splitting_identity_on_random_configurations() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for p in [Potential::Quadratic, Potential::quartic()] {
        let em = solve_equilibrium_radial(&p).unwrap();
        for _ in 0..200 {
            let n = rng.gen_range(1..=50);
            let cfg = random_in_ball(&mut rng, n, 2.0);
            let r = splitting_report(&cfg, &em, &p).unwrap();
            assert!(r.residual <= 1e-8 * r.w_n.abs().max(1.0), "n = {n}: {r:?}");
            let gap = r.f_n_splitting - r.f_hat_n - 2.0 * r.zeta_sum;
            assert!(gap.abs() <= 1e-9 * r.f_n_splitting.abs().max(1.0));
        }
    }
}

#[test]
fn one_point_outside_support_contributes_its_zeta() {
    let p = Potential::Quadratic;
    let em = solve_equilibrium_radial(&p).unwrap();
    let cfg = Configuration::from_xy(&[[2.0, 0.0], [0.1, 0.2], [-0.3, 0.1], [0.0, -0.5]]);
    let r = splitting_report(&cfg, &em, &p).unwrap();
    let z = 2.0 - 2f64.ln() - 0.5;
    assert!((r.zeta_sum - z).abs() < 1e-14);
    assert!((r.f_n_splitting - r.f_hat_n - 2.0 * z).abs() < 1e-10);
}

#[test]
fn quadratic_energy_functional_decomposition() {
    let p = Potential::Quadratic;
    let em = solve_equilibrium_radial(&p).unwrap();
    assert!((energy_functional_i(&em, &p) - 0.75).abs() < 1e-12);
    assert!((em.l0 - 0.25).abs() < 1e-12);
    assert!((em.i0 - em.l0 - 0.5).abs() < 1e-12);
}

#[test]
fn quartic_energy_functional_is_rule_independent() {
    let p = Potential::quartic();
    let em = solve_equilibrium_radial(&p).unwrap();
    let gl = energy_functional_i(&em, &p);
    assert!((gl - em.i0).abs() < 1e-9, "{gl} vs {}", em.i0);
    // Closed form: U = −log r · r⁴/R★⁴·(1/2)... checked through I₀ = 2c − L₀.
    assert!((em.i0 - (2.0 * em.c - em.l0)).abs() < 1e-10);
}

#[test]
fn gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for p in [Potential::Quadratic, Potential::quartic()] {
        for _ in 0..5 {
            let cfg = random_in_ball(&mut rng, 5, 1.0);
            let g = grad_hamiltonian(&cfg, &p).unwrap();
            let h = 1e-6;
            for i in 0..5 {
                for axis in 0..2 {
                    let mut plus = cfg.clone();
                    let mut minus = cfg.clone();
                    plus.points[i][axis] += h;
                    minus.points[i][axis] -= h;
                    let fd = (hamiltonian(&plus, &p).unwrap() - hamiltonian(&minus, &p).unwrap()) / (2.0 * h);
                    let exact = g[i][axis];
                    assert!((fd - exact).abs() <= 1e-5 * exact.abs().max(1.0), "{fd} vs {exact}");
                }
            }
        }
    }
}

fn fekete_small(n: usize) -> FeketeResult {
    let p = Potential::Quadratic;
    let em = solve_equilibrium_radial(&p).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
    let cfg0 = Configuration::new((0..n).map(|_| em.sample_point(&mut rng)).collect());
    let opts = FeketeOptions {
        multistarts: 20,
        seed: 17,
        ..FeketeOptions::default()
    };
    minimize_fekete(&cfg0, &p, &em, &opts).unwrap()
}

#[test]
fn fekete_one_point_sits_at_origin() {
    let r = fekete_small(1);
    assert!(r.energy.abs() < 1e-15);
    assert!(r.config.points[0].norm() < 1e-8);
    assert!(r.grad_inf < 1e-8);
}

#[test]
fn fekete_two_points_at_unit_distance() {
    let r = fekete_small(2);
    assert!((r.energy - 1.0).abs() < 1e-12);
    let (a, b) = (r.config.points[0], r.config.points[1]);
    assert!(((a - b).norm() - 1.0).abs() < 1e-8);
    assert!((a + b).norm() < 1e-8);
}

#[test]
fn fekete_three_points_form_equilateral_triangle() {
    let r = fekete_small(3);
    assert!((r.energy - 3.0).abs() < 1e-12);
    let p = &r.config.points;
    for i in 0..3 {
        assert!((p[i].norm() - 1.0 / 3f64.sqrt()).abs() < 1e-8);
        assert!(((p[i] - p[(i + 1) % 3]).norm() - 1.0).abs() < 1e-8);
    }
}

#[test]
fn fekete_never_worsens_the_start_and_stays_in_support() {
    let p = Potential::quartic();
    let em = solve_equilibrium_radial(&p).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let cfg0 = Configuration::new((0..30).map(|_| em.sample_point(&mut rng)).collect());
    let w0 = hamiltonian(&cfg0, &p).unwrap();
    let opts = FeketeOptions {
        multistarts: 4,
        seed: 3,
        ..FeketeOptions::default()
    };
    let r = minimize_fekete(&cfg0, &p, &em, &opts).unwrap();
    assert!(r.converged);
    assert!(r.energy <= w0);
    let zeta: f64 = r.config.points.iter().map(|x| em.zeta(*x)).sum();
    assert!(zeta <= 1e-8, "Σζ = {zeta}");
}

#[test]
fn fekete_is_deterministic() {
    let p = Potential::Quadratic;
    let em = solve_equilibrium_radial(&p).unwrap();
    let cfg0 = Configuration::from_xy(&[[0.1, 0.0], [0.0, 0.2], [-0.3, -0.1], [0.4, 0.4], [0.2, -0.5]]);
    let opts = FeketeOptions {
        multistarts: 6,
        seed: 99,
        ..FeketeOptions::default()
    };
    let a = minimize_fekete(&cfg0, &p, &em, &opts).unwrap();
    let b = minimize_fekete(&cfg0, &p, &em, &opts).unwrap();
    assert_eq!(a, b);
}

#[test]
fn translation_changes_only_the_confinement_term() {
    let p = Potential::Quadratic;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let cfg = random_in_ball(&mut rng, 12, 1.0);
    let shift = Vec2::new(0.25, -0.5);
    let moved = cfg.translated(shift);
    let n = cfg.n() as f64;
    let conf = |c: &Configuration| c.points.iter().map(|x| n * p.value(*x)).sum::<f64>();
    let pair = |c: &Configuration| hamiltonian(c, &p).unwrap() - conf(c);
    assert!((pair(&cfg) - pair(&moved)).abs() < 1e-12);
    let dw = hamiltonian(&moved, &p).unwrap() - hamiltonian(&cfg, &p).unwrap();
    assert!((dw - (conf(&moved) - conf(&cfg))).abs() < 1e-12);
}

#[test]
fn equilateral_triangle_hand_value() {
    let r = 1.0 / 3f64.sqrt();
    let cfg = Configuration::new(
        (0..3)
            .map(|k| {
                let a = 2.0 * PI * k as f64 / 3.0;
                Vec2::new(r * a.cos(), r * a.sin())
            })
            .collect(),
    );
    let g = grad_hamiltonian(&cfg, &Potential::Quadratic).unwrap();
    assert!(g.iter().all(|v| v.norm() < 1e-14));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn splitting_residual_is_tiny(p in potential_strategy(), cfg in points_strategy(40, 2.0)) {
        let em = solve_equilibrium_radial(&p).unwrap();
        let r = splitting_report(&cfg, &em, &p).unwrap();
        prop_assert!(r.residual <= 1e-8 * r.w_n.abs().max(1.0), "{:?}", r);
    }

    #[test]
    fn fekete_descent_is_monotone(cfg in points_strategy(12, 1.0), seed in 0u64..1000) {
        let p = Potential::Quadratic;
        let em = solve_equilibrium_radial(&p).unwrap();
        let w0 = hamiltonian(&cfg, &p).unwrap();
        let mut last = w0;
        for iters in [1usize, 2, 5, 20] {
            let opts = FeketeOptions { max_iters: iters, multistarts: 1, seed, ..FeketeOptions::default() };
            let r = match minimize_fekete(&cfg, &p, &em, &opts) {
                Ok(r) => r,
                Err(coulomb_lab::Error::Stagnation { energy, .. }) => FeketeResult {
                    config: cfg.clone(), energy, grad_inf: 0.0, iterations: iters, converged: false, start: 0,
                },
                Err(e) => panic!("{e}"),
            };
            prop_assert!(r.energy <= last + 1e-9 * last.abs().max(1.0));
            last = r.energy;
        }
    }

    #[test]
    fn ordered_pair_sum_is_symmetric(cfg in points_strategy(20, 1.5)) {
        let p = Potential::Quadratic;
        let mut rev = cfg.clone();
        rev.points.reverse();
        let a = hamiltonian(&cfg, &p).unwrap();
        let b = hamiltonian(&rev, &p).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }
}
