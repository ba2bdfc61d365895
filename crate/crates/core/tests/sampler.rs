use coulomb_lab::energy::hamiltonian;
use coulomb_lab::potential::{solve_equilibrium_radial, Potential};
use coulomb_lab::sampler::*;
use coulomb_lab::{Configuration, Vec2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn quadratic() -> (Potential, coulomb_lab::EquilibriumMeasure) {
    let p = Potential::Quadratic;
    let em = solve_equilibrium_radial(&p).unwrap();
    (p, em)
}

#[test]
fn one_particle_second_moment() {
    // w_1 = |x|², so the target density is ∝ exp(−|x|²) with E|x|² = 1.
    let (p, em) = quadratic();
    let params = McmcParams::new(2.0, 1, 101_000, 1_000, 7);
    let (samples, stats) = mcmc_chain(&p, &em, &params).unwrap();
    assert_eq!(samples.len(), 100_000);
    let mean = samples.iter().map(|c| c.points[0].norm_squared()).sum::<f64>() / samples.len() as f64;
    assert!((mean - 1.0).abs() <= 0.02, "E|x|² = {mean}");
    assert!(stats.acceptance_rate > 0.0 && stats.acceptance_rate < 1.0);
}

#[test]
fn frozen_chain_stays_at_two_point_minimum() {
    let (p, em) = quadratic();
    let mut params = McmcParams::new(1e6, 2, 2_000, 100, 3);
    params.initial = Some(Configuration::from_xy(&[[0.5, 0.0], [-0.5, 0.0]]));
    let (samples, stats) = mcmc_chain(&p, &em, &params).unwrap();
    for c in &samples {
        let (a, b) = (c.points[0], c.points[1]);
        assert!(((a - b).norm() - 1.0).abs() <= 1e-2 && (a + b).norm() <= 1e-2);
    }
    let mean = stats.w_n_series.iter().sum::<f64>() / stats.w_n_series.len() as f64;
    assert!(mean <= 1.0 + 1e-2, "mean w = {mean}");
}

#[test]
fn fixed_seed_gives_identical_streams() {
    let (p, em) = quadratic();
    let mut params = McmcParams::new(2.0, 20, 300, 50, 42);
    params.thinning = 3;
    let a = mcmc_chain(&p, &em, &params).unwrap();
    let b = mcmc_chain(&p, &em, &params).unwrap();
    assert_eq!(a, b);
    let chains = mcmc_chains(&p, &em, &params, 3).unwrap();
    assert_eq!(chains[0], a);
    assert_ne!(chains[1].0, chains[0].0);
}

#[test]
fn one_by_one_ginibre_has_unit_second_moment() {
    let mean = (0..10_000u64)
        .map(|seed| ginibre_exact(1, seed).unwrap().points[0].norm_squared())
        .sum::<f64>()
        / 10_000.0;
    assert!((mean - 1.0).abs() <= 0.03, "E|λ|² = {mean}");
}

#[test]
fn ginibre_moduli_follow_gamma_law() {
    // The set {n|λ_k|²} is distributed as independent Gamma(k, 1), k = 1..n,
    // so E|λ|² averaged over the spectrum is (n + 1)/(2n).
    let n = 50;
    let vals: Vec<f64> = (0..200u64)
        .map(|s| ginibre_exact(n, 300 + s).unwrap().points.iter().map(|x| x.norm_squared()).sum::<f64>() / n as f64)
        .collect();
    let m = vals.iter().sum::<f64>() / vals.len() as f64;
    let var = vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (vals.len() - 1) as f64;
    let stderr = (var / vals.len() as f64).sqrt();
    let exact = (n as f64 + 1.0) / (2.0 * n as f64);
    assert!((m - exact).abs() <= 4.0 * stderr, "{m} vs {exact} ± {stderr}");
}

#[test]
fn ginibre_concentrates_on_unit_disk() {
    let cfg = ginibre_exact(400, 2024).unwrap();
    let inside = cfg.points.iter().filter(|x| x.norm() <= 1.05).count();
    assert!(inside as f64 >= 0.99 * 400.0, "{inside} of 400 inside");
}

/// Two-sample Kolmogorov–Smirnov statistic.
fn ks_statistic(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[test]
fn mcmc_and_ginibre_radial_laws_agree() {
    let (p, em) = quadratic();
    let n = 100;
    let mut params = McmcParams::new(2.0, n, 500 + 100 * 20, 500, 5);
    params.thinning = 20;
    let (samples, _) = mcmc_chain(&p, &em, &params).unwrap();
    let r_mcmc: Vec<f64> = samples.iter().flat_map(|c| c.points.iter().map(|x| x.norm())).collect();
    let r_exact: Vec<f64> = (0..100u64)
        .flat_map(|s| ginibre_exact(n, 1000 + s).unwrap().points.into_iter().map(|x| x.norm()))
        .collect();
    assert_eq!(r_mcmc.len(), 10_000);
    let d = ks_statistic(r_mcmc, r_exact);
    assert!(d <= 0.05, "KS = {d}");
}

#[test]
fn incremental_energy_stays_in_sync() {
    let (p, em) = quadratic();
    let params = McmcParams::new(4.0, 50, 600, 10, 8);
    let (samples, stats) = mcmc_chain(&p, &em, &params).unwrap();
    assert!(stats.max_drift <= 1e-9, "drift {}", stats.max_drift);
    let last = samples.last().unwrap();
    let w = hamiltonian(last, &p).unwrap();
    assert!((w - stats.w_n_series.last().unwrap()).abs() <= 1e-9 * w.abs());
}

#[test]
fn far_particles_decide_independently_of_order() {
    let p = Potential::Quadratic;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..200 {
        let base = vec![Vec2::new(-200.0, 0.0), Vec2::new(200.0, 0.0)];
        let moves: Vec<(Vec2, f64)> = (0..2)
            .map(|i| {
                let d = Vec2::new(rng.sample(StandardNormal), rng.sample(StandardNormal)) * 0.5;
                (base[i] + d, rng.gen::<f64>().ln())
            })
            .collect();
        let mut forward = ChainState::new(base.clone(), &p, 2.0).unwrap();
        let f0 = forward.step(0, moves[0].0, moves[0].1);
        let f1 = forward.step(1, moves[1].0, moves[1].1);
        let mut backward = ChainState::new(base, &p, 2.0).unwrap();
        let b1 = backward.step(1, moves[1].0, moves[1].1);
        let b0 = backward.step(0, moves[0].0, moves[0].1);
        assert_eq!((f0, f1), (b0, b1));
        assert_eq!(forward.points, backward.points);
    }
}

#[test]
fn escape_from_support_decays_with_beta() {
    let (p, em) = quadratic();
    let fractions: Vec<f64> = [1.0, 4.0, 16.0]
        .iter()
        .map(|&beta| {
            let mut params = McmcParams::new(beta, 50, 4_200, 200, 21);
            params.thinning = 5;
            let (samples, _) = mcmc_chain(&p, &em, &params).unwrap();
            samples.iter().filter(|c| c.points.iter().any(|x| !em.in_support(*x))).count() as f64
                / samples.len() as f64
        })
        .collect();
    assert!(fractions[0] > fractions[1] && fractions[1] > fractions[2], "{fractions:?}");
}

#[test]
fn white_noise_has_unit_autocorrelation_time() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let series: Vec<f64> = (0..10_000).map(|_| rng.sample(StandardNormal)).collect();
    let d = chain_diagnostics(&series).unwrap();
    assert!((d.act - 1.0).abs() <= 0.2, "act {}", d.act);
    assert!((d.stderr - 0.01).abs() < 0.003);
}

#[test]
fn ar1_autocorrelation_time() {
    let rho: f64 = 0.9;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut x = 0.0;
    let series: Vec<f64> = (0..100_000)
        .map(|_| {
            let e: f64 = rng.sample(StandardNormal);
            x = rho * x + (1.0 - rho * rho).sqrt() * e;
            x
        })
        .collect();
    let act = chain_diagnostics(&series).unwrap().act;
    let exact = (1.0 + rho) / (1.0 - rho);
    assert!((act - exact).abs() <= 0.15 * exact, "act {act}");
}

#[test]
fn constant_series_reports_its_length() {
    let d = chain_diagnostics(&[0.25; 1234]).unwrap();
    assert!(d.degenerate);
    assert_eq!(d.act, 1234.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn eigenvalues_sum_to_trace(n in 1usize..30, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = ginibre_matrix(n, &mut rng);
        let trace = m.trace();
        let sum: nalgebra::Complex<f64> = eigenvalues(m).unwrap().into_iter().sum();
        prop_assert!((sum - trace).norm() <= 1e-8 * trace.norm().max(1.0));
    }

    #[test]
    fn acceptance_rate_is_strictly_inside_unit_interval(beta in 0.5..8.0f64, seed in any::<u64>()) {
        let (p, em) = quadratic();
        let params = McmcParams::new(beta, 10, 20, 2, seed);
        let (_, stats) = mcmc_chain(&p, &em, &params).unwrap();
        prop_assert!(stats.acceptance_rate > 0.0 && stats.acceptance_rate < 1.0);
    }
}
