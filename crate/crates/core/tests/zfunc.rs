use std::f64::consts::PI;

use coulomb_lab::periodic::{w_periodic, w_scaled, Torus};
use coulomb_lab::potential::{solve_equilibrium_radial, Potential};
use coulomb_lab::zfunc::*;
use proptest::prelude::*;

// log Z_n evaluated with mpmath at 40 digits from Σ log Γ(k+1).
const REFERENCE: [(usize, f64); 4] = [
    (10, -51.129173504282768525),
    (100, -7160.7014775809566586),
    (1000, -745478.82210936994789),
    (2000, -2990267.8401006031671),
];

#[test]
fn exact_log_z_matches_high_precision_values() {
    for (n, v) in REFERENCE {
        let got = log_z_ginibre_exact(n);
        assert!(((got - v) / v).abs() <= 1e-10, "n = {n}: {got} vs {v}");
    }
}

/// `Σ_{j≤n} (n − j + 1) log j` is `Σ_{k≤n} log k!` without log-gamma.
fn log_z_by_counting(n: usize) -> f64 {
    let nf = n as f64;
    let s: f64 = (1..=n).map(|j| (n - j + 1) as f64 * (j as f64).ln()).sum();
    -0.5 * nf * (nf + 1.0) * nf.ln() + nf * PI.ln() + s
}

#[test]
fn exact_log_z_matches_integer_route() {
    for n in [1, 2, 3, 17, 250, 3000] {
        let a = log_z_ginibre_exact(n);
        let b = log_z_by_counting(n);
        assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0), "n = {n}");
    }
}

#[test]
fn residual_grows_logarithmically() {
    for r in zcheck_sweep(2000, 0.0).iter().filter(|r| r.n >= 10) {
        let q = r.residual.abs() / (r.n as f64).ln();
        assert!((0.05..=5.0).contains(&q), "n = {}: {q}", r.n);
    }
}

#[test]
fn order_n_coefficient_converges() {
    let target = order_n_constant();
    assert!((target - 1.0636680).abs() < 1e-6);
    for n in [100, 500, 2000] {
        let err = (order_n_quotient(n) - target).abs();
        assert!(err <= 10.0 * (n as f64).ln() / n as f64, "n = {n}: {err}");
    }
    // Barnes G: Σ_{k≤n} log k! = log G(n+2) gives the remainder
    // (5/12) log n + ζ'(−1) + ½ log 2π + O(1/n).
    let (a, b, c) = fit_order_n(&[200, 500, 1000, 2000]).unwrap();
    assert!((a - target).abs() < 1e-4, "fit {a}");
    assert!((b - 5.0 / 12.0).abs() < 1e-2, "log coefficient {b}");
    let zeta_prime_minus_one = -0.165_421_143_700_450_93;
    assert!((c - zeta_prime_minus_one - 0.5 * (2.0 * PI).ln()).abs() < 1e-2, "constant {c}");
}

#[test]
fn sandwich_quantity_stays_bounded() {
    let beta = 2.0;
    let i0 = 0.75;
    let vals: Vec<f64> = [10usize, 20, 50, 100, 200, 500, 1000, 2000]
        .iter()
        .map(|&n| {
            let nf = n as f64;
            (log_z_ginibre_exact(n) - (-beta * nf * nf * i0 / 2.0 + beta * nf * nf.ln() / 4.0)) / (nf * beta)
        })
        .collect();
    for v in &vals {
        assert!(v.is_finite() && v.abs() < 1.0, "{vals:?}");
    }
}

#[test]
fn alpha_for_circular_law() {
    let em = solve_equilibrium_radial(&Potential::Quadratic).unwrap();
    let w_tri = w_periodic(&Torus::triangular(), 1e-10).unwrap().w;
    let a = alpha_conjectural(&em, w_tri);
    assert!((a.value - (w_tri / PI + 0.5 * PI.ln())).abs() < 1e-12);
}

#[test]
fn alpha_equals_integral_of_rescaled_lattice_energy() {
    // α = (1/π) ∫_Σ W_{m₀(x)} dx with W_m the triangular energy at density m.
    // For V = a|x|² the density is a/π on a disk of area π/a.
    let w_tri = w_periodic(&Torus::triangular(), 1e-10).unwrap().w;
    for a in [0.5, 1.0, 2.0, 7.0] {
        let em = solve_equilibrium_radial(&Potential::RadialPoly { coeffs: vec![0.0, a] }).unwrap();
        let m = a / PI;
        let wm = w_scaled(&Torus::triangular(), m, 1e-10).unwrap();
        let via_scaling = wm * (PI / a) / PI;
        let alpha = alpha_conjectural(&em, w_tri).value;
        assert!((alpha - via_scaling).abs() < 1e-8, "a = {a}: {alpha} vs {via_scaling}");
    }
}

#[test]
fn alpha_for_quartic_is_finite() {
    let em = solve_equilibrium_radial(&Potential::quartic()).unwrap();
    let w_tri = w_periodic(&Torus::triangular(), 1e-10).unwrap().w;
    let a = alpha_conjectural(&em, w_tri);
    assert!(a.value.is_finite() && a.error < 1e-9);
}

proptest! {
    #[test]
    fn telescoping_consistency(n in 2usize..5000) {
        let nf = n as f64;
        let diff = log_z_ginibre_exact(n) - log_z_ginibre_exact(n - 1);
        let m = nf - 1.0;
        let direct = -0.5 * nf * (nf + 1.0) * nf.ln() + 0.5 * m * (m + 1.0) * m.ln()
            + PI.ln() + statrs::function::gamma::ln_gamma(nf + 1.0);
        prop_assert!((diff - direct).abs() <= 1e-10 * diff.abs().max(1.0) + 1e-9);
    }
}
