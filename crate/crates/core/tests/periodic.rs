use std::f64::consts::PI;

use coulomb_lab::periodic::*;
use coulomb_lab::Vec2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-8;

fn random_torus(rng: &mut ChaCha8Rng) -> Torus {
    let x = rng.gen_range(-0.5..0.5);
    let y = rng.gen_range(0.9..2.5);
    let scale = rng.gen_range(0.5..3.0);
    Torus::from_tau(x, y).unwrap().scaled(scale)
}

#[test]
fn green_respects_lattice_symmetry() {
    let t = Torus::square();
    let a = torus_green(&t, Vec2::new(0.5, 0.5), TOL).unwrap();
    let b = torus_green(&t, Vec2::new(-0.5, 0.5), TOL).unwrap();
    assert!((a - b).abs() <= 2.0 * TOL);
    let c = torus_green(&t, Vec2::new(0.3, 0.1), TOL).unwrap();
    let d = torus_green(&t, Vec2::new(-0.1, 0.3), TOL).unwrap();
    assert!((c - d).abs() <= 2.0 * TOL, "90° rotation: {c} vs {d}");
}

#[test]
fn green_is_independent_of_ewald_parameter() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let t = random_torus(&mut rng);
        let base = PI / t.volume();
        let e1 = Ewald::new(&t, TOL, Some(base)).unwrap();
        let e2 = Ewald::new(&t, TOL, Some(2.0 * base)).unwrap();
        for _ in 0..10 {
            let x = t.u * rng.gen_range(-0.5..0.5) + t.v * rng.gen_range(-0.5..0.5);
            let (g1, g2) = (e1.green(x).unwrap(), e2.green(x).unwrap());
            assert!((g1 - g2).abs() <= 2.0 * TOL, "{g1} vs {g2}");
        }
        let (c1, c2) = (e1.regularized_constant(), e2.regularized_constant());
        assert!((c1 - c2).abs() <= 2.0 * TOL);
    }
    let t = Torus::square();
    let x = Vec2::new(0.5, 0.0);
    let g1 = Ewald::new(&t, TOL, Some(PI)).unwrap().green(x).unwrap();
    let g2 = Ewald::new(&t, TOL, Some(2.0 * PI)).unwrap().green(x).unwrap();
    assert!((g1 - g2).abs() <= 2.0 * TOL);
}

/// Midpoint rule on an N×N grid of the fundamental cell. For a smooth
/// periodic function with a log singularity the error is `a/N² + o(1/N²)`,
/// so two grids are combined by Richardson extrapolation.
fn cell_mean(t: &Torus, ewald: &Ewald, n: usize) -> f64 {
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            let s = (i as f64 + 0.5) / n as f64 - 0.5;
            let r = (j as f64 + 0.5) / n as f64 - 0.5;
            acc += ewald.green(t.u * s + t.v * r).unwrap();
        }
    }
    acc / (n * n) as f64
}

#[test]
fn green_has_zero_mean() {
    for t in [Torus::square(), Torus::triangular(), Torus::from_tau(0.2, 1.7).unwrap().scaled(2.0)] {
        let ewald = Ewald::new(&t, TOL, None).unwrap();
        let coarse = cell_mean(&t, &ewald, 32);
        let fine = cell_mean(&t, &ewald, 64);
        let extrapolated = (4.0 * fine - coarse) / 3.0;
        assert!(extrapolated.abs() <= 10.0 * TOL, "mean {extrapolated} (64×64 raw {fine})");
    }
}

fn richardson_constant(t: &Torus, dir: Vec2) -> f64 {
    let ewald = Ewald::new(t, 1e-12, None).unwrap();
    let f = |h: f64| ewald.green(dir * h).unwrap() + h.ln();
    // G(x) + log|x| = C + O(|x|²) with the next term O(|x|⁴).
    let h = 1e-2;
    let (a, b, c) = (f(h), f(h / 2.0), f(h / 4.0));
    let r1 = (4.0 * b - a) / 3.0;
    let r2 = (4.0 * c - b) / 3.0;
    (16.0 * r2 - r1) / 15.0
}

#[test]
fn regularized_constant_matches_richardson_limit() {
    for t in [Torus::square(), Torus::triangular(), Torus::from_tau(-0.3, 1.2).unwrap()] {
        let analytic = green_regularized_constant(&t, TOL).unwrap();
        let dir = Vec2::new(0.6, 0.8);
        let extrapolated = richardson_constant(&t, dir);
        assert!((analytic - extrapolated).abs() <= 10.0 * TOL, "{analytic} vs {extrapolated}");
    }
}

#[test]
fn regularized_constant_scales_with_log() {
    for t in [Torus::square(), Torus::triangular()] {
        let c = green_regularized_constant(&t, TOL).unwrap();
        for lambda in [0.5, 2.0, 3.7] {
            let cl = green_regularized_constant(&t.scaled(lambda), TOL).unwrap();
            assert!((cl - c - lambda.ln()).abs() <= 10.0 * TOL);
        }
        let x = Vec2::new(0.21, -0.13);
        let g = torus_green(&t, x, TOL).unwrap();
        let gl = torus_green(&t.scaled(2.0), 2.0 * x, TOL).unwrap();
        assert!((g - gl).abs() <= 2.0 * TOL);
    }
}

#[test]
fn rotated_triangular_lattice_has_same_constant() {
    let t = Torus::triangular();
    let rot = nalgebra::Rotation2::new(PI / 3.0);
    let r = Torus::lattice(rot * t.u, rot * t.v).unwrap();
    let a = green_regularized_constant(&t, TOL).unwrap();
    let b = green_regularized_constant(&r, TOL).unwrap();
    assert!((a - b).abs() <= 2.0 * TOL);
}

#[test]
fn triangular_beats_square() {
    let tri = w_periodic(&Torus::triangular(), TOL).unwrap();
    let sq = w_periodic(&Torus::square(), TOL).unwrap();
    assert!(tri.w < sq.w);
    assert!(sq.w - tri.w > 100.0 * (tri.err + sq.err));
}

#[test]
fn single_point_translation_invariance() {
    let a = w_periodic(&Torus::square(), TOL).unwrap().w;
    let t = Torus::new(Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0), vec![Vec2::new(0.3, 0.7)]).unwrap();
    assert_eq!(w_periodic(&t, TOL).unwrap().w, a);
}

#[test]
fn doubled_cell_reproduces_lattice_energy() {
    for (x, y) in [(0.0, 1.0), (0.5, 0.75f64.sqrt()), (0.2, 1.3)] {
        let t = Torus::from_tau(x, y).unwrap();
        let single = w_periodic(&t, TOL).unwrap();
        let doubled = Torus::new(2.0 * t.u, t.v, vec![Vec2::zeros(), t.u]).unwrap();
        let two = w_periodic(&doubled, TOL).unwrap();
        assert!((single.w - two.w).abs() <= 10.0 * TOL, "{} vs {}", single.w, two.w);
    }
}

#[test]
fn relabeling_and_translation_leave_w_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 6;
    let side = (n as f64).sqrt();
    let pts: Vec<Vec2> = (0..n)
        .map(|_| Vec2::new(rng.gen_range(0.0..side), rng.gen_range(0.0..side)))
        .collect();
    let u = Vec2::new(side, 0.0);
    let v = Vec2::new(0.0, side);
    let w0 = w_periodic(&Torus::new(u, v, pts.clone()).unwrap(), TOL).unwrap();
    let mut rev = pts.clone();
    rev.reverse();
    let w1 = w_periodic(&Torus::new(u, v, rev).unwrap(), TOL).unwrap();
    let shift = Vec2::new(0.37, -1.21);
    let moved: Vec<Vec2> = pts.iter().map(|p| p + shift).collect();
    let w2 = w_periodic(&Torus::new(u, v, moved).unwrap(), TOL).unwrap();
    assert!((w0.w - w1.w).abs() <= 1e-12 * w0.w.abs().max(1.0));
    assert!((w0.w - w2.w).abs() <= n as f64 * 10.0 * TOL);
}

#[test]
fn scaling_law_two_paths() {
    for t in [Torus::triangular(), Torus::square()] {
        let w = w_periodic(&t, TOL).unwrap().w;
        assert_eq!(w_scaled(&t, 1.0, TOL).unwrap(), w);
        for m in [0.5, 2.0, PI] {
            let direct = w_scaled(&t, m, TOL).unwrap();
            let formula = m * (w - 0.5 * PI * m.ln());
            assert!((direct - formula).abs() <= 10.0 * TOL, "m = {m}: {direct} vs {formula}");
        }
    }
}

#[test]
fn scan_has_mirror_symmetry_and_monotone_ray() {
    let pairs = [(0.1, 1.2), (0.35, 1.05), (0.45, 1.8)];
    for (x, y) in pairs {
        let a = w_periodic(&Torus::from_tau(x, y).unwrap(), TOL).unwrap().w;
        let b = w_periodic(&Torus::from_tau(-x, y).unwrap(), TOL).unwrap().w;
        assert!((a - b).abs() <= 2.0 * TOL);
    }
    let ray: Vec<(f64, f64)> = (0..20).map(|k| (0.0, 1.0 + 0.1 * k as f64)).collect();
    let scan = lattice_scan(&ray, TOL).unwrap();
    for w in scan.windows(2) {
        assert!(w[1].w > w[0].w);
    }
}

/// `|η(τ)|` from the product `q^{1/24} Π (1 − q^k)`, `q = e^{2πiτ}`.
fn dedekind_eta_abs(x: f64, y: f64) -> f64 {
    let q = nalgebra::Complex::from_polar((-2.0 * PI * y).exp(), 2.0 * PI * x);
    let mut prod = nalgebra::Complex::new(1.0, 0.0);
    let mut qk = q;
    for _ in 0..200 {
        prod *= nalgebra::Complex::new(1.0, 0.0) - qk;
        qk *= q;
    }
    (-PI * y / 12.0).exp() * prod.norm()
}

#[test]
fn regularized_constant_follows_kronecker_limit_formula() {
    for (x, y) in [(0.0, 1.0), (0.5, 0.75f64.sqrt()), (0.2, 1.3), (-0.4, 1.9)] {
        let c = green_regularized_constant(&Torus::from_tau(x, y).unwrap(), TOL).unwrap();
        let eta = dedekind_eta_abs(x, y);
        let expected = -0.5 * (4.0 * PI * PI * y * eta.powi(4)).ln();
        assert!((c - expected).abs() <= 10.0 * TOL, "τ = {x}+{y}i: {c} vs {expected}");
    }
}
