//! The Hamiltonian `w_n`, its splitting into macroscopic and microscopic
//! parts, gradients, and weighted Fekete minimization.

use std::f64::consts::PI;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{self, KahanSum};
use crate::potential::{EquilibriumMeasure, Potential, Support};
use crate::Vec2;

/// `n` labeled points in the original scale.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Configuration {
    pub points: Vec<Vec2>,
}

impl Configuration {
    pub fn new(points: Vec<Vec2>) -> Self {
        Self { points }
    }

    pub fn from_xy(xy: &[[f64; 2]]) -> Self {
        Self::new(xy.iter().map(|p| Vec2::new(p[0], p[1])).collect())
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Blown-up points `√n x_i`.
    pub fn blown_up(&self) -> Vec<Vec2> {
        let s = (self.n() as f64).sqrt();
        self.points.iter().map(|p| p * s).collect()
    }

    pub fn translated(&self, shift: Vec2) -> Self {
        Self::new(self.points.iter().map(|p| p + shift).collect())
    }

    /// Errors on non-finite coordinates or coincident points.
    pub fn check(&self) -> Result<()> {
        for p in &self.points {
            if !(p.x.is_finite() && p.y.is_finite()) {
                return Err(Error::param("points", "non-finite coordinate"));
            }
        }
        for i in 0..self.n() {
            for j in i + 1..self.n() {
                if self.points[i] == self.points[j] {
                    return Err(Error::SingularConfiguration { i, j });
                }
            }
        }
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["x", "y"])?;
        for p in &self.points {
            w.write_record([format!("{:.16e}", p.x), format!("{:.16e}", p.y)])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let mut points = Vec::new();
        for rec in r.deserialize() {
            let (x, y): (f64, f64) = rec?;
            points.push(Vec2::new(x, y));
        }
        Ok(Self::new(points))
    }
}

/// `−Σ_{j≠i} log|x_i − x_j|` for every `i`.
fn pair_rows(points: &[Vec2]) -> Result<Vec<f64>> {
    points
        .par_iter()
        .enumerate()
        .map(|(i, &xi)| {
            let mut acc = KahanSum::new();
            for (j, &xj) in points.iter().enumerate() {
                if j == i {
                    continue;
                }
                let d2 = (xi - xj).norm_squared();
                if d2 == 0.0 {
                    return Err(Error::SingularConfiguration {
                        i: i.min(j),
                        j: i.max(j),
                    });
                }
                acc.add(-0.5 * d2.ln());
            }
            Ok(acc.value())
        })
        .collect()
}

/// `w_n = −Σ_{i≠j} log|x_i − x_j| + n Σ_i V(x_i)` over ordered pairs.
pub fn hamiltonian(cfg: &Configuration, p: &Potential) -> Result<f64> {
    let n = cfg.n() as f64;
    let rows = pair_rows(&cfg.points)?;
    let mut acc: KahanSum = rows.into_iter().collect();
    for x in &cfg.points {
        acc.add(n * p.value(*x));
    }
    Ok(acc.value())
}

/// `∂w_n/∂x_i = −2 Σ_{j≠i} (x_i − x_j)/|x_i − x_j|² + n ∇V(x_i)`.
pub fn grad_hamiltonian(cfg: &Configuration, p: &Potential) -> Result<Vec<Vec2>> {
    let n = cfg.n() as f64;
    let pts = &cfg.points;
    pts.par_iter()
        .enumerate()
        .map(|(i, &xi)| {
            let (mut gx, mut gy) = (KahanSum::new(), KahanSum::new());
            for (j, &xj) in pts.iter().enumerate() {
                if j == i {
                    continue;
                }
                let d = xi - xj;
                let d2 = d.norm_squared();
                if d2 == 0.0 {
                    return Err(Error::SingularConfiguration {
                        i: i.min(j),
                        j: i.max(j),
                    });
                }
                gx.add(-2.0 * d.x / d2);
                gy.add(-2.0 * d.y / d2);
            }
            let gv = p.evaluate(xi)?.grad;
            gx.add(n * gv.x);
            gy.add(n * gv.y);
            Ok(Vec2::new(gx.value(), gy.value()))
        })
        .collect()
}

/// `I(μ₀) = ∬ −log|x−y| dμ₀ dμ₀ + ∫ V dμ₀`.
///
/// Radial measures use composite Gauss–Legendre in `r`, a different rule from
/// the one that produced the cached `I₀`; grid measures sum over nodes.
pub fn energy_functional_i(em: &EquilibriumMeasure, p: &Potential) -> f64 {
    match &em.support {
        Support::Radial(s) => {
            let r_star = s.r_star;
            let f = |r: f64| {
                let x = Vec2::new(r, 0.0);
                (s.log_potential(r) + p.value(x)) * s.density(r) * 2.0 * PI * r
            };
            numeric::integrate_gauss_legendre(f, 0.0, r_star, 20, 64)
        }
        Support::Grid(g) => {
            let cell = g.field.h * g.field.h;
            let mut acc = KahanSum::new();
            for (k, &m) in g.density.iter().enumerate() {
                if m > 0.0 {
                    let x = g.field.node(k % g.field.nx, k / g.field.nx);
                    acc.add((g.field.values[k] + p.value(x)) * m * cell);
                }
            }
            acc.value()
        }
    }
}

/// Both routes to `F_n` and the pieces that connect them.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub w_n: f64,
    /// `(w_n − n² I₀ + (n/2) log n)/n`.
    #[serde(rename = "F_n_splitting")]
    pub f_n_splitting: f64,
    /// `F̂_n + 2 Σ ζ(x_i)` with `F̂_n` from the field energy.
    #[serde(rename = "F_n_direct")]
    pub f_n_direct: f64,
    #[serde(rename = "F_hat_n")]
    pub f_hat_n: f64,
    pub zeta_sum: f64,
    pub residual: f64,
}

/// `W(∇H'_n, 1)/π` expanded into pair, cross and self terms, in blown-up
/// coordinates: `Σ_{i≠j} −log|x'_i − x'_j| + (n²/2) log n − 2n Σ U(x_i) + n² L₀`.
fn field_energy_over_pi(cfg: &Configuration, em: &EquilibriumMeasure) -> Result<f64> {
    let n = cfg.n();
    let nf = n as f64;
    let blown = cfg.blown_up();
    let mut pair = KahanSum::new();
    for i in 0..n {
        for j in i + 1..n {
            let d2 = (blown[i] - blown[j]).norm_squared();
            if d2 == 0.0 {
                return Err(Error::SingularConfiguration { i, j });
            }
            pair.add(-d2.ln());
        }
    }
    let mut total = KahanSum::new();
    total.add(pair.value());
    total.add(0.5 * nf * nf * nf.ln());
    for x in &cfg.points {
        total.add(-2.0 * nf * em.log_potential(*x));
    }
    total.add(nf * nf * em.l0);
    Ok(total.value())
}

pub fn splitting_report(
    cfg: &Configuration,
    em: &EquilibriumMeasure,
    p: &Potential,
) -> Result<EnergyReport> {
    let n = cfg.n();
    if n == 0 {
        return Err(Error::param("points", "configuration is empty"));
    }
    let nf = n as f64;
    let w_n = hamiltonian(cfg, p)?;
    let f_n_splitting = (w_n - nf * nf * em.i0 + 0.5 * nf * nf.ln()) / nf;

    let f_hat_n = field_energy_over_pi(cfg, em)? / nf;
    let zeta_sum: f64 = cfg.points.iter().map(|x| em.zeta(*x)).collect::<KahanSum>().value();
    let f_n_direct = f_hat_n + 2.0 * zeta_sum;
    Ok(EnergyReport {
        w_n,
        f_n_splitting,
        f_n_direct,
        f_hat_n,
        zeta_sum,
        residual: (nf * (f_n_splitting - f_n_direct)).abs(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeketeOptions {
    pub max_iters: usize,
    /// Tolerance on `‖∇w_n‖_∞`; `None` means `1e−8 · n`.
    pub grad_tol: Option<f64>,
    pub multistarts: usize,
    pub seed: u64,
}

impl Default for FeketeOptions {
    fn default() -> Self {
        Self {
            max_iters: 100_000,
            grad_tol: None,
            multistarts: 1,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeketeResult {
    pub config: Configuration,
    pub energy: f64,
    pub grad_inf: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Index of the winning start; start 0 is the supplied configuration.
    pub start: usize,
}

fn inf_norm(g: &[Vec2]) -> f64 {
    g.iter().map(|v| v.x.abs().max(v.y.abs())).fold(0.0, f64::max)
}

/// `w_n(x + s) − w_n(x)` summed term by term so that tiny steps are not lost
/// to cancellation against the O(n²) total.
fn energy_change(cfg: &Configuration, step: &[Vec2], p: &Potential) -> f64 {
    let pts = &cfg.points;
    let n = pts.len();
    let nf = n as f64;
    let rows: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut acc = KahanSum::new();
            for j in i + 1..n {
                let d = pts[i] - pts[j];
                let delta = step[i] - step[j];
                let d2 = d.norm_squared();
                let ratio = (2.0 * d.dot(&delta) + delta.norm_squared()) / d2;
                acc.add(-ratio.ln_1p());
            }
            acc.add(nf * p.value_difference(pts[i], step[i]));
            acc.value()
        })
        .collect();
    rows.into_iter().collect::<KahanSum>().value()
}

/// Polak–Ribière+ conjugate gradient with Armijo backtracking from one start.
fn descend(
    start: Configuration,
    p: &Potential,
    max_iters: usize,
    grad_tol: f64,
) -> (FeketeResult, bool) {
    const ARMIJO: f64 = 1e-4;
    const MIN_STEP: f64 = 1e-16;
    let mut x = start;
    let mut energy = hamiltonian(&x, p).unwrap_or(f64::INFINITY);
    let mut g = match grad_hamiltonian(&x, p) {
        Ok(g) => g,
        Err(_) => {
            return (
                FeketeResult {
                    config: x,
                    energy,
                    grad_inf: f64::INFINITY,
                    iterations: 0,
                    converged: false,
                    start: 0,
                },
                true,
            )
        }
    };
    let mut dir: Vec<Vec2> = g.iter().map(|v| -v).collect();
    let mut alpha = 1.0 / inf_norm(&g).max(1.0) * 0.1 / (x.n() as f64).sqrt();
    let mut stagnated = false;
    let mut iterations = 0;
    while iterations < max_iters && inf_norm(&g) >= grad_tol {
        iterations += 1;
        let mut slope: f64 = g.iter().zip(&dir).map(|(a, b)| a.dot(b)).sum();
        if slope >= 0.0 {
            dir = g.iter().map(|v| -v).collect();
            slope = -g.iter().map(|v| v.norm_squared()).sum::<f64>();
        }
        let try_step = |t: f64| {
            let step: Vec<Vec2> = dir.iter().map(|d| d * t).collect();
            let de = energy_change(&x, &step, p);
            (step, de)
        };
        let dir_max = dir.iter().map(|d| d.norm()).fold(0.0, f64::max);
        let mut t = alpha;
        let accepted = loop {
            let (step, de) = try_step(t);
            if de.is_finite() && de <= ARMIJO * t * slope {
                // Minimizer of the quadratic through the slope at 0 and `de` at t.
                let curv = (de - slope * t) / (t * t);
                let mut best = (t, step, de);
                if curv > 0.0 {
                    let t_q = -slope / (2.0 * curv);
                    if t_q > 0.0 && (t_q - t).abs() > 1e-3 * t {
                        let (step_q, de_q) = try_step(t_q);
                        if de_q.is_finite() && de_q < best.2 && de_q <= ARMIJO * t_q * slope {
                            best = (t_q, step_q, de_q);
                        }
                    }
                }
                t = best.0;
                let trial = Configuration::new(x.points.iter().zip(&best.1).map(|(a, s)| a + s).collect());
                break Some((trial, best.2));
            }
            t *= 0.5;
            if t * dir_max < MIN_STEP {
                break None;
            }
        };
        let Some((trial, de)) = accepted else {
            stagnated = true;
            break;
        };
        let g_new = match grad_hamiltonian(&trial, p) {
            Ok(g) => g,
            Err(_) => {
                stagnated = true;
                break;
            }
        };
        x = trial;
        energy += de;
        let num: f64 = g_new.iter().zip(&g).map(|(a, b)| a.dot(&(a - b))).sum();
        let den: f64 = g.iter().map(|v| v.norm_squared()).sum();
        let beta = (num / den).max(0.0);
        let new_dir: Vec<Vec2> = g_new.iter().zip(&dir).map(|(a, d)| -a + d * beta).collect();
        let new_slope: f64 = g_new.iter().zip(&new_dir).map(|(a, b)| a.dot(b)).sum();
        // Initial step for the next search from the ratio of slopes.
        alpha = if new_slope < 0.0 {
            (t * slope / new_slope).min(4.0 * t)
        } else {
            t
        };
        g = g_new;
        dir = new_dir;
    }
    // Re-anchor the running energy.
    energy = hamiltonian(&x, p).unwrap_or(energy);
    let grad_inf = inf_norm(&g);
    (
        FeketeResult {
            config: x,
            energy,
            grad_inf,
            iterations,
            converged: grad_inf < grad_tol,
            start: 0,
        },
        stagnated,
    )
}

/// Minimizes `w_n` from `cfg0` and from `multistarts − 1` further starts drawn
/// from μ₀. Start `k` uses a ChaCha8 stream seeded with `seed` on stream `k`.
pub fn minimize_fekete(
    cfg0: &Configuration,
    p: &Potential,
    em: &EquilibriumMeasure,
    opts: &FeketeOptions,
) -> Result<FeketeResult> {
    cfg0.check()?;
    let n = cfg0.n();
    if n == 0 {
        return Err(Error::param("n", "need at least one point"));
    }
    let grad_tol = opts.grad_tol.unwrap_or(1e-8 * n as f64);
    let starts = opts.multistarts.max(1);
    let runs: Vec<(FeketeResult, bool)> = (0..starts)
        .into_par_iter()
        .map(|k| {
            let init = if k == 0 {
                cfg0.clone()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
                rng.set_stream(k as u64);
                Configuration::new((0..n).map(|_| em.sample_point(&mut rng)).collect())
            };
            let (mut r, stagnated) = descend(init, p, opts.max_iters, grad_tol);
            r.start = k;
            (r, stagnated)
        })
        .collect();
    let (best, stagnated) = runs
        .into_iter()
        .min_by(|a, b| a.0.energy.total_cmp(&b.0.energy).then(a.0.start.cmp(&b.0.start)))
        .expect("at least one start");
    if stagnated && !best.converged {
        return Err(Error::Stagnation {
            energy: best.energy,
            grad_inf: best.grad_inf,
            best: Box::new(best.config),
        });
    }
    Ok(best)
}
