//! Discrepancies, electric fields and crystallization diagnostics.
//!
//! Discrepancy centers and radii are in blown-up coordinates `x' = √n x`;
//! field quantities are in the original scale.

use std::f64::consts::PI;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::Configuration;
use crate::error::{Error, Result};
use crate::numeric::KahanSum;
use crate::potential::EquilibriumMeasure;
use crate::Vec2;

/// Axis-aligned rectangle `[lo.x, hi.x] × [lo.y, hi.y]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl Rect {
    pub fn new(lo: [f64; 2], hi: [f64; 2]) -> Self {
        Self { lo, hi }
    }

    pub fn square(center: Vec2, half_width: f64) -> Self {
        Self {
            lo: [center.x - half_width, center.y - half_width],
            hi: [center.x + half_width, center.y + half_width],
        }
    }

    pub fn area(&self) -> f64 {
        (self.hi[0] - self.lo[0]) * (self.hi[1] - self.lo[1])
    }

    /// Cell midpoints of a grid with spacing close to `step`, and the cell
    /// area.
    pub fn midpoints(&self, step: f64) -> (Vec<Vec2>, f64) {
        let wx = self.hi[0] - self.lo[0];
        let wy = self.hi[1] - self.lo[1];
        let nx = ((wx / step).round() as usize).max(1);
        let ny = ((wy / step).round() as usize).max(1);
        let (hx, hy) = (wx / nx as f64, wy / ny as f64);
        let mut pts = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                pts.push(Vec2::new(
                    self.lo[0] + (i as f64 + 0.5) * hx,
                    self.lo[1] + (j as f64 + 0.5) * hy,
                ));
            }
        }
        (pts, hx * hy)
    }
}

/// `D(x₀', R) = #{i : |x_i − x₀| ≤ R/√n} − n μ₀(B(x₀, R/√n))`.
pub fn discrepancy(cfg: &Configuration, em: &EquilibriumMeasure, x0_blown: Vec2, r: f64) -> f64 {
    let n = cfg.n() as f64;
    let s = n.sqrt();
    let center = x0_blown / s;
    let radius = r / s;
    let count = cfg
        .points
        .iter()
        .filter(|p| (*p - center).norm() <= radius)
        .count() as f64;
    count - n * em.ball_mass(center, radius)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyField {
    pub centers: Vec<Vec2>,
    pub radius: f64,
    pub values: Vec<f64>,
}

impl DiscrepancyField {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["x", "y", "D"])?;
        for (c, d) in self.centers.iter().zip(&self.values) {
            w.write_record([
                format!("{:.16e}", c.x),
                format!("{:.16e}", c.y),
                format!("{:.16e}", d),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `D(·, R)` at the cell midpoints of a blown-up window.
pub fn discrepancy_field(
    cfg: &Configuration,
    em: &EquilibriumMeasure,
    window_blown: Rect,
    r: f64,
    grid_step: f64,
) -> DiscrepancyField {
    let (centers, _) = window_blown.midpoints(grid_step);
    let values = centers.par_iter().map(|c| discrepancy(cfg, em, *c, r)).collect();
    DiscrepancyField {
        centers,
        radius: r,
        values,
    }
}

/// Midpoint quadrature over a blown-up window of
/// `D(x', R)²/R² · min(1, |D(x', R)|/R²)`.
pub fn discrepancy_moment(
    cfg: &Configuration,
    em: &EquilibriumMeasure,
    window_blown: Rect,
    r: f64,
    grid_step: f64,
) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::param("R", "must be positive"));
    }
    if !(grid_step > 0.0) {
        return Err(Error::param("grid_step", "must be positive"));
    }
    let (centers, cell) = window_blown.midpoints(grid_step);
    let r2 = r * r;
    let terms: Vec<f64> = centers
        .par_iter()
        .map(|c| {
            let d = discrepancy(cfg, em, *c, r);
            d * d / r2 * (d.abs() / r2).min(1.0) * cell
        })
        .collect();
    Ok(terms.into_iter().collect::<KahanSum>().value())
}

/// `H_n(x) = Σ_i −log|x − x_i| − n U^{μ₀}(x)`.
pub fn potential_h(cfg: &Configuration, em: &EquilibriumMeasure, x: Vec2) -> f64 {
    let n = cfg.n() as f64;
    let mut acc = KahanSum::new();
    for p in &cfg.points {
        acc.add(-(x - p).norm().ln());
    }
    acc.add(-n * em.log_potential(x));
    acc.value()
}

/// `E = −∇H_n = Σ_i (x − x_i)/|x − x_i|² + n ∇U^{μ₀}(x)`.
pub fn electric_field(cfg: &Configuration, em: &EquilibriumMeasure, x: Vec2) -> Result<Vec2> {
    let n = cfg.n() as f64;
    let mut e = n * em.grad_log_potential(x);
    for (i, p) in cfg.points.iter().enumerate() {
        let d = x - p;
        let d2 = d.norm_squared();
        if d2 == 0.0 {
            return Err(Error::Singularity(format!("field evaluated at particle {i}")));
        }
        e += d / d2;
    }
    Ok(e)
}

/// Outward flux `∮ E·ν` and circulation `∮ E·τ` over the circle
/// `|x − center| = radius`, by the trapezoidal rule on `nodes` points.
pub fn field_flux_and_circulation(
    cfg: &Configuration,
    em: &EquilibriumMeasure,
    center: Vec2,
    radius: f64,
    nodes: usize,
) -> Result<(f64, f64)> {
    let (mut flux, mut circ) = (KahanSum::new(), KahanSum::new());
    let dt = 2.0 * PI / nodes as f64;
    for k in 0..nodes {
        let t = k as f64 * dt;
        let nu = Vec2::new(t.cos(), t.sin());
        let tau = Vec2::new(-t.sin(), t.cos());
        let e = electric_field(cfg, em, center + radius * nu)?;
        flux.add(e.dot(&nu) * radius * dt);
        circ.add(e.dot(&tau) * radius * dt);
    }
    Ok((flux.value(), circ.value()))
}

/// `(∫_window |E|^q)^{1/q}` by midpoint quadrature, skipping cells whose
/// midpoint lies within `exclusion` of a particle.
pub fn field_lq_norm(
    cfg: &Configuration,
    em: &EquilibriumMeasure,
    window: Rect,
    q: f64,
    grid_step: f64,
    exclusion: f64,
) -> Result<f64> {
    if !(q > 1.0 && q < 2.0) {
        return Err(Error::param("q", "must lie in (1, 2)"));
    }
    if !(grid_step > 0.0) {
        return Err(Error::param("grid_step", "must be positive"));
    }
    let (pts, cell) = window.midpoints(grid_step);
    let ex2 = exclusion * exclusion;
    let terms: Vec<f64> = pts
        .par_iter()
        .map(|x| {
            if cfg.points.iter().any(|p| (x - p).norm_squared() <= ex2) {
                return 0.0;
            }
            electric_field(cfg, em, *x).map_or(0.0, |e| e.norm().powf(q) * cell)
        })
        .collect();
    Ok(terms.into_iter().collect::<KahanSum>().value().powf(1.0 / q))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Psi6 {
    pub per_point: Vec<f64>,
    pub bulk_mean: f64,
    /// Number of points entering `bulk_mean`.
    pub bulk_count: usize,
}

/// Indices of the `k` nearest other points of each point.
fn nearest_neighbors(points: &[Vec2], k: usize) -> Vec<Vec<usize>> {
    points
        .par_iter()
        .enumerate()
        .map(|(i, &x)| {
            let mut d: Vec<(f64, usize)> = points
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(j, p)| ((p - x).norm_squared(), j))
                .collect();
            let k = k.min(d.len());
            d.select_nth_unstable_by(k.saturating_sub(1), |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            d.truncate(k);
            d.into_iter().map(|(_, j)| j).collect()
        })
        .collect()
}

/// `|(1/k) Σ_{nearest k} e^{6iθ}|` for every point.
pub fn psi6_per_point(cfg: &Configuration, k_neighbors: usize) -> Vec<f64> {
    let pts = &cfg.points;
    nearest_neighbors(pts, k_neighbors)
        .into_iter()
        .enumerate()
        .map(|(i, nb)| {
            let (mut re, mut im) = (0.0, 0.0);
            for j in &nb {
                let d = pts[*j] - pts[i];
                let theta = 6.0 * d.y.atan2(d.x);
                re += theta.cos();
                im += theta.sin();
            }
            (re * re + im * im).sqrt() / nb.len() as f64
        })
        .collect()
}

/// Convex hull in counter-clockwise order (monotone chain).
fn convex_hull(points: &[Vec2]) -> Vec<Vec2> {
    let mut p: Vec<Vec2> = points.to_vec();
    p.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    let cross = |o: Vec2, a: Vec2, b: Vec2| (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
    let mut hull: Vec<Vec2> = Vec::with_capacity(2 * p.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Vec2>> = if pass == 0 {
            Box::new(p.iter())
        } else {
            Box::new(p.iter().rev())
        };
        for &x in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], x) <= 0.0 {
                hull.pop();
            }
            hull.push(x);
        }
        hull.pop();
    }
    hull
}

fn polygon_area(poly: &[Vec2]) -> f64 {
    let m = poly.len();
    (0..m)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % m]);
            a.x * b.y - a.y * b.x
        })
        .sum::<f64>()
        .abs()
        / 2.0
}

fn dist_to_polygon_boundary(x: Vec2, poly: &[Vec2]) -> f64 {
    let m = poly.len();
    (0..m)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % m]);
            let ab = b - a;
            let t = ((x - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
            (x - (a + ab * t)).norm()
        })
        .fold(f64::INFINITY, f64::min)
}

fn mean_over(per_point: &[f64], keep: impl Fn(usize) -> bool) -> (f64, usize) {
    let vals: Vec<f64> = per_point
        .iter()
        .enumerate()
        .filter(|(i, _)| keep(*i))
        .map(|(_, v)| *v)
        .collect();
    let count = vals.len();
    let mean = if count == 0 {
        f64::NAN
    } else {
        vals.iter().sum::<f64>() / count as f64
    };
    (mean, count)
}

/// ψ₆ with the bulk taken as points farther than three mean spacings from
/// the boundary of the convex hull of the configuration; the mean spacing is
/// `sqrt(hull area / n)`.
pub fn psi6(cfg: &Configuration, k_neighbors: usize) -> Result<Psi6> {
    let n = cfg.n();
    if n < 8 {
        return Err(Error::param("n", "psi6 needs at least 8 points"));
    }
    let per_point = psi6_per_point(cfg, k_neighbors);
    let hull = convex_hull(&cfg.points);
    let spacing = (polygon_area(&hull) / n as f64).sqrt();
    let (bulk_mean, bulk_count) = mean_over(&per_point, |i| {
        dist_to_polygon_boundary(cfg.points[i], &hull) > 3.0 * spacing
    });
    Ok(Psi6 {
        per_point,
        bulk_mean,
        bulk_count,
    })
}

/// ψ₆ with the bulk taken relative to the support Σ of μ₀; the mean spacing
/// is `sqrt(|Σ|/n)`.
pub fn psi6_in_support(cfg: &Configuration, em: &EquilibriumMeasure, k_neighbors: usize) -> Result<Psi6> {
    let n = cfg.n();
    if n < 8 {
        return Err(Error::param("n", "psi6 needs at least 8 points"));
    }
    let per_point = psi6_per_point(cfg, k_neighbors);
    let spacing = (em.support_area() / n as f64).sqrt();
    let (bulk_mean, bulk_count) = mean_over(&per_point, |i| {
        let x = cfg.points[i];
        em.in_support(x) && em.dist_to_boundary(x) > 3.0 * spacing
    });
    Ok(Psi6 {
        per_point,
        bulk_mean,
        bulk_count,
    })
}
