//! Equilibrium measure on a grid via the obstacle problem.
//!
//! `U^{μ₀}` is the smallest superharmonic function above `c − V/2` that
//! behaves like `−log|x|` far away. On a square domain we impose
//! `U = −log|x − center|` on the boundary, solve the discrete variational
//! inequality with projected SOR on the five-point Laplacian, and adjust `c`
//! in an outer loop until the coincidence set carries unit mass of
//! `ΔV/4π`. Coarser grids are solved first and provide warm starts.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{EquilibriumMeasure, Potential, SampledField, Support};
use crate::error::{Error, Result};
use crate::numeric::{KahanSum, Quadrature};
use crate::Vec2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SquareDomain {
    pub center: [f64; 2],
    pub half_width: f64,
}

impl SquareDomain {
    pub fn centered(half_width: f64) -> Self {
        Self {
            center: [0.0, 0.0],
            half_width,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObstacleOptions {
    /// Relaxation factor; `None` uses the optimal SOR factor of the grid.
    pub omega: Option<f64>,
    /// Stop a PSOR solve when the largest update falls below this.
    pub sweep_tol: f64,
    pub max_sweeps: usize,
    /// Outer loop stops when `|mass − 1|` is below this.
    pub mass_tol: f64,
    pub max_outer: usize,
}

impl Default for ObstacleOptions {
    fn default() -> Self {
        Self {
            omega: None,
            sweep_tol: 1e-10,
            max_sweeps: 200_000,
            mass_tol: 1e-4,
            max_outer: 80,
        }
    }
}

/// Equilibrium measure represented on grid nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSupport {
    /// `U^{μ₀}` at the nodes.
    pub field: SampledField,
    /// Coincidence set Σ.
    pub mask: Vec<bool>,
    /// `m₀` at the nodes (zero off Σ).
    pub density: Vec<f64>,
    /// Nodes of Σ with a neighbour outside Σ.
    boundary: Vec<usize>,
}

impl GridSupport {
    fn nearest(&self, x: Vec2) -> Option<usize> {
        let f = &self.field;
        let i = ((x.x - f.lower[0]) / f.h).round();
        let j = ((x.y - f.lower[1]) / f.h).round();
        if i < 0.0 || j < 0.0 || i >= f.nx as f64 || j >= f.ny as f64 {
            return None;
        }
        Some(j as usize * f.nx + i as usize)
    }

    fn node_point(&self, k: usize) -> Vec2 {
        self.field.node(k % self.field.nx, k / self.field.nx)
    }

    fn cell_area(&self) -> f64 {
        self.field.h * self.field.h
    }

    pub fn contains(&self, x: Vec2) -> bool {
        self.nearest(x).is_some_and(|k| self.mask[k])
    }

    pub fn density_at(&self, x: Vec2) -> f64 {
        self.nearest(x).map_or(0.0, |k| self.density[k])
    }

    pub fn mass(&self) -> f64 {
        self.density.iter().collect::<KahanSum>().value() * self.cell_area()
    }

    pub fn area(&self) -> f64 {
        self.mask.iter().filter(|&&m| m).count() as f64 * self.cell_area()
    }

    /// Radius of the disk with the same area as Σ.
    pub fn equivalent_radius(&self) -> f64 {
        (self.area() / PI).sqrt()
    }

    fn support_nodes(&self) -> impl Iterator<Item = (Vec2, f64)> + '_ {
        self.mask
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(move |(k, _)| (self.node_point(k), self.density[k] * self.cell_area()))
    }

    pub fn log_potential(&self, x: Vec2) -> f64 {
        if let Some(u) = self.field.interpolate(x) {
            return u;
        }
        let mut acc = KahanSum::new();
        for (y, w) in self.support_nodes() {
            acc.add(-w * (x - y).norm().ln());
        }
        acc.value()
    }

    pub fn grad_log_potential(&self, x: Vec2) -> Vec2 {
        if let Some(g) = self.field.interpolate_grad(x) {
            return g;
        }
        let mut g = Vec2::zeros();
        for (y, w) in self.support_nodes() {
            let d = x - y;
            g -= d * (w / d.norm_squared());
        }
        g
    }

    pub fn dist_to_boundary(&self, x: Vec2) -> f64 {
        self.boundary
            .iter()
            .map(|&k| (self.node_point(k) - x).norm())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn ball_mass(&self, center: Vec2, radius: f64) -> f64 {
        let r2 = radius * radius;
        self.support_nodes()
            .filter(|(y, _)| (y - center).norm_squared() <= r2)
            .map(|(_, w)| w)
            .collect::<KahanSum>()
            .value()
    }

    pub fn density_entropy(&self) -> Quadrature {
        let value = self
            .density
            .iter()
            .filter(|&&m| m > 0.0)
            .map(|&m| m * m.ln() * self.cell_area())
            .collect::<KahanSum>()
            .value();
        Quadrature {
            value,
            error: self.boundary.len() as f64 * self.cell_area(),
        }
    }

    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec2 {
        let total: f64 = self.density.iter().sum();
        let mut target = rng.gen::<f64>() * total;
        let mut chosen = 0;
        for (k, &m) in self.density.iter().enumerate() {
            if m <= 0.0 {
                continue;
            }
            chosen = k;
            if target < m {
                break;
            }
            target -= m;
        }
        let h = self.field.h;
        self.node_point(chosen)
            + Vec2::new(
                rng.gen_range(-0.5 * h..0.5 * h),
                rng.gen_range(-0.5 * h..0.5 * h),
            )
    }

    /// Little-endian sidecar: `nx: u32`, `ny: u32`, then `nx·ny` f64 densities
    /// in row-major order.
    pub fn write_density_sidecar(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        out.write_all(&(self.field.nx as u32).to_le_bytes())?;
        out.write_all(&(self.field.ny as u32).to_le_bytes())?;
        for v in &self.density {
            out.write_all(&v.to_le_bytes())?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_density_sidecar(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
        let bytes = std::fs::read(path)?;
        if bytes.len() < 8 {
            return Err(Error::param("density_file", "truncated header"));
        }
        let nx = u32::from_le_bytes(bytes[0..4].try_into().expect("4 bytes")) as usize;
        let ny = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
        if bytes.len() != 8 + 8 * nx * ny {
            return Err(Error::param("density_file", "length does not match header"));
        }
        let values = bytes[8..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok((nx, ny, values))
    }
}

/// One grid level of the discrete obstacle problem.
struct Level {
    n: usize,
    h: f64,
    lower: [f64; 2],
    v: Vec<f64>,
    m0: Vec<f64>,
    u: Vec<f64>,
    omega: f64,
}

impl Level {
    fn new(p: &Potential, domain: &SquareDomain, n: usize, omega: Option<f64>) -> Result<Self> {
        let h = 2.0 * domain.half_width / (n - 1) as f64;
        let lower = [
            domain.center[0] - domain.half_width,
            domain.center[1] - domain.half_width,
        ];
        let center = Vec2::new(domain.center[0], domain.center[1]);
        let mut v = Vec::with_capacity(n * n);
        let mut m0 = Vec::with_capacity(n * n);
        let mut u = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                let x = Vec2::new(lower[0] + i as f64 * h, lower[1] + j as f64 * h);
                let e = p.evaluate(x)?;
                v.push(e.value);
                m0.push(e.laplacian / (4.0 * PI));
                u.push(-((x - center).norm().max(h)).ln());
            }
        }
        let omega = omega.unwrap_or_else(|| 2.0 / (1.0 + (PI / (n - 1) as f64).sin()));
        Ok(Self {
            n,
            h,
            lower,
            v,
            m0,
            u,
            omega,
        })
    }

    /// Projected SOR for fixed `c`; returns the number of sweeps.
    fn solve(&mut self, c: f64, opts: &ObstacleOptions) -> Result<usize> {
        let n = self.n;
        for j in 1..n - 1 {
            for i in 1..n - 1 {
                let k = j * n + i;
                self.u[k] = self.u[k].max(c - 0.5 * self.v[k]);
            }
        }
        let mut last = f64::INFINITY;
        for sweep in 1..=opts.max_sweeps {
            let mut max_update: f64 = 0.0;
            for j in 1..n - 1 {
                let row = j * n;
                for i in 1..n - 1 {
                    let k = row + i;
                    let gs = 0.25 * (self.u[k - 1] + self.u[k + 1] + self.u[k - n] + self.u[k + n]);
                    let old = self.u[k];
                    let new = (old + self.omega * (gs - old)).max(c - 0.5 * self.v[k]);
                    self.u[k] = new;
                    max_update = max_update.max((new - old).abs());
                }
            }
            last = max_update;
            if max_update < opts.sweep_tol {
                return Ok(sweep);
            }
        }
        Err(Error::NoConvergence {
            solver: "projected SOR",
            iterations: opts.max_sweeps,
            residual: last,
        })
    }

    fn coincidence(&self, c: f64) -> Vec<bool> {
        let n = self.n;
        (0..n * n)
            .map(|k| {
                let (i, j) = (k % n, k / n);
                i > 0 && j > 0 && i < n - 1 && j < n - 1 && self.u[k] <= c - 0.5 * self.v[k]
            })
            .collect()
    }

    fn mass(&self, mask: &[bool]) -> f64 {
        mask.iter()
            .zip(&self.m0)
            .filter(|(&m, _)| m)
            .map(|(_, &d)| d)
            .collect::<KahanSum>()
            .value()
            * self.h
            * self.h
    }

    fn touches_boundary(&self, mask: &[bool]) -> bool {
        let n = self.n;
        (0..n).any(|t| {
            mask[n + t] || mask[(n - 2) * n + t] || mask[t * n + 1] || mask[t * n + n - 2]
        })
    }

    /// Bilinear prolongation of `coarse.u` onto this level (2:1 refinement).
    fn prolong_from(&mut self, coarse: &Level) {
        let n = self.n;
        for j in 1..n - 1 {
            for i in 1..n - 1 {
                let (ci, cj) = (i / 2, j / 2);
                let (si, sj) = ((i % 2) as f64 * 0.5, (j % 2) as f64 * 0.5);
                let at = |a: usize, b: usize| coarse.u[b.min(coarse.n - 1) * coarse.n + a.min(coarse.n - 1)];
                self.u[j * n + i] = (1.0 - si) * (1.0 - sj) * at(ci, cj)
                    + si * (1.0 - sj) * at(ci + 1, cj)
                    + (1.0 - si) * sj * at(ci, cj + 1)
                    + si * sj * at(ci + 1, cj + 1);
            }
        }
    }

    /// Rim mass: coincidence nodes with a non-coincident neighbour.
    fn rim(&self, mask: &[bool]) -> Vec<usize> {
        let n = self.n;
        (0..n * n)
            .filter(|&k| {
                let (i, j) = (k % n, k / n);
                mask[k] && i > 0 && j > 0 && !(mask[k - 1] && mask[k + 1] && mask[k - n] && mask[k + n])
            })
            .collect()
    }

    /// Solves at `c` and returns `mass − 1` together with whether a rim
    /// weight in `[0, 1]` yields unit mass. Infinite when Σ reaches the box.
    fn eval(&mut self, c: f64, opts: &ObstacleOptions) -> Result<(f64, bool)> {
        self.solve(c, opts)?;
        let mask = self.coincidence(c);
        if self.touches_boundary(&mask) {
            return Ok((f64::INFINITY, false));
        }
        let f = self.mass(&mask) - 1.0;
        let rim: f64 = self.rim(&mask).iter().map(|&k| self.m0[k]).sum::<f64>() * self.h * self.h;
        Ok((f, f >= 0.0 && f <= rim))
    }

    /// Finds `c` whose coincidence set carries unit mass after rim weighting,
    /// starting from `[guess − width, guess + width]` and widening if needed.
    /// Illinois regula falsi on `mass(c) − 1`; gives up on the rim criterion
    /// once the bracket is below `c_tol`.
    fn normalize(&mut self, guess: f64, width: f64, c_tol: f64, opts: &ObstacleOptions) -> Result<f64> {
        let fail = |guard: usize, residual: f64| Error::NoConvergence {
            solver: "obstacle normalization",
            iterations: guard,
            residual,
        };
        let (mut lo, mut hi) = (guess - width, guess + width);
        let (mut f_lo, ok) = self.eval(lo, opts)?;
        if ok {
            return Ok(lo);
        }
        let mut step = width;
        let mut guard = 0;
        while f_lo >= 0.0 {
            step *= 2.0;
            hi = lo;
            lo -= step;
            let (f, ok) = self.eval(lo, opts)?;
            if ok {
                return Ok(lo);
            }
            f_lo = f;
            guard += 1;
            if guard > 60 {
                return Err(fail(guard, f_lo));
            }
        }
        let (mut f_hi, ok) = self.eval(hi, opts)?;
        if ok {
            return Ok(hi);
        }
        step = width;
        while f_hi < 0.0 {
            step *= 2.0;
            lo = hi;
            f_lo = f_hi;
            hi += step;
            let (f, ok) = self.eval(hi, opts)?;
            if ok {
                return Ok(hi);
            }
            f_hi = f;
            guard += 1;
            if guard > 60 {
                return Err(fail(guard, f_hi));
            }
        }
        if f_hi.is_infinite() {
            // Shrink from above until Σ no longer touches the boundary.
            let mut probe = hi;
            loop {
                probe = 0.5 * (lo + probe);
                let (f, ok) = self.eval(probe, opts)?;
                if ok {
                    return Ok(probe);
                }
                if f.is_finite() {
                    if f >= 0.0 {
                        hi = probe;
                        f_hi = f;
                        break;
                    }
                    lo = probe;
                    f_lo = f;
                    probe = hi;
                }
                guard += 1;
                if guard > 200 {
                    return Err(Error::DomainTooSmall);
                }
            }
        }

        let mut best = if f_lo.abs() < f_hi.abs() { (lo, f_lo) } else { (hi, f_hi) };
        let mut side = 0i8;
        for _ in 0..opts.max_outer {
            if best.1.abs() <= opts.mass_tol || hi - lo < c_tol {
                break;
            }
            let mut c = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
            if !(c > lo && c < hi) {
                c = 0.5 * (lo + hi);
            }
            let (f, ok) = self.eval(c, opts)?;
            if ok {
                return Ok(c);
            }
            if f.abs() < best.1.abs() {
                best = (c, f);
            }
            if f < 0.0 {
                lo = c;
                f_lo = f;
                if side == -1 {
                    f_hi *= 0.5;
                }
                side = -1;
            } else {
                hi = c;
                f_hi = f;
                if side == 1 {
                    f_lo *= 0.5;
                }
                side = 1;
            }
        }
        // Leave the level solved at the selected constant.
        self.solve(best.0, opts)?;
        Ok(best.0)
    }
}

/// Equilibrium measure of `p` on the square `domain` with grid spacing `h`.
///
/// The grid has `2·half_width/h + 1` nodes per side (rounded up to the next
/// size of the form `2^k·m + 1` so that coarse levels nest).
pub fn obstacle_solve_grid(
    p: &Potential,
    domain: SquareDomain,
    h: f64,
    opts: &ObstacleOptions,
) -> Result<EquilibriumMeasure> {
    if !(h > 0.0 && domain.half_width > 0.0) {
        return Err(Error::param("h", "grid spacing and domain must be positive"));
    }
    let intervals = (2.0 * domain.half_width / h).round() as usize;
    if intervals < 8 {
        return Err(Error::param("h", "need at least 8 grid intervals per side"));
    }
    // Coarse levels halve the interval count while it stays even and ≥ 16.
    let mut sizes = vec![intervals];
    while sizes.last().is_some_and(|&m| m % 2 == 0 && m / 2 >= 16) {
        let m = sizes.last().copied().expect("non-empty");
        sizes.push(m / 2);
    }
    sizes.reverse();

    // The discrete constant converges at first order in h, so the next level
    // is started from the Richardson prediction `c_k + (c_k − c_{k−1})/2`.
    let mut history: Vec<f64> = Vec::new();
    let mut previous: Option<Level> = None;
    for (idx, &m) in sizes.iter().enumerate() {
        let mut level = Level::new(p, &domain, m + 1, opts.omega)?;
        if let Some(coarse) = &previous {
            level.prolong_from(coarse);
        }
        let (guess, width) = match history.as_slice() {
            [] => (0.0, 1.0),
            [a] => (*a, 4.0 * level.h),
            [.., a, b] => (b + 0.5 * (b - a), (0.25 * (b - a).abs()).max(level.h * level.h)),
        };
        let c_tol = if idx + 1 == sizes.len() { 1e-12 } else { 1e-3 * level.h };
        history.push(level.normalize(guess, width, c_tol, opts)?);
        previous = Some(level);
    }
    let c = *history.last().expect("at least one level");
    let level = previous.expect("at least one level");
    let mask = level.coincidence(c);
    if level.touches_boundary(&mask) {
        return Err(Error::DomainTooSmall);
    }

    let n = level.n;
    let boundary = level.rim(&mask);
    // Free-boundary nodes carry a common fractional weight θ ∈ [0, 1] so that
    // the discrete measure has unit mass.
    let cell = level.h * level.h;
    let mut density: Vec<f64> = mask
        .iter()
        .zip(&level.m0)
        .map(|(&m, &d)| if m { d } else { 0.0 })
        .collect();
    let rim: f64 = boundary.iter().map(|&k| density[k]).collect::<KahanSum>().value() * cell;
    let total = level.mass(&mask);
    if rim > 0.0 {
        let theta = ((1.0 - (total - rim)) / rim).clamp(0.0, 1.0);
        for &k in &boundary {
            density[k] *= theta;
        }
    }
    let mut l0 = KahanSum::new();
    let mut v_mean = KahanSum::new();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for k in 0..n * n {
        if mask[k] {
            l0.add(level.u[k] * density[k] * cell);
            v_mean.add(level.v[k] * density[k] * cell);
            lo = lo.min(level.m0[k]);
            hi = hi.max(level.m0[k]);
        }
    }
    let field = SampledField {
        lower: level.lower,
        h: level.h,
        nx: n,
        ny: n,
        values: level.u,
    };
    Ok(EquilibriumMeasure {
        support: Support::Grid(GridSupport {
            field,
            mask,
            density,
            boundary,
        }),
        c,
        i0: l0.value() + v_mean.value(),
        l0: l0.value(),
        density_bounds: (lo, hi),
        potential: p.clone(),
    })
}
