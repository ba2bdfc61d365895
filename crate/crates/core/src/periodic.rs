//! Renormalized energy of periodic configurations.
//!
//! The torus Green function solves `−ΔG = 2π(δ₀ − 1/|T|)` with zero mean. It
//! is evaluated by Ewald splitting with screening `½E₁(α|x|²)`:
//!
//! ```text
//! G(x) = (2π/|T|) Σ_{k≠0} e^{−|k|²/4α} cos(k·x)/|k|²
//!      + Σ_R ½E₁(α|x+R|²) − π/(2α|T|)
//! ```
//!
//! For `n` points in a cell of volume `|T|` at unit background density the
//! energy is `W = (π/|T|) (Σ_{i≠j} G(a_i − a_j) + n C)` with
//! `C = lim_{x→0} G(x) + log|x|`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{exp_integral_e1, KahanSum, EULER_GAMMA};
use crate::Vec2;

/// A flat torus `ℝ²/(uℤ + vℤ)` with points in its fundamental cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Torus {
    pub u: Vec2,
    pub v: Vec2,
    pub points: Vec<Vec2>,
}

impl Torus {
    /// Builds a torus, reducing each point to the centered fundamental cell.
    pub fn new(u: Vec2, v: Vec2, points: Vec<Vec2>) -> Result<Self> {
        let det = u.x * v.y - u.y * v.x;
        if !(det.abs() > 0.0 && det.is_finite()) {
            return Err(Error::param("basis", "lattice vectors are degenerate"));
        }
        let mut t = Self {
            u,
            v,
            points: Vec::new(),
        };
        t.points = points.into_iter().map(|p| t.reduce(p)).collect();
        Ok(t)
    }

    /// One point per cell: the lattice itself.
    pub fn lattice(u: Vec2, v: Vec2) -> Result<Self> {
        Self::new(u, v, vec![Vec2::zeros()])
    }

    /// Unit-volume square lattice.
    pub fn square() -> Self {
        Self::lattice(Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)).expect("valid basis")
    }

    /// Unit-volume triangular lattice.
    pub fn triangular() -> Self {
        Self::from_tau(0.5, 0.75f64.sqrt()).expect("valid basis")
    }

    /// Unit-volume lattice with basis `(1, 0)/√y`, `(x, y)/√y`.
    pub fn from_tau(x: f64, y: f64) -> Result<Self> {
        if !(y > 0.0) {
            return Err(Error::param("tau", "imaginary part must be positive"));
        }
        let s = 1.0 / y.sqrt();
        Self::lattice(Vec2::new(s, 0.0), Vec2::new(s * x, s * y))
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn volume(&self) -> f64 {
        (self.u.x * self.v.y - self.u.y * self.v.x).abs()
    }

    /// The torus and its points scaled by `λ`.
    pub fn scaled(&self, lambda: f64) -> Self {
        Self {
            u: self.u * lambda,
            v: self.v * lambda,
            points: self.points.iter().map(|p| p * lambda).collect(),
        }
    }

    /// Same points, rescaled so that the cell has volume `n`.
    pub fn normalized(&self) -> Self {
        self.scaled((self.n() as f64 / self.volume()).sqrt())
    }

    fn fractional(&self, x: Vec2) -> (f64, f64) {
        let det = self.u.x * self.v.y - self.u.y * self.v.x;
        (
            (x.x * self.v.y - x.y * self.v.x) / det,
            (self.u.x * x.y - self.u.y * x.x) / det,
        )
    }

    /// Representative of `x` with fractional coordinates in `[−½, ½)`.
    pub fn reduce(&self, x: Vec2) -> Vec2 {
        let (s, t) = self.fractional(x);
        let s = s - (s + 0.5).floor();
        let t = t - (t + 0.5).floor();
        self.u * s + self.v * t
    }

    /// Dual basis `b_i` with `b_i · a_j = 2π δ_ij`.
    pub fn reciprocal(&self) -> (Vec2, Vec2) {
        let det = self.u.x * self.v.y - self.u.y * self.v.x;
        (
            2.0 * PI * Vec2::new(self.v.y, -self.v.x) / det,
            2.0 * PI * Vec2::new(-self.u.y, self.u.x) / det,
        )
    }
}

/// Nonzero-or-zero lattice vectors `m₁a + m₂b` with norm at most `radius`.
fn lattice_vectors(a: Vec2, b: Vec2, radius: f64, include_zero: bool) -> Vec<Vec2> {
    let det = (a.x * b.y - a.y * b.x).abs();
    let m1 = (radius * b.norm() / det).ceil() as i64;
    let m2 = (radius * a.norm() / det).ceil() as i64;
    let mut out = Vec::new();
    for i in -m1..=m1 {
        for j in -m2..=m2 {
            if i == 0 && j == 0 && !include_zero {
                continue;
            }
            let r = a * i as f64 + b * j as f64;
            if r.norm() <= radius {
                out.push(r);
            }
        }
    }
    out
}

/// Precomputed Ewald sums for one torus.
#[derive(Clone, Debug)]
pub struct Ewald {
    torus: Torus,
    pub alpha: f64,
    /// Real-space cutoff (for `|x + R|`) and reciprocal cutoff.
    pub radii: [f64; 2],
    /// Bound on the discarded tails of one evaluation.
    pub tail_bound: f64,
    real: Vec<Vec2>,
    recip: Vec<(Vec2, f64)>,
}

impl Ewald {
    /// `alpha = None` uses `π/|T|`, which balances the two sums.
    pub fn new(torus: &Torus, tol: f64, alpha: Option<f64>) -> Result<Self> {
        if !(tol > 0.0) {
            return Err(Error::param("tol", "must be positive"));
        }
        let vol = torus.volume();
        let alpha = alpha.unwrap_or(PI / vol);
        if !(alpha > 0.0) {
            return Err(Error::param("alpha", "must be positive"));
        }
        let target = tol / 10.0;
        let real_tail = |rc: f64| PI / (alpha * vol) * (-alpha * rc * rc).exp() / (2.0 * alpha * rc * rc);
        let recip_tail = |kc: f64| 2.0 * alpha * (-kc * kc / (4.0 * alpha)).exp() / (kc * kc);
        let mut rc = 1.0 / alpha.sqrt();
        while real_tail(rc) > target {
            rc *= 1.05;
        }
        let mut kc = alpha.sqrt();
        while recip_tail(kc) > target {
            kc *= 1.05;
        }
        let diameter = torus.u.norm() + torus.v.norm();
        let real = lattice_vectors(torus.u, torus.v, rc + diameter, true);
        let (b1, b2) = torus.reciprocal();
        let recip = lattice_vectors(b1, b2, kc, false)
            .into_iter()
            .map(|k| {
                let k2 = k.norm_squared();
                (k, 2.0 * PI / vol * (-k2 / (4.0 * alpha)).exp() / k2)
            })
            .collect();
        Ok(Self {
            torus: torus.clone(),
            alpha,
            radii: [rc, kc],
            tail_bound: real_tail(rc) + recip_tail(kc),
            real,
            recip,
        })
    }

    fn background(&self) -> f64 {
        -PI / (2.0 * self.alpha * self.torus.volume())
    }

    /// `G(x)`.
    pub fn green(&self, x: Vec2) -> Result<f64> {
        let x = self.torus.reduce(x);
        let (s, t) = self.torus.fractional(x);
        if s == 0.0 && t == 0.0 {
            return Err(Error::Singularity(
                "torus Green function at a lattice point".into(),
            ));
        }
        let mut acc = KahanSum::new();
        for (k, w) in &self.recip {
            acc.add(w * k.dot(&x).cos());
        }
        for r in &self.real {
            acc.add(0.5 * exp_integral_e1(self.alpha * (x + r).norm_squared()));
        }
        acc.add(self.background());
        Ok(acc.value())
    }

    /// `lim_{x→0} G(x) + log|x|`.
    pub fn regularized_constant(&self) -> f64 {
        let mut acc = KahanSum::new();
        for (_, w) in &self.recip {
            acc.add(*w);
        }
        for r in &self.real {
            if *r != Vec2::zeros() {
                acc.add(0.5 * exp_integral_e1(self.alpha * r.norm_squared()));
            }
        }
        acc.add(self.background());
        acc.add(-0.5 * EULER_GAMMA - 0.5 * self.alpha.ln());
        acc.value()
    }
}

pub fn torus_green(t: &Torus, x: Vec2, tol: f64) -> Result<f64> {
    Ewald::new(t, tol, None)?.green(x)
}

pub fn green_regularized_constant(t: &Torus, tol: f64) -> Result<f64> {
    Ok(Ewald::new(t, tol, None)?.regularized_constant())
}

/// `W` with its error bar and the Ewald parameters used.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WReport {
    pub basis: [[f64; 2]; 2],
    pub n: usize,
    #[serde(rename = "W")]
    pub w: f64,
    pub err: f64,
    pub alpha: f64,
    pub radii: [f64; 2],
}

/// `W = (π/|T|) (Σ_{i≠j} G(a_i − a_j) + n C)` for unit background density.
fn w_of(t: &Torus, tol: f64) -> Result<WReport> {
    let n = t.n();
    if n == 0 {
        return Err(Error::param("points", "torus carries no points"));
    }
    let ewald = Ewald::new(t, tol, None)?;
    let rows: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let mut acc = KahanSum::new();
            for j in 0..n {
                if i != j {
                    acc.add(ewald.green(t.points[i] - t.points[j]).map_err(|_| {
                        Error::SingularConfiguration {
                            i: i.min(j),
                            j: i.max(j),
                        }
                    })?);
                }
            }
            Ok(acc.value())
        })
        .collect::<Result<_>>()?;
    let mut acc: KahanSum = rows.into_iter().collect();
    acc.add(n as f64 * ewald.regularized_constant());
    let scale = PI / t.volume();
    Ok(WReport {
        basis: [[t.u.x, t.u.y], [t.v.x, t.v.y]],
        n,
        w: scale * acc.value(),
        err: scale * (n * n) as f64 * ewald.tail_bound,
        alpha: ewald.alpha,
        radii: ewald.radii,
    })
}

/// `W` of the periodic configuration; requires `|T| = n`.
pub fn w_periodic(t: &Torus, tol: f64) -> Result<WReport> {
    let n = t.n() as f64;
    if (t.volume() - n).abs() > 1e-12 * n {
        return Err(Error::param(
            "basis",
            format!("cell volume {} differs from the number of points {}", t.volume(), n),
        ));
    }
    w_of(t, tol)
}

/// `W` of the configuration rescaled to background density `m`, computed
/// directly by Ewald summation on the torus shrunk by `1/√m`. The cell then
/// has volume `n/m` and `(π/|T|)(Σ G + n C)` is the energy per unit area.
pub fn w_scaled(t: &Torus, m: f64, tol: f64) -> Result<f64> {
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::param("m", "density must be positive"));
    }
    let n = t.n() as f64;
    if (t.volume() - n).abs() > 1e-12 * n {
        return Err(Error::param("basis", "cell volume must equal the number of points"));
    }
    Ok(w_of(&t.scaled(1.0 / m.sqrt()), tol)?.w)
}

/// One sample of [`lattice_scan`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub tau_re: f64,
    pub tau_im: f64,
    #[serde(rename = "W")]
    pub w: f64,
    pub err: f64,
}

/// `nx` values of `Re τ` in `[−½, ½]`; for each, `ny` values of `Im τ` from
/// the arc `|τ| = 1` up to `y_max`.
pub fn default_tau_grid(nx: usize, ny: usize, y_max: f64) -> Vec<(f64, f64)> {
    let mut grid = Vec::with_capacity(nx * ny);
    for i in 0..nx {
        let x = -0.5 + i as f64 / (nx - 1) as f64;
        let y0 = (1.0 - x * x).sqrt();
        for j in 0..ny {
            grid.push((x, y0 + (y_max - y0) * j as f64 / (ny - 1) as f64));
        }
    }
    grid
}

/// `W` of the unit-volume lattice with modular parameter `τ` over the grid.
pub fn lattice_scan(grid: &[(f64, f64)], tol: f64) -> Result<Vec<ScanPoint>> {
    grid.par_iter()
        .map(|&(x, y)| {
            let r = w_periodic(&Torus::from_tau(x, y)?, tol)?;
            Ok(ScanPoint {
                tau_re: x,
                tau_im: y,
                w: r.w,
                err: r.err,
            })
        })
        .collect()
}

/// Smallest `W` of a scan; ties go to the earlier grid point.
pub fn scan_argmin(scan: &[ScanPoint]) -> Option<ScanPoint> {
    scan.iter().copied().reduce(|a, b| if b.w < a.w { b } else { a })
}
