//! Confining potentials and their equilibrium measures.
//!
//! A [`Potential`] is either the quadratic `|x|²`, an even radial polynomial
//! `Σ a_k r^{2k}`, or a field sampled on a square grid. For radial kinds the
//! equilibrium measure is computed semi-analytically: its density is
//! `ΔV/4π` on the disk of radius `R★` solving `R V'(R) = 2`. Grid potentials
//! go through the obstacle-problem solver in [`obstacle`].

pub mod obstacle;

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric;
use crate::Vec2;

pub use obstacle::{obstacle_solve_grid, GridSupport, ObstacleOptions, SquareDomain};

/// Absolute tolerance for the radial quadratures producing `I₀`, `L₀` and `U`.
pub const QUAD_TOL: f64 = 1e-12;

/// Negative values of ζ above this threshold are floating-point noise.
pub const ZETA_CLAMP: f64 = 1e-10;

/// Bracket for the support radius bisection.
pub const SUPPORT_BRACKET: (f64, f64) = (1e-6, 1e6);

/// `V`, `∇V` and `ΔV` at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PotentialEval {
    pub value: f64,
    pub grad: Vec2,
    pub laplacian: f64,
}

/// Values of a potential sampled on a uniform grid, row-major with `x`
/// varying fastest. Off-node values use bilinear interpolation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledField {
    /// Coordinates of node `(0, 0)`.
    pub lower: [f64; 2],
    pub h: f64,
    pub nx: usize,
    pub ny: usize,
    pub values: Vec<f64>,
}

impl SampledField {
    pub fn from_fn(lower: [f64; 2], h: f64, nx: usize, ny: usize, f: impl Fn(Vec2) -> f64) -> Self {
        let mut values = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                values.push(f(Vec2::new(lower[0] + i as f64 * h, lower[1] + j as f64 * h)));
            }
        }
        Self {
            lower,
            h,
            nx,
            ny,
            values,
        }
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> Vec2 {
        Vec2::new(
            self.lower[0] + i as f64 * self.h,
            self.lower[1] + j as f64 * self.h,
        )
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nx + i]
    }

    pub fn upper(&self) -> [f64; 2] {
        [
            self.lower[0] + (self.nx - 1) as f64 * self.h,
            self.lower[1] + (self.ny - 1) as f64 * self.h,
        ]
    }

    pub fn contains(&self, x: Vec2) -> bool {
        let up = self.upper();
        x.x >= self.lower[0] && x.x <= up[0] && x.y >= self.lower[1] && x.y <= up[1]
    }

    /// Cell index and local coordinates in `[0, 1]²`.
    fn locate(&self, x: Vec2) -> Option<(usize, usize, f64, f64)> {
        if !self.contains(x) || self.nx < 2 || self.ny < 2 {
            return None;
        }
        let fx = (x.x - self.lower[0]) / self.h;
        let fy = (x.y - self.lower[1]) / self.h;
        let i = (fx.floor() as usize).min(self.nx - 2);
        let j = (fy.floor() as usize).min(self.ny - 2);
        Some((i, j, fx - i as f64, fy - j as f64))
    }

    pub fn interpolate(&self, x: Vec2) -> Option<f64> {
        let (i, j, s, t) = self.locate(x)?;
        Some(
            (1.0 - s) * (1.0 - t) * self.at(i, j)
                + s * (1.0 - t) * self.at(i + 1, j)
                + (1.0 - s) * t * self.at(i, j + 1)
                + s * t * self.at(i + 1, j + 1),
        )
    }

    /// Gradient of the bilinear interpolant.
    pub fn interpolate_grad(&self, x: Vec2) -> Option<Vec2> {
        let (i, j, s, t) = self.locate(x)?;
        let (f00, f10, f01, f11) = (
            self.at(i, j),
            self.at(i + 1, j),
            self.at(i, j + 1),
            self.at(i + 1, j + 1),
        );
        let dx = ((1.0 - t) * (f10 - f00) + t * (f11 - f01)) / self.h;
        let dy = ((1.0 - s) * (f01 - f00) + s * (f11 - f10)) / self.h;
        Some(Vec2::new(dx, dy))
    }

    /// Five-point Laplacian at node `(i, j)`, one-sided rows copied at edges.
    pub fn node_laplacian(&self, i: usize, j: usize) -> f64 {
        let i = i.clamp(1, self.nx - 2);
        let j = j.clamp(1, self.ny - 2);
        (self.at(i + 1, j) + self.at(i - 1, j) + self.at(i, j + 1) + self.at(i, j - 1)
            - 4.0 * self.at(i, j))
            / (self.h * self.h)
    }

    /// Bilinear interpolation of the node Laplacians.
    pub fn interpolate_laplacian(&self, x: Vec2) -> Option<f64> {
        let (i, j, s, t) = self.locate(x)?;
        Some(
            (1.0 - s) * (1.0 - t) * self.node_laplacian(i, j)
                + s * (1.0 - t) * self.node_laplacian(i + 1, j)
                + (1.0 - s) * t * self.node_laplacian(i, j + 1)
                + s * t * self.node_laplacian(i + 1, j + 1),
        )
    }
}

/// The confining potential `V`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Potential {
    /// `V(x) = |x|²`.
    Quadratic,
    /// `V(x) = Σ_k coeffs[k] |x|^{2k}`.
    RadialPoly { coeffs: Vec<f64> },
    /// `V` sampled on a grid.
    Grid(SampledField),
}

impl Potential {
    pub fn quartic() -> Self {
        Potential::RadialPoly {
            coeffs: vec![0.0, 0.0, 1.0],
        }
    }

    /// Coefficients of the even polynomial in `r²` for radial kinds.
    pub fn radial_coeffs(&self) -> Option<Vec<f64>> {
        match self {
            Potential::Quadratic => Some(vec![0.0, 1.0]),
            Potential::RadialPoly { coeffs } => Some(coeffs.clone()),
            Potential::Grid(_) => None,
        }
    }

    pub fn is_radial(&self) -> bool {
        !matches!(self, Potential::Grid(_))
    }

    /// `V(x)`; `+∞` outside the domain of a grid potential.
    #[inline]
    pub fn value(&self, x: Vec2) -> f64 {
        match self {
            Potential::Quadratic => x.norm_squared(),
            Potential::RadialPoly { coeffs } => poly_in_r2(coeffs, x.norm_squared()),
            Potential::Grid(g) => g.interpolate(x).unwrap_or(f64::INFINITY),
        }
    }

    /// `V(x + s) − V(x)` without cancellation for the analytic kinds.
    pub fn value_difference(&self, x: Vec2, s: Vec2) -> f64 {
        match self {
            Potential::Quadratic => 2.0 * x.dot(&s) + s.norm_squared(),
            Potential::RadialPoly { coeffs } => {
                let r2 = x.norm_squared();
                let y = x + s;
                let q2 = y.norm_squared();
                let d = 2.0 * x.dot(&s) + s.norm_squared();
                // q^{2k} − r^{2k} = (q² − r²) Σ_{j<k} q^{2j} r^{2(k−1−j)}
                let mut acc = 0.0;
                for (k, &a) in coeffs.iter().enumerate().skip(1) {
                    if a == 0.0 {
                        continue;
                    }
                    let mut geom = 0.0;
                    for j in 0..k {
                        geom += q2.powi(j as i32) * r2.powi((k - 1 - j) as i32);
                    }
                    acc += a * geom;
                }
                d * acc
            }
            Potential::Grid(_) => self.value(x + s) - self.value(x),
        }
    }

    /// `V`, `∇V` and `ΔV` at `x`.
    pub fn evaluate(&self, x: Vec2) -> Result<PotentialEval> {
        if !(x.x.is_finite() && x.y.is_finite()) {
            return Err(Error::OutOfDomain { x: x.x, y: x.y });
        }
        match self {
            Potential::Quadratic => Ok(PotentialEval {
                value: x.norm_squared(),
                grad: 2.0 * x,
                laplacian: 4.0,
            }),
            Potential::RadialPoly { coeffs } => {
                let r2 = x.norm_squared();
                let value = poly_in_r2(coeffs, r2);
                // ∇(r^{2k}) = 2k r^{2k−2} x, Δ(r^{2k}) = 4k² r^{2k−2}
                let mut radial = 0.0;
                let mut lap = 0.0;
                for (k, &a) in coeffs.iter().enumerate().skip(1) {
                    let rk = r2.powi(k as i32 - 1);
                    radial += a * 2.0 * k as f64 * rk;
                    lap += a * 4.0 * (k * k) as f64 * rk;
                }
                Ok(PotentialEval {
                    value,
                    grad: radial * x,
                    laplacian: lap,
                })
            }
            Potential::Grid(g) => {
                let value = g
                    .interpolate(x)
                    .ok_or(Error::OutOfDomain { x: x.x, y: x.y })?;
                Ok(PotentialEval {
                    value,
                    grad: g.interpolate_grad(x).expect("inside domain"),
                    laplacian: g.interpolate_laplacian(x).expect("inside domain"),
                })
            }
        }
    }

    /// Laplacian of V, used for the equilibrium density `ΔV/4π`.
    pub fn laplacian(&self, x: Vec2) -> Result<f64> {
        self.evaluate(x).map(|e| e.laplacian)
    }

    /// Checks the growth and density-bound assumptions that are testable at
    /// desk scale and returns the bounds `(m̲, m̄)` of `ΔV/4π` on the candidate
    /// support.
    ///
    /// Radial kinds must have non-negative coefficients with some `a_k > 0`
    /// for `k ≥ 1`, and `V/2 − log|x|` must increase strictly over the radii
    /// 10, 100, 1000. The lower bound may be zero at the origin (e.g. `r⁴`).
    pub fn validate(&self) -> Result<(f64, f64)> {
        match self {
            Potential::Grid(g) => {
                if g.nx < 3 || g.ny < 3 || g.h <= 0.0 || g.values.len() != g.nx * g.ny {
                    return Err(Error::InvalidPotential(
                        "grid potential needs at least 3×3 nodes, h > 0 and nx·ny values".into(),
                    ));
                }
                if g.values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidPotential("non-finite grid sample".into()));
                }
                let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                for j in 1..g.ny - 1 {
                    for i in 1..g.nx - 1 {
                        let m = g.node_laplacian(i, j) / (4.0 * PI);
                        lo = lo.min(m);
                        hi = hi.max(m);
                    }
                }
                Ok((lo, hi))
            }
            _ => {
                let coeffs = self.radial_coeffs().expect("radial");
                if coeffs.iter().any(|a| !a.is_finite() || *a < 0.0) {
                    return Err(Error::InvalidPotential(
                        "radial coefficients must be finite and non-negative".into(),
                    ));
                }
                if !coeffs.iter().skip(1).any(|&a| a > 0.0) {
                    return Err(Error::InvalidPotential(
                        "at least one coefficient a_k with k ≥ 1 must be positive".into(),
                    ));
                }
                let growth: Vec<f64> = [10.0_f64, 100.0, 1000.0]
                    .iter()
                    .map(|&r| self.value(Vec2::new(r, 0.0)) / 2.0 - r.ln())
                    .collect();
                if !(growth[0] < growth[1] && growth[1] < growth[2]) {
                    return Err(Error::InvalidPotential(
                        "V/2 − log|x| must grow at infinity".into(),
                    ));
                }
                let r_star = support_radius(&coeffs)?;
                let lap = |r: f64| radial_laplacian(&coeffs, r) / (4.0 * PI);
                // ΔV/4π is a polynomial in r² with non-negative coefficients,
                // hence monotone in r.
                Ok((lap(0.0), lap(r_star)))
            }
        }
    }
}

#[inline]
fn poly_in_r2(coeffs: &[f64], r2: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &a| acc * r2 + a)
}

/// `V'(r)` for the radial polynomial.
fn radial_derivative(coeffs: &[f64], r: f64) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, &a)| a * 2.0 * k as f64 * r.powi(2 * k as i32 - 1))
        .sum()
}

/// `ΔV(r) = Σ 4k² a_k r^{2k−2}`.
fn radial_laplacian(coeffs: &[f64], r: f64) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, &a)| a * 4.0 * (k * k) as f64 * r.powi(2 * k as i32 - 2))
        .sum()
}

/// Solves `R V'(R) = 2` by bisection on [`SUPPORT_BRACKET`].
fn support_radius(coeffs: &[f64]) -> Result<f64> {
    let (mut lo, mut hi) = SUPPORT_BRACKET;
    let f = |r: f64| r * radial_derivative(coeffs, r) - 2.0;
    if f(lo) > 0.0 || f(hi) < 0.0 {
        return Err(Error::NoSupport { lo, hi });
    }
    // R V'(R) is increasing for non-negative coefficients; bisect to the
    // last representable midpoint.
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Equilibrium measure supported on a disk, density `ΔV/4π`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialSupport {
    pub r_star: f64,
    coeffs: Vec<f64>,
}

impl RadialSupport {
    /// Density `m₀(r)`, zero outside the disk.
    #[inline]
    pub fn density(&self, r: f64) -> f64 {
        if r > self.r_star {
            0.0
        } else {
            radial_laplacian(&self.coeffs, r) / (4.0 * PI)
        }
    }

    /// `μ₀(B_r) = min(r, R★) V'(min(r, R★)) / 2`.
    #[inline]
    pub fn enclosed_mass(&self, r: f64) -> f64 {
        let s = r.min(self.r_star);
        0.5 * s * radial_derivative(&self.coeffs, s)
    }

    fn potential_value(&self, r: f64) -> f64 {
        poly_in_r2(&self.coeffs, r * r)
    }

    fn is_quadratic(&self) -> bool {
        self.coeffs.len() >= 2
            && self.coeffs[1] == 1.0
            && self.coeffs.iter().enumerate().all(|(k, &a)| k == 1 || a == 0.0)
    }

    /// `U^{μ₀}` by the shell formula
    /// `U(r) = −log(r) μ₀(B_r) − ∫_{r<s<R★} log(s) dμ₀(s)`.
    pub fn log_potential(&self, r: f64) -> f64 {
        if r >= self.r_star {
            return -r.ln();
        }
        if self.is_quadratic() && self.r_star == 1.0 {
            return 0.5 * (1.0 - r * r);
        }
        let inner = if r > 0.0 { -r.ln() * self.enclosed_mass(r) } else { 0.0 };
        let shell = numeric::integrate(
            |s: f64| {
                if s > 0.0 {
                    s.ln() * self.density(s) * 2.0 * PI * s
                } else {
                    0.0
                }
            },
            r,
            self.r_star,
            QUAD_TOL * 0.1,
        );
        inner - shell.value
    }

    /// `dU/dr = −μ₀(B_r)/r`.
    pub fn log_potential_radial_derivative(&self, r: f64) -> f64 {
        if r == 0.0 {
            0.0
        } else {
            -self.enclosed_mass(r) / r
        }
    }
}

/// The equilibrium measure μ₀ and its derived objects.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumMeasure {
    pub support: Support,
    /// The constant in `U^{μ₀} + V/2 = c` on Σ.
    pub c: f64,
    /// `I(μ₀)`.
    pub i0: f64,
    /// `∬ −log|x−y| dμ₀ dμ₀`.
    pub l0: f64,
    /// Bounds `(m̲, m̄)` of the density on Σ.
    pub density_bounds: (f64, f64),
    pub potential: Potential,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Support {
    Radial(RadialSupport),
    Grid(obstacle::GridSupport),
}

/// `V`, `∇V`, `ΔV` at `x`.
pub fn evaluate_potential(p: &Potential, x: Vec2) -> Result<PotentialEval> {
    p.evaluate(x)
}

/// Equilibrium measure of a radial potential.
pub fn solve_equilibrium_radial(p: &Potential) -> Result<EquilibriumMeasure> {
    let coeffs = p.radial_coeffs().ok_or_else(|| {
        Error::InvalidPotential("solve_equilibrium_radial needs a radial potential".into())
    })?;
    let density_bounds = p.validate()?;
    let r_star = support_radius(&coeffs)?;
    let support = RadialSupport { r_star, coeffs };
    let c = -r_star.ln() + support.potential_value(r_star) / 2.0;

    // L₀ = ∫ U dμ₀ and ∫ V dμ₀ by adaptive Gauss–Kronrod on [0, R★].
    let l0 = numeric::integrate(
        |r: f64| support.log_potential(r) * support.density(r) * 2.0 * PI * r,
        0.0,
        r_star,
        QUAD_TOL,
    )
    .value;
    let v_mean = numeric::integrate(
        |r: f64| support.potential_value(r) * support.density(r) * 2.0 * PI * r,
        0.0,
        r_star,
        QUAD_TOL,
    )
    .value;

    Ok(EquilibriumMeasure {
        support: Support::Radial(support),
        c,
        i0: l0 + v_mean,
        l0,
        density_bounds,
        potential: p.clone(),
    })
}

/// `U^{μ₀}(x) = −∫ log|x−y| dμ₀(y)`.
pub fn log_potential_u(em: &EquilibriumMeasure, x: Vec2) -> f64 {
    em.log_potential(x)
}

/// Effective potential `ζ = U^{μ₀} + V/2 − c`.
pub fn zeta(em: &EquilibriumMeasure, x: Vec2) -> f64 {
    em.zeta(x)
}

impl EquilibriumMeasure {
    pub fn support_radius(&self) -> Option<f64> {
        match &self.support {
            Support::Radial(s) => Some(s.r_star),
            Support::Grid(_) => None,
        }
    }

    pub fn radial(&self) -> Option<&RadialSupport> {
        match &self.support {
            Support::Radial(s) => Some(s),
            Support::Grid(_) => None,
        }
    }

    /// `true` when μ₀ is the circular law (V = |x|²).
    pub fn is_circular_law(&self) -> bool {
        matches!(self.potential, Potential::Quadratic)
    }

    pub fn density(&self, x: Vec2) -> f64 {
        match &self.support {
            Support::Radial(s) => s.density(x.norm()),
            Support::Grid(g) => g.density_at(x),
        }
    }

    pub fn log_potential(&self, x: Vec2) -> f64 {
        match &self.support {
            Support::Radial(s) => s.log_potential(x.norm()),
            Support::Grid(g) => g.log_potential(x),
        }
    }

    /// `∇U^{μ₀}(x)`.
    pub fn grad_log_potential(&self, x: Vec2) -> Vec2 {
        match &self.support {
            Support::Radial(s) => {
                let r = x.norm();
                if r == 0.0 {
                    Vec2::zeros()
                } else {
                    x * (s.log_potential_radial_derivative(r) / r)
                }
            }
            Support::Grid(g) => g.grad_log_potential(x),
        }
    }

    pub fn zeta(&self, x: Vec2) -> f64 {
        let raw = self.log_potential(x) + self.potential.value(x) / 2.0 - self.c;
        if raw < 0.0 && raw > -ZETA_CLAMP {
            0.0
        } else {
            raw
        }
    }

    /// Total mass `∫ m₀`.
    pub fn mass(&self) -> f64 {
        match &self.support {
            Support::Radial(s) => numeric::integrate(
                |r: f64| s.density(r) * 2.0 * PI * r,
                0.0,
                s.r_star,
                QUAD_TOL,
            )
            .value,
            Support::Grid(g) => g.mass(),
        }
    }

    /// Lebesgue measure of Σ.
    pub fn support_area(&self) -> f64 {
        match &self.support {
            Support::Radial(s) => PI * s.r_star * s.r_star,
            Support::Grid(g) => g.area(),
        }
    }

    pub fn in_support(&self, x: Vec2) -> bool {
        match &self.support {
            Support::Radial(s) => x.norm() <= s.r_star,
            Support::Grid(g) => g.contains(x),
        }
    }

    /// Distance from `x` to Σ (zero inside).
    pub fn dist_to_support(&self, x: Vec2) -> f64 {
        match &self.support {
            Support::Radial(s) => (x.norm() - s.r_star).max(0.0),
            Support::Grid(g) => {
                if g.contains(x) {
                    0.0
                } else {
                    g.dist_to_boundary(x)
                }
            }
        }
    }

    /// Distance from `x` to ∂Σ.
    pub fn dist_to_boundary(&self, x: Vec2) -> f64 {
        match &self.support {
            Support::Radial(s) => (x.norm() - s.r_star).abs(),
            Support::Grid(g) => g.dist_to_boundary(x),
        }
    }

    /// `μ₀(B(center, radius))`.
    ///
    /// The circular law uses the closed-form lens area; other radial measures
    /// integrate `m₀(r) · (arc of the circle |y| = r inside the ball)` over r.
    pub fn ball_mass(&self, center: Vec2, radius: f64) -> f64 {
        match &self.support {
            Support::Radial(s) => {
                if self.is_circular_law() {
                    return lens_area(center.norm(), radius, s.r_star) / PI;
                }
                let d = center.norm();
                if d + radius <= s.r_star && d == 0.0 {
                    return s.enclosed_mass(radius);
                }
                let breaks = [(d - radius).abs(), d + radius];
                numeric::integrate_piecewise(
                    |r: f64| s.density(r) * r * circle_arc_inside(r, d, radius),
                    0.0,
                    s.r_star,
                    &breaks,
                    QUAD_TOL,
                )
                .value
            }
            Support::Grid(g) => g.ball_mass(center, radius),
        }
    }

    /// `∫_Σ m₀ log m₀`.
    pub fn density_entropy(&self) -> numeric::Quadrature {
        match &self.support {
            Support::Radial(s) => numeric::integrate(
                |r: f64| {
                    let m = s.density(r);
                    if m > 0.0 {
                        m * m.ln() * 2.0 * PI * r
                    } else {
                        0.0
                    }
                },
                0.0,
                s.r_star,
                QUAD_TOL,
            ),
            Support::Grid(g) => g.density_entropy(),
        }
    }

    /// One draw from μ₀ by rejection against the bounding box of Σ.
    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec2 {
        match &self.support {
            Support::Radial(s) => {
                let m_max = s.density(s.r_star).max(s.density(0.0));
                loop {
                    let x = Vec2::new(
                        rng.gen_range(-s.r_star..=s.r_star),
                        rng.gen_range(-s.r_star..=s.r_star),
                    );
                    let r = x.norm();
                    if r > s.r_star {
                        continue;
                    }
                    if m_max <= 0.0 || rng.gen::<f64>() * m_max <= s.density(r) {
                        return x;
                    }
                }
            }
            Support::Grid(g) => g.sample_point(rng),
        }
    }

    /// JSON record `{kind, R_star | grid, c, I0, L0}`. Grid measures also
    /// write their density to a sidecar binary next to `path`.
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut doc = serde_json::Map::new();
        doc.insert("c".into(), self.c.into());
        doc.insert("I0".into(), self.i0.into());
        doc.insert("L0".into(), self.l0.into());
        match &self.support {
            Support::Radial(s) => {
                doc.insert("kind".into(), "radial".into());
                doc.insert("R_star".into(), s.r_star.into());
            }
            Support::Grid(g) => {
                let sidecar = path.with_extension("density.bin");
                g.write_density_sidecar(&sidecar)?;
                doc.insert("kind".into(), "grid".into());
                doc.insert(
                    "grid".into(),
                    serde_json::json!({
                        "lower": g.field.lower,
                        "h": g.field.h,
                        "nx": g.field.nx,
                        "ny": g.field.ny,
                        "density_file": sidecar.file_name().map(|f| f.to_string_lossy().into_owned()),
                    }),
                );
            }
        }
        let text = serde_json::to_string_pretty(&serde_json::Value::Object(doc))?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }
}

/// Area of `B(0, r_support) ∩ B(c, radius)` where `|c| = d`.
pub fn lens_area(d: f64, radius: f64, r_support: f64) -> f64 {
    let (r1, r2) = (r_support, radius);
    if d >= r1 + r2 {
        return 0.0;
    }
    if d <= (r1 - r2).abs() {
        let r = r1.min(r2);
        return PI * r * r;
    }
    let a1 = ((d * d + r1 * r1 - r2 * r2) / (2.0 * d * r1)).clamp(-1.0, 1.0).acos();
    let a2 = ((d * d + r2 * r2 - r1 * r1) / (2.0 * d * r2)).clamp(-1.0, 1.0).acos();
    let k = (-d + r1 + r2) * (d + r1 - r2) * (d - r1 + r2) * (d + r1 + r2);
    r1 * r1 * a1 + r2 * r2 * a2 - 0.5 * k.max(0.0).sqrt()
}

/// Angular length (radians) of the circle `|y| = r` lying inside `B(c, ρ)`
/// with `|c| = d`.
fn circle_arc_inside(r: f64, d: f64, rho: f64) -> f64 {
    if r + d <= rho {
        return 2.0 * PI;
    }
    if r >= d + rho || r <= d - rho {
        return 0.0;
    }
    let cos = ((r * r + d * d - rho * rho) / (2.0 * r * d)).clamp(-1.0, 1.0);
    2.0 * cos.acos()
}
