//! Sampling the Gibbs measure `∝ exp(−(β/2) w_n)`.
//!
//! [`mcmc_chain`] runs single-particle Metropolis at any β. [`ginibre_exact`]
//! draws exact β = 2, `V = |x|²` configurations as eigenvalues of a complex
//! Gaussian matrix. Randomness comes from ChaCha8 seeded with
//! `seed_from_u64(seed)`; independent chains use distinct streams of the
//! same seed.

use nalgebra::{Complex, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::{hamiltonian, Configuration};
use crate::error::{Error, Result};
use crate::potential::{EquilibriumMeasure, Potential};
use crate::Vec2;

/// Full recomputation of `w_n` after this many accepted moves.
pub const RESYNC_INTERVAL: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McmcParams {
    pub beta: f64,
    pub n_particles: usize,
    pub n_sweeps: usize,
    pub burn_in_sweeps: usize,
    /// Standard deviation of each proposal coordinate; `None` means `0.5/√n`.
    pub proposal_sigma: Option<f64>,
    pub seed: u64,
    pub thinning: usize,
    /// Starting configuration; `None` draws i.i.d. points from μ₀.
    #[serde(default)]
    pub initial: Option<Configuration>,
}

impl McmcParams {
    pub fn new(beta: f64, n_particles: usize, n_sweeps: usize, burn_in_sweeps: usize, seed: u64) -> Self {
        Self {
            beta,
            n_particles,
            n_sweeps,
            burn_in_sweeps,
            proposal_sigma: None,
            seed,
            thinning: 1,
            initial: None,
        }
    }

    pub fn sigma(&self) -> f64 {
        self.proposal_sigma
            .unwrap_or(0.5 / (self.n_particles as f64).sqrt())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::param("beta", "must be positive and finite"));
        }
        if self.n_particles == 0 {
            return Err(Error::param("n_particles", "must be positive"));
        }
        if !(self.sigma() > 0.0) {
            return Err(Error::param("proposal_sigma", "must be positive"));
        }
        if self.burn_in_sweeps >= self.n_sweeps {
            return Err(Error::param("burn_in_sweeps", "must be smaller than n_sweeps"));
        }
        if self.thinning == 0 {
            return Err(Error::param("thinning", "must be at least 1"));
        }
        if let Some(c) = &self.initial {
            if c.n() != self.n_particles {
                return Err(Error::param("initial", "length differs from n_particles"));
            }
            c.check()?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainStats {
    pub acceptance_rate: f64,
    /// Integrated autocorrelation time of the recorded `w_n` series, in
    /// units of recorded samples; `None` when fewer than [`MIN_SERIES`]
    /// samples were recorded.
    pub autocorrelation_time: Option<f64>,
    pub w_n_series: Vec<f64>,
    /// Largest relative gap between the running and recomputed `w_n`.
    pub max_drift: f64,
}

/// Incrementally updated chain state.
pub struct ChainState<'a> {
    pub points: Vec<Vec2>,
    pub w_n: f64,
    potential: &'a Potential,
    beta: f64,
}

impl<'a> ChainState<'a> {
    pub fn new(points: Vec<Vec2>, potential: &'a Potential, beta: f64) -> Result<Self> {
        let w_n = hamiltonian(&Configuration::new(points.clone()), potential)?;
        Ok(Self {
            points,
            w_n,
            potential,
            beta,
        })
    }

    /// `w_n` after moving particle `i` to `y`, minus `w_n` now.
    pub fn delta_w(&self, i: usize, y: Vec2) -> f64 {
        let x = self.points[i];
        let n = self.points.len() as f64;
        let mut pair = 0.0;
        for (j, &xj) in self.points.iter().enumerate() {
            if j != i {
                pair -= (y - xj).norm_squared().ln() - (x - xj).norm_squared().ln();
            }
        }
        pair + n * (self.potential.value(y) - self.potential.value(x))
    }

    /// Metropolis decision for moving `i` to `y` given `ln u`; applies the move
    /// when accepted.
    pub fn step(&mut self, i: usize, y: Vec2, log_u: f64) -> bool {
        let dw = self.delta_w(i, y);
        let accept = dw.is_finite() && log_u < -0.5 * self.beta * dw;
        if accept {
            self.points[i] = y;
            self.w_n += dw;
        }
        accept
    }

    /// Recomputes `w_n` and returns the relative drift of the running value.
    pub fn resync(&mut self) -> Result<f64> {
        let exact = hamiltonian(&Configuration::new(self.points.clone()), self.potential)?;
        let drift = (self.w_n - exact).abs() / exact.abs().max(1.0);
        self.w_n = exact;
        Ok(drift)
    }
}

fn chain_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn run_chain(
    p: &Potential,
    em: &EquilibriumMeasure,
    params: &McmcParams,
    stream: u64,
) -> Result<(Vec<Configuration>, ChainStats)> {
    params.validate()?;
    let mut rng = chain_rng(params.seed, stream);
    let n = params.n_particles;
    let init = match &params.initial {
        Some(c) => c.points.clone(),
        None => (0..n).map(|_| em.sample_point(&mut rng)).collect(),
    };
    let mut state = ChainState::new(init, p, params.beta)?;
    let sigma = params.sigma();
    let mut samples = Vec::new();
    let mut series = Vec::new();
    let (mut proposed, mut accepted) = (0usize, 0usize);
    let mut since_sync = 0;
    let mut max_drift: f64 = 0.0;
    for sweep in 0..params.n_sweeps {
        for i in 0..n {
            let dx: f64 = rng.sample(StandardNormal);
            let dy: f64 = rng.sample(StandardNormal);
            let u: f64 = rng.gen();
            let y = state.points[i] + sigma * Vec2::new(dx, dy);
            proposed += 1;
            if state.step(i, y, u.ln()) {
                accepted += 1;
                since_sync += 1;
                if since_sync == RESYNC_INTERVAL {
                    max_drift = max_drift.max(state.resync()?);
                    since_sync = 0;
                }
            }
        }
        if sweep >= params.burn_in_sweeps && (sweep - params.burn_in_sweeps + 1) % params.thinning == 0 {
            samples.push(Configuration::new(state.points.clone()));
            series.push(state.w_n);
        }
    }
    let autocorrelation_time = if series.len() >= MIN_SERIES {
        Some(chain_diagnostics(&series)?.act)
    } else {
        None
    };
    Ok((
        samples,
        ChainStats {
            acceptance_rate: accepted as f64 / proposed.max(1) as f64,
            autocorrelation_time,
            w_n_series: series,
            max_drift,
        },
    ))
}

/// One Metropolis chain with single-particle Gaussian proposals, visiting
/// particles in index order each sweep. A configuration is recorded every
/// `thinning` sweeps after burn-in.
pub fn mcmc_chain(
    p: &Potential,
    em: &EquilibriumMeasure,
    params: &McmcParams,
) -> Result<(Vec<Configuration>, ChainStats)> {
    run_chain(p, em, params, 0)
}

/// `chains` independent chains in parallel; chain `k` uses stream `k`.
pub fn mcmc_chains(
    p: &Potential,
    em: &EquilibriumMeasure,
    params: &McmcParams,
    chains: usize,
) -> Result<Vec<(Vec<Configuration>, ChainStats)>> {
    (0..chains as u64)
        .into_par_iter()
        .map(|k| run_chain(p, em, params, k))
        .collect()
}

/// `n × n` matrix with independent entries whose real and imaginary parts
/// are `N(0, 1/(2n))`.
pub fn ginibre_matrix<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<Complex<f64>> {
    let s = (0.5 / n as f64).sqrt();
    DMatrix::from_fn(n, n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex::new(s * re, s * im)
    })
}

/// Eigenvalues of a complex matrix via the Schur decomposition.
pub fn eigenvalues(m: DMatrix<Complex<f64>>) -> Result<Vec<Complex<f64>>> {
    const MAX_ITER: usize = 10_000;
    let schur = m
        .try_schur(f64::EPSILON, MAX_ITER)
        .ok_or(Error::Eigensolver { iterations: MAX_ITER })?;
    let ev = schur
        .eigenvalues()
        .ok_or(Error::Eigensolver { iterations: MAX_ITER })?;
    Ok(ev.iter().copied().collect())
}

/// Exact sample of the β = 2 quadratic Coulomb gas: eigenvalues of a Ginibre
/// matrix with entry variance `1/n`.
pub fn ginibre_exact(n: usize, seed: u64) -> Result<Configuration> {
    if n == 0 {
        return Err(Error::param("n", "must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ev = eigenvalues(ginibre_matrix(n, &mut rng))?;
    Ok(Configuration::new(ev.iter().map(|z| Vec2::new(z.re, z.im)).collect()))
}

/// Shortest series accepted by [`chain_diagnostics`].
pub const MIN_SERIES: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    /// Integrated autocorrelation time; the series length when degenerate.
    pub act: f64,
    /// Standard error of the mean, `sqrt(var · act / N)`.
    pub stderr: f64,
    /// Set when the series has zero variance.
    pub degenerate: bool,
}

/// Integrated autocorrelation time by Geyer's initial positive sequence:
/// `τ = −1 + 2 Σ_m Γ_m` with `Γ_m = ρ(2m) + ρ(2m+1)` summed while positive.
pub fn chain_diagnostics(series: &[f64]) -> Result<ChainDiagnostics> {
    let n = series.len();
    if n < MIN_SERIES {
        return Err(Error::SeriesTooShort { len: n, min: MIN_SERIES });
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let autocov = |lag: usize| -> f64 {
        centered[..n - lag]
            .iter()
            .zip(&centered[lag..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / n as f64
    };
    let c0 = autocov(0);
    if c0 == 0.0 {
        return Ok(ChainDiagnostics {
            act: n as f64,
            stderr: 0.0,
            degenerate: true,
        });
    }
    let mut sum = 0.0;
    let mut m = 0;
    while 2 * m + 1 < n {
        let gamma = (autocov(2 * m) + autocov(2 * m + 1)) / c0;
        if gamma <= 0.0 {
            break;
        }
        sum += gamma;
        m += 1;
    }
    let act = (-1.0 + 2.0 * sum).max(1.0 / n as f64);
    Ok(ChainDiagnostics {
        act,
        stderr: (c0 * act / n as f64).sqrt(),
        degenerate: false,
    })
}
