//! Batch front end: `coulomb-lab [--config PATH] [--out DIR] [--seed N]
//! [--threads N] <command> [flags]`.
//!
//! Keys of the JSON config file are overridden by flags given on the command
//! line. The fully resolved config is hashed (SHA-256 of its canonical JSON)
//! and outputs are named `<command>-<hash8>.<ext>`. Each run writes
//! `manifest.json` with the resolved config, tool version, wall time and the
//! list of outputs; passing that manifest back through `--config` reproduces
//! the outputs bit for bit.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::analysis::{discrepancy_field, discrepancy_moment, psi6, Rect};
use crate::energy::{minimize_fekete, splitting_report, Configuration, FeketeOptions};
use crate::error::Error;
use crate::periodic::{default_tau_grid, lattice_scan, scan_argmin, w_periodic, w_scaled, Torus};
use crate::potential::{
    obstacle_solve_grid, solve_equilibrium_radial, EquilibriumMeasure, ObstacleOptions, Potential,
    SquareDomain,
};
use crate::sampler::{ginibre_exact, mcmc_chains, McmcParams};
use crate::zfunc::{alpha_conjectural, fit_order_n, order_n_constant, write_sweep_csv, zcheck_sweep};

#[derive(Debug, Parser)]
#[command(name = "coulomb-lab", version, about = "Two-dimensional Coulomb gas laboratory")]
pub struct Cli {
    /// JSON run config; a manifest from an earlier run is also accepted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (default `out`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; does not affect results.
    #[arg(long, global = true, env = "COULOMB_LAB_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Equilibrium measure of a potential.
    Equilibrium(EquilibriumArgs),
    /// Splitting report for a configuration.
    Energy(EnergyArgs),
    /// Weighted Fekete points.
    Fekete(FeketeArgs),
    /// Metropolis samples of the Gibbs measure.
    Sample(SampleArgs),
    /// Exact β = 2 samples from Ginibre eigenvalues.
    Ginibre(GinibreArgs),
    /// Renormalized energy of a lattice.
    Wper(WperArgs),
    /// Renormalized energy over the modular fundamental domain.
    ScanLattice(ScanLatticeArgs),
    /// Discrepancy field and moment of a configuration.
    Discrepancy(DiscrepancyArgs),
    /// Ginibre partition function against its asymptotics.
    Zcheck(ZcheckArgs),
}

/// A potential given as `quadratic`, `quartic`, `poly:a0,a1,...` or a JSON
/// object such as `{"kind":"radial_poly","coeffs":[0,1]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PotentialSpec {
    Full(Potential),
    Named(String),
}

impl FromStr for PotentialSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.trim_start().starts_with('{') {
            return serde_json::from_str(s).map(PotentialSpec::Full).map_err(|e| e.to_string());
        }
        Ok(PotentialSpec::Named(s.to_string()))
    }
}

impl PotentialSpec {
    fn resolve(&self) -> Result<Potential, CliError> {
        let p = match self {
            PotentialSpec::Full(p) => p.clone(),
            PotentialSpec::Named(name) => match name.as_str() {
                "quadratic" => Potential::Quadratic,
                "quartic" => Potential::quartic(),
                other => {
                    let list = other
                        .strip_prefix("poly:")
                        .ok_or_else(|| CliError::config("potential", format!("unknown potential `{other}`")))?;
                    let coeffs = list
                        .split(',')
                        .map(|c| c.trim().parse::<f64>())
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(|e| CliError::config("potential", e.to_string()))?;
                    Potential::RadialPoly { coeffs }
                }
            },
        };
        p.validate().map_err(|e| CliError::config("potential", e.to_string()))?;
        Ok(p)
    }
}

#[derive(Clone, Debug, Default, Args, Serialize, Deserialize)]
pub struct PotentialArgs {
    /// `quadratic`, `quartic`, `poly:a0,a1,...` or a JSON object.
    #[arg(long)]
    pub potential: Option<PotentialSpec>,
    /// Grid spacing of the obstacle solver for non-radial potentials.
    #[arg(long)]
    pub grid_h: Option<f64>,
    /// Half width of the square obstacle domain.
    #[arg(long)]
    pub half_width: Option<f64>,
}

impl PotentialArgs {
    fn resolve(&mut self) -> Result<Potential, CliError> {
        let p = self
            .potential
            .get_or_insert(PotentialSpec::Named("quadratic".into()))
            .resolve()?;
        self.potential = Some(PotentialSpec::Full(p.clone()));
        if !p.is_radial() {
            self.grid_h.get_or_insert(1.0 / 128.0);
            self.half_width.get_or_insert(2.0);
        }
        Ok(p)
    }

    fn equilibrium(&self, p: &Potential) -> crate::Result<EquilibriumMeasure> {
        match (p.is_radial(), self.grid_h, self.half_width) {
            (false, Some(h), Some(w)) => obstacle_solve_grid(p, SquareDomain::centered(w), h, &ObstacleOptions::default()),
            _ => solve_equilibrium_radial(p),
        }
    }

    fn resolve_cloned(&self) -> CliResult<Potential> {
        self.clone().resolve()
    }
}

#[derive(Clone, Debug, Default, Args, Serialize, Deserialize)]
pub struct EquilibriumArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub potential: PotentialArgs,
    /// `radial` or `grid`; defaults to `radial` for radial potentials.
    #[arg(long)]
    pub solver: Option<String>,
}

#[derive(Clone, Debug, Default, Args, Serialize, Deserialize)]
pub struct EnergyArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub potential: PotentialArgs,
    /// Configuration CSV with columns `x,y`.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Number of i.i.d. points from μ₀ when no input is given.
    #[arg(long)]
    pub n: Option<usize>,
}

#[derive(Clone, Debug, Default, Args, Serialize, Deserialize)]
pub struct FeketeArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub potential: PotentialArgs,
    #[arg(long)]
    pub n: Option<usize>,
    /// Starting configuration; otherwise i.i.d. points from μ₀.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub multistarts: Option<usize>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Tolerance on the sup norm of the gradient (default `1e−8·n`).
    #[arg(long)]
    pub grad_tol: Option<f64>,
}

#[derive(Clone, Debug, Default, Args, Serialize, Deserialize)]
pub struct SampleArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub potential: PotentialArgs,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub sweeps: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Proposal standard deviation (default `0.5/√n`).
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub thinning: Option<usize>,
    #[arg(long)]
    pub chains: Option<usize>,
}

#[derive(Clone, Debug, Default, Args, Serialize, Deserialize)]
pub struct GinibreArgs {
    #[arg(long)]
    pub n: Option<usize>,
    /// Number of matrices; draw `d` uses seed `seed + d`.
    #[arg(long)]
    pub draws: Option<usize>,
}

#[derive(Clone, Debug, Default, Args, Serialize, Deserialize)]
pub struct WperArgs {
    /// `triangular` or `square`; ignored when `tau_re`/`tau_im` are given.
    #[arg(long)]
    pub lattice: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub tau_re: Option<f64>,
    #[arg(long)]
    pub tau_im: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    /// Also report the energy at density `m`.
    #[arg(long)]
    pub m: Option<f64>,
}

#[derive(Clone, Debug, Default, Args, Serialize, Deserialize)]
pub struct ScanLatticeArgs {
    #[arg(long)]
    pub nx: Option<usize>,
    #[arg(long)]
    pub ny: Option<usize>,
    #[arg(long)]
    pub y_max: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Clone, Debug, Default, Args, Serialize, Deserialize)]
pub struct DiscrepancyArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub potential: PotentialArgs,
    /// Configuration CSV; otherwise a Ginibre draw of size `n`.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Blown-up radius `R`.
    #[arg(long)]
    pub radius: Option<f64>,
    /// Blown-up window `x0,y0,x1,y1`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub window: Option<Vec<f64>>,
    #[arg(long)]
    pub step: Option<f64>,
}

#[derive(Clone, Debug, Default, Args, Serialize, Deserialize)]
pub struct ZcheckArgs {
    #[arg(long)]
    pub n_max: Option<usize>,
}

/// Failure of a CLI run, mapped to an exit status.
#[derive(Debug)]
pub enum CliError {
    /// Bad or missing config key (exit 2).
    Config { key: String, reason: String },
    /// Numerical or I/O failure inside a module (exit 3).
    Module(Error),
}

impl CliError {
    fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        CliError::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Module(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config { key, reason } => write!(f, "config key `{key}`: {reason}"),
            CliError::Module(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter { key, reason } => CliError::config(key, reason),
            other => CliError::Module(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Module(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Module(e.into())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Module(e.into())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Files written by one run, all named `<stem>.<ext>` inside `dir`.
pub struct Outputs {
    dir: PathBuf,
    stem: String,
    written: Vec<String>,
}

impl Outputs {
    fn path(&mut self, ext: &str) -> PathBuf {
        let name = format!("{}.{ext}", self.stem);
        self.written.push(name.clone());
        self.dir.join(name)
    }

    fn record(&mut self, path: &Path) {
        if let Some(name) = path.file_name() {
            self.written.push(name.to_string_lossy().into_owned());
        }
    }
}

/// Writes `value` as pretty JSON with sorted keys.
pub fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let v = serde_json::to_value(value)?;
    std::fs::write(path, serde_json::to_string_pretty(&v)? + "\n")?;
    Ok(())
}

fn float(x: f64) -> String {
    format!("{x:.16e}")
}

trait Task: Serialize + DeserializeOwned + Default {
    const NAME: &'static str;
    fn resolve(&mut self) -> CliResult<()>;
    fn run(&self, seed: u64, out: &mut Outputs) -> CliResult<()>;
}

fn required<T: Copy>(v: Option<T>, key: &str) -> CliResult<T> {
    v.ok_or_else(|| CliError::config(key, "required"))
}

fn positive<T: PartialOrd + Default + Copy>(v: T, key: &str) -> CliResult<T> {
    if v > T::default() {
        Ok(v)
    } else {
        Err(CliError::config(key, "must be positive"))
    }
}

fn load_configuration(path: &Path) -> CliResult<Configuration> {
    Ok(Configuration::read_csv(path)?)
}

fn iid_configuration(em: &EquilibriumMeasure, n: usize, seed: u64) -> Configuration {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Configuration::new((0..n).map(|_| em.sample_point(&mut rng)).collect())
}

impl Task for EquilibriumArgs {
    const NAME: &'static str = "equilibrium";

    fn resolve(&mut self) -> CliResult<()> {
        let p = self.potential.resolve()?;
        let solver = self
            .solver
            .get_or_insert_with(|| if p.is_radial() { "radial".into() } else { "grid".into() });
        match solver.as_str() {
            "radial" if !p.is_radial() => Err(CliError::config("solver", "radial solver needs a radial potential")),
            "radial" => Ok(()),
            "grid" => {
                self.potential.grid_h.get_or_insert(1.0 / 128.0);
                self.potential.half_width.get_or_insert(2.0);
                Ok(())
            }
            other => Err(CliError::config("solver", format!("unknown solver `{other}`"))),
        }
    }

    fn run(&self, _seed: u64, out: &mut Outputs) -> CliResult<()> {
        let p = self.potential.resolve_cloned()?;
        let em = if self.solver.as_deref() == Some("grid") {
            let h = required(self.potential.grid_h, "grid_h")?;
            let w = required(self.potential.half_width, "half_width")?;
            obstacle_solve_grid(&p, SquareDomain::centered(w), h, &ObstacleOptions::default())?
        } else {
            solve_equilibrium_radial(&p)?
        };
        let path = out.path("json");
        em.write_json(&path)?;
        if !p.is_radial() || self.solver.as_deref() == Some("grid") {
            out.record(&path.with_extension("density.bin"));
        }
        Ok(())
    }
}

impl Task for EnergyArgs {
    const NAME: &'static str = "energy";

    fn resolve(&mut self) -> CliResult<()> {
        self.potential.resolve()?;
        if self.input.is_none() {
            positive(required(self.n, "n")?, "n")?;
        }
        Ok(())
    }

    fn run(&self, seed: u64, out: &mut Outputs) -> CliResult<()> {
        let p = self.potential.resolve_cloned()?;
        let em = self.potential.equilibrium(&p)?;
        let cfg = match &self.input {
            Some(path) => load_configuration(path)?,
            None => iid_configuration(&em, required(self.n, "n")?, seed),
        };
        let report = splitting_report(&cfg, &em, &p)?;
        let mut doc = serde_json::to_value(report)?;
        doc["n"] = json!(cfg.n());
        write_json(&out.path("json"), &doc)
    }
}

impl Task for FeketeArgs {
    const NAME: &'static str = "fekete";

    fn resolve(&mut self) -> CliResult<()> {
        self.potential.resolve()?;
        if self.input.is_none() {
            positive(required(self.n, "n")?, "n")?;
        }
        positive(*self.multistarts.get_or_insert(1), "multistarts")?;
        positive(*self.max_iters.get_or_insert(100_000), "max_iters")?;
        if let Some(t) = self.grad_tol {
            positive(t, "grad_tol")?;
        }
        Ok(())
    }

    fn run(&self, seed: u64, out: &mut Outputs) -> CliResult<()> {
        let p = self.potential.resolve_cloned()?;
        let em = self.potential.equilibrium(&p)?;
        let cfg0 = match &self.input {
            Some(path) => load_configuration(path)?,
            None => iid_configuration(&em, required(self.n, "n")?, seed),
        };
        let opts = FeketeOptions {
            max_iters: required(self.max_iters, "max_iters")?,
            grad_tol: self.grad_tol,
            multistarts: required(self.multistarts, "multistarts")?,
            seed,
        };
        let r = minimize_fekete(&cfg0, &p, &em, &opts)?;
        r.config.write_csv(&out.path("csv"))?;
        let split = splitting_report(&r.config, &em, &p)?;
        let mut doc = json!({
            "n": r.config.n(),
            "w_n": r.energy,
            "grad_inf": r.grad_inf,
            "iterations": r.iterations,
            "converged": r.converged,
            "start": r.start,
            "splitting": split,
        });
        if r.config.n() >= 8 {
            doc["psi6_bulk_mean"] = json!(psi6(&r.config, 6)?.bulk_mean);
        }
        write_json(&out.path("json"), &doc)
    }
}

impl Task for SampleArgs {
    const NAME: &'static str = "sample";

    fn resolve(&mut self) -> CliResult<()> {
        self.potential.resolve()?;
        positive(required(self.n, "n")?, "n")?;
        positive(*self.beta.get_or_insert(2.0), "beta")?;
        let sweeps = positive(*self.sweeps.get_or_insert(1000), "sweeps")?;
        let burn = *self.burn_in.get_or_insert(sweeps / 10);
        if burn >= sweeps {
            return Err(CliError::config("burn_in", "must be smaller than sweeps"));
        }
        if let Some(s) = self.sigma {
            positive(s, "sigma")?;
        }
        positive(*self.thinning.get_or_insert(1), "thinning")?;
        positive(*self.chains.get_or_insert(1), "chains")?;
        Ok(())
    }

    fn run(&self, seed: u64, out: &mut Outputs) -> CliResult<()> {
        let p = self.potential.resolve_cloned()?;
        let em = self.potential.equilibrium(&p)?;
        let mut params = McmcParams::new(
            required(self.beta, "beta")?,
            required(self.n, "n")?,
            required(self.sweeps, "sweeps")?,
            required(self.burn_in, "burn_in")?,
            seed,
        );
        params.proposal_sigma = self.sigma;
        params.thinning = required(self.thinning, "thinning")?;
        let chains = mcmc_chains(&p, &em, &params, required(self.chains, "chains")?)?;
        let mut w = csv::Writer::from_path(out.path("csv"))?;
        w.write_record(["chain", "sample", "x", "y"])?;
        for (c, (samples, _)) in chains.iter().enumerate() {
            for (s, cfg) in samples.iter().enumerate() {
                for x in &cfg.points {
                    w.write_record([c.to_string(), s.to_string(), float(x.x), float(x.y)])?;
                }
            }
        }
        w.flush()?;
        let stats: Vec<_> = chains.into_iter().map(|(_, s)| s).collect();
        write_json(&out.path("json"), &json!({ "chains": stats }))
    }
}

impl Task for GinibreArgs {
    const NAME: &'static str = "ginibre";

    fn resolve(&mut self) -> CliResult<()> {
        positive(required(self.n, "n")?, "n")?;
        positive(*self.draws.get_or_insert(1), "draws")?;
        Ok(())
    }

    fn run(&self, seed: u64, out: &mut Outputs) -> CliResult<()> {
        let n = required(self.n, "n")?;
        let mut w = csv::Writer::from_path(out.path("csv"))?;
        w.write_record(["draw", "x", "y"])?;
        for d in 0..required(self.draws, "draws")? {
            let cfg = ginibre_exact(n, seed.wrapping_add(d as u64))?;
            for x in &cfg.points {
                w.write_record([d.to_string(), float(x.x), float(x.y)])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

impl WperArgs {
    fn torus(&self) -> CliResult<Torus> {
        match (self.tau_re, self.tau_im) {
            (Some(x), Some(y)) => Ok(Torus::from_tau(x, y)?),
            (None, None) => match self.lattice.as_deref() {
                Some("triangular") => Ok(Torus::triangular()),
                Some("square") => Ok(Torus::square()),
                other => Err(CliError::config("lattice", format!("unknown lattice {other:?}"))),
            },
            (None, _) => Err(CliError::config("tau_re", "required together with tau_im")),
            (_, None) => Err(CliError::config("tau_im", "required together with tau_re")),
        }
    }
}

impl Task for WperArgs {
    const NAME: &'static str = "wper";

    fn resolve(&mut self) -> CliResult<()> {
        if self.tau_re.is_none() && self.tau_im.is_none() {
            self.lattice.get_or_insert("triangular".into());
        } else {
            self.lattice = None;
        }
        positive(*self.tol.get_or_insert(1e-8), "tol")?;
        if let Some(m) = self.m {
            positive(m, "m")?;
        }
        self.torus().map(|_| ())
    }

    fn run(&self, _seed: u64, out: &mut Outputs) -> CliResult<()> {
        let t = self.torus()?;
        let tol = required(self.tol, "tol")?;
        let report = w_periodic(&t, tol)?;
        let mut doc = serde_json::to_value(&report)?;
        if let Some(m) = self.m {
            doc["m"] = json!(m);
            doc["W_scaled"] = json!(w_scaled(&t, m, tol)?);
        }
        write_json(&out.path("json"), &doc)
    }
}

impl Task for ScanLatticeArgs {
    const NAME: &'static str = "scan-lattice";

    fn resolve(&mut self) -> CliResult<()> {
        positive(*self.nx.get_or_insert(41), "nx")?;
        positive(*self.ny.get_or_insert(41), "ny")?;
        let y_max = *self.y_max.get_or_insert(2.0);
        if !(y_max > 1.0) {
            return Err(CliError::config("y_max", "must exceed 1"));
        }
        positive(*self.tol.get_or_insert(1e-8), "tol")?;
        Ok(())
    }

    fn run(&self, _seed: u64, out: &mut Outputs) -> CliResult<()> {
        let grid = default_tau_grid(
            required(self.nx, "nx")?,
            required(self.ny, "ny")?,
            required(self.y_max, "y_max")?,
        );
        let scan = lattice_scan(&grid, required(self.tol, "tol")?)?;
        let mut w = csv::Writer::from_path(out.path("csv"))?;
        w.write_record(["tau_re", "tau_im", "W", "err"])?;
        for s in &scan {
            w.write_record([float(s.tau_re), float(s.tau_im), float(s.w), float(s.err)])?;
        }
        w.flush()?;
        write_json(&out.path("json"), &json!({ "argmin": scan_argmin(&scan) }))
    }
}

impl Task for DiscrepancyArgs {
    const NAME: &'static str = "discrepancy";

    fn resolve(&mut self) -> CliResult<()> {
        let p = self.potential.resolve()?;
        if self.input.is_none() {
            if p != Potential::Quadratic {
                return Err(CliError::config("input", "required unless the potential is quadratic"));
            }
            positive(required(self.n, "n")?, "n")?;
        }
        positive(*self.radius.get_or_insert(2.0), "radius")?;
        positive(*self.step.get_or_insert(0.5), "step")?;
        if let Some(w) = &self.window {
            if w.len() != 4 || !(w[2] > w[0] && w[3] > w[1]) {
                return Err(CliError::config("window", "expected x0,y0,x1,y1 with x1 > x0 and y1 > y0"));
            }
        }
        Ok(())
    }

    fn run(&self, seed: u64, out: &mut Outputs) -> CliResult<()> {
        let p = self.potential.resolve_cloned()?;
        let em = self.potential.equilibrium(&p)?;
        let cfg = match &self.input {
            Some(path) => load_configuration(path)?,
            None => ginibre_exact(required(self.n, "n")?, seed)?,
        };
        let s = (cfg.n() as f64).sqrt();
        let window = match &self.window {
            Some(w) => Rect::new([w[0], w[1]], [w[2], w[3]]),
            None => {
                let half = 0.5 * s * em.support_area().sqrt();
                Rect::square(crate::Vec2::zeros(), half)
            }
        };
        let r = required(self.radius, "radius")?;
        let step = required(self.step, "step")?;
        discrepancy_field(&cfg, &em, window, r, step).write_csv(&out.path("csv"))?;
        let moment = discrepancy_moment(&cfg, &em, window, r, step)?;
        write_json(
            &out.path("json"),
            &json!({ "n": cfg.n(), "radius": r, "step": step, "window": [window.lo, window.hi], "moment": moment }),
        )
    }
}

impl Task for ZcheckArgs {
    const NAME: &'static str = "zcheck";

    fn resolve(&mut self) -> CliResult<()> {
        if *self.n_max.get_or_insert(2000) < 40 {
            return Err(CliError::config("n_max", "must be at least 40"));
        }
        Ok(())
    }

    fn run(&self, _seed: u64, out: &mut Outputs) -> CliResult<()> {
        let n_max = required(self.n_max, "n_max")?;
        let tri = w_periodic(&Torus::triangular(), 1e-10)?;
        let em = solve_equilibrium_radial(&Potential::Quadratic)?;
        let alpha = alpha_conjectural(&em, tri.w);
        write_sweep_csv(&zcheck_sweep(n_max, alpha.value), &out.path("csv"))?;
        let lo = (n_max / 20).max(10) as f64;
        let mut ns: Vec<usize> = (0..16)
            .map(|k| (lo * (n_max as f64 / lo).powf(k as f64 / 15.0)).round() as usize)
            .collect();
        ns.dedup();
        let (a, b, c) = fit_order_n(&ns)?;
        write_json(
            &out.path("json"),
            &json!({
                "fit": { "ns": ns, "order_n": a, "log_n": b, "constant": c },
                "order_n_constant": order_n_constant(),
                "alpha_conjectural": alpha.value,
                "W_triangular": tri.w,
                "W_triangular_err": tri.err,
            }),
        )
    }
}

/// Object holding the flags and file keys of one command. Keys shared by all
/// commands (`seed`, `out`, `threads`) are removed by the caller.
fn parse_task<T: Task>(map: &Map<String, Value>) -> CliResult<T> {
    let known: BTreeSet<String> = match serde_json::to_value(T::default())? {
        Value::Object(m) => m.keys().cloned().collect(),
        _ => BTreeSet::new(),
    };
    for (key, value) in map {
        if !known.contains(key) {
            return Err(CliError::config(key.clone(), "unknown key"));
        }
        let single = Map::from_iter([(key.clone(), value.clone())]);
        if let Err(e) = serde_json::from_value::<T>(Value::Object(single)) {
            return Err(CliError::config(key.clone(), e.to_string()));
        }
    }
    serde_json::from_value(Value::Object(map.clone())).map_err(|e| CliError::config("config", e.to_string()))
}

fn without_nulls(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m.into_iter().filter(|(_, v)| !v.is_null()).collect(),
        _ => Map::new(),
    }
}

struct Global {
    out: PathBuf,
    seed: u64,
    threads: Option<usize>,
    file: Map<String, Value>,
}

fn read_config_file(path: &Path, command: &str) -> CliResult<Map<String, Value>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config("config", format!("{}: {e}", path.display())))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| CliError::config("config", e.to_string()))?;
    let Value::Object(mut map) = v else {
        return Err(CliError::config("config", "top level must be a JSON object"));
    };
    if let Some(c) = map.remove("command") {
        if c.as_str() != Some(command) {
            return Err(CliError::config("command", format!("file is for {c}, not `{command}`")));
        }
    }
    if let Some(inner) = map.remove("config") {
        let Value::Object(inner) = inner else {
            return Err(CliError::config("config", "must be a JSON object"));
        };
        return Ok(inner);
    }
    Ok(map)
}

fn execute<T: Task>(flags: &T, global: Global) -> CliResult<PathBuf> {
    let start = Instant::now();
    let mut file = global.file;
    file.remove("seed");
    file.remove("out");
    file.remove("threads");
    let mut merged = file;
    merged.extend(without_nulls(serde_json::to_value(flags)?));
    let mut task: T = parse_task(&merged)?;
    task.resolve()?;

    let mut config = without_nulls(serde_json::to_value(&task)?);
    config.insert("seed".into(), json!(global.seed));
    let canonical = serde_json::to_string(&json!({ "command": T::NAME, "config": config }))?;
    let digest = Sha256::digest(canonical.as_bytes());
    let hash = hex::encode(&digest[..4]);

    std::fs::create_dir_all(&global.out)?;
    let mut out = Outputs {
        dir: global.out.clone(),
        stem: format!("{}-{hash}", T::NAME),
        written: Vec::new(),
    };
    task.run(global.seed, &mut out)?;

    let manifest = json!({
        "command": T::NAME,
        "config": config,
        "config_sha256": hex::encode(digest),
        "outputs": out.written,
        "threads": global.threads,
        "version": env!("CARGO_PKG_VERSION"),
        "wall_time_s": start.elapsed().as_secs_f64(),
    });
    let path = global.out.join("manifest.json");
    write_json(&path, &manifest)?;
    Ok(path)
}

/// Parses the remaining configuration sources and runs the command; returns
/// the manifest path.
pub fn run(cli: Cli) -> CliResult<PathBuf> {
    let name = match &cli.command {
        Command::Equilibrium(_) => EquilibriumArgs::NAME,
        Command::Energy(_) => EnergyArgs::NAME,
        Command::Fekete(_) => FeketeArgs::NAME,
        Command::Sample(_) => SampleArgs::NAME,
        Command::Ginibre(_) => GinibreArgs::NAME,
        Command::Wper(_) => WperArgs::NAME,
        Command::ScanLattice(_) => ScanLatticeArgs::NAME,
        Command::Discrepancy(_) => DiscrepancyArgs::NAME,
        Command::Zcheck(_) => ZcheckArgs::NAME,
    };
    let file = match &cli.config {
        Some(p) => read_config_file(p, name)?,
        None => Map::new(),
    };
    let file_seed = match file.get("seed") {
        None => None,
        Some(v) => Some(v.as_u64().ok_or_else(|| CliError::config("seed", "must be a non-negative integer"))?),
    };
    let file_out = match file.get("out") {
        None => None,
        Some(v) => Some(PathBuf::from(
            v.as_str().ok_or_else(|| CliError::config("out", "must be a string"))?,
        )),
    };
    let threads = cli.threads;
    if let Some(t) = threads {
        if t == 0 {
            return Err(CliError::config("threads", "must be positive"));
        }
        // A pool that is already built is kept; results do not depend on it.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let global = Global {
        out: cli.out.or(file_out).unwrap_or_else(|| PathBuf::from("out")),
        seed: cli.seed.or(file_seed).unwrap_or(0),
        threads,
        file,
    };
    match &cli.command {
        Command::Equilibrium(a) => execute(a, global),
        Command::Energy(a) => execute(a, global),
        Command::Fekete(a) => execute(a, global),
        Command::Sample(a) => execute(a, global),
        Command::Ginibre(a) => execute(a, global),
        Command::Wper(a) => execute(a, global),
        Command::ScanLattice(a) => execute(a, global),
        Command::Discrepancy(a) => execute(a, global),
        Command::Zcheck(a) => execute(a, global),
    }
}

/// Entry point shared by the binary: parses `args` and maps failures to exit
/// codes (2 for config errors, 3 for module failures).
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(manifest) => {
            println!("{}", manifest.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
