//! Ginibre partition function and the next-order constant α.
//!
//! At β = 2 and `V = |x|²`, `Z_n = n^{−n(n+1)/2} π^n Π_{k≤n} k!` and
//! `log Z_n = −3n²/4 + (n/2) log n + n(−1 + ½ log 2 + (3/2) log π) + O(log n)`.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::numeric::{KahanSum, Quadrature};
use crate::potential::EquilibriumMeasure;

/// `−1 + ½ log 2 + (3/2) log π`, the order-`n` coefficient of `log Z_n`.
pub fn order_n_constant() -> f64 {
    -1.0 + 0.5 * 2f64.ln() + 1.5 * PI.ln()
}

/// `log Z_n = −(n(n+1)/2) log n + n log π + Σ_{k≤n} log k!`.
pub fn log_z_ginibre_exact(n: usize) -> f64 {
    let nf = n as f64;
    let mut acc = KahanSum::new();
    acc.add(-0.5 * nf * (nf + 1.0) * nf.ln());
    acc.add(nf * PI.ln());
    for k in 1..=n {
        acc.add(ln_gamma(k as f64 + 1.0));
    }
    acc.value()
}

pub fn log_z_ginibre_asymptotic(n: usize) -> f64 {
    let nf = n as f64;
    -0.75 * nf * nf + 0.5 * nf * nf.ln() + nf * order_n_constant()
}

/// `(log Z_n + 3n²/4 − (n/2) log n)/n`, which tends to [`order_n_constant`].
pub fn order_n_quotient(n: usize) -> f64 {
    let nf = n as f64;
    (log_z_ginibre_exact(n) + 0.75 * nf * nf - 0.5 * nf * nf.ln()) / nf
}

/// Least-squares fit of `log Z_n + 3n²/4 − (n/2) log n ≈ a n + b log n + c`
/// over `ns`; returns `(a, b, c)`.
pub fn fit_order_n(ns: &[usize]) -> Result<(f64, f64, f64)> {
    if ns.len() < 3 {
        return Err(Error::param("ns", "need at least three sizes to fit three terms"));
    }
    let rows = ns.len();
    let a = DMatrix::from_fn(rows, 3, |i, j| {
        let nf = ns[i] as f64;
        match j {
            0 => nf,
            1 => nf.ln(),
            _ => 1.0,
        }
    });
    let b = DVector::from_fn(rows, |i, _| {
        let nf = ns[i] as f64;
        log_z_ginibre_exact(ns[i]) + 0.75 * nf * nf - 0.5 * nf * nf.ln()
    });
    let x = a
        .svd(true, true)
        .solve(&b, 1e-14)
        .map_err(|e| Error::param("ns", e.to_string()))?;
    Ok((x[0], x[1], x[2]))
}

/// `α̂ = W_tri/π − ½ ∫ m₀ log m₀`, conjectural because the minimality of
/// the triangular lattice is open.
pub fn alpha_conjectural(em: &EquilibriumMeasure, w_tri: f64) -> Quadrature {
    let ent = em.density_entropy();
    Quadrature {
        value: w_tri / PI - 0.5 * ent.value,
        error: 0.5 * ent.error,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionReport {
    pub n: usize,
    #[serde(rename = "logZ_exact")]
    pub log_z_exact: f64,
    #[serde(rename = "logZ_asymptotic")]
    pub log_z_asymptotic: f64,
    pub residual: f64,
    pub residual_over_logn: f64,
    /// Conjectural α for the circular law.
    pub alpha_conjectural: f64,
}

pub fn partition_report(n: usize, alpha: f64) -> PartitionReport {
    let exact = log_z_ginibre_exact(n);
    let asym = log_z_ginibre_asymptotic(n);
    PartitionReport {
        n,
        log_z_exact: exact,
        log_z_asymptotic: asym,
        residual: exact - asym,
        residual_over_logn: (exact - asym) / (n as f64).ln(),
        alpha_conjectural: alpha,
    }
}

/// Reports for `n = 2, …, n_max`, accumulating `Σ log k!` incrementally.
pub fn zcheck_sweep(n_max: usize, alpha: f64) -> Vec<PartitionReport> {
    let mut out = Vec::with_capacity(n_max.saturating_sub(1));
    let mut log_fact_sum = KahanSum::new();
    for n in 1..=n_max {
        log_fact_sum.add(ln_gamma(n as f64 + 1.0));
        if n < 2 {
            continue;
        }
        let nf = n as f64;
        let exact = -0.5 * nf * (nf + 1.0) * nf.ln() + nf * PI.ln() + log_fact_sum.value();
        let asym = log_z_ginibre_asymptotic(n);
        out.push(PartitionReport {
            n,
            log_z_exact: exact,
            log_z_asymptotic: asym,
            residual: exact - asym,
            residual_over_logn: (exact - asym) / nf.ln(),
            alpha_conjectural: alpha,
        });
    }
    out
}

pub fn write_sweep_csv(rows: &[PartitionReport], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["n", "logZ_exact", "logZ_asymptotic", "residual", "residual_over_logn"])?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            format!("{:.16e}", r.log_z_exact),
            format!("{:.16e}", r.log_z_asymptotic),
            format!("{:.16e}", r.residual),
            format!("{:.16e}", r.residual_over_logn),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn small_n_closed_forms() {
        assert_relative_eq!(log_z_ginibre_exact(1), PI.ln(), epsilon = 1e-15);
        assert_relative_eq!(
            log_z_ginibre_exact(2),
            -2.0 * 2f64.ln() + 2.0 * PI.ln(),
            epsilon = 1e-14
        );
        assert_relative_eq!(
            log_z_ginibre_asymptotic(1),
            -0.75 + (-1.0 + 0.5 * 2f64.ln() + 1.5 * PI.ln()),
            epsilon = 1e-15
        );
    }

    #[test]
    fn log_gamma_matches_integer_factorials() {
        let mut fact = 1.0f64;
        for k in 1..=20u32 {
            fact *= k as f64;
            assert_relative_eq!(ln_gamma(k as f64 + 1.0), fact.ln(), max_relative = 1e-14);
        }
    }

    #[test]
    fn sweep_agrees_with_direct_evaluation() {
        let rows = zcheck_sweep(300, 0.0);
        assert_eq!(rows.first().unwrap().n, 2);
        for r in rows.iter().step_by(37) {
            assert_relative_eq!(r.log_z_exact, log_z_ginibre_exact(r.n), max_relative = 1e-13);
        }
    }
}
