use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{Result, SolverError};
use crate::signal::MeasurementMatrix;

/// Consecutive residual increases treated as divergence, once the residual
/// also exceeds `||y||`. Without the second condition the slow creep of the
/// residual towards its fixed point would count.
const DIVERGENCE_RUN: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AmpConfig {
    pub max_iters: usize,
    /// Weight of the new iterate, in (0, 1].
    pub damping: f64,
    /// Threshold multiplier: `tau = theta * ||z|| / sqrt(L)`.
    pub theta: f64,
    /// Stop once `||x_new - x|| <= tolerance * ||x_new||`.
    pub tolerance: f64,
}

impl Default for AmpConfig {
    fn default() -> Self {
        Self {
            max_iters: 50,
            damping: 1.0,
            theta: 1.5,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AmpOutcome {
    /// Nonzero entries of the final estimate; empty when diverged.
    pub support: Vec<usize>,
    pub estimate: DVector<Complex64>,
    /// Threshold used at each iteration.
    pub tau_trace: Vec<f64>,
    /// Residual norm entering each iteration, plus the final one.
    pub residual_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub diverged: bool,
}

impl AmpOutcome {
    /// Iterations where the threshold rose.
    pub fn tau_increases(&self) -> usize {
        self.tau_trace.windows(2).filter(|w| w[1] > w[0]).count()
    }
}

/// Magnitude soft threshold; keeps the phase.
pub fn soft_threshold(r: Complex64, tau: f64) -> Complex64 {
    let mag = r.norm();
    if mag > tau {
        r * ((mag - tau) / mag)
    } else {
        Complex64::new(0.0, 0.0)
    }
}

/// Complex AMP with soft thresholding.
///
/// ```text
/// r     = x + Phi^H z
/// x'    = eta(r; tau),               tau = theta ||z|| / sqrt(L)
/// z'    = y - Phi x' + z * (1/L) sum_{|r_n| > tau} (1 - tau / (2 |r_n|))
/// ```
pub fn c_amp(phi: &MeasurementMatrix, y: &DVector<Complex64>, cfg: &AmpConfig) -> Result<AmpOutcome> {
    let a = phi.matrix();
    let (l, n) = (a.nrows(), a.ncols());
    if y.len() != l {
        return Err(SolverError::Dimension(format!("y has {} entries, Phi has {l} rows", y.len())));
    }
    if cfg.max_iters == 0 || !(cfg.damping > 0.0 && cfg.damping <= 1.0) || !(cfg.theta >= 0.0) || !(cfg.tolerance > 0.0) {
        return Err(SolverError::Config(format!("invalid AMP configuration {cfg:?}")));
    }
    let sqrt_l = (l as f64).sqrt();
    let a_h = a.adjoint();

    let mut x = DVector::<Complex64>::zeros(n);
    let mut z = y.clone();
    let y_norm = y.norm();
    let mut tau_trace = Vec::with_capacity(cfg.max_iters);
    let mut residual_trace = vec![z.norm()];
    let mut growth_run = 0;
    let mut converged = false;
    let mut diverged = false;
    let mut iterations = 0;

    for _ in 0..cfg.max_iters {
        iterations += 1;
        let z_norm = z.norm();
        let tau = cfg.theta * z_norm / sqrt_l;
        tau_trace.push(tau);
        let r = &x + &a_h * &z;
        let mut x_new = r.map(|v| soft_threshold(v, tau));
        if cfg.damping < 1.0 {
            x_new = &x_new * Complex64::new(cfg.damping, 0.0) + &x * Complex64::new(1.0 - cfg.damping, 0.0);
        }
        let onsager: f64 = r
            .iter()
            .filter(|v| v.norm() > tau)
            .map(|v| 1.0 - tau / (2.0 * v.norm()))
            .sum::<f64>()
            / l as f64;
        let z_new = y - a * &x_new + &z * Complex64::new(onsager, 0.0);
        let change = (&x_new - &x).norm();
        let new_norm = z_new.norm();

        growth_run = if new_norm > z_norm { growth_run + 1 } else { 0 };
        residual_trace.push(new_norm);
        x = x_new;
        z = z_new;
        if !new_norm.is_finite() || (growth_run >= DIVERGENCE_RUN && new_norm > y_norm) {
            diverged = true;
            break;
        }
        if change <= cfg.tolerance * x.norm() {
            converged = true;
            break;
        }
    }

    let support = if diverged {
        Vec::new()
    } else {
        (0..n).filter(|&k| x[k].norm() != 0.0).collect()
    };
    Ok(AmpOutcome {
        support,
        estimate: x,
        tau_trace,
        residual_trace,
        iterations,
        converged,
        diverged,
    })
}
