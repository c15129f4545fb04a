use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::lstsq::least_squares;
use super::{Result, SolverError};
use crate::signal::MeasurementMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BompConfig {
    /// Number of blocks to select.
    pub sparsity: usize,
    /// Column blocks partitioning `0..N`; `None` means one block per device.
    #[serde(default)]
    pub blocks: Option<Vec<Vec<usize>>>,
}

impl BompConfig {
    pub fn singletons(sparsity: usize) -> Self {
        Self {
            sparsity,
            blocks: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BompOutcome {
    /// Selected device indices, ascending.
    pub support: Vec<usize>,
    /// Selected block indices in pick order.
    pub picks: Vec<usize>,
    /// Length-N least-squares estimate, zero off the support.
    pub estimate: DVector<Complex64>,
    /// Residual norm before the first pick and after every pick.
    pub residual_norms: Vec<f64>,
    /// Some refit hit a rank-deficient submatrix (minimum-norm solution used).
    pub rank_deficient: bool,
}

fn resolve_blocks(n: usize, cfg: &BompConfig) -> Result<Vec<Vec<usize>>> {
    let blocks = match &cfg.blocks {
        None => (0..n).map(|i| vec![i]).collect(),
        Some(b) => b.clone(),
    };
    let mut seen = vec![false; n];
    for block in &blocks {
        if block.is_empty() {
            return Err(SolverError::Config("empty block".into()));
        }
        for &i in block {
            if i >= n || seen[i] {
                return Err(SolverError::Config(format!("blocks do not partition 0..{n} (index {i})")));
            }
            seen[i] = true;
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(SolverError::Config(format!("blocks do not cover 0..{n}")));
    }
    Ok(blocks)
}

/// Least-squares block orthogonal matching pursuit.
///
/// Each of the `sparsity` iterations picks the unselected block whose
/// column-normalized correlation with the residual has the largest norm,
/// then refits all selected columns by least squares.
pub fn ls_bomp(phi: &MeasurementMatrix, y: &DVector<Complex64>, cfg: &BompConfig) -> Result<BompOutcome> {
    let a = phi.matrix();
    let n = a.ncols();
    if y.len() != a.nrows() {
        return Err(SolverError::Dimension(format!("y has {} entries, Phi has {} rows", y.len(), a.nrows())));
    }
    let blocks = resolve_blocks(n, cfg)?;
    if cfg.sparsity > blocks.len() {
        return Err(SolverError::Config(format!(
            "sparsity {} exceeds {} blocks",
            cfg.sparsity,
            blocks.len()
        )));
    }
    let norms: Vec<f64> = (0..n).map(|k| a.column(k).norm()).collect();
    if let Some(k) = norms.iter().position(|&v| v == 0.0) {
        return Err(SolverError::ZeroColumn(k));
    }

    let mut chosen = vec![false; blocks.len()];
    let mut picks = Vec::with_capacity(cfg.sparsity);
    let mut columns: Vec<usize> = Vec::new();
    let mut residual = y.clone();
    let mut residual_norms = vec![residual.norm()];
    let mut rank_deficient = false;
    let mut coefficients = DVector::zeros(0);

    for _ in 0..cfg.sparsity {
        let mut best: Option<(usize, f64)> = None;
        for (b, block) in blocks.iter().enumerate() {
            if chosen[b] {
                continue;
            }
            let score = block
                .iter()
                .map(|&k| (a.column(k).dotc(&residual).norm() / norms[k]).powi(2))
                .sum::<f64>()
                .sqrt();
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((b, score));
            }
        }
        let (b, _) = best.expect("sparsity <= block count");
        chosen[b] = true;
        picks.push(b);
        columns.extend(&blocks[b]);
        let fit = least_squares(a, &columns, y);
        rank_deficient |= fit.rank_deficient;
        residual = fit.residual;
        coefficients = fit.coefficients;
        residual_norms.push(residual.norm());
    }

    let mut estimate = DVector::zeros(n);
    for (&k, &c) in columns.iter().zip(coefficients.iter()) {
        estimate[k] = c;
    }
    let mut support = columns;
    support.sort_unstable();
    Ok(BompOutcome {
        support,
        picks,
        estimate,
        residual_norms,
        rank_deficient,
    })
}
