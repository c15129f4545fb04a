use serde::{Deserialize, Serialize};

use super::{NnError, Result};
use crate::signal::ActivityVector;

/// Rule turning per-device probabilities into an active set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionPolicy {
    /// The m most probable devices; equal probabilities favour the lower index.
    TopM(usize),
    /// Every device with probability strictly above the threshold.
    Threshold(f64),
}

pub fn select_support(probs: &[f64], policy: SelectionPolicy) -> Result<ActivityVector> {
    let n = probs.len();
    match policy {
        SelectionPolicy::TopM(m) => {
            if m > n {
                return Err(NnError::Config(format!("cannot select {m} of {n} devices")));
            }
            let mut order: Vec<usize> = (0..n).collect();
            // stable: ties keep ascending index order
            order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]));
            Ok(ActivityVector::from_support(n, &order[..m]))
        }
        SelectionPolicy::Threshold(tau) => Ok(ActivityVector::from_bools(
            probs.iter().map(|&p| p > tau).collect(),
        )),
    }
}
