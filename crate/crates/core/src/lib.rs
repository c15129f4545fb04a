//! Grant-free SCMA active user detection workbench.
//!
//! * [`signal`]: factor graph, codebook, pilots, measurement matrix, frames.
//! * [`datagen`]: labelled corpora of stacked observations and their file format.
//! * [`nn`]: dense and residual detectors trained from scratch.
//! * [`baselines`]: LS-BOMP, complex AMP and the exhaustive least-squares search.
//! * [`metrics`]: confusion counts, P_D / P_M / PPV / F1 and AUC.
//! * [`harness`]: config-driven experiment pipeline behind the CLI.

pub mod baselines;
pub mod datagen;
pub mod harness;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod signal;
