//! Detection probability of the Bayes detector that knows the noise level:
//! every size-m support is scored by its Gaussian likelihood
//! `y ~ CN(0, Phi_S Phi_S^H + sigma^2 I)` and the m devices with the largest
//! posterior marginals are declared active. No detector can beat it on
//! average, so it bounds what any trained network can reach.
//!
//! cargo run --release --example bayes_ceiling -- [config.json] [frames]

use nalgebra::DMatrix;
use num_complex::Complex64;
use scma_aud::baselines::combinations;
use scma_aud::harness::{build_system, test_frames, ExperimentConfig};
use scma_aud::rng::{derive_seed, stream};
use scma_aud::signal::snr_to_noise_variance;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let cfg = match args.next() {
        Some(path) => ExperimentConfig::load(path.as_ref())?,
        None => ExperimentConfig::from_json("{}")?,
    };
    let frames: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(10_000);
    let sys = build_system(&cfg)?;
    let (l, n_dev) = (cfg.system.L, cfg.system.N);
    let phi = sys.phi.matrix();

    println!("snr_db,m,bayes_pd,bayes_exact");
    for &m in &cfg.sweep.m {
        let supports: Vec<Vec<usize>> = combinations(n_dev, m).collect();
        for &snr in &cfg.sweep.snr_db {
            let s2 = snr_to_noise_variance(snr, &sys.phi, m);
            // precision matrix and log-determinant per support
            let models: Vec<(DMatrix<Complex64>, f64)> = supports
                .iter()
                .map(|s| {
                    let ps = phi.select_columns(s);
                    let cov = &ps * ps.adjoint() + DMatrix::identity(l, l) * Complex64::new(s2, 0.0);
                    let ch = cov.cholesky().expect("covariance is positive definite");
                    let logdet: f64 = (0..l).map(|i| 2.0 * ch.l()[(i, i)].re.ln()).sum();
                    (ch.inverse(), logdet)
                })
                .collect();
            let seed = derive_seed(cfg.data.seed, &[stream::TUNING, m as u64, snr.to_bits(), 1]);
            let set = test_frames(&sys.phi, m, snr, frames, seed)?;
            let (mut hits, mut exact) = (0usize, 0usize);
            for f in &set {
                let ll: Vec<f64> = models
                    .iter()
                    .map(|(inv, logdet)| -logdet - (f.y.adjoint() * inv * &f.y)[(0, 0)].re)
                    .collect();
                let top = ll.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut marginal = vec![0.0; n_dev];
                for (s, v) in supports.iter().zip(&ll) {
                    for &n in s {
                        marginal[n] += (v - top).exp();
                    }
                }
                let mut order: Vec<usize> = (0..n_dev).collect();
                order.sort_by(|&a, &b| marginal[b].total_cmp(&marginal[a]));
                let mut chosen = order[..m].to_vec();
                chosen.sort_unstable();
                let truth = f.activity.support();
                hits += chosen.iter().filter(|n| truth.contains(n)).count();
                exact += usize::from(chosen == truth);
            }
            println!(
                "{snr:.1},{m},{:.4},{:.4}",
                hits as f64 / (set.len() * m) as f64,
                exact as f64 / set.len() as f64
            );
        }
    }
    Ok(())
}
