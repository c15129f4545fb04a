//! Sweeps the C-AMP threshold multiplier on validation frames that the
//! experiment sweeps never draw, and prints the mean F1 per value.
//!
//! cargo run --release --example tune_amp_theta -- [config.json] [frames]

use scma_aud::baselines::AmpConfig;
use scma_aud::harness::{build_system, evaluate_method, test_frames, Detector, ExperimentConfig};
use scma_aud::rng::{derive_seed, stream};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let cfg = match args.next() {
        Some(path) => ExperimentConfig::load(path.as_ref())?,
        None => ExperimentConfig::from_json("{}")?,
    };
    let frames: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(2000);
    let sys = build_system(&cfg)?;
    let ms: Vec<usize> = (1..=3).filter(|&m| m <= cfg.system.N).collect();
    let snrs = [0.0, 10.0, 20.0, 30.0];

    let mut sets = Vec::new();
    for &m in &ms {
        for &snr in &snrs {
            let seed = derive_seed(cfg.data.seed, &[stream::TUNING, m as u64, f64::to_bits(snr)]);
            sets.push((m, snr, test_frames(&sys.phi, m, snr, frames, seed)?));
        }
    }

    println!("theta,mean_f1,mean_pd,mean_ppv");
    let mut best = (f64::NEG_INFINITY, 0.0);
    for step in 2..=16 {
        let theta = step as f64 * 0.25;
        let det = Detector::CAmp(AmpConfig { theta, ..AmpConfig::default() });
        let (mut f1, mut pd, mut ppv) = (0.0, 0.0, 0.0);
        for (m, snr, set) in &sets {
            let row = evaluate_method(&det, "C-AMP", &sys.phi, set, *snr, *m)?.row;
            f1 += row.f1_standard.unwrap_or(0.0);
            pd += row.pd.unwrap_or(0.0);
            ppv += row.ppv.unwrap_or(0.0);
        }
        let k = sets.len() as f64;
        println!("{theta:.2},{:.4},{:.4},{:.4}", f1 / k, pd / k, ppv / k);
        if f1 / k > best.0 {
            best = (f1 / k, theta);
        }
    }
    eprintln!("best theta {:.2} (mean F1 {:.4})", best.1, best.0);
    Ok(())
}
