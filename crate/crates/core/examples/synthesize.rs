//! Synthetic measurements from the full solver at a chosen truth, with the
//! noise variance set from a target signal-to-noise ratio.
//!
//! cargo run --release --example synthesize -- [snr]

use plumecal::noise_cal::{lambda_for_snr, snr_report};
use plumecal::pipeline::{add_noise, clean_signal, Pipeline, PipelineConfig};

fn main() -> plumecal::Result<()> {
    let snr: f64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(3.0);
    let pipeline = Pipeline::new(PipelineConfig {
        seed: Some(11),
        ..PipelineConfig::default()
    })?;
    let theta = [0.3, 0.1, -300.0];
    let q = [35.0, 80.0, 5.0, 5.0];
    let clean = clean_signal(&pipeline.site, &pipeline.wind, &theta, &q)?;
    let lambda = lambda_for_snr(&clean, snr)?;
    let noisy = add_noise(&clean, lambda, pipeline.synthesis_seed())?;
    println!("lambda = {lambda:.4e} kg^2 (SNR {:.2})", snr_report(&clean, lambda)?);
    println!("receptor    clean (kg)   noisy (kg)");
    for ((r, c), w) in pipeline.site.receptors.iter().zip(&clean).zip(&noisy) {
        println!("{:<8} {c:>12.4e} {w:>12.4e}", r.label);
    }
    Ok(())
}
