//! End-to-end synthetic inversion: design, snapshots, emulator, synthetic
//! measurements from the full solver, adaptive MCMC and point estimates.
//!
//! cargo run --release --example inversion [steps]

use std::time::Instant;

use plumecal::pipeline::{Pipeline, PipelineConfig};

fn main() -> plumecal::Result<()> {
    let steps: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(100_000);
    let dir = std::env::temp_dir().join("plumecal-inversion");
    let mut config = PipelineConfig {
        seed: Some(2024),
        out: dir.clone(),
        ..PipelineConfig::default()
    };
    config.mcmc.steps = steps;
    let pipeline = Pipeline::new(config)?;

    let t = Instant::now();
    let design = pipeline.cmd_design()?;
    println!("design: K = {}, score {:.4} ({:.1} s)", design.k(), design.score()?, t.elapsed().as_secs_f64());

    let t = Instant::now();
    let snaps = pipeline.cmd_snapshot(&design)?;
    println!("snapshots: {} ({:.1} s)", snaps.len(), t.elapsed().as_secs_f64());

    let t = Instant::now();
    let emulator = pipeline.cmd_train(&design, &snaps)?;
    println!("emulator: {} entries ({:.1} s)", emulator.n_emulators(), t.elapsed().as_secs_f64());

    let syn = pipeline.cmd_synthesize(None, None, None, pipeline.synthesis_seed())?;
    println!("clean signal (kg): {:?}", syn.clean.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>());
    println!("lambda_true = {:.3e}", syn.lambda);

    let t = Instant::now();
    let inv = pipeline.cmd_invert(&emulator, &syn.data, syn.lambda)?;
    let s = &inv.summary;
    println!(
        "chain: {} steps, {} retained, acceptance {:.3} ({:.1} s)",
        inv.chain.len(),
        s.samples,
        inv.chain.acceptance_rate(),
        t.elapsed().as_secs_f64()
    );
    println!("{:>6} {:>10} {:>10} {:>10} {:>10}", "", "truth", "estimate", "mean", "radius");
    let truth: Vec<f64> = syn.theta.iter().chain(&syn.q).copied().collect();
    for i in 0..s.names.len() {
        println!(
            "{:>6} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
            s.names[i], truth[i], s.estimate[i], s.mean[i], s.radius[i]
        );
    }
    println!("outputs in {}", dir.display());
    Ok(())
}
