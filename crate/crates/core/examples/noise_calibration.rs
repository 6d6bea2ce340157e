//! Choosing the noise variance: evaluate the expected-error functional over
//! log-spaced candidates, fit a GP to the curve and take its minimizer.
//!
//! cargo run --release --example noise_calibration

use plumecal::pipeline::{add_noise, clean_signal, Measurements, Pipeline, PipelineConfig};

fn main() -> plumecal::Result<()> {
    let mut config = PipelineConfig {
        seed: Some(5),
        ..PipelineConfig::default()
    };
    config.design.k = 32;
    config.design.iterations = 2000;
    config.noise.steps = 50_000;
    let pipeline = Pipeline::new(config)?;
    let design = pipeline.make_design(32, "design")?;
    let snaps = pipeline.run_snapshots(&design)?;
    let em = plumecal::gp::emulate_matrix(&design, &snaps, pipeline.config.kernel)?;

    let clean = clean_signal(&pipeline.site, &pipeline.wind, &[0.3, 0.1, -300.0], &[35.0, 80.0, 5.0, 5.0])?;
    let lambda_true = pipeline.synthetic_lambda(&clean)?;
    let data = Measurements::new(em.receptors.clone(), add_noise(&clean, lambda_true, pipeline.synthesis_seed())?)?;

    let cal = pipeline.calibrate_noise(&em, &data)?;
    println!("   lambda            J       stderr");
    for e in &cal.evaluations {
        println!("{:>10.3e} {:>12.5} {:>12.2e}", e.lambda, e.j, e.stderr);
    }
    println!(
        "lambda* = {:.3e}{} (generator used {lambda_true:.3e})",
        cal.lambda_star,
        if cal.boundary { " at the candidate boundary" } else { "" }
    );
    Ok(())
}
