//! Posterior sensitivity to the prior spread and to the emulator design size.
//!
//! cargo run --release --example studies

use plumecal::pipeline::{Pipeline, PipelineConfig};

fn main() -> plumecal::Result<()> {
    let mut config = PipelineConfig {
        seed: Some(9),
        out: std::env::temp_dir().join("plumecal-studies"),
        ..PipelineConfig::default()
    };
    config.design.iterations = 2000;
    config.studies.replicates = 3;
    config.studies.steps = 50_000;
    let pipeline = Pipeline::new(config)?;

    let study = pipeline.cmd_study_emulator(&[16, 32, 64])?;
    println!("sup distance of q marginals to K = {}:", study.reference_k);
    for r in &study.runs {
        println!("  K = {:>2}: {:.4e}", r.k, r.max_distance);
    }

    let design = pipeline.cmd_design()?;
    let snaps = pipeline.run_snapshots(&design)?;
    let em = pipeline.cmd_train(&design, &snaps)?;
    let prior = pipeline.cmd_study_prior(&em, &[2.0, 3.0, 4.0])?;
    println!("\ntau  prior 0.99 quantiles (ton/yr)");
    for (t, q) in prior.taus.iter().zip(&prior.prior_quantiles) {
        println!("{t:>3}  {q:.1?}");
    }
    for r in &prior.runs {
        println!("replicate {} tau {}: q1 radius {:.2}, q2 radius {:.2}", r.replicate, r.tau, r.radius[3], r.radius[4]);
    }
    println!("radii nondecreasing in {} of {} replicates", prior.monotone_replicates(), prior.radii_nondecreasing.len());
    Ok(())
}
