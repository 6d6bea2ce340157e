//! Gaussian-process emulation of the source-receptor matrix: fit on a small
//! design, check leave-one-out skill, compare with a fresh solver run.
//!
//! cargo run --release --example emulator -- [K]

use plumecal::doe::particle_swarm_maximin;
use plumecal::forward::{source_receptor_matrix, ModelParams};
use plumecal::gp::{emulate_matrix, loocv, r_squared, KernelFamily};
use plumecal::pipeline::{Pipeline, PipelineConfig};

fn main() -> plumecal::Result<()> {
    let k: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(24);
    let pipeline = Pipeline::new(PipelineConfig {
        seed: Some(7),
        ..PipelineConfig::default()
    })?;
    let design = particle_swarm_maximin(k, 3, 2000, 20, 7)?.with_bounds(pipeline.config.bounds.clone())?;
    let snaps = pipeline.run_snapshots(&design)?;

    for family in KernelFamily::ALL {
        let em = emulate_matrix(&design, &snaps, family)?;
        let entry: Vec<f64> = snaps.iter().map(|s| s.get(0, 1)).collect();
        let r2 = r_squared(&loocv(&design.points, &entry, family)?);
        println!("{:<20} fallback entries {:>2}, LOOCV R^2 of A[R1,q2] {r2:.4}", family.name(), em.fallback_count());
    }

    let em = emulate_matrix(&design, &snaps, KernelFamily::SquaredExponential)?;
    let theta = [0.3, 0.1, -300.0];
    let exact = source_receptor_matrix(&ModelParams::new(theta[0], theta[1], theta[2]), &pipeline.site, &pipeline.wind)?;
    let q = [1.0, 1.0, 1.0, 1.0];
    let approx = em.matrix_at(&theta)?.apply(&q);
    println!("\nreceptor      solver    emulator   rel. error");
    for ((label, a), b) in exact.receptors.iter().zip(exact.apply(&q)).zip(approx) {
        println!("{label:<8} {a:>10.4e} {b:>10.4e} {:>10.3}", (b - a).abs() / a);
    }
    Ok(())
}
