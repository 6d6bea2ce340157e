//! Maximin design for the three calibration parameters.
//!
//! cargo run --release --example design -- [K] [iterations]

use std::time::Instant;

use plumecal::doe::{latin_hypercube, particle_swarm_maximin, ParamBox};

fn main() -> plumecal::Result<()> {
    let mut args = std::env::args().skip(1);
    let k: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(64);
    let iterations: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(10_000);

    let lhd = latin_hypercube(k, 3, 1)?;
    println!("random LHD score      {:.4}", lhd.score()?);

    let start = Instant::now();
    let design = particle_swarm_maximin(k, 3, iterations, 20, 1)?.with_bounds(ParamBox::calibration())?;
    println!(
        "swarm score           {:.4}  ({} iterations, {:.1} s)",
        design.score()?,
        iterations,
        start.elapsed().as_secs_f64()
    );
    for (k, x) in design.physical().iter().enumerate().take(5) {
        println!("  k={k:<3} p={:.3} z0={:.3} L={:.1}", x[0], x[1], x[2]);
    }
    for (a, b) in [(2usize, 500usize), (4, 2000)] {
        let d = particle_swarm_maximin(a, 1, b, 20, 3)?;
        println!("K={a}, m=1 after {b} iterations: score {:.4}", d.score()?);
    }
    Ok(())
}
