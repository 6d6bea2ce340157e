//! Sobol total-effect indices: the Ishigami benchmark, then screening of the
//! five model parameters on a coarse forward model.
//!
//! cargo run --release --example screening

use std::f64::consts::PI;

use plumecal::doe::ParamBox;
use plumecal::pipeline::{Pipeline, PipelineConfig};
use plumecal::sensitivity::sobol_total_indices;

fn main() -> plumecal::Result<()> {
    let ishigami = |x: &[f64]| x[0].sin() + 7.0 * x[1].sin().powi(2) + 0.1 * x[2].powi(4) * x[0].sin();
    let bounds = ParamBox::new(vec!["x1".into(), "x2".into(), "x3".into()], vec![-PI; 3], vec![PI; 3])?;
    for n in [1024, 4096, 16384] {
        let t = sobol_total_indices(ishigami, &bounds, n, 1)?;
        println!("Ishigami N = {n:>5}: totals {:.4?}", t.totals);
    }

    let mut config = PipelineConfig {
        seed: Some(3),
        ..PipelineConfig::default()
    };
    config.sensitivity.k = 48;
    let report = Pipeline::new(config)?.sensitivity()?;
    println!("\nparameter  median total  kept");
    for v in &report.verdict {
        println!("{:<10} {:>12.4}  {}", v.parameter, v.median_total, v.keep);
    }
    println!("ranking: {:?}", report.ranking());
    Ok(())
}
