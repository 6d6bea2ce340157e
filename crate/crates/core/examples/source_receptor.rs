//! Builds the 9 x 4 source-receptor matrix for the bundled synthetic site
//! under a synthetic month of valley wind.
//!
//! cargo run --release --example source_receptor

use std::time::Instant;

use plumecal::forward::{source_receptor_matrix, ModelParams, SiteConfig, WindRecord};

fn main() -> plumecal::Result<()> {
    let site = SiteConfig::trail_like();
    let wind = WindRecord::synthetic(site.window, 3600.0, 7)?;
    let theta = ModelParams::new(0.3, 0.1, -300.0);

    let start = Instant::now();
    let a = source_receptor_matrix(&theta, &site, &wind)?;
    println!("solve time: {:.2} s", start.elapsed().as_secs_f64());

    print!("{:>8}", "");
    for s in &a.sources {
        print!("{s:>12}");
    }
    println!();
    for (i, r) in a.receptors.iter().enumerate() {
        print!("{r:>8}");
        for j in 0..a.n_sources() {
            print!("{:>12.4e}", a.get(i, j));
        }
        println!();
    }
    Ok(())
}
