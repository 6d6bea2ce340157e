//! Gamma priors from an engineering estimate and a quantile bound, and the
//! adaptive Metropolis-Hastings sampler on a correlated target.
//!
//! cargo run --release --example adaptive_mcmc

use plumecal::bayes::{adaptive_mh, gamma_from_mode_quantile, postprocess_chain, McmcSettings, PRIOR_QUANTILE};

fn main() -> plumecal::Result<()> {
    println!("q_eng  tau     alpha      beta   0.99 quantile");
    for tau in [2.0, 3.0, 4.0] {
        for q_eng in [5.0, 35.0, 80.0] {
            let g = gamma_from_mode_quantile(q_eng, tau)?;
            println!("{q_eng:>5} {tau:>4} {:>9.4} {:>9.5} {:>12.4}", g.alpha, g.beta, g.quantile(PRIOR_QUANTILE));
        }
    }

    // Bivariate normal, unit variances, correlation 0.9.
    let rho: f64 = 0.9;
    let lp = move |x: &[f64]| -0.5 * (x[0] * x[0] - 2.0 * rho * x[0] * x[1] + x[1] * x[1]) / (1.0 - rho * rho);
    let chain = adaptive_mh(lp, &[3.0, -3.0], &McmcSettings::default().with_steps(200_000), 1)?;
    let s = postprocess_chain(&chain, 0.5, 10)?;
    let (a, b) = (s.column(0), s.column(1));
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n;
    let va = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / n;
    let vb = b.iter().map(|y| (y - mb).powi(2)).sum::<f64>() / n;
    println!(
        "\nchain: acceptance {:.3}, {} samples, means ({ma:.3}, {mb:.3}), correlation {:.3}",
        chain.acceptance_rate(),
        s.len(),
        cov / (va * vb).sqrt()
    );
    Ok(())
}
