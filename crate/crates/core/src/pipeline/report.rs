use std::fmt::Write as _;

use super::studies::{EmulatorStudy, PriorStudy};
use super::synth::SyntheticData;
use super::{files, read_json, Pipeline, ValidationReport};
use crate::bayes::InferenceSummary;
use crate::error::{Error, Result};
use crate::noise_cal::{self, LambdaCalibration};
use crate::sensitivity::ScreeningReport;

impl Pipeline {
    /// Markdown digest of whatever results exist in the output directory.
    pub fn report(&self) -> Result<String> {
        let dir = self.out_dir();
        let load = |name: &str| {
            let p = dir.join(name);
            p.is_file().then_some(p)
        };
        let mut md = String::new();
        let _ = writeln!(md, "# Calibration and inversion report\n");
        let _ = writeln!(md, "site: {}; seed: {}\n", self.site.name, self.seed());
        let mut any = false;

        if let Some(p) = load(files::SENSITIVITY_SUMMARY) {
            any = true;
            let r: ScreeningReport = read_json(p)?;
            let _ = writeln!(md, "## Parameter screening\n");
            let _ = writeln!(md, "| parameter | median total index | kept |");
            let _ = writeln!(md, "|---|---|---|");
            for v in &r.verdict {
                let kept = match (v.keep, v.kept_by_coupling) {
                    (true, true) => "yes (coupled)",
                    (true, false) => "yes",
                    _ => "no",
                };
                let _ = writeln!(md, "| {} | {:.4} | {kept} |", v.parameter, v.median_total);
            }
            let _ = writeln!(md);
        }

        if let Some(p) = load(files::LOOCV_SUMMARY) {
            any = true;
            let r: ValidationReport = read_json(p)?;
            let _ = writeln!(md, "## Emulator cross-validation\n");
            let _ = writeln!(md, "{} held-out points, overall R^2 = {:.4}\n", r.records.len(), r.r_squared);
            let _ = writeln!(md, "| receptor | R^2 |");
            let _ = writeln!(md, "|---|---|");
            for (l, v) in &r.per_receptor {
                let _ = writeln!(md, "| {l} | {v:.4} |");
            }
            let _ = writeln!(md);
        }

        if let Some(p) = load(files::SYNTHETIC) {
            any = true;
            let s: SyntheticData = read_json(p)?;
            let _ = writeln!(md, "## Synthetic data\n");
            let _ = writeln!(
                md,
                "truth theta = {:?}, q = {:?} ton/yr, lambda = {:.4e}\n",
                s.theta, s.q, s.lambda
            );
        }

        let mut lambda_star = None;
        if let Some(p) = load(files::NOISE_SUMMARY) {
            any = true;
            let c: LambdaCalibration = read_json(p)?;
            lambda_star = Some(c.lambda_star);
            let _ = writeln!(md, "## Noise variance\n");
            let _ = writeln!(md, "| lambda | J | stderr |");
            let _ = writeln!(md, "|---|---|---|");
            for e in &c.evaluations {
                let _ = writeln!(md, "| {:.4e} | {:.6e} | {:.2e} |", e.lambda, e.j, e.stderr);
            }
            let _ = writeln!(
                md,
                "\nminimizer lambda* = {:.4e}{}\n",
                c.lambda_star,
                if c.boundary { " (at the candidate boundary)" } else { "" }
            );
        }

        if let Some(p) = load(files::SUMMARY) {
            any = true;
            let s: InferenceSummary = read_json(p)?;
            let _ = writeln!(md, "## Posterior\n");
            let _ = writeln!(
                md,
                "{} retained samples, acceptance rate {:.3}\n",
                s.samples,
                s.acceptance_rate.unwrap_or(f64::NAN)
            );
            let _ = writeln!(md, "| parameter | estimate | mean | {:.0}% radius | interval |", 100.0 * s.mass);
            let _ = writeln!(md, "|---|---|---|---|---|");
            for i in 0..s.names.len() {
                let _ = writeln!(
                    md,
                    "| {} | {:.4} | {:.4} | {:.4} | [{:.4}, {:.4}] |",
                    s.names[i], s.estimate[i], s.mean[i], s.radius[i], s.lower[i], s.upper[i]
                );
            }
            if let (Some(l), Ok(data)) = (lambda_star, self.load_data()) {
                if let Ok(snr) = noise_cal::snr_report(&data.values, l) {
                    let _ = writeln!(md, "\nSNR at lambda*: {snr:.2}");
                }
            }
            let _ = writeln!(md);
        }

        if let Some(p) = load(files::STUDY_PRIOR) {
            any = true;
            let s: PriorStudy = read_json(p)?;
            let _ = writeln!(md, "## Prior spread study\n");
            let _ = writeln!(md, "| tau | prior 0.99 quantiles |");
            let _ = writeln!(md, "|---|---|");
            for (t, q) in s.taus.iter().zip(&s.prior_quantiles) {
                let _ = writeln!(md, "| {t} | {q:.2?} |");
            }
            let _ = writeln!(
                md,
                "\nq1/q2 radii nondecreasing in tau for {} of {} replicates\n",
                s.monotone_replicates(),
                s.radii_nondecreasing.len()
            );
        }

        if let Some(p) = load(files::STUDY_EMULATOR) {
            any = true;
            let s: EmulatorStudy = read_json(p)?;
            let _ = writeln!(md, "## Emulator size study\n");
            let _ = writeln!(md, "| K | sup distance of q densities to K = {} |", s.reference_k);
            let _ = writeln!(md, "|---|---|");
            for r in &s.runs {
                let _ = writeln!(md, "| {} | {:.4e} |", r.k, r.max_distance);
            }
            let _ = writeln!(md);
        }

        if !any {
            return Err(Error::Config(format!("no results found in {}", dir.display())));
        }
        Ok(md)
    }

    pub fn cmd_report(&self) -> Result<String> {
        let md = self.report()?;
        let path = self.output(files::REPORT)?;
        std::fs::write(&path, &md).map_err(|e| Error::io(&path, e))?;
        Ok(md)
    }
}
