use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use plumecal::pipeline::{Pipeline, PipelineConfig};
use plumecal::{Error, Result};

#[derive(Parser)]
#[command(name = "plumecal", version, about = "Dispersion-model calibration and emission inversion")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Pipeline configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Maximin design over the emulator box.
    Design,
    /// Source-receptor matrices at every design point.
    Snapshot,
    /// Fit the emulator from the design and snapshots.
    Train,
    /// Leave-one-out cross-validation of the emulator.
    Validate,
    /// Sobol screening of the model parameters.
    Sensitivity,
    /// Choose the noise variance by minimizing the expected-error functional.
    CalibrateNoise,
    /// Sample the posterior and summarize it.
    Invert {
        /// Noise variance; defaults to the calibration result or the config.
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Synthetic measurements from the full solver.
    Synthesize {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        theta: Option<Vec<f64>>,
        /// Rates in ton/yr.
        #[arg(long, value_delimiter = ',')]
        q: Option<Vec<f64>>,
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Posterior sensitivity to the prior spread.
    StudyPrior {
        #[arg(long, value_delimiter = ',')]
        taus: Option<Vec<f64>>,
    },
    /// Posterior sensitivity to the emulator design size.
    StudyEmulator {
        #[arg(long, value_delimiter = ',')]
        ks: Option<Vec<usize>>,
    },
    /// Markdown digest of the results in the output directory.
    Report,
}

fn load_config(common: &Common) -> Result<PipelineConfig> {
    let mut config = match &common.config {
        Some(p) => PipelineConfig::read(p)?,
        None => PipelineConfig::default(),
    };
    if common.seed.is_some() {
        config.seed = common.seed;
    }
    if let Some(out) = &common.out {
        config.out = std::path::absolute(out).map_err(|e| Error::io(out, e))?;
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<serde_json::Value> {
    if let Some(n) = cli.common.jobs {
        if n == 0 {
            return Err(Error::Config("--jobs must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let pipeline = Pipeline::new(load_config(&cli.common)?)?;
    let out = pipeline.out_dir();
    let value = match cli.command {
        Command::Design => {
            let d = pipeline.cmd_design()?;
            json!({ "k": d.k(), "score": d.score()? })
        }
        Command::Snapshot => {
            let d = pipeline.load_design()?;
            let s = pipeline.cmd_snapshot(&d)?;
            json!({ "snapshots": s.len() })
        }
        Command::Train => {
            let d = pipeline.load_design()?;
            let s = pipeline.read_snapshots(d.k())?;
            let em = pipeline.cmd_train(&d, &s)?;
            json!({ "entries": em.n_emulators(), "fallback": em.fallback_count() })
        }
        Command::Validate => {
            let d = pipeline.load_design()?;
            let s = pipeline.read_snapshots(d.k())?;
            let r = pipeline.cmd_validate(&d, &s)?;
            json!({ "r_squared": r.r_squared, "per_receptor": r.per_receptor })
        }
        Command::Sensitivity => {
            let r = pipeline.cmd_sensitivity()?;
            json!({ "verdict": r.verdict })
        }
        Command::CalibrateNoise => {
            let em = pipeline.load_emulator()?;
            let data = pipeline.load_data()?;
            let c = pipeline.cmd_calibrate_noise(&em, &data)?;
            json!({ "lambda_star": c.lambda_star, "boundary": c.boundary, "failed": c.failed })
        }
        Command::Invert { lambda } => {
            let em = pipeline.load_emulator()?;
            let data = pipeline.load_data()?;
            let lambda = pipeline.resolve_lambda(lambda)?;
            let inv = pipeline.cmd_invert(&em, &data, lambda)?;
            let s = &inv.summary;
            json!({
                "lambda": lambda,
                "acceptance_rate": inv.chain.acceptance_rate(),
                "names": s.names,
                "estimate": s.estimate,
                "radius": s.radius,
            })
        }
        Command::Synthesize { theta, q, lambda } => {
            let s = pipeline.cmd_synthesize(theta.as_deref(), q.as_deref(), lambda, pipeline.synthesis_seed())?;
            json!({ "theta": s.theta, "q": s.q, "lambda": s.lambda })
        }
        Command::StudyPrior { taus } => {
            let em = pipeline.load_emulator()?;
            let taus = taus.unwrap_or_else(|| pipeline.config.studies.taus.clone());
            let s = pipeline.cmd_study_prior(&em, &taus)?;
            json!({
                "taus": s.taus,
                "quantiles_increasing": s.quantiles_increasing,
                "monotone_replicates": s.monotone_replicates(),
                "replicates": s.radii_nondecreasing.len(),
            })
        }
        Command::StudyEmulator { ks } => {
            let ks = ks.unwrap_or_else(|| pipeline.config.studies.ks.clone());
            let s = pipeline.cmd_study_emulator(&ks)?;
            let d: Vec<_> = s.runs.iter().map(|r| json!({ "k": r.k, "distance": r.max_distance })).collect();
            json!({ "reference_k": s.reference_k, "runs": d })
        }
        Command::Report => {
            pipeline.cmd_report()?;
            json!({ "report": out.join(plumecal::pipeline::files::REPORT) })
        }
    };
    Ok(json!({ "ok": true, "out": out, "result": value }))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": "usage", "message": e.to_string() }));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(v) => {
            println!("{v}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
