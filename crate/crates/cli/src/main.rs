use std::path::PathBuf;

use clap::Parser;
use imreg_cli::{run_experiment, run_sweep, ExitCode, ExperimentConfig, Overrides};
use log::error;

/// Run adaptive internal-model regulator experiments.
#[derive(Debug, Parser)]
#[command(version, about)]
struct Args {
    /// Experiment configuration (TOML).
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(short, long)]
    out: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    k: Option<f64>,
    /// Integration step.
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    /// Run the gain sweep from the `[sweep]` section.
    #[arg(long)]
    sweep: bool,
    /// Repeat for more detail.
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,
}

fn main() -> std::process::ExitCode {
    let args = Args::parse();
    let level = match args.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    run(&args).into()
}

fn run(args: &Args) -> ExitCode {
    let mut cfg = match ExperimentConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::ConfigError;
        }
    };
    cfg.apply(&Overrides {
        lambda: args.lambda,
        k: args.k,
        h: args.h,
        horizon: args.horizon,
    });
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    cfg.output.dir = out.display().to_string();

    if args.sweep {
        match run_sweep(&cfg, &out) {
            Ok(report) => {
                for row in &report.rows {
                    let p = &row.point;
                    let status = match &row.result {
                        Ok(s) => match s.failure_time {
                            Some(t) => format!("{} at t = {t:.3}", s.status.as_str()),
                            None => format!("{} sup|e| = {:.3e}", s.status.as_str(), s.sup_e),
                        },
                        Err(e) => format!("error: {e}"),
                    };
                    println!("lambda = {:>6} k = {:>6} rho = {:?}: {status}", p.lambda, p.k, p.rho);
                }
                match report.smallest {
                    Some((l, k)) => {
                        println!("smallest gains meeting all thresholds: lambda = {l}, k = {k}");
                        ExitCode::Success
                    }
                    None => {
                        println!("no grid point meets all thresholds");
                        ExitCode::ThresholdFailure
                    }
                }
            }
            Err(e) => {
                error!("{e}");
                eprintln!("{e}");
                e.exit_code()
            }
        }
    } else {
        match run_experiment(&cfg, &out) {
            Ok(outcome) => {
                print!("{}", outcome.summary.to_key_values().render());
                outcome.summary.exit_code()
            }
            Err(e) => {
                eprintln!("{e}");
                e.exit_code()
            }
        }
    }
}
