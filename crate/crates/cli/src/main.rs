use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use metaopt::{experiment, CliError, ExperimentConfig, Workers};

#[derive(Parser)]
#[command(name = "metaopt", version, about = "Meta-train and evaluate learned optimizers")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Args)]
struct Common {
    /// Experiment config file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides `experiment.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Verb {
    /// Grid-search the learning rates of roster baselines marked `tune`.
    Tune(Common),
    /// Meta-train a learned optimizer and save it to the output directory.
    MetaTrain(Common),
    /// Write loss curves for every roster entry.
    Evaluate(Common),
    /// Write per-coordinate update traces along a learned trajectory.
    Trace(Common),
    /// Write the update-versus-gradient response of one coordinate.
    Sweep(Common),
    /// Save a freshly initialized optimizer of the configured variant.
    Init(Common),
    /// Meta-train if needed, evaluate, then trace and sweep if configured.
    Run(Common),
}

fn execute(verb: &Verb) -> Result<(), CliError> {
    let common = match verb {
        Verb::Tune(c)
        | Verb::MetaTrain(c)
        | Verb::Evaluate(c)
        | Verb::Trace(c)
        | Verb::Sweep(c)
        | Verb::Init(c)
        | Verb::Run(c) => c,
    };
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg = cfg.with_seed(seed);
    }
    let workers = Workers::from_env()?;
    match verb {
        Verb::Tune(_) => {
            let family = cfg.problem_family()?;
            for (name, report) in experiment::tune(&cfg, &family, &workers)? {
                println!("{name}: rate {:e}", report.best_rate);
            }
        }
        Verb::MetaTrain(_) => {
            experiment::train(&cfg)?;
            println!("wrote {}", cfg.optimizer_path().display());
        }
        Verb::Evaluate(_) => {
            for (name, curve) in experiment::evaluate(&cfg, &workers)? {
                println!("{name}: mean loss {:e} after {} steps", curve.mean_at(cfg.steps), cfg.steps);
            }
        }
        Verb::Trace(_) => println!("wrote {}", experiment::trace(&cfg, &workers)?.display()),
        Verb::Sweep(_) => println!("wrote {}", experiment::sweep(&cfg)?.display()),
        Verb::Init(_) => println!("wrote {}", experiment::init(&cfg)?.display()),
        Verb::Run(_) => {
            experiment::run(&cfg, &workers)?;
            println!("wrote results to {}", cfg.output.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli.verb) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.exit_code();
            let report = anyhow::Error::new(e).context("metaopt failed");
            eprintln!("error: {report:#}");
            ExitCode::from(code as u8)
        }
    }
}
