use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use nonlocal_lwr::harness::{self, PlotKind};
use nonlocal_lwr::Error;

/// Experiments on non-local LWR traffic models and their local limit.
#[derive(Parser)]
#[command(name = "nll", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run an experiment and write its artifacts.
    Run {
        config: PathBuf,
        /// Output directory (overrides `output_dir` in the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for independent runs.
        #[arg(long)]
        workers: Option<usize>,
        /// Create the output directory if missing.
        #[arg(long)]
        create: bool,
    },
    /// Parse and check a config without running it.
    Validate { config: PathBuf },
    /// Plot a snapshot or diagnostics CSV as SVG.
    Plot {
        csv: PathBuf,
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        out: PathBuf,
    },
    /// List experiment ids.
    ListExperiments,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Profile,
    Series,
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn load(path: &PathBuf) -> Result<harness::ExperimentConfig, Error> {
    let mut cfg = harness::parse_config(path)?;
    if let Ok(s) = std::env::var("NLL_SEED") {
        let seed = s
            .trim()
            .parse::<u64>()
            .map_err(|_| Error::Config(format!("NLL_SEED must be a non-negative integer, got {s:?}")))?;
        cfg.set_seed(seed);
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::ListExperiments => {
            for (id, desc) in harness::list_experiments() {
                println!("{id:<28} {desc}");
            }
            ExitCode::SUCCESS
        }
        Cmd::Validate { config } => match load(&config) {
            Ok(cfg) => {
                println!("{}: ok ({})", config.display(), cfg.experiment.id());
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e),
        },
        Cmd::Plot { csv, kind, out } => {
            let kind = match kind {
                Kind::Profile => PlotKind::Profile,
                Kind::Series => PlotKind::Series,
            };
            match harness::emit_plot(&csv, kind, &out) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => fail(&e),
            }
        }
        Cmd::Run {
            config,
            out,
            workers,
            create,
        } => {
            let mut cfg = match load(&config) {
                Ok(c) => c,
                Err(e) => return fail(&e),
            };
            if let Some(n) = workers {
                if n == 0 {
                    return fail(&Error::Config("--workers must be at least 1".into()));
                }
                cfg.workers = Some(n);
            }
            let Some(dir) = out.or_else(|| cfg.output_dir.clone()) else {
                return fail(&Error::Config("no output directory: pass --out or set output_dir".into()));
            };
            match harness::run_experiment(&cfg, &dir, create) {
                Ok(o) => {
                    println!(
                        "{}: {} ({} files in {})",
                        cfg.experiment.id(),
                        o.verdict.verdict,
                        o.manifest.files.len() + 1,
                        o.out_dir.display()
                    );
                    ExitCode::from(o.exit_code as u8)
                }
                Err(e) => fail(&e),
            }
        }
    }
}
