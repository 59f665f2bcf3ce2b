use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pnml::output::write_run;
use pnml::pool::resolve_workers;
use pnml::run::{self, EvaluateOne, RunConfig, RunError};

#[derive(Parser)]
#[command(name = "pnml", version, about = "pNML regret and experiments for minimum-norm linear regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides the config's `output` key.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (default: available parallelism).
        #[arg(long)]
        workers: Option<usize>,
        /// Dataset registry manifest; overrides the config and `PNML_DATA_DIR`.
        #[arg(long)]
        registry: Option<PathBuf>,
    },
    /// Report pNML quantities for one test row of a registered dataset.
    EvaluateOne {
        #[arg(long)]
        dataset: String,
        /// Index into the test partition.
        #[arg(long)]
        row: usize,
        #[arg(long)]
        sigma_sq: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        trainset_cap: Option<usize>,
        #[arg(long)]
        registry: Option<PathBuf>,
    },
    /// List registered datasets and whether their files are present.
    ListDatasets {
        #[arg(long)]
        registry: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(command: Command) -> Result<(), RunError> {
    match command {
        Command::Run {
            config,
            out,
            workers,
            registry,
        } => {
            let cfg = RunConfig::read(&config)?;
            let out = out
                .or_else(|| cfg.output.clone())
                .ok_or_else(|| RunError::Validation("no output directory: pass --out or set `output`".into()))?;
            let registry = run::resolve_registry(registry.as_deref().or(cfg.registry.as_deref()));
            let result = run::execute(&cfg, &registry, resolve_workers(workers))?;
            let tables: Vec<(&str, &pnml::output::Table)> = result.tables.iter().map(|(n, t)| (n.as_str(), t)).collect();
            let written = write_run(&out, &tables, result.manifest)
                .map_err(|e| RunError::Runtime(format!("writing {}: {e}", out.display())))?;
            for line in &result.summary {
                println!("{line}");
            }
            for path in written {
                println!("wrote {}", path.display());
            }
            Ok(())
        }
        Command::EvaluateOne {
            dataset,
            row,
            sigma_sq,
            seed,
            trainset_cap,
            registry,
        } => {
            if !(sigma_sq > 0.0 && sigma_sq.is_finite()) {
                return Err(RunError::Validation("--sigma-sq must be positive".into()));
            }
            let registry = pnml::data::Registry::load(&run::resolve_registry(registry.as_deref()))?;
            let request = EvaluateOne {
                dataset,
                row,
                sigma_sq,
                seed,
                trainset_cap,
            };
            let report = run::evaluate_one(&registry, &request, &Default::default())?;
            for line in run::report_lines(&report) {
                println!("{line}");
            }
            Ok(())
        }
        Command::ListDatasets { registry } => {
            let registry = pnml::data::Registry::load(&run::resolve_registry(registry.as_deref()))?;
            for e in registry.entries() {
                let status = if e.is_available() { "available" } else { "missing" };
                println!("{:<10} {:>6} x {:<3} {:<9} {}", e.name, e.rows, e.features, status, e.title);
            }
            Ok(())
        }
    }
}
