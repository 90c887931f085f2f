use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use irs_crb::experiment::{load_config, parse_config, write_csv, ExperimentConfig, RunOptions};

/// Runs CRB, optimization and Monte-Carlo experiments from a TOML config.
#[derive(Parser)]
#[command(name = "irs-crb", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute an experiment and write `<id>.csv` and `<id>.json`.
    Run {
        config: PathBuf,
        /// Override the configured seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: the config's `output`, else `results`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the trial / channel-draw count.
        #[arg(long)]
        trials: Option<usize>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
        /// Record wall-clock time per row; output is then not reproducible.
        #[arg(long)]
        timing: bool,
    },
    /// Check a config without running it.
    Validate { config: PathBuf },
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

/// Prints diagnostics as `path:line: message`; returns whether any exist.
fn report(path: &Path, diags: &[irs_crb::experiment::Diagnostic]) -> bool {
    for d in diags {
        match d.line {
            Some(l) => eprintln!("{}:{l}: {}", path.display(), d.message),
            None => eprintln!("{}: {}", path.display(), d.message),
        }
    }
    !diags.is_empty()
}

fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf> {
    use std::io::Write;
    let target = dir.join(name);
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("cannot write in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(&target).with_context(|| format!("cannot replace {}", target.display()))?;
    Ok(target)
}

fn run(
    path: &Path,
    seed: Option<u64>,
    out: Option<PathBuf>,
    trials: Option<usize>,
    threads: Option<usize>,
    timing: bool,
) -> Result<ExitCode> {
    let source = read(path)?;
    let mut cfg: ExperimentConfig = match parse_config(&source) {
        Ok(c) => c,
        Err(d) => {
            report(path, &d);
            return Ok(ExitCode::from(2));
        }
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(t) = trials {
        cfg.trials = t;
    }
    if report(path, &cfg.validate(Some(&source))) {
        return Ok(ExitCode::from(2));
    }
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("cannot configure the worker pool")?;
    }
    let dir = out
        .or_else(|| cfg.output.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results"));
    std::fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;

    log::info!("running {} ({:?}, seed {})", cfg.id, cfg.kind, cfg.seed);
    let output = cfg.run(&RunOptions { timing })?;
    let mut csv = Vec::new();
    write_csv(&output.rows, &mut csv)?;
    let mut json = serde_json::to_vec_pretty(&output.sidecar)?;
    json.push(b'\n');
    let csv_path = write_atomic(&dir, &format!("{}.csv", cfg.id), &csv)?;
    let json_path = write_atomic(&dir, &format!("{}.json", cfg.id), &json)?;
    println!("{}", csv_path.display());
    println!("{}", json_path.display());
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("IRS_CRB_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            seed,
            out,
            trials,
            threads,
            timing,
        } => run(&config, seed, out, trials, threads, timing),
        Command::Validate { config } => read(&config).map(|src| match load_config(&src) {
            Ok(_) => ExitCode::SUCCESS,
            Err(d) => {
                report(&config, &d);
                ExitCode::from(2)
            }
        }),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
