use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use spotcheck_core::harness::{
    self, emit_report, load_config, load_rows, resolve_environments, run_experiment_streaming,
    theorem3_violations, verify, ExperimentConfig, OutputFormat,
};
use spotcheck_core::Error;

#[derive(Parser)]
#[command(
    name = "spotcheck",
    version,
    about = "Spot-checked peer prediction experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a config without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run every (environment, mechanism, effort cost) triple.
    Run(RunArgs),
    /// Re-emit reports from a saved results.json.
    Report {
        /// A results.json written by `run`.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "csv,json,plotdata")]
        format: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the acceptance checks and print one line per criterion.
    Verify {
        /// Config for the determinism check; the bundled example by default.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Run only these criteria.
        #[arg(long, value_delimiter = ',')]
        criterion: Vec<usize>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    grid: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Output directory; overrides the config's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "csv,json,plotdata")]
    format: Vec<String>,
}

const EXIT_VALIDATION: u8 = 1;
const EXIT_ASSERTION: u8 = 2;

enum Failure {
    Validation(anyhow::Error),
    Assertion(String),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Validation(e)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Validation(e.into())
    }
}

fn formats(names: &[String]) -> Result<Vec<OutputFormat>, Failure> {
    names
        .iter()
        .map(|n| n.parse::<OutputFormat>().map_err(Failure::from))
        .collect()
}

fn validate(config: &Path) -> Result<(), Failure> {
    let c = load_config(config)?;
    let envs = resolve_environments(&c)?;
    let costs = c.sweeps.effort_costs.len().max(1);
    println!(
        "ok: {} environments, {} mechanisms, {} triples",
        envs.len(),
        c.mechanisms.len(),
        envs.len() * c.mechanisms.len() * costs
    );
    Ok(())
}

fn apply_overrides(mut c: ExperimentConfig, args: &RunArgs) -> Result<ExperimentConfig, Failure> {
    if let Some(s) = args.seed {
        c.seed = s;
    }
    if let Some(g) = args.grid {
        c.grid = g;
    }
    if let Some(t) = args.trials {
        c.trials = t;
    }
    harness::validate_config(&c)?;
    Ok(c)
}

fn run(args: &RunArgs) -> Result<(), Failure> {
    let config = apply_overrides(load_config(&args.config)?, args)?;
    let formats = formats(&args.format)?;
    let out = args
        .out
        .clone()
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("results"));
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let progress = out.join("rows.jsonl");
    let mut sink = BufWriter::new(
        File::create(&progress).with_context(|| format!("creating {}", progress.display()))?,
    );
    let rows = run_experiment_streaming(&config, |row| {
        let line = serde_json::to_string(row).map_err(|e| Error::Io(e.to_string()))?;
        writeln!(sink, "{line}")?;
        sink.flush()?;
        Ok(())
    })?;
    drop(sink);
    for f in formats {
        let path = emit_report(&rows, f, &out)?;
        log::info!("wrote {}", path.display());
    }
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    println!(
        "{} rows ({failed} with errors) in {}",
        rows.len(),
        out.display()
    );
    let violations = theorem3_violations(&rows);
    if !violations.is_empty() {
        let dump = out.join("violations.json");
        let text = serde_json::to_string_pretty(&violations).context("serializing violations")?;
        std::fs::write(&dump, text).with_context(|| format!("writing {}", dump.display()))?;
        for v in &violations {
            eprintln!(
                "violation: {} / {} / c={}: p_pareto {} < p_ds {} - {}",
                v.env_id, v.mechanism, v.effort_cost, v.p_pareto, v.p_ds, v.grid
            );
        }
        return Err(Failure::Assertion(format!(
            "{} rows break the pareto/dominance ordering; see {}",
            violations.len(),
            dump.display()
        )));
    }
    Ok(())
}

fn report(input: &Path, format: &[String], out: &Path) -> Result<(), Failure> {
    let rows = load_rows(input)?;
    for f in formats(format)? {
        println!("{}", emit_report(&rows, f, out)?.display());
    }
    Ok(())
}

fn run_verify(config: Option<&Path>, only: &[usize]) -> Result<(), Failure> {
    let text = match config {
        Some(p) => {
            Some(std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)
        }
        None => None,
    };
    let ids: Vec<usize> = if only.is_empty() {
        verify::CRITERIA.iter().map(|(i, _)| *i).collect()
    } else {
        only.to_vec()
    };
    let mut failed = 0;
    for id in ids {
        let o = verify::run_criterion(id, text.as_deref());
        println!("{o}");
        if !o.passed {
            failed += 1;
        }
    }
    if failed > 0 {
        return Err(Failure::Assertion(format!("{failed} criteria failed")));
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Validate { config } => validate(config),
        Command::Run(args) => run(args),
        Command::Report { input, format, out } => report(input, format, out),
        Command::Verify { config, criterion } => run_verify(config.as_deref(), criterion),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_VALIDATION)
        }
        Err(Failure::Assertion(msg)) => {
            eprintln!("assertion failed: {msg}");
            ExitCode::from(EXIT_ASSERTION)
        }
    }
}
