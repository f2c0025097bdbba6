use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use bid_core::harness::{
    read_rows, run_experiment_with, run_selftest, summarize, write_summary_csv, ensure_demo_cache, ExperimentConfig,
    RowWriter,
};

#[derive(Parser)]
#[command(name = "bid", version, about = "Run bidirectional-decoding experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Override the master seed of the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output path (result file for `run`, CSV for `summarize`, directory for `demo-cache`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run { config: PathBuf },
    /// Aggregate a line-delimited result file into mean and standard error per condition.
    Summarize { results: PathBuf },
    /// Pre-generate the demonstrations of a diagnostic config.
    DemoCache { config: PathBuf },
    /// Run the built-in invariant checks.
    Selftest,
}

fn load_config(path: &Path, seed: Option<u64>) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn summary_path(results: &Path) -> PathBuf {
    results.with_extension("summary.csv")
}

fn print_summary(rows: &[bid_core::harness::ResultRow]) -> anyhow::Result<Vec<bid_core::harness::SummaryRow>> {
    let summary = summarize(rows)?;
    for s in &summary {
        println!("{:<12} {:<36} {:<14} {:>10.4} ± {:.4}  (n={})", s.experiment, s.conditions, s.metric, s.mean, s.stderr, s.n);
    }
    Ok(summary)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run { config } => {
            let cfg = load_config(&config, cli.seed)?;
            cfg.validate()?;
            let out = cli
                .out
                .or_else(|| cfg.output.clone())
                .unwrap_or_else(|| PathBuf::from(format!("results/{}.jsonl", cfg.experiment_id())));
            let mut writer = RowWriter::create(&out)?;
            let mut rows = Vec::new();
            run_experiment_with(&cfg, &mut |row| {
                writer.append(row)?;
                rows.push(row.clone());
                Ok(())
            })?;
            let out = writer.finish()?;
            let summary = print_summary(&rows)?;
            write_summary_csv(&summary, std::fs::File::create(summary_path(&out))?)?;
            eprintln!("wrote {} and {}", out.display(), summary_path(&out).display());
        }
        Command::Summarize { results } => {
            let text = std::fs::read_to_string(&results).with_context(|| format!("reading {}", results.display()))?;
            let summary = print_summary(&read_rows(&text)?)?;
            if let Some(out) = cli.out {
                write_summary_csv(&summary, std::fs::File::create(&out)?)?;
            }
        }
        Command::DemoCache { config } => {
            let cfg = load_config(&config, cli.seed)?;
            let dir = cli
                .out
                .or_else(|| cfg.diagnostic.demo_cache.clone())
                .unwrap_or_else(|| PathBuf::from("demos"));
            for path in ensure_demo_cache(&cfg, &dir)? {
                println!("{}", path.display());
            }
        }
        Command::Selftest => {
            let checks = run_selftest();
            let failed = checks.iter().filter(|c| !c.passed).count();
            for c in &checks {
                println!("{} {}  {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if failed > 0 {
                bail!("{failed} self-checks failed");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(w) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(w).build_global() {
            eprintln!("{}", serde_json::json!({ "error": e.to_string() }));
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", serde_json::json!({ "error": format!("{e:#}") }));
            ExitCode::FAILURE
        }
    }
}
