//! Thin command-line front end for the scenario runner.
//!
//! Exit codes: 0 success, 2 parse error, 3 validation error, 4 numeric
//! or I/O failure. Errors are emitted as one JSON record on stderr.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use roughflow::scenario;
use roughflow::Error;

#[derive(Parser, Debug)]
#[command(
    name = "roughflow",
    about = "Run a TOML experiment scenario and write CSV + JSON reports",
    after_help = "Built-in scenario templates: run with --list to print the catalog."
)]
struct Cli {
    /// Scenario TOML file to run.
    #[arg(long, value_name = "PATH", required_unless_present = "list")]
    config: Option<PathBuf>,

    /// Override the scenario's seed.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,

    /// Output directory for the CSV table and JSON sidecar.
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,

    /// Worker threads (0 = one per logical CPU).
    #[arg(long, value_name = "N", default_value_t = 0)]
    threads: usize,

    /// Suppress progress output on stdout.
    #[arg(long)]
    quiet: bool,

    /// Print the built-in scenario template catalog and exit.
    #[arg(long)]
    list: bool,
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Parse(_) => 2,
        Error::Validation(_) | Error::InvalidParameter(_) => 3,
        _ => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        // A failure here only means a pool already exists; harmless.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global();
    }
    if cli.list {
        for t in scenario::list_scenarios() {
            println!("{:<24} capability {:>2}  {}", t.name, t.criterion, t.description);
        }
        return ExitCode::SUCCESS;
    }
    let config = cli.config.expect("clap enforces --config unless --list");
    match scenario::run_file(&config, &cli.out, cli.seed) {
        Ok(summary) => {
            if !cli.quiet {
                println!("module: {}", summary.module);
                println!("csv:    {}", summary.csv_path.display());
                println!("json:   {}", summary.json_path.display());
                for a in &summary.assertions {
                    println!("  [{}] {}", if a.pass { "pass" } else { "FAIL" }, a.name);
                }
            }
            ExitCode::SUCCESS
        }
        Err(err) => {
            let record = serde_json::json!({
                "error": err.to_string(),
                "exit_code": exit_code_for(&err),
            });
            eprintln!("{record}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
