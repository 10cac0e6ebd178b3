use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qbsde::harness::{emit_report, load_config, run_experiment, with_threads, Format, Registry, RunRecord};
use qbsde::Error;

/// Quadratic BSDE experiments: simulate, solve, diagnose, report.
#[derive(Parser)]
#[command(name = "qbsde", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a config; prints its hash.
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed_override: Option<u64>,
    },
    /// Run an experiment and write artifacts and a report under `--out`.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed_override: Option<u64>,
        /// Worker threads; results do not depend on this.
        #[arg(long, env = "QBSDE_THREADS")]
        threads: Option<usize>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Re-emit the report of a finished run directory.
    Report {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// List registered components and their default parameters.
    ListRegistry {
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
}

const DIAGNOSTICS_FAILED: u8 = 1;
const INVALID_INPUT: u8 = 2;
const RUN_FAILED: u8 = 3;

fn exit_for(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(match e {
        Error::ConfigParse { .. } | Error::Schema { .. } | Error::UnknownRegistryName { .. } => INVALID_INPUT,
        _ => RUN_FAILED,
    })
}

fn verdict(record: &RunRecord) -> ExitCode {
    for st in &record.stages {
        match &st.error {
            None => println!("ok    {}", st.id),
            Some(e) => println!("FAIL  {}: {e}", st.id),
        }
    }
    let s = &record.summary;
    println!("config {}  pass={}", s.config_hash, s.pass);
    if s.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(DIAGNOSTICS_FAILED)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let registry = Registry::builtin();
    match cli.command {
        Command::Validate { config, seed_override } => match load_config(&config) {
            Ok(cfg) => {
                let cfg = match seed_override {
                    Some(s) => cfg.with_seed(s),
                    None => cfg,
                };
                println!("{}  {}", cfg.hash(), cfg.name);
                ExitCode::SUCCESS
            }
            Err(e) => exit_for(&e),
        },
        Command::Run {
            config,
            out,
            seed_override,
            threads,
            format,
        } => {
            let cfg = match load_config(&config) {
                Ok(c) => match seed_override {
                    Some(s) => c.with_seed(s),
                    None => c,
                },
                Err(e) => return exit_for(&e),
            };
            let output = match with_threads(threads, || run_experiment(&cfg, &registry, Some(&out))).and_then(|r| r) {
                Ok(o) => o,
                Err(e) => return exit_for(&e),
            };
            let code = verdict(&output.record);
            if let Err(e) = emit_report(&output.record, format, &out) {
                return exit_for(&e);
            }
            code
        }
        Command::Report { out, format } => {
            let record = match RunRecord::load(&out) {
                Ok(r) => r,
                Err(e) => return exit_for(&e),
            };
            match emit_report(&record, format, &out) {
                Ok(files) => {
                    for f in files {
                        println!("{}", f.display());
                    }
                    verdict(&record)
                }
                Err(e) => exit_for(&e),
            }
        }
        Command::ListRegistry { format } => {
            let entries = registry.entries();
            match format {
                Format::Json => println!("{}", serde_json::to_string_pretty(&entries).expect("entries serialize")),
                Format::Csv => {
                    println!("kind,name,defaults,doc");
                    for e in entries {
                        let defaults: Vec<String> = e.defaults.iter().map(|(k, v)| format!("{k}={v}")).collect();
                        println!("{},{},{},\"{}\"", e.kind.label(), e.name, defaults.join(";"), e.doc);
                    }
                }
            }
            ExitCode::SUCCESS
        }
    }
}
