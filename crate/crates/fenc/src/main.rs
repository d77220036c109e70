use std::path::PathBuf;
use std::process;

use clap::{Parser, Subcommand};
use fenc::bench::{self, BenchOptions};
use fenc::error::{CliError, ExitCode};
use fenc::runner::{self, OUTPUT_ROOT_ENV};
use fenc::tagfile;

#[derive(Parser)]
#[command(name = "fenc", version, about = "NV-centre ODMR RF field sensing experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        config: PathBuf,
        /// Directory that relative output paths resolve against.
        #[arg(long, env = OUTPUT_ROOT_ENV)]
        output_root: Option<PathBuf>,
    },
    /// Re-checksum a run directory and re-evaluate its checks.
    Verify { dir: PathBuf },
    /// Print the header of a tag file.
    Inspect { tagfile: PathBuf },
    /// Time binning and spectra of a synthetic stream.
    Bench {
        #[arg(long, default_value_t = 60.0)]
        duration: f64,
        #[arg(long, default_value_t = 72e3)]
        rate: f64,
        #[arg(long, default_value_t = 100e-9)]
        bin_width: f64,
        #[arg(long, default_value_t = 1.0)]
        segment: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Read tags from a file instead of simulating them.
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

fn print_json(value: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(value).expect("reports serialize"));
}

fn execute(command: Command) -> Result<ExitCode, CliError> {
    match command {
        Command::Run { config, output_root } => {
            let cfg = runner::load_config(&config)?;
            let root = output_root.unwrap_or_else(runner::output_root);
            let outcome = runner::run(&cfg, &root)?;
            for c in &outcome.manifest.checks {
                eprintln!(
                    "{} {}: measured {}, expected {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.measured,
                    c.expected
                );
            }
            println!("{}", outcome.dir.display());
            Ok(if outcome.manifest.passed {
                ExitCode::Pass
            } else {
                ExitCode::VerificationFailed
            })
        }
        Command::Verify { dir } => {
            let report = runner::verify(&dir)?;
            print_json(&report);
            Ok(if report.passed {
                ExitCode::Pass
            } else {
                ExitCode::VerificationFailed
            })
        }
        Command::Inspect { tagfile: path } => {
            let h = tagfile::read_header(&path)?;
            let bytes = std::fs::metadata(&path).map_err(|e| CliError::io(&path, e))?.len();
            let duration = h.duration_ps as f64 / 1e12;
            print_json(&serde_json::json!({
                "path": path,
                "header": h,
                "file_bytes": bytes,
                "complete": bytes == tagfile::HEADER_LEN as u64 + 8 * h.count,
                "duration_s": duration,
                "mean_rate": if duration > 0.0 { h.count as f64 / duration } else { 0.0 },
                "source_digest_hex": format!("{:016x}", h.source_digest),
            }));
            Ok(ExitCode::Pass)
        }
        Command::Bench {
            duration,
            rate,
            bin_width,
            segment,
            seed,
            input,
        } => {
            let report = bench::run(&BenchOptions {
                duration,
                rate,
                bin_width,
                segment,
                seed,
                input,
            })?;
            print_json(&report);
            Ok(ExitCode::Pass)
        }
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            process::exit(if e.use_stderr() { ExitCode::Validation as i32 } else { 0 });
        }
    };
    let code = execute(cli.command).unwrap_or_else(|e| {
        eprintln!("error: {e}");
        e.exit_code()
    });
    process::exit(code as i32);
}
