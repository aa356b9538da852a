use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use recon_core::baselines::{run_algorithm, Algorithm};
use recon_core::bench::{parse_grid, parse_sizes, run_sweep, workload_seed, write_csv, SweepConfig};
use recon_core::error::Result;
use recon_core::protocol::{PreparedSet, ProtocolConfig};
use recon_core::workload::{generate_workload, WorkloadSpec};

#[derive(Parser)]
#[command(name = "recon", about = "Set reconciliation simulator and benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep algorithms over a similarity grid and write a CSV.
    Bench {
        /// Comma-separated: hybrid, riblt, sbf:<eps>, optimal-sbf, full-state, pinsketch.
        #[arg(long, value_delimiter = ',', default_value = "hybrid,riblt,pinsketch")]
        algos: Vec<Algorithm>,
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        /// lo:hi:step, inclusive.
        #[arg(long, default_value = "0:1:0.05")]
        jaccard_grid: String,
        #[arg(long, default_value_t = 5)]
        reps: u32,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Element length bounds lo:hi in bytes.
        #[arg(long, default_value = "5:80")]
        sizes: String,
        #[arg(long)]
        out: PathBuf,
        /// Record encode/decode wall time (makes the CSV non-reproducible).
        #[arg(long)]
        timings: bool,
        /// Slices sent after each stop decision.
        #[arg(long, default_value_t = 0)]
        overshoot: u32,
    },
    /// Reconcile one generated replica pair and print its costs.
    Run {
        #[arg(long, default_value = "hybrid")]
        algo: Algorithm,
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long)]
        jaccard: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        rep: u32,
        #[arg(long, default_value = "5:80")]
        sizes: String,
        /// Write the message log as JSON lines.
        #[arg(long)]
        transcript: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        overshoot: u32,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Bench { algos, n, jaccard_grid, reps, seed, sizes, out, timings, overshoot } => {
            let cfg = SweepConfig {
                algorithms: algos,
                n,
                grid: parse_grid(&jaccard_grid)?,
                reps,
                seed,
                size_range: parse_sizes(&sizes)?,
                timings,
                protocol: ProtocolConfig { overshoot_slices: overshoot, ..Default::default() },
            };
            let result = run_sweep(&cfg)?;
            write_csv(&result, BufWriter::new(File::create(&out)?))?;
            let failed = result.failures().count();
            for r in result.failures() {
                eprintln!(
                    "failed: {} jaccard={} rep={}: {}",
                    r.algorithm,
                    r.jaccard,
                    r.rep,
                    r.error.as_deref().unwrap_or_default()
                );
            }
            eprintln!("wrote {} rows to {}", result.rows.len() + result.aggregates.len(), out.display());
            Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Run { algo, n, jaccard, seed, rep, sizes, transcript, overshoot } => {
            let spec = WorkloadSpec { n, jaccard, size_range: parse_sizes(&sizes)?, seed: workload_seed(seed, jaccard, rep) };
            let w = generate_workload(&spec)?;
            let (a, b) = (PreparedSet::new(&w.a)?, PreparedSet::new(&w.b)?);
            let cfg = ProtocolConfig { overshoot_slices: overshoot, ..Default::default() };
            let r = run_algorithm(algo, &a, &b, &cfg)?;
            println!("algorithm      {algo}");
            println!("d              {}", w.d);
            println!("metadata_bytes {}", r.metadata_bytes);
            println!("state_bytes    {}", r.state_bytes);
            println!("total_bytes    {}", r.total_bytes());
            println!("min_bytes      {}", w.min_bytes);
            if let Some(sketch) = r.sketch_bytes {
                println!("sketch_bytes   {sketch}");
            }
            if let Some(path) = transcript {
                match &r.transcript {
                    Some(t) => {
                        let mut f = BufWriter::new(File::create(&path)?);
                        t.write_jsonl(&mut f)?;
                        f.flush()?;
                    }
                    None => eprintln!("{algo} is analytic; no transcript written"),
                }
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
