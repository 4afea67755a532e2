use std::process::ExitCode;

use clap::Parser;

use chronocas_bench::{run, run_with_baseline, stress, Mix, StressConfig, Structure, WorkloadConfig};

/// Throughput benchmark and linearizability stress for the chronocas
/// structures. Prints one JSON document (or a CSV row) on standard output.
#[derive(Debug, Parser)]
#[command(name = "chronocas-bench", version)]
struct Args {
    /// queue, list, bst, bst-direct or bst-plain-cas-baseline
    #[arg(long, default_value = "bst")]
    structure: Structure,
    /// Keys inserted before the measured run.
    #[arg(long, default_value_t = 10_000)]
    prefill: u64,
    /// Keys are drawn from [1, key-range]; derived from the mix when absent.
    #[arg(long)]
    key_range: Option<u64>,
    #[arg(long, default_value_t = 30)]
    ins: u32,
    #[arg(long, default_value_t = 20)]
    del: u32,
    #[arg(long, default_value_t = 50)]
    find: u32,
    #[arg(long, default_value_t = 0)]
    rq: u32,
    /// Keys covered by each range query.
    #[arg(long, default_value_t = 64)]
    rqsize: u64,
    #[arg(long, default_value_t = 4)]
    threads: usize,
    #[arg(long, default_value_t = 1.0)]
    seconds: f64,
    /// Unmeasured seconds before counting starts.
    #[arg(long, default_value_t = 0.0)]
    warmup: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Prefill in sorted order, in chunks handed out to all threads.
    #[arg(long)]
    sorted: bool,
    /// Also run the counterpart without versioned links and report the ratio.
    #[arg(long)]
    baseline: bool,
    /// Emit JSON (the default).
    #[arg(long, conflicts_with = "csv")]
    json: bool,
    /// Emit a CSV header and row instead of JSON.
    #[arg(long)]
    csv: bool,
    /// Record and check linearizability windows instead of timing.
    #[arg(long, conflicts_with_all = ["baseline", "csv"])]
    stress: bool,
    /// Number of recorded windows in stress mode.
    #[arg(long, default_value_t = 100, requires = "stress")]
    windows: usize,
}

impl Args {
    fn workload(&self) -> WorkloadConfig {
        WorkloadConfig {
            structure: self.structure,
            prefill: self.prefill,
            key_range: self.key_range,
            mix: Mix {
                ins: self.ins,
                del: self.del,
                find: self.find,
                rq: self.rq,
            },
            rq_size: self.rqsize,
            threads: self.threads,
            seconds: self.seconds,
            warmup_seconds: self.warmup,
            seed: self.seed,
            sorted: self.sorted,
        }
    }
}

fn usage_error(e: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let cfg = args.workload();
    if args.stress {
        let sc = match StressConfig::from_workload(&cfg, args.windows) {
            Ok(sc) => sc,
            Err(e) => return usage_error(e),
        };
        let report = stress(&sc);
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
        if let Some(w) = &report.witness {
            eprintln!("{w}");
        }
        return if report.passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE };
    }
    let result = if args.baseline { run_with_baseline(&cfg) } else { run(&cfg) };
    let report = match result {
        Ok(r) => r,
        Err(e) => return usage_error(e),
    };
    if args.csv {
        println!("{}", chronocas_bench::RunReport::CSV_HEADER);
        println!("{}", report.csv_row());
    } else {
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    }
    if report.violations == 0 && report.reclaim.trap_reads == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
