use clap::Parser;
use harness::{run_scenario, Cli};

fn main() -> std::process::ExitCode {
    match Cli::parse() {
        Cli::Run(args) => match run_scenario(&args) {
            Ok(outcome) => {
                println!(
                    "seed {} | {:.1} tx/s | {} commits | {} msgs | trace: {}",
                    outcome.trace.config.seed,
                    outcome.metrics.throughput_tx_per_s,
                    outcome.metrics.commit_records,
                    outcome.metrics.messages_sent,
                    outcome.trace_path.display(),
                );
                if let Some(lat) = &outcome.metrics.latency {
                    println!(
                        "latency p50 {:.1} ms | p99 {:.1} ms | mean {:.1} ms ({} samples)",
                        lat.p50_ms, lat.p99_ms, lat.mean_ms, lat.samples
                    );
                }
                println!("{}", outcome.verdict);
                if outcome.verdict.passed() {
                    std::process::ExitCode::SUCCESS
                } else {
                    std::process::ExitCode::from(2)
                }
            }
            Err(err) => {
                eprintln!("error: {err:#}");
                std::process::ExitCode::FAILURE
            }
        },
    }
}
