use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use uavsim::harness::{
    self, all_metrics, load_database, read_log, run_campaign, termination_from_log, CampaignOptions, CaseInput,
    LoadedScenario, LogFormat, TestReport, Verdict,
};

#[derive(Parser)]
#[command(
    name = "uavsim",
    version,
    about = "Deterministic UAV simulation and safety-test harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario, write its log and evaluate it.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Keep every n-th log row.
        #[arg(long)]
        decimation: Option<u32>,
        /// Log file; `.bin` selects the binary format.
        #[arg(short, long)]
        log: Option<PathBuf>,
        /// JSON report path.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run every scenario listed in `<dir>/index.toml`.
    Campaign {
        dir: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(short = 'j', long, default_value_t = default_parallelism())]
        parallelism: usize,
        #[arg(long)]
        decimation: Option<u32>,
        /// Directory for per-scenario logs.
        #[arg(long)]
        log_dir: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        log_format: Format,
        /// JSON report path.
        #[arg(long, default_value = "report.json")]
        report: PathBuf,
        /// Text summary path; printed to stdout regardless.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Check every scenario in a database without running it.
    Validate { dir: PathBuf },
    /// Recompute metrics from a log, optionally against a scenario's bounds.
    Metrics {
        log: PathBuf,
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Format {
    Csv,
    Bin,
}

fn default_parallelism() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn write_file(path: &Path, text: &str) -> Result<(), String> {
    fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))
}

fn finish(report: &TestReport, json: Option<&Path>, text: Option<&Path>) -> Result<bool, String> {
    let summary = report.to_text();
    print!("{summary}");
    if let Some(p) = json {
        write_file(p, &report.to_json())?;
    }
    if let Some(p) = text {
        write_file(p, &summary)?;
    }
    Ok(report.all_passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            scenario,
            seed,
            decimation,
            log,
            report,
        } => LoadedScenario::load(&scenario)
            .map_err(|e| e.to_string())
            .and_then(|s| {
                let log = log.unwrap_or_else(|| PathBuf::from(format!("{}.csv", s.scenario.name)));
                let opts = CampaignOptions {
                    seed,
                    log_decimation: decimation,
                    ..Default::default()
                };
                let case = harness::run_scenario(&CaseInput::new(s), &opts, Some(&log));
                finish(&TestReport::from_cases(vec![case]), report.as_deref(), None)
            }),
        Command::Campaign {
            dir,
            seed,
            parallelism,
            decimation,
            log_dir,
            log_format,
            report,
            summary,
        } => load_database(&dir).map_err(|e| e.to_string()).and_then(|db| {
            let opts = CampaignOptions {
                seed,
                log_decimation: decimation,
                log_dir,
                log_format: match log_format {
                    Format::Csv => LogFormat::Csv,
                    Format::Bin => LogFormat::Binary,
                },
            };
            let r = run_campaign(&db, parallelism, &opts);
            finish(&r, Some(&report), summary.as_deref())
        }),
        Command::Validate { dir } => load_database(&dir).map_err(|e| e.to_string()).map(|db| {
            for c in &db {
                match &c.scenario {
                    Ok(_) => println!("ok    {}", c.name),
                    Err(e) => println!("error {}: {e}", c.name),
                }
            }
            println!(
                "{} scenarios, {} invalid",
                db.len(),
                db.iter().filter(|c| c.scenario.is_err()).count()
            );
            db.iter().all(|c| c.scenario.is_ok())
        }),
        Command::Metrics { log, scenario } => metrics(&log, scenario.as_deref()),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn metrics(log: &Path, scenario: Option<&Path>) -> Result<bool, String> {
    let log = read_log(log).map_err(|e| e.to_string())?;
    let termination = termination_from_log(&log);
    println!("termination: {}", termination.name());
    match scenario {
        None => {
            for (name, value) in all_metrics(&log).map_err(|e| e.to_string())? {
                println!("{name}: {}", value.map_or("n/a".into(), |v| format!("{v:.6}")));
            }
            Ok(termination == uavsim::simloop::Termination::Completed)
        }
        Some(path) => {
            let s = LoadedScenario::load(path).map_err(|e| e.to_string())?;
            let eval = harness::evaluate(&log, &s.scenario.expect, &termination).map_err(|e| e.to_string())?;
            for m in &eval.metrics {
                let value = m.value.map_or("n/a".into(), |v| format!("{v:.6}"));
                println!("{}: {value} {}", m.metric, if m.pass { "ok" } else { "VIOLATED" });
            }
            println!("verdict: {:?}", eval.verdict);
            Ok(eval.verdict == Verdict::Pass)
        }
    }
}
