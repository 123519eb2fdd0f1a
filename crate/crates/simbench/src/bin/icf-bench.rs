use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use icf_simbench::bench::bench_suite;
use icf_simbench::dump::extraction_report;
use icf_simbench::{compute_metrics, load_scenario, parse_modes, run_episode, PlannerMode, SimError};

#[derive(Parser)]
#[command(name = "icf-bench", version, about = "Run and benchmark reactive manipulator planners on scenario files")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one episode and write its per-step log and metrics.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// apf | cf | cfp | icf-prm | icf-rrt | attract
        #[arg(long, value_parser = parse_mode)]
        planner: PlannerMode,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every scenario of a directory with several planners and repeats.
    Bench {
        #[arg(long)]
        suite: PathBuf,
        #[arg(long, default_value_t = 10)]
        repeats: u64,
        /// Comma-separated planner list.
        #[arg(long, default_value = "apf,cf,cfp,icf-prm,icf-rrt")]
        planners: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print extraction diagnostics of one pre-planning cycle.
    ExtractDump {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn parse_mode(s: &str) -> Result<PlannerMode, String> {
    s.parse().map_err(|e: SimError| e.to_string())
}

fn create(path: &Path) -> Result<BufWriter<File>, SimError> {
    File::create(path).map(BufWriter::new).map_err(|e| SimError::Io { path: path.to_path_buf(), source: e })
}

fn ensure_dir(dir: &Path) -> Result<(), SimError> {
    fs::create_dir_all(dir).map_err(|e| SimError::Io { path: dir.to_path_buf(), source: e })
}

fn write_text(path: &Path, text: &str) -> Result<(), SimError> {
    fs::write(path, text).map_err(|e| SimError::Io { path: path.to_path_buf(), source: e })
}

fn run(cli: Cli) -> Result<(), SimError> {
    match cli.command {
        Command::Run { scenario, planner, seed, out } => {
            let spec = load_scenario(&scenario)?;
            ensure_dir(&out)?;
            let record = run_episode(&spec, planner, seed);
            let stem = format!("{}_{}_{}", spec.name, planner.name(), seed);
            record.write_csv(create(&out.join(format!("{stem}.csv")))?, true)?;
            let metrics = compute_metrics(&record);
            let mut text = format!(
                "scenario = {}\nplanner = {}\nseed = {}\nstatus = {}\n",
                spec.name,
                planner,
                seed,
                record.status.name()
            );
            if let Some(m) = &record.message {
                text.push_str(&format!("message = {m}\n"));
            }
            text.push_str(&format!("{metrics}\n"));
            write_text(&out.join(format!("{stem}_metrics.txt")), &text)?;
            print!("{text}");
        }
        Command::Bench { suite, repeats, planners, out } => {
            let modes = parse_modes(&planners)?;
            ensure_dir(&out)?;
            let result = bench_suite(&suite, repeats, &modes)?;
            result.write_summary_csv(create(&out.join("summary.csv"))?)?;
            result.write_runs_csv(create(&out.join("runs.csv"))?)?;
            let text = result.to_string();
            write_text(&out.join("summary.txt"), &text)?;
            print!("{text}");
        }
        Command::ExtractDump { scenario, seed } => {
            let spec = load_scenario(&scenario)?;
            print!("{}", extraction_report(&spec, seed)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
