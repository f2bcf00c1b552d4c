use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand};

use comgrasp::controller::PerceptionParams;
use comgrasp::harness::{cmd_detect, cmd_episode, cmd_table, reps_path, DetectInput};

/// CoM-driven grasp adaptation on a simulated tabletop.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Find handles and the visual CoM in one scan.
    Detect(DetectArgs),
    /// Run one regrasp episode and write its CSV, summary and torque trace.
    Episode {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Disable depth and wrench noise.
        #[arg(long)]
        noiseless: bool,
    },
    /// Run an experiment list and write the averaged table.
    Table {
        #[arg(long)]
        experiments: PathBuf,
        /// Repetitions per experiment, overriding the list.
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Experiments run on this many threads.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

#[derive(Args)]
#[command(group(ArgGroup::new("input").required(true)))]
struct DetectArgs {
    #[arg(long, group = "input")]
    scenario: Option<PathBuf>,
    /// ASCII PCD file.
    #[arg(long, group = "input")]
    cloud: Option<PathBuf>,
    #[arg(long, default_value_t = 0, requires = "scenario")]
    seed: u64,
    #[arg(long, requires = "scenario")]
    noiseless: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("COMGRASP_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Detect(a) => {
            let input = match (a.scenario, a.cloud) {
                (Some(path), _) => DetectInput::Scenario { path, seed: a.seed, noiseless: a.noiseless },
                (None, Some(path)) => DetectInput::Cloud(path),
                (None, None) => unreachable!("clap requires one input"),
            };
            cmd_detect(&input, &PerceptionParams::default()).map(|listing| {
                print!("{listing}");
                true
            })
        }
        Command::Episode { scenario, seed, out, noiseless } => cmd_episode(&scenario, seed, &out, noiseless).map(|run| {
            print!("{}", run.report.summary());
            println!("wrote {}", out.display());
            !run.failed()
        }),
        Command::Table { experiments, reps, out, jobs } => cmd_table(&experiments, reps, &out, jobs).map(|t| {
            println!("{} rows, {} failed episodes", t.aggregate.len(), t.failures);
            println!("wrote {} and {}", out.display(), reps_path(&out).display());
            t.failures == 0
        }),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
