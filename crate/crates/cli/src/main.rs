//! `mppi-ipddp run --scenario <file or bundled name>`.

mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use mppi_ipddp::planner::{evaluate_plan, plan, PlanStatus};
use mppi_ipddp::scenario::{self, ScenarioSpec};

const EXIT_CONVERGED: u8 = 0;
const EXIT_USAGE: u8 = 1;
const EXIT_MAX_ITERS: u8 = 2;
const EXIT_FAILED: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "mppi-ipddp", version, about = "Collision-free smooth trajectory planning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Plan a trajectory and write the result files.
    Run(RunArgs),
    /// Print a bundled scenario file.
    Show {
        /// One of: mobile_robot, quadrotor.
        name: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TraceMode {
    None,
    Full,
}

#[derive(Debug, clap::Args)]
struct RunArgs {
    /// Scenario file, or the name of a bundled scenario.
    #[arg(long)]
    scenario: String,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the outer iteration cap.
    #[arg(long)]
    max_outer: Option<usize>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// `full` writes trace.jsonl with per-iteration snapshots.
    #[arg(long, value_enum, default_value_t = TraceMode::Full)]
    trace: TraceMode,
}

fn load(name: &str) -> Result<ScenarioSpec, String> {
    let path = PathBuf::from(name);
    if path.is_file() {
        return scenario::load_scenario(&path).map_err(|e| format!("{}: {e}", path.display()));
    }
    scenario::bundled(name).ok_or_else(|| {
        format!(
            "no scenario file `{name}` and no bundled scenario of that name (bundled: {})",
            scenario::BUNDLED.join(", ")
        )
    })
}

fn run(args: RunArgs) -> u8 {
    let mut spec = match load(&args.scenario) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(n) = args.max_outer {
        spec.planner.outer_max_iters = n;
    }
    let (problem, config) = match spec.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let threads = args.threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start {threads} worker threads: {e}");
            return EXIT_USAGE;
        }
    };

    let clock = Instant::now();
    let result = match pool.install(|| plan(&problem, &config)) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_FAILED;
        }
    };
    let seconds = clock.elapsed().as_secs_f64();
    if let Err(e) = output::write_all(&args.out, &result, args.trace == TraceMode::Full, threads, seconds) {
        eprintln!("error: writing {}: {e}", args.out.display());
        return EXIT_FAILED;
    }

    let report = evaluate_plan(&result, &problem);
    let last = result.traces.last().expect("at least one iteration");
    let x_t = result.trajectory.final_state();
    println!("status: {:?}", result.status);
    println!("outer iterations: {}", result.traces.len());
    println!("final state: {:?}", x_t.as_slice());
    println!("cost: {:.6}", report.total_cost);
    println!("max primal residual: {:.3e}", last.max_primal_residual);
    if !report.collisions.is_empty() {
        println!("states in collision: {:?}", report.collisions);
    }
    println!("wrote {} in {seconds:.2} s", args.out.display());
    match result.status {
        PlanStatus::Converged => EXIT_CONVERGED,
        PlanStatus::MaxIters => EXIT_MAX_ITERS,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MPPI_IPDDP_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let code = match cli.command {
        Command::Run(args) => run(args),
        Command::Show { name } => match scenario::bundled_text(&name) {
            Some(text) => {
                print!("{text}");
                EXIT_CONVERGED
            }
            None => {
                eprintln!("error: unknown bundled scenario `{name}`");
                EXIT_USAGE
            }
        },
    };
    ExitCode::from(code)
}
