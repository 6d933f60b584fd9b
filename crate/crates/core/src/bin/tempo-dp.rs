//! Benchmark CLI: builds a scenario, solves it with the requested backends
//! and writes `trajectory.csv` and `runs.csv`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use tempo_dp::bench::{self, RunOptions, Scenario, DEFAULT_SEED};
use tempo_dp::lqt::{Backend, TrajMethod};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScenarioName {
    /// 2-D point mass tracking waypoints.
    Tracking2d,
    /// Chain of masses, springs and dampers.
    #[value(name = "mass_spring")]
    MassSpring,
    /// Finite-state routing on a cost grid. Moves off the grid are
    /// infeasible (infinite cost) rather than clamped to the edge.
    Routing,
    /// Nonlinear unicycle following a race track, solved by iterated
    /// linearization.
    Unicycle,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BackendArg {
    Seq,
    Par,
    Both,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TrajArg {
    /// Compose closed-loop maps.
    #[value(name = "1")]
    Compose,
    /// Combine forward conditional values with the backward values.
    #[value(name = "2")]
    ForwardValue,
}

#[derive(Debug, Parser)]
#[command(
    name = "tempo-dp",
    version,
    about = "Sequential vs temporally parallel optimal control benchmarks",
    after_help = "Routing grids treat a move off the top or bottom row as infeasible (+inf cost).\n\
                  Exit codes: 0 success, 1 usage error, 2 solver error."
)]
struct Cli {
    scenario: ScenarioName,
    /// Horizon length.
    #[arg(long = "T", value_parser = clap::value_parser!(u64).range(1..))]
    steps: u64,
    /// Number of masses (mass_spring).
    #[arg(long = "N", default_value_t = 4)]
    masses: usize,
    /// Number of grid rows, odd (routing).
    #[arg(long = "Dx", default_value_t = 5)]
    states: usize,
    #[arg(long, value_enum, default_value = "both")]
    backend: BackendArg,
    #[arg(long = "traj-method", value_enum, default_value = "1")]
    traj_method: TrajArg,
    /// Condensing block size for the linear scenarios; must divide T.
    #[arg(long = "block-size", default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    block_size: u64,
    /// Iterated-linearization passes (unicycle).
    #[arg(long, default_value_t = 10)]
    iters: usize,
    /// Worker threads; defaults to the number of cores. A single worker still
    /// runs the tree-ordered parallel algorithm.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    workers: Option<u64>,
    /// Timed repetitions after one warm-up; the median is reported.
    #[arg(long, default_value_t = 10)]
    repeats: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let steps = cli.steps as usize;
    let scenario = match cli.scenario {
        ScenarioName::Tracking2d => Scenario::Tracking2d { steps },
        ScenarioName::MassSpring => Scenario::MassSpring {
            masses: cli.masses,
            steps,
        },
        ScenarioName::Routing => Scenario::Routing {
            states: cli.states,
            steps,
        },
        ScenarioName::Unicycle => Scenario::Unicycle { steps },
    };
    let opts = RunOptions {
        backends: match cli.backend {
            BackendArg::Seq => vec![Backend::Sequential],
            BackendArg::Par => vec![Backend::Parallel],
            BackendArg::Both => vec![Backend::Sequential, Backend::Parallel],
        },
        method: match cli.traj_method {
            TrajArg::Compose => TrajMethod::Compose,
            TrajArg::ForwardValue => TrajMethod::ForwardValue,
        },
        block_size: cli.block_size as usize,
        iters: cli.iters,
        repeats: cli.repeats,
        seed: cli.seed,
    };

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cli.workers {
        pool = pool.num_threads(w as usize);
    }
    let pool = match pool.build() {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: could not start worker pool: {e}");
            return ExitCode::from(1);
        }
    };

    let result = pool.install(|| bench::run(scenario, &opts));
    let out = match result {
        Ok(out) => out,
        Err(bench::BenchError::Options(msg)) => {
            eprintln!("error: {msg}");
            return ExitCode::from(1);
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Err(e) = bench::write_outputs(&cli.out, &out) {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    for r in &out.records {
        let dev = r
            .max_deviation_vs_oracle
            .map_or_else(|| "-".to_string(), |d| format!("{d:.3e}"));
        println!(
            "{} {:<10} T={} wall_ms={:.3} combines={} depth={} max_deviation={}",
            r.scenario, r.backend, r.steps, r.wall_ms, r.combine_count, r.combine_depth, dev
        );
    }
    ExitCode::SUCCESS
}
