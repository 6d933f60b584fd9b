//! Benchmark harness: builds the scenarios, times sequential and parallel
//! solvers, cross-checks them and writes CSV output.

mod scenarios;

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::time::Instant;

use nalgebra::DVector;
use serde::Serialize;

use crate::finite_dp::{self, DpError};
use crate::lqt::{self, io::write_trajectory_csv, Backend, LqtError, LqtProblem, TrajMethod};
use crate::nonlinear::{ilqt, IlqtOptions, Nominal, NonlinearError};
use crate::scan::ScanStats;

pub use scenarios::{
    build_mass_spring, build_routing, build_tracking2d, build_unicycle, mass_spring_continuous, zoh_discretize,
    Unicycle, DEFAULT_SEED, REFERENCE_SPACING, ROUTING_DOWN, ROUTING_STRAIGHT, ROUTING_UP, TRACKING_DT,
    TRACK_POINTS_PER_LAP,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Tracking2d { steps: usize },
    MassSpring { masses: usize, steps: usize },
    Routing { states: usize, steps: usize },
    Unicycle { steps: usize },
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Tracking2d { .. } => "tracking2d",
            Scenario::MassSpring { .. } => "mass_spring",
            Scenario::Routing { .. } => "routing",
            Scenario::Unicycle { .. } => "unicycle",
        }
    }

    pub fn steps(&self) -> usize {
        match *self {
            Scenario::Tracking2d { steps }
            | Scenario::MassSpring { steps, .. }
            | Scenario::Routing { steps, .. }
            | Scenario::Unicycle { steps } => steps,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub backends: Vec<Backend>,
    pub method: TrajMethod,
    /// Condensing block size for the linear scenarios; 1 disables it.
    pub block_size: usize,
    /// Iterations of the nonlinear scenario.
    pub iters: usize,
    /// Timed repetitions; the median is reported.
    pub repeats: usize,
    pub seed: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            backends: vec![Backend::Sequential, Backend::Parallel],
            method: TrajMethod::Compose,
            block_size: 1,
            iters: 10,
            repeats: 10,
            seed: DEFAULT_SEED,
        }
    }
}

/// One row of `runs.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub scenario: String,
    pub backend: String,
    #[serde(rename = "T")]
    pub steps: usize,
    pub wall_ms: f64,
    pub combine_count: usize,
    pub combine_depth: usize,
    /// Largest componentwise difference from the sequential solution; empty
    /// unless both backends ran.
    pub max_deviation_vs_oracle: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<RunRecord>,
    /// Trajectory of the last backend run.
    pub states: Vec<DVector<f64>>,
    pub controls: Vec<DVector<f64>>,
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("{scenario}: {source}")]
    Lqt { scenario: &'static str, source: LqtError },
    #[error("{scenario}: {source}")]
    Dp { scenario: &'static str, source: DpError },
    #[error("{scenario}: {source}")]
    Nonlinear {
        scenario: &'static str,
        source: NonlinearError,
    },
    #[error("invalid options: {0}")]
    Options(String),
    #[error("writing output: {0}")]
    Io(#[from] std::io::Error),
    #[error("writing CSV: {0}")]
    Csv(#[from] csv::Error),
}

fn backend_name(b: Backend) -> &'static str {
    match b {
        Backend::Sequential => "sequential",
        Backend::Parallel => "parallel",
    }
}

/// Largest componentwise difference between two sequences of vectors.
/// Matching infinities count as equal.
pub fn max_deviation(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y.iter()))
        .map(|(x, y)| if x == y { 0.0 } else { (x - y).abs() })
        .fold(0.0, f64::max)
}

struct Solved {
    states: Vec<DVector<f64>>,
    controls: Vec<DVector<f64>>,
    stats: ScanStats,
    /// Quantities compared against the oracle when states are not unique.
    check: Option<Vec<DVector<f64>>>,
}

/// Runs `solve` once untimed, then `repeats` times, and returns the last
/// result with the median wall time in milliseconds.
fn timed<E>(repeats: usize, mut solve: impl FnMut() -> Result<Solved, E>) -> Result<(Solved, f64), E> {
    let mut out = solve()?;
    let mut times = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let t = Instant::now();
        out = solve()?;
        times.push(t.elapsed().as_secs_f64() * 1e3);
    }
    times.sort_by(f64::total_cmp);
    let median = match times.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => times[n / 2],
        n => (times[n / 2 - 1] + times[n / 2]) / 2.0,
    };
    Ok((out, median))
}

fn solve_linear(p: &LqtProblem, backend: Backend, opts: &RunOptions) -> Result<Solved, LqtError> {
    let sol = if opts.block_size > 1 {
        lqt::solve_condensed(p, opts.block_size, backend, opts.method)?
    } else {
        lqt::solve(p, backend, opts.method)?
    };
    Ok(Solved {
        states: sol.states,
        controls: sol.controls,
        stats: sol.stats,
        check: None,
    })
}

fn solve_routing(p: &finite_dp::FiniteProblem, backend: Backend, method: TrajMethod) -> Result<Solved, DpError> {
    let (states, pol, stats) = match backend {
        Backend::Sequential => {
            let pol = finite_dp::seq_bellman(p)?;
            let states = finite_dp::rollout_policy(p, &pol)?;
            let n = p.steps();
            (
                states,
                pol,
                ScanStats {
                    combine_count: n,
                    combine_depth: n,
                },
            )
        }
        Backend::Parallel => {
            let (pol, back) = finite_dp::solve_backward_instrumented(p)?;
            match method {
                TrajMethod::Compose => {
                    let (states, fwd) = finite_dp::recover_traj_m1_instrumented(p, &pol)?;
                    (states, pol, back.then(fwd))
                }
                TrajMethod::ForwardValue => {
                    let (rows, fwd) = finite_dp::forward_conditional_instrumented(p)?;
                    let states = finite_dp::recover_traj_m2(p, &rows, &pol)?;
                    (states, pol, back.then(fwd))
                }
            }
        }
    };
    // Grid costs tie often, so different backends may pick different optimal
    // paths. Value tables and the cost of the chosen path are what must agree.
    let mut path_cost = 0.0;
    let mut controls = Vec::with_capacity(p.steps());
    for (k, w) in states.windows(2).enumerate() {
        let u = match w[1] as isize - w[0] as isize {
            1 => ROUTING_UP,
            0 => ROUTING_STRAIGHT,
            -1 => ROUTING_DOWN,
            _ => return Err(DpError::Infeasible),
        };
        path_cost += p.stage_cost(k, w[0], u);
        controls.push(DVector::from_element(1, u as f64));
    }
    path_cost += p.terminal_cost()[states[p.steps()]];
    let mut check: Vec<DVector<f64>> = pol.values.iter().map(|v| DVector::from_column_slice(v)).collect();
    check.push(DVector::from_element(1, path_cost));
    let states = states.iter().map(|&x| DVector::from_element(1, x as f64)).collect();
    Ok(Solved {
        states,
        controls,
        stats,
        check: Some(check),
    })
}

/// Builds `scenario`, solves it with each requested backend and records
/// timings. The sequential solution, when present, is the oracle for the
/// deviation column.
pub fn run(scenario: Scenario, opts: &RunOptions) -> Result<RunOutput, BenchError> {
    if opts.backends.is_empty() {
        return Err(BenchError::Options("no backend selected".into()));
    }
    let name = scenario.name();
    let mut solved: Vec<(Backend, Solved, f64)> = Vec::new();
    match scenario {
        Scenario::Tracking2d { steps } | Scenario::MassSpring { steps, .. } => {
            let p = match scenario {
                Scenario::Tracking2d { .. } => {
                    if steps == 0 {
                        return Err(BenchError::Options("tracking2d needs T ≥ 1".into()));
                    }
                    build_tracking2d(steps, opts.seed)
                }
                Scenario::MassSpring { masses, .. } => {
                    if masses < 2 || steps < 2 {
                        return Err(BenchError::Options("mass_spring needs N ≥ 2 and T ≥ 2".into()));
                    }
                    build_mass_spring(masses, steps)
                }
                _ => unreachable!(),
            };
            for &b in &opts.backends {
                let (s, ms) = timed(opts.repeats, || solve_linear(&p, b, opts))
                    .map_err(|source| BenchError::Lqt { scenario: name, source })?;
                solved.push((b, s, ms));
            }
        }
        Scenario::Routing { states, steps } => {
            if states % 2 == 0 || states == 0 {
                return Err(BenchError::Options("routing needs an odd number of states".into()));
            }
            let p = build_routing(states, steps, opts.seed);
            for &b in &opts.backends {
                let (s, ms) = timed(opts.repeats, || solve_routing(&p, b, opts.method))
                    .map_err(|source| BenchError::Dp { scenario: name, source })?;
                solved.push((b, s, ms));
            }
        }
        Scenario::Unicycle { steps } => {
            if steps < REFERENCE_SPACING {
                return Err(BenchError::Options(format!("unicycle needs T ≥ {REFERENCE_SPACING}")));
            }
            if opts.iters == 0 {
                return Err(BenchError::Options("at least one iteration is required".into()));
            }
            let np = build_unicycle(steps, opts.seed);
            let init = Nominal::constant(&np.initial_state, 2, steps);
            for &b in &opts.backends {
                let ilqt_opts = IlqtOptions {
                    iters: opts.iters,
                    backend: b,
                    method: opts.method,
                    ..Default::default()
                };
                let (s, ms) = timed(opts.repeats, || {
                    ilqt(&np, init.clone(), ilqt_opts).map(|r| Solved {
                        states: r.nominal.states,
                        controls: r.nominal.controls,
                        stats: r.stats,
                        check: None,
                    })
                })
                .map_err(|source| BenchError::Nonlinear { scenario: name, source })?;
                solved.push((b, s, ms));
            }
        }
    }

    let oracle = solved.iter().find(|(b, ..)| *b == Backend::Sequential);
    let deviation = |s: &Solved| {
        oracle.map(|(_, o, _)| match (&s.check, &o.check) {
            (Some(a), Some(b)) => max_deviation(a, b),
            _ => max_deviation(&s.states, &o.states).max(max_deviation(&s.controls, &o.controls)),
        })
    };
    let both = solved.len() > 1 && oracle.is_some();
    let records = solved
        .iter()
        .map(|(b, s, ms)| RunRecord {
            scenario: name.to_string(),
            backend: backend_name(*b).to_string(),
            steps: scenario.steps(),
            wall_ms: *ms,
            combine_count: s.stats.combine_count,
            combine_depth: s.stats.combine_depth,
            max_deviation_vs_oracle: if both {
                solved
                    .iter()
                    .map(|(_, s, _)| deviation(s).unwrap_or(0.0))
                    .reduce(f64::max)
            } else {
                None
            },
        })
        .collect();
    let (_, last, _) = solved.pop().expect("at least one backend");
    Ok(RunOutput {
        records,
        states: last.states,
        controls: last.controls,
    })
}

/// Writes `trajectory.csv` and `runs.csv` into `dir`, creating it if needed.
pub fn write_outputs(dir: &Path, out: &RunOutput) -> Result<(), BenchError> {
    std::fs::create_dir_all(dir)?;
    write_trajectory_csv(
        BufWriter::new(File::create(dir.join("trajectory.csv"))?),
        0,
        &out.states,
        &out.controls,
    )?;
    let mut w = csv::Writer::from_path(dir.join("runs.csv"))?;
    for r in &out.records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scan::depth_bound;

    fn quick(backends: Vec<Backend>) -> RunOptions {
        RunOptions {
            backends,
            repeats: 1,
            ..RunOptions::default()
        }
    }

    #[test]
    fn tracking_backends_agree() {
        let out = run(
            Scenario::Tracking2d { steps: 1000 },
            &quick(vec![Backend::Sequential, Backend::Parallel]),
        )
        .unwrap();
        assert_eq!(out.records.len(), 2);
        let dev = out.records[1].max_deviation_vs_oracle.unwrap();
        assert!(dev <= 1e-7, "{dev:e}");
        assert_eq!(out.records[0].combine_depth, 1000);
        // Backward scan over T + 1 elements plus a forward scan over T.
        assert!(out.records[1].combine_depth <= depth_bound(1001));
        assert_eq!(out.states.len(), 1001);
    }

    #[test]
    fn routing_backends_agree_exactly() {
        for method in [TrajMethod::Compose, TrajMethod::ForwardValue] {
            let opts = RunOptions {
                method,
                ..quick(vec![Backend::Sequential, Backend::Parallel])
            };
            let out = run(Scenario::Routing { states: 5, steps: 64 }, &opts).unwrap();
            assert_eq!(out.records[1].max_deviation_vs_oracle, Some(0.0));
        }
    }

    #[test]
    fn single_backend_leaves_deviation_empty() {
        let out = run(
            Scenario::MassSpring { masses: 3, steps: 50 },
            &quick(vec![Backend::Parallel]),
        )
        .unwrap();
        assert_eq!(out.records[0].max_deviation_vs_oracle, None);
    }

    #[test]
    fn unicycle_runs() {
        let opts = RunOptions {
            iters: 3,
            ..quick(vec![Backend::Sequential, Backend::Parallel])
        };
        let out = run(Scenario::Unicycle { steps: 200 }, &opts).unwrap();
        assert!(out.records[1].max_deviation_vs_oracle.unwrap() <= 1e-6);
    }

    #[test]
    fn rejects_bad_options() {
        assert!(matches!(
            run(
                Scenario::Routing { states: 4, steps: 8 },
                &quick(vec![Backend::Parallel])
            ),
            Err(BenchError::Options(_))
        ));
        assert!(matches!(
            run(Scenario::Tracking2d { steps: 0 }, &quick(vec![Backend::Parallel])),
            Err(BenchError::Options(_))
        ));
    }

    #[test]
    fn writes_csv_files() {
        let dir = tempfile::tempdir().unwrap();
        let out = run(
            Scenario::Routing { states: 5, steps: 8 },
            &quick(vec![Backend::Sequential, Backend::Parallel]),
        )
        .unwrap();
        write_outputs(dir.path(), &out).unwrap();
        let runs = std::fs::read_to_string(dir.path().join("runs.csv")).unwrap();
        assert!(runs.starts_with("scenario,backend,T,wall_ms,combine_count,combine_depth,max_deviation_vs_oracle\n"));
        let traj = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
        assert!(traj.starts_with("k,x_1,u_1\n"));
        assert_eq!(traj.lines().count(), 10);
    }
}
