//! `bench`: solvers, Picard iteration, operator analysis and the seeded
//! operator-comparison experiments.
//!
//! Exit status: 0 on success, 1 when an experiment cell or a command fails,
//! 2 on configuration or usage errors.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use bellman_core::analysis::{self, SuiteConfig};
use bellman_core::dp::{policy_iteration, solution_csv, value_iteration};
use bellman_core::experiment::{self, ExperimentConfig};
use bellman_core::mdp::{random_mdp, TabularMdp};
use bellman_core::picard::{self, PicardProblem};
use bellman_core::plot::{self, LineChart, Series};
use bellman_core::Error;
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "bench", version, about = "Bellman-operator solvers and benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an operator-comparison experiment from a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override `experiment.output_dir`.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Plot an aggregate CSV as an SVG line chart.
    Plot {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve a tabular MDP; prints `state,value,action` CSV.
    Solve {
        #[arg(long, value_enum)]
        algorithm: SolveAlgorithm,
        /// Fixture file, `two-state`, or `random:<states>,<actions>,<gamma>,<seed>`.
        #[arg(long)]
        mdp: String,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Picard iteration on y' = y/2 − x, y(0) = 0 over [0, 4].
    Picard {
        #[arg(long, default_value_t = 30)]
        iterations: usize,
        #[arg(long, default_value_t = 4001)]
        grid: usize,
        #[arg(long, default_value = "results/picard")]
        out_dir: PathBuf,
    },
    /// Contraction, monotonicity, preservation and gap checks on random MDPs.
    Analyze {
        #[arg(long, default_value_t = 20)]
        mdps: u64,
        #[arg(long, default_value_t = 6)]
        states: usize,
        #[arg(long, default_value_t = 3)]
        actions: usize,
        #[arg(long, default_value_t = 0.9)]
        discount: f64,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "results/analysis")]
        out_dir: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SolveAlgorithm {
    PolicyIteration,
    ValueIteration,
}

/// Failure carrying its exit status.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        let code = match error.downcast_ref::<Error>() {
            Some(Error::Config(_) | Error::UnknownEnv(_) | Error::Parse { .. } | Error::InvalidMdp(_)) => 2,
            _ => 1,
        };
        Failure { code, error }
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure { code: 2, error: anyhow::anyhow!(msg.into()) }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out_dir } => run(&config, out_dir),
        Command::Plot { input, out } => plot::emit_plot(&input, &out)
            .with_context(|| format!("plotting {}", input.display()))
            .map_err(Failure::from),
        Command::Solve { algorithm, mdp, tol, out } => solve(algorithm, &mdp, tol, out.as_deref()),
        Command::Picard { iterations, grid, out_dir } => run_picard(iterations, grid, &out_dir),
        Command::Analyze { mdps, states, actions, discount, trials, seed, out_dir } => {
            let config = SuiteConfig { mdp_seeds: (1..=mdps).collect(), n_states: states, n_actions: actions, discount, trials, seed };
            analyze(&config, &out_dir)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn run(config_path: &Path, out_dir: Option<PathBuf>) -> Result<(), Failure> {
    let mut config = ExperimentConfig::load(config_path).map_err(anyhow::Error::from)?;
    if let Some(dir) = out_dir {
        config.output_dir = dir;
    }
    let threads = experiment::threads_from_env().map_err(anyhow::Error::from)?;
    let run = experiment::run_experiment(&config, threads).map_err(anyhow::Error::from)?;
    eprintln!(
        "{}: {} cells in {:.1}s, results in {} (config {})",
        config.env,
        run.cells.len(),
        run.seconds,
        config.output_dir.display(),
        &run.config_hash[..12]
    );
    for s in experiment::summarize(&config, &run) {
        eprintln!("  {:<12} final-quartile mean {:>10.3}  seed std {:>8.3}", s.operator.as_str(), s.mean, s.seed_std);
    }
    let failures = run.failures();
    if failures.is_empty() {
        return Ok(());
    }
    for (id, msg) in &failures {
        eprintln!("  cell {id} failed: {msg}");
    }
    Err(Failure { code: 1, error: anyhow::anyhow!("{} of {} cells failed", failures.len(), run.cells.len()) })
}

fn load_mdp(spec: &str) -> Result<TabularMdp, Failure> {
    if spec == "two-state" {
        return Ok(TabularMdp::two_state());
    }
    if let Some(args) = spec.strip_prefix("random:") {
        let parts: Vec<&str> = args.split(',').map(str::trim).collect();
        let bad = || usage(format!("bad --mdp `{spec}`: expected random:<states>,<actions>,<gamma>,<seed>"));
        let [n, a, g, s] = parts.as_slice() else { return Err(bad()) };
        let (n, a, g, s) = (n.parse().map_err(|_| bad())?, a.parse().map_err(|_| bad())?, g.parse().map_err(|_| bad())?, s.parse().map_err(|_| bad())?);
        return random_mdp(n, a, g, s).map_err(|e| usage(e.to_string()));
    }
    let text = fs::read_to_string(spec).with_context(|| format!("reading MDP file {spec}")).map_err(|e| Failure { code: 2, error: e })?;
    TabularMdp::from_text(&text).with_context(|| format!("parsing {spec}")).map_err(Failure::from)
}

fn solve(algorithm: SolveAlgorithm, spec: &str, tol: f64, out: Option<&Path>) -> Result<(), Failure> {
    if !(tol > 0.0) {
        return Err(usage(format!("--tol must be positive, got {tol}")));
    }
    let mdp = load_mdp(spec)?;
    let (values, policy) = match algorithm {
        SolveAlgorithm::PolicyIteration => {
            let r = policy_iteration(&mdp, tol).map_err(anyhow::Error::from)?;
            (r.state_values, r.policy)
        }
        SolveAlgorithm::ValueIteration => value_iteration(&mdp, tol).map_err(anyhow::Error::from)?,
    };
    let csv = solution_csv(&values, &policy).map_err(anyhow::Error::from)?;
    match out {
        Some(path) => fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?,
        None => io::stdout().write_all(csv.as_bytes()).context("writing stdout")?,
    }
    Ok(())
}

fn run_picard(iterations: usize, grid_n: usize, out_dir: &Path) -> Result<(), Failure> {
    if iterations == 0 || grid_n < 2 {
        return Err(usage("--iterations must be at least 1 and --grid at least 2"));
    }
    let problem = PicardProblem::worked_example(grid_n).map_err(anyhow::Error::from)?;
    let sol = picard::solve_ivp_picard(&problem, iterations).map_err(anyhow::Error::from)?;
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;

    let worst = sol
        .solution
        .grid()
        .iter()
        .zip(sol.solution.values())
        .map(|(&x, &y)| (y - PicardProblem::worked_example_solution(x)).abs())
        .fold(0.0, f64::max);
    fs::write(out_dir.join("picard.csv"), sol.solution_csv(PicardProblem::worked_example_solution))
        .context("writing picard.csv")?;
    fs::write(out_dir.join("residuals.csv"), sol.residual_csv()).context("writing residuals.csv")?;

    // Overlay a few early iterates, the last one and the analytic solution,
    // thinned to about 200 points per curve.
    let stride = (grid_n / 200).max(1);
    let thin = |xs: &[f64], ys: &[f64]| -> Vec<(f64, f64)> {
        let mut pts: Vec<(f64, f64)> = xs.iter().zip(ys).step_by(stride).map(|(&x, &y)| (x, y)).collect();
        if !(grid_n - 1).is_multiple_of(stride) {
            pts.push((xs[grid_n - 1], ys[grid_n - 1]));
        }
        pts
    };
    let mut series: Vec<Series> = [1usize, 2, 3, 5]
        .into_iter()
        .filter(|&n| n < iterations)
        .map(|n| Series { name: format!("iteration {n}"), points: thin(sol.iterates[n].grid(), sol.iterates[n].values()) })
        .collect();
    series.push(Series { name: format!("iteration {iterations}"), points: thin(sol.solution.grid(), sol.solution.values()) });
    let exact: Vec<f64> = problem.grid().iter().map(|&x| PicardProblem::worked_example_solution(x)).collect();
    series.push(Series { name: "analytic".into(), points: thin(problem.grid(), &exact) });
    LineChart { title: Some("Picard iterates for y' = y/2 - x".into()), x_label: "x".into(), y_label: "y".into(), series }
        .write(&out_dir.join("picard.svg"))
        .map_err(anyhow::Error::from)?;
    eprintln!("{iterations} iterations on {grid_n} points: sup error {worst:.3e}, results in {}", out_dir.display());
    Ok(())
}

fn analyze(config: &SuiteConfig, out_dir: &Path) -> Result<(), Failure> {
    if config.mdp_seeds.is_empty() || config.n_states == 0 || config.n_actions == 0 {
        return Err(usage("--mdps, --states and --actions must be positive"));
    }
    if !(0.0..1.0).contains(&config.discount) {
        return Err(usage(format!("--discount must lie in [0, 1), got {}", config.discount)));
    }
    let report = analysis::run_suite(config).map_err(anyhow::Error::from)?;
    report.write_csvs(out_dir).map_err(anyhow::Error::from)?;
    print!("{}", report.summary());
    let failures = report.theorem_failures();
    if !failures.is_empty() {
        return Err(Failure { code: 1, error: anyhow::anyhow!("{} theorem-backed checks failed", failures.len()) });
    }
    Ok(())
}
