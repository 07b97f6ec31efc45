//! Seeded operator-comparison experiments on the classic-control tasks.
//!
//! A run is the grid of `(operator, seed)` cells for one environment. Cells
//! run in parallel on a rayon pool and share nothing; every output file is
//! written after all cells finish, in a fixed order, so the CSVs depend on
//! the config alone.
//!
//! Output layout under `output_dir`:
//!
//! ```text
//! cells/<operator>-seed<seed>.csv   episode,total_reward,steps
//! aggregate.csv                     episode,<operator>,...  (seed mean, trailing window)
//! summary.csv                       final-quartile statistics and the config hash
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::envs::{DiscretizedEnv, EnvKind, GridSpec};
use crate::model_free::{self, csv_err, AdvantagePi, Backup, EpisodeLog, LearnerConfig, StepSchedule};
use crate::operators::{BetaSchedule, OperatorName};
use crate::{Error, Result};

pub const DEFAULT_SMOOTHING_WINDOW: usize = 100;
pub const DEFAULT_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
/// Environment variable capping the number of parallel cells.
pub const THREADS_VAR: &str = "BENCH_THREADS";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    QLearning,
    Sarsa,
}

impl Algorithm {
    fn parse(s: &str) -> Result<Self> {
        match s {
            "q-learning" | "qlearning" => Ok(Algorithm::QLearning),
            "sarsa" => Ok(Algorithm::Sarsa),
            _ => Err(Error::Config(format!("unknown algorithm `{s}` (expected q-learning or sarsa)"))),
        }
    }
}

/// The backup each experiment operator selects inside Q-learning.
pub fn backup_for(op: OperatorName) -> Backup {
    match op {
        OperatorName::Bellman => Backup::Classical,
        OperatorName::Expectation => Backup::Expectation,
        OperatorName::Consistent => Backup::Consistent,
        OperatorName::Advantage => Backup::Advantage,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub env: EnvKind,
    pub grid: GridSpec,
    pub algorithm: Algorithm,
    /// Template for every cell; `backup` and `seed` are overridden per cell.
    pub learner: LearnerConfig,
    pub operators: Vec<OperatorName>,
    pub seeds: Vec<u64>,
    pub smoothing_window: usize,
    pub output_dir: PathBuf,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    env: RawEnv,
    #[serde(default)]
    learner: RawLearner,
    #[serde(default)]
    experiment: RawExperiment,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEnv {
    name: String,
    grid: Option<String>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawStep {
    Constant(f64),
    Named(String),
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawBeta {
    family: Option<u32>,
    constant: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawAdvantage {
    pi: Option<String>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawLearner {
    algorithm: Option<String>,
    backup: Option<String>,
    step_size: Option<RawStep>,
    epsilon: Option<f64>,
    epsilon_decay: Option<f64>,
    min_epsilon: Option<f64>,
    episodes: Option<usize>,
    max_steps: Option<usize>,
    seed: Option<u64>,
    discount: Option<f64>,
    beta: Option<RawBeta>,
    advantage: Option<RawAdvantage>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    operators: Option<Vec<String>>,
    seeds: Option<Vec<u64>>,
    smoothing_window: Option<usize>,
    output_dir: Option<PathBuf>,
}

/// Canonical form hashed into the config hash. Output location is excluded.
#[derive(Serialize)]
struct CanonicalConfig<'a> {
    env: &'a str,
    grid_bins: &'a [usize],
    grid_ranges: &'a [(f64, f64)],
    algorithm: Algorithm,
    step_size: String,
    epsilon: f64,
    epsilon_decay: f64,
    min_epsilon: f64,
    episodes: usize,
    max_steps: usize,
    discount: f64,
    beta: String,
    advantage_pi: String,
    operators: Vec<&'a str>,
    seeds: &'a [u64],
    smoothing_window: usize,
}

impl ExperimentConfig {
    /// Desk-scale defaults for one environment: all three compared operators,
    /// seeds 1 to 5, 2000 episodes, window 100.
    pub fn desk_scale(env: EnvKind, output_dir: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            env,
            grid: env.default_grid(),
            algorithm: Algorithm::QLearning,
            learner: LearnerConfig { episodes: 2000, max_steps_per_episode: env.step_cap(), ..LearnerConfig::default() },
            operators: vec![OperatorName::Bellman, OperatorName::Consistent, OperatorName::Advantage],
            seeds: DEFAULT_SEEDS.to_vec(),
            smoothing_window: DEFAULT_SMOOTHING_WINDOW,
            output_dir: output_dir.into(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let env: EnvKind = raw.env.name.parse().map_err(|e: Error| Error::Config(e.to_string()))?;
        let grid = match &raw.env.grid {
            Some(text) => env
                .grid_with_bins(GridSpec::parse_bins(text)?)
                .map_err(|e| Error::Config(format!("env.grid: {e}")))?,
            None => env.default_grid(),
        };
        if grid.dims() != env.obs_dim() {
            return Err(Error::Config(format!("env.grid has {} dimensions, {env} needs {}", grid.dims(), env.obs_dim())));
        }

        let l = raw.learner;
        let defaults = LearnerConfig::default();
        let step_size = match l.step_size {
            None => defaults.step_size,
            Some(RawStep::Constant(x)) => StepSchedule::Constant(x),
            Some(RawStep::Named(name)) if name == "inverse-visit-count" => StepSchedule::InverseVisitCount,
            Some(RawStep::Named(name)) => {
                return Err(Error::Config(format!("learner.step_size `{name}`: expected a number or inverse-visit-count")))
            }
        };
        let beta = match l.beta.unwrap_or_default() {
            RawBeta { family: Some(_), constant: Some(_) } => {
                return Err(Error::Config("set only one of learner.beta.family and learner.beta.constant".into()))
            }
            RawBeta { family: Some(k), .. } => BetaSchedule::family(k).map_err(|e| Error::Config(e.to_string()))?,
            RawBeta { constant: Some(b), .. } => BetaSchedule::constant(b).map_err(|e| Error::Config(e.to_string()))?,
            _ => BetaSchedule::default(),
        };
        let advantage_pi = match l.advantage.and_then(|a| a.pi) {
            Some(pi) => pi.parse()?,
            None => AdvantagePi::Greedy,
        };
        let backup: Backup = match &l.backup {
            Some(b) => b.parse()?,
            None => Backup::Classical,
        };
        let learner = LearnerConfig {
            step_size,
            epsilon: l.epsilon.unwrap_or(defaults.epsilon),
            epsilon_decay: l.epsilon_decay.unwrap_or(defaults.epsilon_decay),
            min_epsilon: l.min_epsilon.unwrap_or(defaults.min_epsilon),
            episodes: l.episodes.unwrap_or(2000),
            max_steps_per_episode: l.max_steps.unwrap_or(env.step_cap()),
            seed: l.seed.unwrap_or(DEFAULT_SEEDS[0]),
            discount: l.discount.unwrap_or(defaults.discount),
            backup,
            beta,
            advantage_pi,
        };
        learner.validate()?;
        let algorithm = Algorithm::parse(l.algorithm.as_deref().unwrap_or("q-learning"))?;

        let e = raw.experiment;
        let operators = match e.operators {
            Some(names) => names.iter().map(|n| n.parse()).collect::<Result<Vec<OperatorName>>>()?,
            None => vec![match backup {
                Backup::Classical => OperatorName::Bellman,
                Backup::Consistent => OperatorName::Consistent,
                Backup::Advantage => OperatorName::Advantage,
                Backup::Expectation => OperatorName::Expectation,
            }],
        };
        let config = ExperimentConfig {
            env,
            grid,
            algorithm,
            operators,
            seeds: e.seeds.unwrap_or_else(|| vec![learner.seed]),
            smoothing_window: e.smoothing_window.unwrap_or(DEFAULT_SMOOTHING_WINDOW),
            output_dir: e.output_dir.unwrap_or_else(|| PathBuf::from("results").join(env.name())),
            learner,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.operators.is_empty() {
            return Err(Error::Config("experiment.operators must list at least one operator".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("experiment.seeds must list at least one seed".into()));
        }
        if self.smoothing_window == 0 {
            return Err(Error::Config("experiment.smoothing_window must be at least 1".into()));
        }
        let mut ops = self.operators.clone();
        ops.sort();
        ops.dedup();
        if ops.len() != self.operators.len() {
            return Err(Error::Config("experiment.operators lists an operator twice".into()));
        }
        let mut seeds = self.seeds.clone();
        seeds.sort();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return Err(Error::Config("experiment.seeds lists a seed twice".into()));
        }
        if self.algorithm == Algorithm::Sarsa && self.operators.iter().any(|&o| o != OperatorName::Bellman) {
            return Err(Error::Config("sarsa runs support only the bellman operator".into()));
        }
        if self.grid.dims() != self.env.obs_dim() {
            return Err(Error::Config(format!("grid has {} dimensions, {} needs {}", self.grid.dims(), self.env, self.env.obs_dim())));
        }
        self.learner.validate()
    }

    /// Learner settings for one cell.
    pub fn cell_config(&self, op: OperatorName, seed: u64) -> LearnerConfig {
        LearnerConfig { backup: backup_for(op), seed, ..self.learner.clone() }
    }

    /// SHA-256 over the canonical TOML form of everything that affects results.
    pub fn hash(&self) -> String {
        let l = &self.learner;
        let canonical = CanonicalConfig {
            env: self.env.name(),
            grid_bins: self.grid.bins(),
            grid_ranges: self.grid.ranges(),
            algorithm: self.algorithm,
            step_size: format!("{:?}", l.step_size),
            epsilon: l.epsilon,
            epsilon_decay: l.epsilon_decay,
            min_epsilon: l.min_epsilon,
            episodes: l.episodes,
            max_steps: l.max_steps_per_episode,
            discount: l.discount,
            beta: l.beta.to_string(),
            advantage_pi: l.advantage_pi.to_string(),
            operators: self.operators.iter().map(|o| o.as_str()).collect(),
            seeds: &self.seeds,
            smoothing_window: self.smoothing_window,
        };
        let text = toml::to_string(&canonical).expect("canonical config serializes");
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Clone, Debug)]
pub struct CellResult {
    pub operator: OperatorName,
    pub seed: u64,
    /// Episode logs, or the failure message of the cell.
    pub outcome: std::result::Result<Vec<EpisodeLog>, String>,
    pub seconds: f64,
}

impl CellResult {
    pub fn id(&self) -> String {
        format!("{}-seed{}", self.operator, self.seed)
    }
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub env: EnvKind,
    pub cells: Vec<CellResult>,
    pub config_hash: String,
    pub seconds: f64,
}

impl RunResult {
    pub fn failures(&self) -> Vec<(String, String)> {
        self.cells
            .iter()
            .filter_map(|c| c.outcome.as_ref().err().map(|e| (c.id(), e.clone())))
            .collect()
    }

    fn logs(&self, op: OperatorName) -> Vec<(u64, &[EpisodeLog])> {
        self.cells
            .iter()
            .filter(|c| c.operator == op)
            .filter_map(|c| c.outcome.as_ref().ok().map(|l| (c.seed, l.as_slice())))
            .collect()
    }
}

/// Parallelism from `BENCH_THREADS`, if set to a positive integer.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_VAR) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::Config(format!("{THREADS_VAR} must be a positive integer, got `{v}`"))),
        },
    }
}

fn run_cell(config: &ExperimentConfig, op: OperatorName, seed: u64) -> Result<Vec<EpisodeLog>> {
    let mut env = DiscretizedEnv::new(config.env, config.grid.clone())?;
    let learner = config.cell_config(op, seed);
    let run = match config.algorithm {
        Algorithm::QLearning => model_free::q_learning(&mut env, &learner)?,
        Algorithm::Sarsa => model_free::sarsa(&mut env, &learner)?,
    };
    Ok(run.logs)
}

/// Runs every `(operator, seed)` cell; failed cells are recorded, not raised.
pub fn run_cells(config: &ExperimentConfig, threads: Option<usize>) -> Result<RunResult> {
    use rayon::prelude::*;
    config.validate()?;
    let started = Instant::now();
    let grid: Vec<(OperatorName, u64)> =
        config.operators.iter().flat_map(|&op| config.seeds.iter().map(move |&s| (op, s))).collect();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let cells = pool.install(|| {
        grid.par_iter()
            .map(|&(operator, seed)| {
                let t = Instant::now();
                let outcome = run_cell(config, operator, seed).map_err(|e| e.to_string());
                CellResult { operator, seed, outcome, seconds: t.elapsed().as_secs_f64() }
            })
            .collect::<Vec<_>>()
    });
    Ok(RunResult { env: config.env, cells, config_hash: config.hash(), seconds: started.elapsed().as_secs_f64() })
}

/// Runs the experiment and writes all CSVs. Returns the run even if some
/// cells failed; the caller decides the exit status.
pub fn run_experiment(config: &ExperimentConfig, threads: Option<usize>) -> Result<RunResult> {
    let run = run_cells(config, threads)?;
    write_outputs(config, &run)?;
    Ok(run)
}

/// Trailing moving average: entry `i` averages `values[i+1−w ..= i]`, using
/// fewer points near the start.
pub fn smooth(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for i in 0..values.len() {
        sum += values[i];
        if i >= window {
            sum -= values[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

/// Seed-averaged, smoothed reward per episode for each operator with at least
/// one successful cell.
pub fn aggregate(config: &ExperimentConfig, run: &RunResult) -> Vec<(OperatorName, Vec<f64>)> {
    config
        .operators
        .iter()
        .filter_map(|&op| {
            let logs = run.logs(op);
            if logs.is_empty() {
                return None;
            }
            let len = logs.iter().map(|(_, l)| l.len()).min().unwrap_or(0);
            let mean: Vec<f64> = (0..len)
                .map(|i| logs.iter().map(|(_, l)| l[i].total_reward).sum::<f64>() / logs.len() as f64)
                .collect();
            Some((op, smooth(&mean, config.smoothing_window)))
        })
        .collect()
}

/// Final-quartile statistics of one operator across seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorSummary {
    pub operator: OperatorName,
    /// Mean total reward over the last quarter of episodes, per seed.
    pub per_seed: Vec<(u64, f64)>,
    pub mean: f64,
    /// Sample standard deviation of `per_seed` (0 for a single seed).
    pub seed_std: f64,
}

/// Mean of the last `⌈n/4⌉` episodes' total reward.
pub fn final_quartile_mean(logs: &[EpisodeLog]) -> f64 {
    let n = logs.len();
    let start = n - n.div_ceil(4);
    let tail = &logs[start..];
    tail.iter().map(|l| l.total_reward).sum::<f64>() / tail.len() as f64
}

pub fn summarize(config: &ExperimentConfig, run: &RunResult) -> Vec<OperatorSummary> {
    config
        .operators
        .iter()
        .filter_map(|&op| {
            let per_seed: Vec<(u64, f64)> = run
                .logs(op)
                .into_iter()
                .filter(|(_, l)| !l.is_empty())
                .map(|(s, l)| (s, final_quartile_mean(l)))
                .collect();
            if per_seed.is_empty() {
                return None;
            }
            let n = per_seed.len() as f64;
            let mean = per_seed.iter().map(|(_, m)| m).sum::<f64>() / n;
            let seed_std = if per_seed.len() > 1 {
                (per_seed.iter().map(|(_, m)| (m - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            Some(OperatorSummary { operator: op, per_seed, mean, seed_std })
        })
        .collect()
}

pub fn cell_csv_path(dir: &Path, op: OperatorName, seed: u64) -> PathBuf {
    dir.join("cells").join(format!("{op}-seed{seed}.csv"))
}

pub fn write_outputs(config: &ExperimentConfig, run: &RunResult) -> Result<()> {
    let dir = &config.output_dir;
    fs::create_dir_all(dir.join("cells"))?;
    for cell in &run.cells {
        if let Ok(logs) = &cell.outcome {
            let file = fs::File::create(cell_csv_path(dir, cell.operator, cell.seed))?;
            model_free::write_episode_csv(std::io::BufWriter::new(file), logs)?;
        }
    }

    let series = aggregate(config, run);
    let mut w = csv::Writer::from_path(dir.join("aggregate.csv")).map_err(csv_err)?;
    let mut header = vec!["episode".to_string()];
    header.extend(series.iter().map(|(op, _)| op.to_string()));
    w.write_record(&header).map_err(csv_err)?;
    let len = series.iter().map(|(_, v)| v.len()).min().unwrap_or(0);
    for i in 0..len {
        let mut row = vec![(i + 1).to_string()];
        row.extend(series.iter().map(|(_, v)| v[i].to_string()));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("summary.csv")).map_err(csv_err)?;
    w.write_record(["env", "operator", "seeds", "final_quartile_mean", "seed_std", "failed_cells", "config_hash"])
        .map_err(csv_err)?;
    for s in summarize(config, run) {
        let failed = run.cells.iter().filter(|c| c.operator == s.operator && c.outcome.is_err()).count();
        w.write_record([
            config.env.to_string(),
            s.operator.to_string(),
            s.per_seed.len().to_string(),
            s.mean.to_string(),
            s.seed_std.to_string(),
            failed.to_string(),
            run.config_hash.clone(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
