//! Sample-based learners: Monte Carlo and TD evaluation, SARSA, and
//! Q-learning with a swappable backup.
//!
//! Every learner owns two random streams derived from its seed: the agent
//! stream (exploration) and the environment stream (resets and transitions).
//! Two runs with the same seed and config therefore produce identical logs and
//! identical tables.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use indexmap::IndexMap;
use rand::Rng;

use crate::mdp::{argmax, ActionValueFn, Policy, StateValueFn, TabularMdp};
use crate::operators::BetaSchedule;
use crate::rng::{self, PortableRng, AGENT_STREAM, ENV_STREAM};
use crate::{Error, Result};

/// One environment step in tabular form.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition {
    pub next_state: usize,
    pub reward: f64,
    pub terminal: bool,
    pub truncated: bool,
}

/// An episodic task with discrete states and actions.
pub trait EpisodicEnv {
    fn n_actions(&self) -> usize;
    fn reset(&mut self, rng: &mut PortableRng) -> Result<usize>;
    fn step(&mut self, action: usize, rng: &mut PortableRng) -> Result<Transition>;
}

/// A tabular MDP run as an episodic task. Terminal states end the episode on
/// arrival; otherwise the episode is truncated after `step_cap` steps.
#[derive(Clone, Debug)]
pub struct MdpEnv {
    mdp: TabularMdp,
    start: Option<usize>,
    terminal: Vec<bool>,
    step_cap: usize,
    state: usize,
    steps: usize,
}

impl MdpEnv {
    /// `start = None` draws the start state uniformly from non-terminal states.
    pub fn new(mdp: TabularMdp, start: Option<usize>, terminal_states: &[usize], step_cap: usize) -> Result<Self> {
        let n = mdp.n_states();
        let mut terminal = vec![false; n];
        for &s in terminal_states {
            if s >= n {
                return Err(Error::invalid(format!("terminal state {s} out of range")));
            }
            terminal[s] = true;
        }
        if let Some(s) = start {
            if s >= n || terminal[s] {
                return Err(Error::invalid(format!("start state {s} must be a non-terminal state")));
            }
        }
        if terminal.iter().all(|&t| t) {
            return Err(Error::invalid("every state is terminal"));
        }
        if step_cap == 0 {
            return Err(Error::invalid("step cap must be positive"));
        }
        Ok(MdpEnv { mdp, start, terminal, step_cap, state: 0, steps: 0 })
    }

    pub fn mdp(&self) -> &TabularMdp {
        &self.mdp
    }

    pub fn n_states(&self) -> usize {
        self.mdp.n_states()
    }
}

impl EpisodicEnv for MdpEnv {
    fn n_actions(&self) -> usize {
        self.mdp.n_actions()
    }

    fn reset(&mut self, rng: &mut PortableRng) -> Result<usize> {
        self.state = match self.start {
            Some(s) => s,
            None => {
                let open: Vec<usize> = (0..self.n_states()).filter(|&s| !self.terminal[s]).collect();
                open[rng.gen_range(0..open.len())]
            }
        };
        self.steps = 0;
        Ok(self.state)
    }

    fn step(&mut self, action: usize, rng: &mut PortableRng) -> Result<Transition> {
        if action >= self.n_actions() {
            return Err(Error::InvalidAction { action, n_actions: self.n_actions() });
        }
        let row = self.mdp.transition_row(self.state, action);
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut next = row.len() - 1;
        for (s2, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                next = s2;
                break;
            }
        }
        // Guard against rounding in the cumulative sum landing on a zero-mass state.
        while row[next] == 0.0 && next > 0 {
            next -= 1;
        }
        let reward = self.mdp.reward_row(self.state, action)[next];
        self.state = next;
        self.steps += 1;
        let terminal = self.terminal[next];
        Ok(Transition { next_state: next, reward, terminal, truncated: !terminal && self.steps >= self.step_cap })
    }
}

/// Per-state action values stored only for visited states.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseQTable {
    n_actions: usize,
    default_value: f64,
    rows: IndexMap<usize, Vec<f64>>,
    default_row: Vec<f64>,
}

impl SparseQTable {
    pub fn new(n_actions: usize, default_value: f64) -> Self {
        SparseQTable { n_actions, default_value, rows: IndexMap::new(), default_row: vec![default_value; n_actions] }
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn default_value(&self) -> f64 {
        self.default_value
    }

    /// Number of states with a stored row.
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, s: usize) -> &[f64] {
        self.rows.get(&s).unwrap_or(&self.default_row)
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.row(s)[a]
    }

    pub fn row_mut(&mut self, s: usize) -> &mut [f64] {
        let (n, d) = (self.n_actions, self.default_value);
        self.rows.entry(s).or_insert_with(|| vec![d; n])
    }

    pub fn set(&mut self, s: usize, a: usize, value: f64) {
        self.row_mut(s)[a] = value;
    }

    /// Stored rows in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &[f64])> {
        self.rows.iter().map(|(&s, row)| (s, row.as_slice()))
    }

    /// Dense copy over states `0..n_states`.
    pub fn to_dense(&self, n_states: usize) -> Result<ActionValueFn> {
        if let Some((&s, _)) = self.rows.iter().find(|(&s, _)| s >= n_states) {
            return Err(Error::invalid(format!("state {s} outside 0..{n_states}")));
        }
        let values = (0..n_states).flat_map(|s| self.row(s).to_vec()).collect();
        ActionValueFn::new(n_states, self.n_actions, values)
    }
}

/// Lowest-index argmax with probability `1 − ε`, otherwise a uniform action.
pub fn epsilon_greedy_action(q_row: &[f64], epsilon: f64, rng: &mut PortableRng) -> Result<usize> {
    if q_row.is_empty() {
        return Err(Error::invalid("empty action-value row"));
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::invalid(format!("epsilon must lie in [0, 1], got {epsilon}")));
    }
    if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        Ok(rng.gen_range(0..q_row.len()))
    } else {
        Ok(argmax(q_row).0)
    }
}

/// `Σ_a π_ε(a|s) q(s,a)` for the ε-greedy policy over `q_row`.
fn epsilon_greedy_average(q_row: &[f64], epsilon: f64) -> f64 {
    let mean = q_row.iter().sum::<f64>() / q_row.len() as f64;
    (1.0 - epsilon) * argmax(q_row).1 + epsilon * mean
}

/// `Σ_{i<n} γ^i R_i + γ^n v_tail` with `n = rewards.len()`.
pub fn n_step_td_target(rewards: &[f64], v_tail: f64, discount: f64) -> Result<f64> {
    if rewards.is_empty() {
        return Err(Error::invalid("n-step target needs at least one reward"));
    }
    if !(0.0..=1.0).contains(&discount) {
        return Err(Error::invalid(format!("discount must lie in [0, 1], got {discount}")));
    }
    let tail = discount.powi(rewards.len() as i32) * v_tail;
    Ok(rewards.iter().rev().fold(0.0, |g, r| r + discount * g) + tail)
}

/// Learning-rate rule for tabular updates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepSchedule {
    Constant(f64),
    /// `1 / N` where `N` counts updates of the entry, this one included.
    InverseVisitCount,
}

impl StepSchedule {
    fn validate(&self) -> Result<()> {
        match *self {
            StepSchedule::Constant(l) if !(0.0..=1.0).contains(&l) => {
                Err(Error::Config(format!("step_size must lie in [0, 1], got {l}")))
            }
            _ => Ok(()),
        }
    }

    fn rate(&self, visits: u64) -> f64 {
        match *self {
            StepSchedule::Constant(l) => l,
            StepSchedule::InverseVisitCount => 1.0 / visits as f64,
        }
    }
}

/// Target used by [`q_learning`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Backup {
    /// `R + γ max_a' Q(s',a')`.
    Classical,
    /// As classical, but a self-transition bootstraps from `Q(s,a)`.
    Consistent,
    /// Classical plus `β_j (Q(s,a) − Σ_b π(b|s) Q(s,b))`.
    Advantage,
    /// `R + γ Σ_a' π_ε(a'|s') Q(s',a')` under the current behaviour policy.
    Expectation,
}

impl Backup {
    pub fn as_str(&self) -> &'static str {
        match self {
            Backup::Classical => "classical",
            Backup::Consistent => "consistent",
            Backup::Advantage => "advantage",
            Backup::Expectation => "expectation",
        }
    }
}

impl fmt::Display for Backup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Backup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classical" | "bellman" => Ok(Backup::Classical),
            "consistent" => Ok(Backup::Consistent),
            "advantage" => Ok(Backup::Advantage),
            "expectation" => Ok(Backup::Expectation),
            _ => Err(Error::Config(format!("unknown backup `{s}`"))),
        }
    }
}

/// Policy averaged in the advantage baseline `Σ_b π(b|s) Q(s,b)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum AdvantagePi {
    /// Baseline `max_b Q(s,b)`.
    #[default]
    Greedy,
    /// Baseline under the ε-greedy behaviour policy.
    Behavior,
}

impl FromStr for AdvantagePi {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy" => Ok(AdvantagePi::Greedy),
            "behavior" | "behaviour" => Ok(AdvantagePi::Behavior),
            _ => Err(Error::Config(format!("unknown advantage.pi `{s}` (expected greedy or behavior)"))),
        }
    }
}

impl fmt::Display for AdvantagePi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AdvantagePi::Greedy => "greedy",
            AdvantagePi::Behavior => "behavior",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LearnerConfig {
    pub step_size: StepSchedule,
    pub epsilon: f64,
    /// Multiplicative decay applied after every episode.
    pub epsilon_decay: f64,
    pub min_epsilon: f64,
    pub episodes: usize,
    pub max_steps_per_episode: usize,
    pub seed: u64,
    pub discount: f64,
    pub backup: Backup,
    /// β schedule, indexed by episode. Only read by the advantage backup.
    pub beta: BetaSchedule,
    pub advantage_pi: AdvantagePi,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            step_size: StepSchedule::Constant(0.1),
            epsilon: 1.0,
            epsilon_decay: 0.999,
            min_epsilon: 0.01,
            episodes: 1000,
            max_steps_per_episode: 1000,
            seed: 0,
            discount: 0.99,
            backup: Backup::Classical,
            beta: BetaSchedule::default(),
            advantage_pi: AdvantagePi::Greedy,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        self.step_size.validate()?;
        let unit = |name: &str, x: f64| {
            if (0.0..=1.0).contains(&x) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must lie in [0, 1], got {x}")))
            }
        };
        unit("epsilon", self.epsilon)?;
        unit("min_epsilon", self.min_epsilon)?;
        unit("discount", self.discount)?;
        if !(self.epsilon_decay > 0.0 && self.epsilon_decay <= 1.0) {
            return Err(Error::Config(format!("epsilon_decay must lie in (0, 1], got {}", self.epsilon_decay)));
        }
        if self.episodes == 0 {
            return Err(Error::Config("episodes must be at least 1".into()));
        }
        if self.max_steps_per_episode == 0 {
            return Err(Error::Config("max_steps must be at least 1".into()));
        }
        if let BetaSchedule::Constant(b) = self.beta {
            if !(b >= 0.0 && b.is_finite()) {
                return Err(Error::Config(format!("beta.constant must be finite and non-negative, got {b}")));
            }
        }
        Ok(())
    }

    /// ε used during episode `j` (from 1).
    pub fn epsilon_at(&self, j: usize) -> f64 {
        let mut eps = self.epsilon;
        for _ in 1..j {
            eps = (eps * self.epsilon_decay).max(self.min_epsilon);
        }
        eps
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpisodeLog {
    /// Counted from 1.
    pub episode_index: usize,
    pub total_reward: f64,
    pub steps: usize,
}

pub fn write_episode_csv<W: Write>(out: W, logs: &[EpisodeLog]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["episode", "total_reward", "steps"]).map_err(csv_err)?;
    for log in logs {
        w.write_record([log.episode_index.to_string(), log.total_reward.to_string(), log.steps.to_string()])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_episode_csv<R: std::io::Read>(input: R) -> Result<Vec<EpisodeLog>> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers().map_err(csv_err)?.clone();
    if headers.iter().collect::<Vec<_>>() != ["episode", "total_reward", "steps"] {
        return Err(Error::Csv(format!("unexpected header {:?}", headers.iter().collect::<Vec<_>>())));
    }
    r.records()
        .map(|rec| {
            let rec = rec.map_err(csv_err)?;
            let field = |i: usize| rec.get(i).ok_or_else(|| Error::Csv(format!("short record {rec:?}")));
            let bad = |e: &dyn fmt::Display| Error::Csv(format!("{e} in record {rec:?}"));
            Ok(EpisodeLog {
                episode_index: field(0)?.parse().map_err(|e| bad(&e))?,
                total_reward: field(1)?.parse().map_err(|e| bad(&e))?,
                steps: field(2)?.parse().map_err(|e| bad(&e))?,
            })
        })
        .collect()
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Csv(e.to_string())
}

#[derive(Clone, Debug)]
pub struct LearnerRun {
    pub q: SparseQTable,
    pub logs: Vec<EpisodeLog>,
}

fn episode_error(episode: usize, step: usize) -> impl FnOnce(Error) -> Error {
    move |e| Error::Episode { episode, step, source: Box::new(e) }
}

/// Per-entry update counts, used by [`StepSchedule::InverseVisitCount`].
#[derive(Default)]
struct VisitCounts(IndexMap<(usize, usize), u64>);

impl VisitCounts {
    fn bump(&mut self, s: usize, a: usize) -> u64 {
        let n = self.0.entry((s, a)).or_insert(0);
        *n += 1;
        *n
    }
}

/// Tabular Q-learning with the backup selected by `config.backup`.
pub fn q_learning<E: EpisodicEnv + ?Sized>(env: &mut E, config: &LearnerConfig) -> Result<LearnerRun> {
    config.validate()?;
    let n_actions = env.n_actions();
    let gamma = config.discount;
    let mut q = SparseQTable::new(n_actions, 0.0);
    let mut visits = VisitCounts::default();
    let mut agent = rng::stream(config.seed, AGENT_STREAM);
    let mut world = rng::stream(config.seed, ENV_STREAM);
    let mut logs = Vec::with_capacity(config.episodes);
    let mut epsilon = config.epsilon;
    for episode in 1..=config.episodes {
        let beta = match config.backup {
            Backup::Advantage => config.beta.beta_at(episode as u64)?,
            _ => 0.0,
        };
        let mut s = env.reset(&mut world).map_err(episode_error(episode, 0))?;
        let mut total = 0.0;
        let mut steps = 0;
        while steps < config.max_steps_per_episode {
            let wrap = episode_error(episode, steps + 1);
            let a = epsilon_greedy_action(q.row(s), epsilon, &mut agent)?;
            let t = env.step(a, &mut world).map_err(wrap)?;
            steps += 1;
            total += t.reward;
            let q_sa = q.get(s, a);
            let bootstrap = if t.terminal {
                0.0
            } else {
                match config.backup {
                    Backup::Consistent if t.next_state == s => q_sa,
                    Backup::Expectation => epsilon_greedy_average(q.row(t.next_state), epsilon),
                    _ => argmax(q.row(t.next_state)).1,
                }
            };
            let mut target = t.reward + gamma * bootstrap;
            if config.backup == Backup::Advantage {
                let baseline = match config.advantage_pi {
                    AdvantagePi::Greedy => argmax(q.row(s)).1,
                    AdvantagePi::Behavior => epsilon_greedy_average(q.row(s), epsilon),
                };
                target += beta * (q_sa - baseline);
            }
            let rate = config.step_size.rate(visits.bump(s, a));
            let updated = q_sa + rate * (target - q_sa);
            if !updated.is_finite() {
                return Err(Error::Episode {
                    episode,
                    step: steps,
                    source: Box::new(Error::NonFinite(format!("Q({s}, {a}) became {updated}"))),
                });
            }
            q.set(s, a, updated);
            if t.terminal || t.truncated {
                break;
            }
            s = t.next_state;
        }
        logs.push(EpisodeLog { episode_index: episode, total_reward: total, steps });
        epsilon = (epsilon * config.epsilon_decay).max(config.min_epsilon);
    }
    Ok(LearnerRun { q, logs })
}

/// On-policy SARSA: the bootstrap action is the next action actually taken.
/// Only the classical target is defined here; other backups are rejected.
pub fn sarsa<E: EpisodicEnv + ?Sized>(env: &mut E, config: &LearnerConfig) -> Result<LearnerRun> {
    config.validate()?;
    if config.backup != Backup::Classical {
        return Err(Error::Config(format!("sarsa supports only the classical backup, got `{}`", config.backup)));
    }
    let gamma = config.discount;
    let mut q = SparseQTable::new(env.n_actions(), 0.0);
    let mut visits = VisitCounts::default();
    let mut agent = rng::stream(config.seed, AGENT_STREAM);
    let mut world = rng::stream(config.seed, ENV_STREAM);
    let mut logs = Vec::with_capacity(config.episodes);
    let mut epsilon = config.epsilon;
    for episode in 1..=config.episodes {
        let mut s = env.reset(&mut world).map_err(episode_error(episode, 0))?;
        let mut a = epsilon_greedy_action(q.row(s), epsilon, &mut agent)?;
        let mut total = 0.0;
        let mut steps = 0;
        while steps < config.max_steps_per_episode {
            let t = env.step(a, &mut world).map_err(episode_error(episode, steps + 1))?;
            steps += 1;
            total += t.reward;
            let next_a = epsilon_greedy_action(q.row(t.next_state), epsilon, &mut agent)?;
            let q_sa = q.get(s, a);
            let target = if t.terminal { t.reward } else { t.reward + gamma * q.get(t.next_state, next_a) };
            let updated = q_sa + config.step_size.rate(visits.bump(s, a)) * (target - q_sa);
            if !updated.is_finite() {
                return Err(Error::Episode {
                    episode,
                    step: steps,
                    source: Box::new(Error::NonFinite(format!("Q({s}, {a}) became {updated}"))),
                });
            }
            q.set(s, a, updated);
            if t.terminal || t.truncated {
                break;
            }
            s = t.next_state;
            a = next_a;
        }
        logs.push(EpisodeLog { episode_index: episode, total_reward: total, steps });
        epsilon = (epsilon * config.epsilon_decay).max(config.min_epsilon);
    }
    Ok(LearnerRun { q, logs })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum McMode {
    FirstVisit,
    EveryVisit,
    /// Running mean `v ← v + (G − v)/N` over every visit.
    Incremental,
}

/// Settings shared by the evaluation learners.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalConfig {
    pub discount: f64,
    pub episodes: usize,
    pub max_steps_per_episode: usize,
    pub seed: u64,
}

/// One sampled episode. `rewards[t]` follows `states[t]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub truncated: bool,
}

fn sample_action(policy: &Policy, s: usize, rng: &mut PortableRng) -> Result<usize> {
    if s >= policy.n_states() {
        return Err(Error::invalid(format!("policy has no row for state {s}")));
    }
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (a, &p) in policy.row(s).iter().enumerate() {
        acc += p;
        if u < acc {
            return Ok(a);
        }
    }
    Ok(policy.row(s).iter().rposition(|&p| p > 0.0).unwrap_or(0))
}

/// Rolls out one episode under `policy`, stopping at a terminal state, at
/// the environment's own cap, or after `max_steps` steps.
pub fn generate_episode<E: EpisodicEnv + ?Sized>(
    env: &mut E,
    policy: &Policy,
    max_steps: usize,
    agent: &mut PortableRng,
    world: &mut PortableRng,
) -> Result<Episode> {
    let mut s = env.reset(world)?;
    let mut ep = Episode { states: Vec::new(), actions: Vec::new(), rewards: Vec::new(), truncated: false };
    loop {
        if ep.states.len() == max_steps {
            ep.truncated = true;
            break;
        }
        let a = sample_action(policy, s, agent)?;
        let t = env.step(a, world)?;
        ep.states.push(s);
        ep.actions.push(a);
        ep.rewards.push(t.reward);
        if t.terminal {
            break;
        }
        if t.truncated {
            ep.truncated = true;
            break;
        }
        s = t.next_state;
    }
    Ok(ep)
}

fn check_eval(config: &EvalConfig) -> Result<()> {
    if !(0.0..=1.0).contains(&config.discount) {
        return Err(Error::Config(format!("discount must lie in [0, 1], got {}", config.discount)));
    }
    if config.episodes == 0 || config.max_steps_per_episode == 0 {
        return Err(Error::Config("episodes and max_steps must be at least 1".into()));
    }
    Ok(())
}

/// Monte Carlo estimate of `v_π`. Truncated episodes contribute the return of
/// the observed prefix. Unvisited states stay at 0.
pub fn mc_policy_evaluation<E: EpisodicEnv + ?Sized>(
    env: &mut E,
    policy: &Policy,
    config: &EvalConfig,
    mode: McMode,
) -> Result<StateValueFn> {
    check_eval(config)?;
    let n = policy.n_states();
    let mut v = vec![0.0; n];
    let mut sums = vec![0.0; n];
    let mut counts = vec![0u64; n];
    let mut agent = rng::stream(config.seed, AGENT_STREAM);
    let mut world = rng::stream(config.seed, ENV_STREAM);
    for episode in 1..=config.episodes {
        let ep = generate_episode(env, policy, config.max_steps_per_episode, &mut agent, &mut world)
            .map_err(episode_error(episode, 0))?;
        let len = ep.states.len();
        let mut returns = vec![0.0; len];
        let mut g = 0.0;
        for t in (0..len).rev() {
            g = ep.rewards[t] + config.discount * g;
            returns[t] = g;
        }
        let mut seen = vec![false; n];
        for (t, &s) in ep.states.iter().enumerate() {
            if mode == McMode::FirstVisit && std::mem::replace(&mut seen[s], true) {
                continue;
            }
            counts[s] += 1;
            match mode {
                McMode::Incremental => v[s] += (returns[t] - v[s]) / counts[s] as f64,
                _ => sums[s] += returns[t],
            }
        }
    }
    if mode != McMode::Incremental {
        for s in 0..n {
            if counts[s] > 0 {
                v[s] = sums[s] / counts[s] as f64;
            }
        }
    }
    Ok(StateValueFn::new(v))
}

/// Online TD(0) estimate of `v_π`. A terminal next state contributes no
/// bootstrap; a truncated one still does.
pub fn td0_policy_evaluation<E: EpisodicEnv + ?Sized>(
    env: &mut E,
    policy: &Policy,
    step_size: StepSchedule,
    config: &EvalConfig,
) -> Result<StateValueFn> {
    check_eval(config)?;
    step_size.validate()?;
    let n = policy.n_states();
    let mut v = vec![0.0; n];
    let mut counts = vec![0u64; n];
    let mut agent = rng::stream(config.seed, AGENT_STREAM);
    let mut world = rng::stream(config.seed, ENV_STREAM);
    for episode in 1..=config.episodes {
        let mut s = env.reset(&mut world).map_err(episode_error(episode, 0))?;
        for step in 1..=config.max_steps_per_episode {
            let a = sample_action(policy, s, &mut agent)?;
            let t = env.step(a, &mut world).map_err(episode_error(episode, step))?;
            if t.next_state >= n {
                return Err(episode_error(episode, step)(Error::invalid(format!(
                    "state {} outside the policy's {n} states",
                    t.next_state
                ))));
            }
            let target = if t.terminal { t.reward } else { t.reward + config.discount * v[t.next_state] };
            counts[s] += 1;
            v[s] += step_size.rate(counts[s]) * (target - v[s]);
            if t.terminal || t.truncated {
                break;
            }
            s = t.next_state;
        }
    }
    Ok(StateValueFn::new(v))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> MdpEnv {
        // s0 -> s1 -> s2 (terminal), rewards 1 then 0.
        let p = vec![
            0.0, 1.0, 0.0, //
            0.0, 0.0, 1.0, //
            0.0, 0.0, 1.0,
        ];
        let mut r = vec![0.0; 9];
        r[1] = 1.0;
        let mdp = TabularMdp::new(3, 1, p, r, 0.5).unwrap();
        MdpEnv::new(mdp, Some(0), &[2], 10).unwrap()
    }

    fn two_state_episodic() -> MdpEnv {
        MdpEnv::new(TabularMdp::two_state(), Some(0), &[1], 100).unwrap()
    }

    fn eval(episodes: usize) -> EvalConfig {
        EvalConfig { discount: 0.5, episodes, max_steps_per_episode: 100, seed: 3 }
    }

    #[test]
    fn greedy_choice_and_ties() {
        let mut rng = rng::stream(0, AGENT_STREAM);
        for _ in 0..50 {
            assert_eq!(epsilon_greedy_action(&[0.0, 5.0, 2.0], 0.0, &mut rng).unwrap(), 1);
            assert_eq!(epsilon_greedy_action(&[7.0, 7.0], 0.0, &mut rng).unwrap(), 0);
        }
        assert!(epsilon_greedy_action(&[], 0.5, &mut rng).is_err());
        assert!(epsilon_greedy_action(&[1.0], 1.5, &mut rng).is_err());
    }

    #[test]
    fn full_exploration_is_uniform() {
        let mut rng = rng::stream(11, AGENT_STREAM);
        let draws = 10_000;
        let mut counts = [0usize; 4];
        for _ in 0..draws {
            counts[epsilon_greedy_action(&[3.0, 0.0, 0.0, 1.0], 1.0, &mut rng).unwrap()] += 1;
        }
        let (p, n) = (0.25, draws as f64);
        let sigma = (n * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - n * p).abs() < 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn n_step_targets() {
        assert_eq!(n_step_td_target(&[1.0, 1.0, 1.0], 4.0, 0.5).unwrap(), 2.25);
        assert_eq!(n_step_td_target(&[2.0], 3.0, 0.9).unwrap(), 2.0 + 0.9 * 3.0);
        let g = n_step_td_target(&[0.0; 4], 5.0, 0.5).unwrap();
        assert!((g - 0.5f64.powi(4) * 5.0).abs() < 1e-15);
        assert!(n_step_td_target(&[], 1.0, 0.5).is_err());
    }

    #[test]
    fn monte_carlo_on_chain() {
        for mode in [McMode::FirstVisit, McMode::EveryVisit, McMode::Incremental] {
            let v = mc_policy_evaluation(&mut chain(), &Policy::uniform(3, 1), &eval(1), mode).unwrap();
            assert_eq!(v.values(), &[1.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn first_visit_and_incremental_agree_without_revisits() {
        let env_factory = || {
            // Three-state loop-free random walk that always terminates in state 3.
            let p = vec![
                0.0, 0.5, 0.5, 0.0, 0.0, 0.0, 0.3, 0.7, //
                0.0, 0.0, 0.2, 0.8, 0.0, 0.0, 0.0, 1.0, //
                0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, //
                0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0,
            ];
            let r: Vec<f64> = (0..32).map(|i| (i % 5) as f64 - 2.0).collect();
            let mdp = TabularMdp::new(4, 2, p, r, 0.9).unwrap();
            MdpEnv::new(mdp, Some(0), &[3], 10).unwrap()
        };
        let pi = Policy::uniform(4, 2);
        let cfg = EvalConfig { discount: 0.9, episodes: 300, max_steps_per_episode: 10, seed: 8 };
        let a = mc_policy_evaluation(&mut env_factory(), &pi, &cfg, McMode::FirstVisit).unwrap();
        let b = mc_policy_evaluation(&mut env_factory(), &pi, &cfg, McMode::Incremental).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn unvisited_states_keep_zero() {
        let v = mc_policy_evaluation(&mut two_state_episodic(), &Policy::uniform(2, 2), &eval(20), McMode::FirstVisit)
            .unwrap();
        assert_eq!(v[1], 0.0);
    }

    #[test]
    fn td0_self_loop_scalar_recursion() {
        let mdp = TabularMdp::single_state(1.0, 0.5).unwrap();
        let mut env = MdpEnv::new(mdp, Some(0), &[], 1000).unwrap();
        let pi = Policy::uniform(1, 1);
        let one = EvalConfig { discount: 0.5, episodes: 1, max_steps_per_episode: 1, seed: 0 };
        let v = td0_policy_evaluation(&mut env, &pi, StepSchedule::Constant(1.0), &one).unwrap();
        assert_eq!(v[0], 1.0);
        let many = EvalConfig { max_steps_per_episode: 200, ..one };
        let v = td0_policy_evaluation(&mut env, &pi, StepSchedule::Constant(1.0), &many).unwrap();
        assert!((v[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn td0_zero_rewards_stay_zero() {
        let mdp = TabularMdp::new(2, 1, vec![0.5; 4], vec![0.0; 4], 0.9).unwrap();
        let mut env = MdpEnv::new(mdp, None, &[], 20).unwrap();
        let v = td0_policy_evaluation(&mut env, &Policy::uniform(2, 1), StepSchedule::Constant(0.5), &eval(30)).unwrap();
        assert_eq!(v.values(), &[0.0, 0.0]);
    }

    #[test]
    fn sarsa_with_zero_step_size_learns_nothing() {
        let cfg = LearnerConfig { step_size: StepSchedule::Constant(0.0), episodes: 50, discount: 0.5, ..Default::default() };
        let run = sarsa(&mut two_state_episodic(), &cfg).unwrap();
        assert!(run.q.iter().all(|(_, row)| row.iter().all(|&x| x == 0.0)));
        let run = q_learning(&mut two_state_episodic(), &cfg).unwrap();
        assert!(run.q.iter().all(|(_, row)| row.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn sarsa_single_action_is_repeatable() {
        let cfg = LearnerConfig { epsilon: 0.0, min_epsilon: 0.0, episodes: 5, discount: 0.5, ..Default::default() };
        let run = sarsa(&mut chain(), &cfg).unwrap();
        assert!(run.logs.iter().all(|l| l.steps == 2 && l.total_reward == 1.0));
        assert!(sarsa(&mut chain(), &LearnerConfig { backup: Backup::Advantage, ..cfg }).is_err());
    }

    #[test]
    fn epsilon_schedule() {
        let cfg = LearnerConfig { epsilon: 1.0, epsilon_decay: 0.5, min_epsilon: 0.1, ..Default::default() };
        assert_eq!(cfg.epsilon_at(1), 1.0);
        assert_eq!(cfg.epsilon_at(3), 0.25);
        assert_eq!(cfg.epsilon_at(10), 0.1);
    }

    #[test]
    fn config_validation() {
        let ok = LearnerConfig::default();
        assert!(ok.validate().is_ok());
        assert!(LearnerConfig { episodes: 0, ..ok.clone() }.validate().is_err());
        assert!(LearnerConfig { epsilon: 1.5, ..ok.clone() }.validate().is_err());
        assert!(LearnerConfig { epsilon_decay: 0.0, ..ok.clone() }.validate().is_err());
        assert!(LearnerConfig { step_size: StepSchedule::Constant(-0.1), ..ok }.validate().is_err());
    }

    #[test]
    fn sparse_table_defaults_and_order() {
        let mut q = SparseQTable::new(2, -1.0);
        assert_eq!(q.row(42), &[-1.0, -1.0]);
        q.set(7, 1, 3.0);
        q.set(2, 0, 1.0);
        assert_eq!(q.iter().map(|(s, _)| s).collect::<Vec<_>>(), vec![7, 2]);
        assert_eq!(q.get(7, 0), -1.0);
        let dense = q.to_dense(8).unwrap();
        assert_eq!(dense.get(7, 1), 3.0);
        assert_eq!(dense.get(0, 0), -1.0);
        assert!(q.to_dense(5).is_err());
    }

    #[test]
    fn episode_csv_round_trip() {
        let logs = vec![
            EpisodeLog { episode_index: 1, total_reward: -200.0, steps: 200 },
            EpisodeLog { episode_index: 2, total_reward: -87.5, steps: 88 },
        ];
        let mut buf = Vec::new();
        write_episode_csv(&mut buf, &logs).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().starts_with("episode,total_reward,steps\n1,-200,200\n"));
        assert_eq!(read_episode_csv(buf.as_slice()).unwrap(), logs);
    }
}
