//! Classic-control tasks (mountain car, cart-pole, acrobot) with seeded resets
//! and a uniform-grid discretizer that turns observations into tabular states.

pub mod constants;
mod grid;
mod physics;

use std::fmt;
use std::str::FromStr;

use rand::Rng;

pub use grid::{discretize, GridSpec};

use crate::model_free::{EpisodicEnv, Transition};
use crate::rng::{self, PortableRng, ENV_STREAM};
use crate::{Error, Result};
use constants::{acrobot as ac, cart_pole as cp, mountain_car as mc};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EnvKind {
    MountainCar,
    CartPole,
    Acrobot,
}

impl EnvKind {
    pub const ALL: [EnvKind; 3] = [EnvKind::MountainCar, EnvKind::CartPole, EnvKind::Acrobot];

    pub fn name(self) -> &'static str {
        match self {
            EnvKind::MountainCar => "mountain-car",
            EnvKind::CartPole => "cart-pole",
            EnvKind::Acrobot => "acrobot",
        }
    }

    pub fn n_actions(self) -> usize {
        match self {
            EnvKind::MountainCar => mc::N_ACTIONS,
            EnvKind::CartPole => cp::N_ACTIONS,
            EnvKind::Acrobot => ac::N_ACTIONS,
        }
    }

    pub fn obs_dim(self) -> usize {
        match self {
            EnvKind::MountainCar => 2,
            EnvKind::CartPole => 4,
            EnvKind::Acrobot => 6,
        }
    }

    pub fn step_cap(self) -> usize {
        match self {
            EnvKind::MountainCar => mc::STEP_CAP,
            EnvKind::CartPole => cp::STEP_CAP,
            EnvKind::Acrobot => ac::STEP_CAP,
        }
    }

    /// Documented range of every observation component. Cart-pole velocities
    /// are physically unbounded.
    pub fn observation_bounds(self) -> Vec<(f64, f64)> {
        match self {
            EnvKind::MountainCar => vec![(mc::MIN_POSITION, mc::MAX_POSITION), (-mc::MAX_SPEED, mc::MAX_SPEED)],
            EnvKind::CartPole => vec![
                (-2.0 * cp::X_THRESHOLD, 2.0 * cp::X_THRESHOLD),
                (f64::NEG_INFINITY, f64::INFINITY),
                (-2.0 * cp::THETA_THRESHOLD, 2.0 * cp::THETA_THRESHOLD),
                (f64::NEG_INFINITY, f64::INFINITY),
            ],
            EnvKind::Acrobot => vec![
                (-1.0, 1.0),
                (-1.0, 1.0),
                (-1.0, 1.0),
                (-1.0, 1.0),
                (-ac::MAX_VEL_1, ac::MAX_VEL_1),
                (-ac::MAX_VEL_2, ac::MAX_VEL_2),
            ],
        }
    }

    /// Default discretization: 40×40 for mountain car, 12⁴ for cart-pole
    /// (velocities clamped to ±3, position and angle to the failure
    /// thresholds) and 10⁶ for acrobot.
    pub fn default_grid(self) -> GridSpec {
        self.grid_with_bins(match self {
            EnvKind::MountainCar => vec![40, 40],
            EnvKind::CartPole => vec![12; 4],
            EnvKind::Acrobot => vec![ac::DEFAULT_BINS; 6],
        })
        .expect("default grid is valid")
    }

    /// A grid over the default clamp ranges with custom bin counts.
    pub fn grid_with_bins(self, bins: Vec<usize>) -> Result<GridSpec> {
        let ranges = match self {
            EnvKind::CartPole => vec![
                (-cp::X_THRESHOLD, cp::X_THRESHOLD),
                (-cp::VELOCITY_CLAMP, cp::VELOCITY_CLAMP),
                (-cp::THETA_THRESHOLD, cp::THETA_THRESHOLD),
                (-cp::VELOCITY_CLAMP, cp::VELOCITY_CLAMP),
            ],
            _ => self.observation_bounds(),
        };
        GridSpec::new(bins, ranges)
    }

    /// Draws a physical state from the task's initial distribution.
    pub fn initial_state(self, rng: &mut PortableRng) -> Vec<f64> {
        match self {
            EnvKind::MountainCar => vec![rng.gen_range(mc::INIT_POSITION.0..mc::INIT_POSITION.1), 0.0],
            EnvKind::CartPole => (0..4).map(|_| rng.gen_range(-cp::INIT_RANGE..cp::INIT_RANGE)).collect(),
            EnvKind::Acrobot => (0..4).map(|_| rng.gen_range(-ac::INIT_RANGE..ac::INIT_RANGE)).collect(),
        }
    }

    /// Observation of a physical state. Acrobot exposes its two angles as
    /// `(cos, sin)` pairs; the other tasks observe their state directly.
    pub fn observe(self, state: &[f64]) -> ContinuousObservation {
        match self {
            EnvKind::Acrobot => ContinuousObservation(vec![
                state[0].cos(),
                state[0].sin(),
                state[1].cos(),
                state[1].sin(),
                state[2],
                state[3],
            ]),
            _ => ContinuousObservation(state.to_vec()),
        }
    }

    /// One physics step from a physical state. `truncated` is always false
    /// here; step caps are tracked by [`ClassicEnv`].
    pub fn transition(self, state: &[f64], action: usize) -> Result<EnvOutcome> {
        if action >= self.n_actions() {
            return Err(Error::InvalidAction { action, n_actions: self.n_actions() });
        }
        let state_dim = if self == EnvKind::Acrobot { 4 } else { self.obs_dim() };
        if state.len() != state_dim {
            return Err(Error::shape(format!("{state_dim}-dim state"), state.len()));
        }
        let (next_state, reward, terminal) = match self {
            EnvKind::MountainCar => physics::mountain_car(state, action),
            EnvKind::CartPole => physics::cart_pole(state, action),
            EnvKind::Acrobot => physics::acrobot(state, action),
        };
        Ok(EnvOutcome {
            next_observation: self.observe(&next_state),
            next_state,
            reward,
            terminal,
            truncated: false,
        })
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EnvKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownEnv(s.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContinuousObservation(pub Vec<f64>);

impl ContinuousObservation {
    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvOutcome {
    pub next_observation: ContinuousObservation,
    /// Full physical state after the step (differs from the observation only
    /// for acrobot).
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub terminal: bool,
    pub truncated: bool,
}

/// Seeded initial observation of the named task.
pub fn reset(env_name: &str, seed: u64) -> Result<ContinuousObservation> {
    let kind: EnvKind = env_name.parse()?;
    let mut rng = rng::stream(seed, ENV_STREAM);
    Ok(kind.observe(&kind.initial_state(&mut rng)))
}

/// One physics step of the named task from a physical state.
pub fn step(env_name: &str, state: &[f64], action: usize) -> Result<EnvOutcome> {
    env_name.parse::<EnvKind>()?.transition(state, action)
}

/// A running episode: physical state plus step counter.
#[derive(Clone, Debug)]
pub struct ClassicEnv {
    kind: EnvKind,
    state: Vec<f64>,
    steps: usize,
    step_cap: usize,
}

impl ClassicEnv {
    pub fn new(kind: EnvKind) -> Self {
        ClassicEnv { kind, state: Vec::new(), steps: 0, step_cap: kind.step_cap() }
    }

    pub fn kind(&self) -> EnvKind {
        self.kind
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    pub fn reset(&mut self, rng: &mut PortableRng) -> ContinuousObservation {
        self.state = self.kind.initial_state(rng);
        self.steps = 0;
        self.kind.observe(&self.state)
    }

    pub fn step(&mut self, action: usize) -> Result<EnvOutcome> {
        if self.state.is_empty() {
            return Err(Error::invalid("step called before reset"));
        }
        let mut outcome = self.kind.transition(&self.state, action)?;
        self.steps += 1;
        outcome.truncated = !outcome.terminal && self.steps >= self.step_cap;
        self.state.clone_from(&outcome.next_state);
        Ok(outcome)
    }
}

/// A classic-control task seen through a grid: states are flat cell indices.
#[derive(Clone, Debug)]
pub struct DiscretizedEnv {
    env: ClassicEnv,
    grid: GridSpec,
}

impl DiscretizedEnv {
    pub fn new(kind: EnvKind, grid: GridSpec) -> Result<Self> {
        if grid.dims() != kind.obs_dim() {
            return Err(Error::shape(format!("{}-dim grid for {kind}", kind.obs_dim()), grid.dims()));
        }
        Ok(DiscretizedEnv { env: ClassicEnv::new(kind), grid })
    }

    pub fn kind(&self) -> EnvKind {
        self.env.kind()
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }
}

impl EpisodicEnv for DiscretizedEnv {
    fn n_actions(&self) -> usize {
        self.env.kind().n_actions()
    }

    fn reset(&mut self, rng: &mut PortableRng) -> Result<usize> {
        let obs = self.env.reset(rng);
        discretize(obs.values(), &self.grid)
    }

    fn step(&mut self, action: usize, _rng: &mut PortableRng) -> Result<Transition> {
        let out = self.env.step(action)?;
        Ok(Transition {
            next_state: discretize(out.next_observation.values(), &self.grid)?,
            reward: out.reward,
            terminal: out.terminal,
            truncated: out.truncated,
        })
    }
}
