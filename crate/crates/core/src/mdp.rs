//! Finite Markov decision processes, policies and value tables.
//!
//! Rewards are stored per transition `(s, a, s')`; the marginal reward
//! `r(s, a) = Σ_{s'} p(s'|s, a) · r(s, a, s')` is precomputed on construction.
//! Probability rows are checked to sum to one within [`PROB_TOLERANCE`] and are
//! never renormalized afterwards.

use std::fmt;
use std::fs;
use std::path::Path;

use rand::Rng;

use crate::rng::{self, FIXTURE_STREAM};
use crate::{Error, Result};

/// Tolerance on row sums of transition and policy tensors.
pub const PROB_TOLERANCE: f64 = 1e-12;

/// A single failed [`TabularMdp`] invariant.
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    EmptyDimension { n_states: usize, n_actions: usize },
    TensorLength { tensor: &'static str, expected: usize, found: usize },
    RowSum { state: usize, action: usize, sum: f64 },
    ProbabilityRange { state: usize, action: usize, next: usize, value: f64 },
    Discount { value: f64 },
    NonFiniteReward { state: usize, action: usize, next: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyDimension { n_states, n_actions } => {
                write!(f, "empty MDP ({n_states} states, {n_actions} actions)")
            }
            Violation::TensorLength { tensor, expected, found } => {
                write!(f, "{tensor} tensor has {found} entries, expected {expected}")
            }
            Violation::RowSum { state, action, sum } => {
                write!(f, "(s={state}, a={action}): transition row sums to {sum}")
            }
            Violation::ProbabilityRange { state, action, next, value } => {
                write!(f, "(s={state}, a={action}): p(s'={next}) = {value} outside [0, 1]")
            }
            Violation::Discount { value } => write!(f, "discount {value} outside [0, 1)"),
            Violation::NonFiniteReward { state, action, next } => {
                write!(f, "(s={state}, a={action}): reward for s'={next} is not finite")
            }
        }
    }
}

/// The `⟨S, A, p, r, γ⟩` tuple over finite index sets.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    /// Indexed `[s][a][s']`, row-major.
    transition: Vec<f64>,
    /// Indexed `[s][a][s']`, row-major.
    reward: Vec<f64>,
    discount: f64,
    expected_reward: Vec<f64>,
    r_max: f64,
}

impl TabularMdp {
    /// Builds and validates an MDP. Fails with [`Error::InvalidMdp`] listing
    /// every violated invariant.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        discount: f64,
    ) -> Result<Self> {
        let mdp = Self::new_unchecked(n_states, n_actions, transition, reward, discount);
        let report = validate_mdp(&mdp);
        if report.is_empty() {
            Ok(mdp)
        } else {
            Err(Error::InvalidMdp(report))
        }
    }

    /// Builds an MDP without checking invariants. Intended for fixtures that
    /// exercise [`validate_mdp`]; every other path should use [`TabularMdp::new`].
    pub fn new_unchecked(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        discount: f64,
    ) -> Self {
        let mut mdp = TabularMdp {
            n_states,
            n_actions,
            transition,
            reward,
            discount,
            expected_reward: Vec::new(),
            r_max: 0.0,
        };
        let cells = n_states * n_actions * n_states;
        if mdp.transition.len() == cells && mdp.reward.len() == cells {
            mdp.expected_reward = (0..n_states * n_actions)
                .map(|sa| {
                    let row = sa * n_states..(sa + 1) * n_states;
                    mdp.transition[row.clone()]
                        .iter()
                        .zip(&mdp.reward[row])
                        .map(|(p, r)| p * r)
                        .sum()
                })
                .collect();
            mdp.r_max = mdp.reward.iter().fold(0.0_f64, |m, r| m.max(r.abs()));
        }
        mdp
    }

    /// Deterministic two-state fixture with hand-solvable values.
    ///
    /// `s0 --a0--> s0` (reward 0), `s0 --a1--> s1` (reward 1), `s1` absorbing
    /// under both actions with reward 0, `γ = 0.5`. Then `V* = (1, 0)` and
    /// `Q* = ((0.5, 1), (0, 0))`.
    pub fn two_state() -> Self {
        #[rustfmt::skip]
        let transition = vec![
            1.0, 0.0,   0.0, 1.0,
            0.0, 1.0,   0.0, 1.0,
        ];
        #[rustfmt::skip]
        let reward = vec![
            0.0, 0.0,   0.0, 1.0,
            0.0, 0.0,   0.0, 0.0,
        ];
        Self::new(2, 2, transition, reward, 0.5).expect("two-state fixture is valid")
    }

    /// One state, one action, constant reward: `v = reward / (1 − γ)`.
    pub fn single_state(reward: f64, discount: f64) -> Result<Self> {
        Self::new(1, 1, vec![1.0], vec![reward], discount)
    }

    /// Same dynamics and rewards under a different discount.
    pub fn with_discount(&self, discount: f64) -> Result<Self> {
        Self::new(self.n_states, self.n_actions, self.transition.clone(), self.reward.clone(), discount)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    /// Largest absolute transition reward, recorded on construction.
    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn transition(&self, s: usize, a: usize, next: usize) -> f64 {
        self.transition[self.row_start(s, a) + next]
    }

    /// `p(·|s, a)` as a slice over next states.
    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let start = self.row_start(s, a);
        &self.transition[start..start + self.n_states]
    }

    /// `r(s, a, ·)` as a slice over next states.
    pub fn reward_row(&self, s: usize, a: usize) -> &[f64] {
        let start = self.row_start(s, a);
        &self.reward[start..start + self.n_states]
    }

    /// Marginal reward `r(s, a)`.
    pub fn expected_reward(&self, s: usize, a: usize) -> f64 {
        self.expected_reward[s * self.n_actions + a]
    }

    /// `Σ_{s'} p(s'|s, a) · f(s')`.
    pub fn expected_next(&self, s: usize, a: usize, f: &[f64]) -> f64 {
        self.transition_row(s, a).iter().zip(f).map(|(p, v)| p * v).sum()
    }

    fn row_start(&self, s: usize, a: usize) -> usize {
        (s * self.n_actions + a) * self.n_states
    }

    /// Parses the line-oriented fixture format:
    ///
    /// ```text
    /// mdp <n_states> <n_actions> <gamma>
    /// <s> <a>  <p(0)> ... <p(n-1)>  <r(0)> ... <r(n-1)>
    /// ```
    ///
    /// with one line per `(s, a)` and `#` comments.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut header: Option<(usize, usize, f64)> = None;
        let mut transition = Vec::new();
        let mut reward = Vec::new();
        let mut seen = Vec::new();

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let parse_err = |message: String| Error::Parse { line: line_no, message };

            let Some((n_s, n_a, _)) = header else {
                if fields.len() != 4 || fields[0] != "mdp" {
                    return Err(parse_err(
                        "expected header `mdp <n_states> <n_actions> <gamma>`".into(),
                    ));
                }
                let n_s: usize = fields[1].parse().map_err(|e| parse_err(format!("n_states: {e}")))?;
                let n_a: usize = fields[2].parse().map_err(|e| parse_err(format!("n_actions: {e}")))?;
                let gamma: f64 = fields[3].parse().map_err(|e| parse_err(format!("gamma: {e}")))?;
                if n_s == 0 || n_a == 0 {
                    return Err(parse_err("n_states and n_actions must be positive".into()));
                }
                header = Some((n_s, n_a, gamma));
                transition = vec![0.0; n_s * n_a * n_s];
                reward = vec![0.0; n_s * n_a * n_s];
                seen = vec![false; n_s * n_a];
                continue;
            };

            if fields.len() != 2 + 2 * n_s {
                return Err(parse_err(format!(
                    "expected {} fields, found {}",
                    2 + 2 * n_s,
                    fields.len()
                )));
            }
            let s: usize = fields[0].parse().map_err(|e| parse_err(format!("state: {e}")))?;
            let a: usize = fields[1].parse().map_err(|e| parse_err(format!("action: {e}")))?;
            if s >= n_s || a >= n_a {
                return Err(parse_err(format!("(s={s}, a={a}) out of range")));
            }
            if std::mem::replace(&mut seen[s * n_a + a], true) {
                return Err(parse_err(format!("duplicate row for (s={s}, a={a})")));
            }
            let start = (s * n_a + a) * n_s;
            for k in 0..n_s {
                transition[start + k] = fields[2 + k]
                    .parse()
                    .map_err(|e| parse_err(format!("p({k}): {e}")))?;
                reward[start + k] = fields[2 + n_s + k]
                    .parse()
                    .map_err(|e| parse_err(format!("r({k}): {e}")))?;
            }
        }

        let (n_s, n_a, gamma) = header.ok_or(Error::Parse {
            line: 0,
            message: "missing `mdp` header".into(),
        })?;
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Parse {
                line: 0,
                message: format!("missing row for (s={}, a={})", missing / n_a, missing % n_a),
            });
        }
        Self::new(n_s, n_a, transition, reward, gamma)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&fs::read_to_string(path)?)
    }

    /// Serializes to the fixture format; floats use the shortest exact
    /// representation so `from_text(to_text())` is lossless.
    pub fn to_text(&self) -> String {
        let mut out = format!("mdp {} {} {}\n", self.n_states, self.n_actions, self.discount);
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                out.push_str(&format!("{s} {a} "));
                let cols: Vec<String> = self
                    .transition_row(s, a)
                    .iter()
                    .chain(self.reward_row(s, a))
                    .map(|v| v.to_string())
                    .collect();
                out.push(' ');
                out.push_str(&cols.join(" "));
                out.push('\n');
            }
        }
        out
    }
}

/// Lists every violated [`TabularMdp`] invariant; empty iff the MDP is valid.
pub fn validate_mdp(mdp: &TabularMdp) -> Vec<Violation> {
    let mut report = Vec::new();
    let (n_s, n_a) = (mdp.n_states, mdp.n_actions);
    if n_s == 0 || n_a == 0 {
        report.push(Violation::EmptyDimension { n_states: n_s, n_actions: n_a });
    }
    let cells = n_s * n_a * n_s;
    for (tensor, len) in [("transition", mdp.transition.len()), ("reward", mdp.reward.len())] {
        if len != cells {
            report.push(Violation::TensorLength { tensor, expected: cells, found: len });
        }
    }
    if !(0.0..1.0).contains(&mdp.discount) {
        report.push(Violation::Discount { value: mdp.discount });
    }
    if report.iter().any(|v| !matches!(v, Violation::Discount { .. })) {
        return report;
    }

    for s in 0..n_s {
        for a in 0..n_a {
            let row = mdp.transition_row(s, a);
            for (next, &p) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&p) {
                    report.push(Violation::ProbabilityRange { state: s, action: a, next, value: p });
                }
            }
            let sum: f64 = row.iter().sum();
            if !((sum - 1.0).abs() <= PROB_TOLERANCE) {
                report.push(Violation::RowSum { state: s, action: a, sum });
            }
            for (next, r) in mdp.reward_row(s, a).iter().enumerate() {
                if !r.is_finite() {
                    report.push(Violation::NonFiniteReward { state: s, action: a, next });
                }
            }
        }
    }
    report
}

/// Seeded random MDP: transition rows are normalized uniform `(0, 1]` draws,
/// rewards are uniform in `[−1, 1]`.
pub fn random_mdp(n_states: usize, n_actions: usize, discount: f64, seed: u64) -> Result<TabularMdp> {
    if n_states == 0 || n_actions == 0 {
        return Err(Error::invalid("random_mdp needs at least one state and one action"));
    }
    if !(0.0..1.0).contains(&discount) {
        return Err(Error::invalid(format!("discount {discount} outside [0, 1)")));
    }
    let mut rng = rng::stream(seed, FIXTURE_STREAM);
    let cells = n_states * n_actions * n_states;
    let mut transition = Vec::with_capacity(cells);
    for _ in 0..n_states * n_actions {
        let draws: Vec<f64> = (0..n_states).map(|_| 1.0 - rng.gen::<f64>()).collect();
        let total: f64 = draws.iter().sum();
        transition.extend(draws.iter().map(|d| d / total));
    }
    let reward = (0..cells).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    TabularMdp::new(n_states, n_actions, transition, reward, discount)
}

/// `G = Σ_k γ^k · rewards[k]`; the empty sequence returns 0.
pub fn discounted_return(rewards: &[f64], discount: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&discount) {
        return Err(Error::invalid(format!("discount {discount} outside [0, 1)")));
    }
    if let Some(k) = rewards.iter().position(|r| !r.is_finite()) {
        return Err(Error::NonFinite(format!("reward at index {k} is not finite")));
    }
    Ok(rewards.iter().rev().fold(0.0, |g, r| r + discount * g))
}

/// Stochastic tabular policy `π(a|s)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Policy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl Policy {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::invalid("policy needs at least one state and one action"));
        }
        if probs.len() != n_states * n_actions {
            return Err(Error::shape(n_states * n_actions, probs.len()));
        }
        for (s, row) in probs.chunks(n_actions).enumerate() {
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::invalid(format!("policy row {s} has an entry outside [0, 1]")));
            }
            let sum: f64 = row.iter().sum();
            if !((sum - 1.0).abs() <= PROB_TOLERANCE) {
                return Err(Error::invalid(format!("policy row {s} sums to {sum}")));
            }
        }
        Ok(Policy { n_states, n_actions, probs })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        let p = 1.0 / n_actions as f64;
        Policy { n_states, n_actions, probs: vec![p; n_states * n_actions] }
    }

    pub fn deterministic(n_actions: usize, actions: &[usize]) -> Result<Self> {
        let mut probs = vec![0.0; actions.len() * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            if a >= n_actions {
                return Err(Error::InvalidAction { action: a, n_actions });
            }
            probs[s * n_actions + a] = 1.0;
        }
        Policy::new(actions.len(), n_actions, probs)
    }

    /// Seeded random stochastic policy (normalized uniform draws).
    pub fn random(n_states: usize, n_actions: usize, seed: u64) -> Self {
        let mut rng = rng::stream(seed, FIXTURE_STREAM);
        let mut probs = Vec::with_capacity(n_states * n_actions);
        for _ in 0..n_states {
            let draws: Vec<f64> = (0..n_actions).map(|_| 1.0 - rng.gen::<f64>()).collect();
            let total: f64 = draws.iter().sum();
            probs.extend(draws.iter().map(|d| d / total));
        }
        Policy { n_states, n_actions, probs }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    /// The chosen action when the row is a point mass.
    pub fn action(&self, s: usize) -> Option<usize> {
        let row = self.row(s);
        let a = row.iter().position(|&p| p == 1.0)?;
        row.iter().enumerate().all(|(b, &p)| b == a || p == 0.0).then_some(a)
    }

    pub fn is_deterministic(&self) -> bool {
        (0..self.n_states).all(|s| self.action(s).is_some())
    }

    /// Policy-weighted average of a per-action row.
    pub fn average(&self, s: usize, row: &[f64]) -> f64 {
        self.row(s).iter().zip(row).map(|(p, q)| p * q).sum()
    }

    pub(crate) fn check_matches(&self, mdp: &TabularMdp) -> Result<()> {
        if self.n_states != mdp.n_states() || self.n_actions != mdp.n_actions() {
            return Err(Error::shape(
                format!("policy {}x{}", mdp.n_states(), mdp.n_actions()),
                format!("{}x{}", self.n_states, self.n_actions),
            ));
        }
        Ok(())
    }
}

/// Dense state-value table `v(s)`.
#[derive(Clone, Debug, PartialEq)]
pub struct StateValueFn(Vec<f64>);

impl StateValueFn {
    pub fn new(values: Vec<f64>) -> Self {
        StateValueFn(values)
    }

    pub fn zeros(n_states: usize) -> Self {
        StateValueFn(vec![0.0; n_states])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub(crate) fn check_matches(&self, mdp: &TabularMdp) -> Result<()> {
        if self.0.len() != mdp.n_states() {
            return Err(Error::shape(format!("{} states", mdp.n_states()), format!("{} states", self.0.len())));
        }
        Ok(())
    }
}

impl std::ops::Index<usize> for StateValueFn {
    type Output = f64;

    fn index(&self, s: usize) -> &f64 {
        &self.0[s]
    }
}

/// Dense action-value table `q(s, a)`, row-major over states.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionValueFn {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
}

impl ActionValueFn {
    pub fn new(n_states: usize, n_actions: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_states * n_actions {
            return Err(Error::shape(n_states * n_actions, values.len()));
        }
        Ok(ActionValueFn { n_states, n_actions, values })
    }

    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        ActionValueFn { n_states, n_actions, values: vec![0.0; n_states * n_actions] }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let n_actions = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != n_actions) {
            return Err(Error::invalid("ragged action-value rows"));
        }
        Self::new(rows.len(), n_actions, rows.concat())
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    pub fn set(&mut self, s: usize, a: usize, value: f64) {
        self.values[s * self.n_actions + a] = value;
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.values
    }

    /// `max_a q(s, a)` for every state.
    pub fn max_per_state(&self) -> StateValueFn {
        StateValueFn((0..self.n_states).map(|s| argmax(self.row(s)).1).collect())
    }

    pub(crate) fn check_matches(&self, mdp: &TabularMdp) -> Result<()> {
        if self.n_states != mdp.n_states() || self.n_actions != mdp.n_actions() {
            return Err(Error::shape(
                format!("{}x{} table", mdp.n_states(), mdp.n_actions()),
                format!("{}x{}", self.n_states, self.n_actions),
            ));
        }
        Ok(())
    }
}

/// Sup-norm `‖f − g‖∞` over value tables.
#[derive(Clone, Copy, Debug, Default)]
pub struct SupNormMetric;

impl SupNormMetric {
    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
    }

    pub fn norm(&self, a: &[f64]) -> f64 {
        a.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }
}

/// Lowest-index argmax of a row, with its value. NaN entries never win.
pub fn argmax(row: &[f64]) -> (usize, f64) {
    let mut best = (0, row[0]);
    for (a, &v) in row.iter().enumerate().skip(1) {
        if v > best.1 || best.1.is_nan() {
            best = (a, v);
        }
    }
    best
}

/// `v_π(s) = Σ_a π(a|s) · q(s, a)`.
pub fn state_values_from_q(q: &ActionValueFn, policy: &Policy) -> Result<StateValueFn> {
    if q.n_states != policy.n_states || q.n_actions != policy.n_actions {
        return Err(Error::shape(
            format!("{}x{}", policy.n_states, policy.n_actions),
            format!("{}x{}", q.n_states, q.n_actions),
        ));
    }
    Ok(StateValueFn((0..q.n_states).map(|s| policy.average(s, q.row(s))).collect()))
}

/// Deterministic greedy policy: probability one on the lowest-index action
/// attaining `max_a q(s, a)`.
pub fn greedy_policy(q: &ActionValueFn) -> Policy {
    let mut probs = vec![0.0; q.values.len()];
    for s in 0..q.n_states {
        probs[s * q.n_actions + argmax(q.row(s)).0] = 1.0;
    }
    Policy { n_states: q.n_states, n_actions: q.n_actions, probs }
}
