//! Bellman-style operators as pure maps on value tables.
//!
//! | operator | acts on | backup |
//! |---|---|---|
//! | expectation (v) | `v(s)` | `Σ_a π(a|s)(r(s,a) + γ E[v(s')])` |
//! | expectation (q) | `q(s,a)` | `r(s,a) + γ E[Σ_a' π(a'|s') q(s',a')]` |
//! | optimality (v) | `v(s)` | `max_a (r(s,a) + γ E[v(s')])` |
//! | optimality (q) | `q(s,a)` | `r(s,a) + γ E[max_a' q(s',a')]` |
//! | consistent | `q(s,a)` | like optimality, but a self-transition backs up `q(s,a)` |
//! | advantage | `q(s,a)` | expectation (q) plus `β (q(s,a) − Σ_b π(b|s) q(s,b))` |
//!
//! The first five are γ-contractions and monotone. The advantage operator is
//! neither in general; it is driven with a decaying β schedule instead.

use std::fmt;
use std::str::FromStr;

use crate::mdp::{argmax, greedy_policy, ActionValueFn, Policy, StateValueFn, TabularMdp};
use crate::{Error, Result};

pub fn apply_expectation_v(mdp: &TabularMdp, policy: &Policy, v: &StateValueFn) -> Result<StateValueFn> {
    policy.check_matches(mdp)?;
    v.check_matches(mdp)?;
    let gamma = mdp.discount();
    let out = (0..mdp.n_states())
        .map(|s| {
            (0..mdp.n_actions())
                .map(|a| {
                    policy.prob(s, a) * (mdp.expected_reward(s, a) + gamma * mdp.expected_next(s, a, v.values()))
                })
                .sum()
        })
        .collect();
    Ok(StateValueFn::new(out))
}

pub fn apply_expectation_q(mdp: &TabularMdp, policy: &Policy, q: &ActionValueFn) -> Result<ActionValueFn> {
    policy.check_matches(mdp)?;
    q.check_matches(mdp)?;
    let next: Vec<f64> = (0..mdp.n_states()).map(|s| policy.average(s, q.row(s))).collect();
    Ok(lookahead(mdp, &next))
}

pub fn apply_optimality_v(mdp: &TabularMdp, v: &StateValueFn) -> Result<StateValueFn> {
    v.check_matches(mdp)?;
    let gamma = mdp.discount();
    let out = (0..mdp.n_states())
        .map(|s| {
            let backups: Vec<f64> = (0..mdp.n_actions())
                .map(|a| mdp.expected_reward(s, a) + gamma * mdp.expected_next(s, a, v.values()))
                .collect();
            argmax(&backups).1
        })
        .collect();
    Ok(StateValueFn::new(out))
}

pub fn apply_optimality_q(mdp: &TabularMdp, q: &ActionValueFn) -> Result<ActionValueFn> {
    q.check_matches(mdp)?;
    Ok(lookahead(mdp, q.max_per_state().values()))
}

/// Consistent Bellman operator: a transition back into the same state backs
/// up the current entry `q(s, a)` rather than `max_a' q(s, a')`.
pub fn apply_consistent_q(mdp: &TabularMdp, q: &ActionValueFn) -> Result<ActionValueFn> {
    q.check_matches(mdp)?;
    let gamma = mdp.discount();
    let maxes = q.max_per_state();
    let (n_s, n_a) = (mdp.n_states(), mdp.n_actions());
    let mut out = Vec::with_capacity(n_s * n_a);
    for s in 0..n_s {
        for a in 0..n_a {
            let mut backup = 0.0;
            for (next, p) in mdp.transition_row(s, a).iter().enumerate() {
                let target = if next == s { q.get(s, a) } else { maxes[next] };
                backup += p * target;
            }
            out.push(mdp.expected_reward(s, a) + gamma * backup);
        }
    }
    Ok(ActionValueFn::new(n_s, n_a, out).expect("shape"))
}

/// Advantage operator: the expectation operator for `q` plus `β` times the
/// advantage `q(s, a) − Σ_b π(b|s) q(s, b)`. With `β = 0` this is exactly
/// [`apply_expectation_q`].
pub fn apply_advantage_q(mdp: &TabularMdp, policy: &Policy, q: &ActionValueFn, beta: f64) -> Result<ActionValueFn> {
    if !(beta >= 0.0) {
        return Err(Error::invalid(format!("β must be non-negative, got {beta}")));
    }
    let base = apply_expectation_q(mdp, policy, q)?;
    let adv = advantage_table(q, policy);
    let out = base.values().iter().zip(&adv).map(|(b, a)| b + beta * a).collect();
    Ok(ActionValueFn::new(mdp.n_states(), mdp.n_actions(), out).expect("shape"))
}

/// `A(s, a) = q(s, a) − Σ_b π(b|s) q(s, b)`, flattened like `q`.
pub fn advantage_table(q: &ActionValueFn, policy: &Policy) -> Vec<f64> {
    (0..q.n_states())
        .flat_map(|s| {
            let baseline = policy.average(s, q.row(s));
            q.row(s).iter().map(move |v| v - baseline)
        })
        .collect()
}

/// `r(s, a) + γ Σ_{s'} p(s'|s, a) next[s']` for every pair.
fn lookahead(mdp: &TabularMdp, next: &[f64]) -> ActionValueFn {
    let gamma = mdp.discount();
    let (n_s, n_a) = (mdp.n_states(), mdp.n_actions());
    let out = (0..n_s)
        .flat_map(|s| (0..n_a).map(move |a| (s, a)))
        .map(|(s, a)| mdp.expected_reward(s, a) + gamma * mdp.expected_next(s, a, next))
        .collect();
    ActionValueFn::new(n_s, n_a, out).expect("shape")
}

/// Per-iteration β coefficients for the advantage operator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BetaSchedule {
    /// `β_j = 1 / j^(family + 1)`: summable and vanishing for `family ≥ 1`.
    PerIteration { family: u32 },
    Constant(f64),
}

impl BetaSchedule {
    pub fn family(k: u32) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("β family index must be at least 1"));
        }
        Ok(BetaSchedule::PerIteration { family: k })
    }

    pub fn constant(beta: f64) -> Result<Self> {
        if !(beta >= 0.0) || !beta.is_finite() {
            return Err(Error::invalid(format!("constant β must be finite and non-negative, got {beta}")));
        }
        Ok(BetaSchedule::Constant(beta))
    }

    /// β for the `j`-th iteration, counted from 1.
    pub fn beta_at(&self, j: u64) -> Result<f64> {
        if j < 1 {
            return Err(Error::invalid("β schedule is indexed from j = 1"));
        }
        Ok(match *self {
            BetaSchedule::PerIteration { family } => (j as f64).powi(-(family as i32 + 1)),
            BetaSchedule::Constant(beta) => beta,
        })
    }
}

impl Default for BetaSchedule {
    fn default() -> Self {
        BetaSchedule::PerIteration { family: 1 }
    }
}

impl fmt::Display for BetaSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BetaSchedule::PerIteration { family } => write!(f, "beta.family={family}"),
            BetaSchedule::Constant(b) => write!(f, "beta.constant={b}"),
        }
    }
}

/// Free function form of [`BetaSchedule::beta_at`].
pub fn beta_at(schedule: &BetaSchedule, j: u64) -> Result<f64> {
    schedule.beta_at(j)
}

/// Which policy the advantage operator averages over.
#[derive(Clone, Debug, PartialEq)]
pub enum PolicyChoice {
    Fixed(Policy),
    /// The greedy policy of the table being mapped, recomputed per application.
    Greedy,
}

/// Whether an operator maps state-value or action-value tables.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TableDomain {
    State,
    StateAction,
}

/// The operator families, with their required attachments.
#[derive(Clone, Debug, PartialEq)]
pub enum OperatorKind {
    ExpectationV(Policy),
    ExpectationQ(Policy),
    OptimalityV,
    OptimalityQ,
    ConsistentQ,
    AdvantageQ { policy: PolicyChoice, beta: BetaSchedule },
}

impl OperatorKind {
    pub fn domain(&self) -> TableDomain {
        match self {
            OperatorKind::ExpectationV(_) | OperatorKind::OptimalityV => TableDomain::State,
            _ => TableDomain::StateAction,
        }
    }

    pub fn table_len(&self, mdp: &TabularMdp) -> usize {
        match self.domain() {
            TableDomain::State => mdp.n_states(),
            TableDomain::StateAction => mdp.n_states() * mdp.n_actions(),
        }
    }

    /// True for the operators with a proven γ-contraction and monotonicity.
    pub fn is_contraction(&self) -> bool {
        !matches!(self, OperatorKind::AdvantageQ { .. })
    }

    /// Short name used in reports.
    pub fn label(&self) -> String {
        match self {
            OperatorKind::ExpectationV(_) => "expectation-v".into(),
            OperatorKind::ExpectationQ(_) => "expectation-q".into(),
            OperatorKind::OptimalityV => "bellman-v".into(),
            OperatorKind::OptimalityQ => "bellman".into(),
            OperatorKind::ConsistentQ => "consistent".into(),
            OperatorKind::AdvantageQ { policy, beta } => {
                let pi = match policy {
                    PolicyChoice::Fixed(_) => "fixed",
                    PolicyChoice::Greedy => "greedy",
                };
                format!("advantage({beta},pi={pi})")
            }
        }
    }

    /// Applies the operator to a flat table. `iteration` (from 1) selects β.
    pub fn apply(&self, mdp: &TabularMdp, table: &[f64], iteration: u64) -> Result<Vec<f64>> {
        let (n_s, n_a) = (mdp.n_states(), mdp.n_actions());
        if table.len() != self.table_len(mdp) {
            return Err(Error::shape(self.table_len(mdp), table.len()));
        }
        let as_v = || StateValueFn::new(table.to_vec());
        let as_q = || ActionValueFn::new(n_s, n_a, table.to_vec());
        Ok(match self {
            OperatorKind::ExpectationV(pi) => apply_expectation_v(mdp, pi, &as_v())?.into_inner(),
            OperatorKind::OptimalityV => apply_optimality_v(mdp, &as_v())?.into_inner(),
            OperatorKind::ExpectationQ(pi) => apply_expectation_q(mdp, pi, &as_q()?)?.into_inner(),
            OperatorKind::OptimalityQ => apply_optimality_q(mdp, &as_q()?)?.into_inner(),
            OperatorKind::ConsistentQ => apply_consistent_q(mdp, &as_q()?)?.into_inner(),
            OperatorKind::AdvantageQ { policy, beta } => {
                let q = as_q()?;
                let beta = beta.beta_at(iteration)?;
                match policy {
                    PolicyChoice::Fixed(pi) => apply_advantage_q(mdp, pi, &q, beta)?,
                    PolicyChoice::Greedy => apply_advantage_q(mdp, &greedy_policy(&q), &q, beta)?,
                }
                .into_inner()
            }
        })
    }
}

/// Operator names accepted on the command line and in config files.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OperatorName {
    Bellman,
    Expectation,
    Consistent,
    Advantage,
}

impl OperatorName {
    pub const ALL: [OperatorName; 4] =
        [OperatorName::Bellman, OperatorName::Expectation, OperatorName::Consistent, OperatorName::Advantage];

    pub fn as_str(&self) -> &'static str {
        match self {
            OperatorName::Bellman => "bellman",
            OperatorName::Expectation => "expectation",
            OperatorName::Consistent => "consistent",
            OperatorName::Advantage => "advantage",
        }
    }
}

impl fmt::Display for OperatorName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OperatorName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        OperatorName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown operator `{s}` (expected bellman, expectation, consistent or advantage)")))
    }
}
