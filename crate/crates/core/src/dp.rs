//! Model-based solvers expressed as fixed-point iteration of the Bellman
//! operators, plus a direct linear-solve oracle for policy evaluation.
//!
//! Every sweep is synchronous: a full new table is computed from the previous
//! one, in ascending state order. All runs start from the zero table.

use nalgebra::{DMatrix, DVector};

use crate::fixed_point::{try_iterate_to_fixed_point, FixedPointResult, DEFAULT_MAX_ITER};
use crate::mdp::{greedy_policy, ActionValueFn, Policy, StateValueFn, TabularMdp};
use crate::operators::{apply_expectation_v, apply_optimality_v};
use crate::{Error, Result};

/// Upper bound on policy-iteration sweeps; a finite MDP never needs more than
/// the number of deterministic policies, and in practice a handful.
const MAX_SWEEPS: usize = 10_000;

#[derive(Clone, Debug)]
pub struct PolicyIterationResult {
    pub policy: Policy,
    pub state_values: StateValueFn,
    pub action_values: ActionValueFn,
    pub sweeps: usize,
    /// Final evaluation residual of each sweep.
    pub evaluation_residuals: Vec<f64>,
}

/// Iterates the expectation operator for `policy` from zero until the
/// successive residual drops below `tolerance`.
pub fn policy_evaluation(mdp: &TabularMdp, policy: &Policy, tolerance: f64) -> Result<StateValueFn> {
    Ok(policy_evaluation_run(mdp, policy, tolerance)?.fixed_point)
}

fn policy_evaluation_run(
    mdp: &TabularMdp,
    policy: &Policy,
    tolerance: f64,
) -> Result<FixedPointResult<StateValueFn>> {
    let run = try_iterate_to_fixed_point(
        |v| apply_expectation_v(mdp, policy, v),
        StateValueFn::zeros(mdp.n_states()),
        tolerance,
        DEFAULT_MAX_ITER,
    )?;
    if !run.converged {
        return Err(Error::NotConverged { max_iter: DEFAULT_MAX_ITER, residual: run.final_residual });
    }
    Ok(run)
}

/// Solves `(I − γ P^π) v = r^π` directly.
pub fn policy_evaluation_exact(mdp: &TabularMdp, policy: &Policy) -> Result<StateValueFn> {
    policy.check_matches(mdp)?;
    let n = mdp.n_states();
    let gamma = mdp.discount();
    let mut lhs = DMatrix::<f64>::identity(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    for s in 0..n {
        for a in 0..mdp.n_actions() {
            let pa = policy.prob(s, a);
            if pa == 0.0 {
                continue;
            }
            rhs[s] += pa * mdp.expected_reward(s, a);
            for (next, p) in mdp.transition_row(s, a).iter().enumerate() {
                lhs[(s, next)] -= gamma * pa * p;
            }
        }
    }
    let solution = lhs.lu().solve(&rhs).ok_or(Error::Singular)?;
    Ok(StateValueFn::new(solution.iter().copied().collect()))
}

/// `q(s, a) = r(s, a) + γ Σ_{s'} p(s'|s, a) v(s')`.
pub fn q_from_v(mdp: &TabularMdp, v: &StateValueFn) -> Result<ActionValueFn> {
    v.check_matches(mdp)?;
    let gamma = mdp.discount();
    let (n_s, n_a) = (mdp.n_states(), mdp.n_actions());
    let values = (0..n_s)
        .flat_map(|s| (0..n_a).map(move |a| (s, a)))
        .map(|(s, a)| mdp.expected_reward(s, a) + gamma * mdp.expected_next(s, a, v.values()))
        .collect();
    ActionValueFn::new(n_s, n_a, values)
}

/// One-step lookahead from `v` followed by a greedy (0/1) policy.
pub fn policy_improvement(mdp: &TabularMdp, v: &StateValueFn) -> Result<(Policy, ActionValueFn)> {
    let q = q_from_v(mdp, v)?;
    Ok((greedy_policy(&q), q))
}

/// Alternates evaluation and greedy improvement from the uniform policy until
/// the current policy is already greedy for its own action values.
///
/// "Already greedy" means every action the policy can take is within
/// `tolerance` of the best action value in that state. This absorbs the
/// evaluation error, so near-ties cannot make the loop cycle.
pub fn policy_iteration(mdp: &TabularMdp, tolerance: f64) -> Result<PolicyIterationResult> {
    let mut policy = Policy::uniform(mdp.n_states(), mdp.n_actions());
    let mut residuals = Vec::new();
    for sweep in 1..=MAX_SWEEPS {
        let run = policy_evaluation_run(mdp, &policy, tolerance)?;
        residuals.push(run.final_residual);
        let (improved, q) = policy_improvement(mdp, &run.fixed_point)?;
        let stable = (0..mdp.n_states()).all(|s| {
            let best = q.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (0..mdp.n_actions()).all(|a| policy.prob(s, a) == 0.0 || q.get(s, a) >= best - tolerance)
        });
        if stable {
            let state_values = q.max_per_state();
            return Ok(PolicyIterationResult {
                policy: improved,
                state_values,
                action_values: q,
                sweeps: sweep,
                evaluation_residuals: residuals,
            });
        }
        policy = improved;
    }
    Err(Error::NotConverged { max_iter: MAX_SWEEPS, residual: f64::NAN })
}

/// Iterates the optimality operator from zero, then extracts a greedy policy.
pub fn value_iteration(mdp: &TabularMdp, tolerance: f64) -> Result<(StateValueFn, Policy)> {
    let run = value_iteration_run(mdp, tolerance)?;
    let (policy, _) = policy_improvement(mdp, &run.fixed_point)?;
    Ok((run.fixed_point, policy))
}

/// The raw fixed-point run behind [`value_iteration`].
pub fn value_iteration_run(mdp: &TabularMdp, tolerance: f64) -> Result<FixedPointResult<StateValueFn>> {
    let run = try_iterate_to_fixed_point(
        |v| apply_optimality_v(mdp, v),
        StateValueFn::zeros(mdp.n_states()),
        tolerance,
        DEFAULT_MAX_ITER,
    )?;
    if !run.converged {
        return Err(Error::NotConverged { max_iter: DEFAULT_MAX_ITER, residual: run.final_residual });
    }
    Ok(run)
}

/// `state,value,action` CSV of a solved MDP. The policy must be deterministic.
pub fn solution_csv(values: &StateValueFn, policy: &Policy) -> Result<String> {
    if values.len() != policy.n_states() {
        return Err(Error::shape(policy.n_states(), values.len()));
    }
    let mut out = String::from("state,value,action\n");
    for s in 0..values.len() {
        let action = policy.action(s).ok_or_else(|| Error::invalid(format!("policy is stochastic at state {s}")))?;
        out.push_str(&format!("{s},{},{action}\n", values[s]));
    }
    Ok(out)
}
