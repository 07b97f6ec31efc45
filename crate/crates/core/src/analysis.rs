//! Empirical checks of the operator properties on small MDPs.
//!
//! Contraction and monotonicity of the five classical operators, and
//! optimality preservation and gap increase for the consistent operator, are
//! theorems: any violation is a bug. The same checks run against the
//! advantage operator are claims under test, so the reports carry a
//! [`Basis`] and the suite records pass rates instead of asserting.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;

use crate::fixed_point::{estimate_contraction_modulus, try_iterate_to_fixed_point, ContractionReport, DEFAULT_MAX_ITER};
use crate::model_free::csv_err;
use crate::mdp::{random_mdp, ActionValueFn, Policy, TabularMdp};
use crate::operators::{BetaSchedule, OperatorKind, PolicyChoice, TableDomain};
use crate::rng::{self, FIXTURE_STREAM};
use crate::{Error, Result};

/// Slack that turns the strict inequalities of the definitions into testable
/// predicates.
pub const STRICTNESS_MARGIN: f64 = 1e-9;
/// Rounding allowance for pointwise monotonicity comparisons.
pub const MONOTONE_SLACK: f64 = 1e-12;
/// Residual at which alternative operators count as converged.
pub const ANALYSIS_TOLERANCE: f64 = 1e-10;

/// Whether a property is proven for the operator or only claimed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Basis {
    Theorem,
    Claim,
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Basis::Theorem => "theorem",
            Basis::Claim => "claim",
        })
    }
}

fn contraction_basis(op: &OperatorKind) -> Basis {
    if op.is_contraction() {
        Basis::Theorem
    } else {
        Basis::Claim
    }
}

fn order_basis(op: &OperatorKind) -> Basis {
    match op {
        OperatorKind::OptimalityQ | OperatorKind::ConsistentQ => Basis::Theorem,
        _ => Basis::Claim,
    }
}

#[derive(Clone, Debug)]
pub struct ContractionCheck {
    pub operator: String,
    pub basis: Basis,
    pub discount: f64,
    pub report: ContractionReport<Vec<f64>>,
    /// Estimated modulus exceeds `γ + STRICTNESS_MARGIN`.
    pub violated: bool,
}

fn check_trials(trials: usize) -> Result<()> {
    if trials < 100 {
        return Err(Error::invalid(format!("property checks need at least 100 trials, got {trials}")));
    }
    Ok(())
}

/// Estimates the sup-norm Lipschitz constant of `op` (its first application,
/// so a β schedule contributes `β_1`).
pub fn check_contraction(op: &OperatorKind, mdp: &TabularMdp, trials: usize, seed: u64) -> Result<ContractionCheck> {
    check_trials(trials)?;
    let template = vec![0.0; op.table_len(mdp)];
    let report = estimate_contraction_modulus(|x: &Vec<f64>| op.apply(mdp, x, 1), &template, trials, seed)?;
    Ok(ContractionCheck {
        operator: op.label(),
        basis: contraction_basis(op),
        discount: mdp.discount(),
        violated: report.estimated_modulus > mdp.discount() + STRICTNESS_MARGIN,
        report,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonotonicityCheck {
    pub operator: String,
    pub basis: Basis,
    pub pairs: usize,
    /// Pairs with some entry where `T u > T v + MONOTONE_SLACK`.
    pub violations: usize,
    pub max_excess: f64,
}

/// Draws `u` uniform in `[−10, 10]` and `v = u + noise` with noise uniform in
/// `[0, 5]`, then compares `T u` and `T v` pointwise.
pub fn check_monotonicity(op: &OperatorKind, mdp: &TabularMdp, trials: usize, seed: u64) -> Result<MonotonicityCheck> {
    check_trials(trials)?;
    let len = op.table_len(mdp);
    let mut rng = rng::stream(seed, FIXTURE_STREAM);
    let mut violations = 0;
    let mut max_excess = f64::NEG_INFINITY;
    for _ in 0..trials {
        let u: Vec<f64> = (0..len).map(|_| rng.gen_range(-10.0..=10.0)).collect();
        let v: Vec<f64> = u.iter().map(|x| x + rng.gen_range(0.0..=5.0)).collect();
        let (tu, tv) = (op.apply(mdp, &u, 1)?, op.apply(mdp, &v, 1)?);
        let excess = tu.iter().zip(&tv).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max);
        max_excess = max_excess.max(excess);
        if excess > MONOTONE_SLACK {
            violations += 1;
        }
    }
    Ok(MonotonicityCheck { operator: op.label(), basis: contraction_basis(op), pairs: trials, violations, max_excess })
}

/// How `Ṽ` is read off a converged `Q̃`.
#[derive(Clone, Debug, PartialEq)]
pub enum VMode {
    Max,
    PolicyAverage(Policy),
}

impl VMode {
    fn for_operator(op: &OperatorKind) -> VMode {
        match op {
            OperatorKind::AdvantageQ { policy: PolicyChoice::Fixed(pi), .. } => VMode::PolicyAverage(pi.clone()),
            OperatorKind::ExpectationQ(pi) => VMode::PolicyAverage(pi.clone()),
            _ => VMode::Max,
        }
    }

    fn state_values(&self, q: &ActionValueFn) -> Vec<f64> {
        (0..q.n_states())
            .map(|s| match self {
                VMode::Max => q.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max),
                VMode::PolicyAverage(pi) => pi.average(s, q.row(s)),
            })
            .collect()
    }

    pub fn name(&self) -> &'static str {
        match self {
            VMode::Max => "max",
            VMode::PolicyAverage(_) => "policy-average",
        }
    }
}

/// An operator iterated from zero until the residual drops below
/// [`ANALYSIS_TOLERANCE`]. The `j`-th application uses `β_j`.
#[derive(Clone, Debug)]
pub struct ConvergedTable {
    pub operator: String,
    pub q: ActionValueFn,
    pub v: Vec<f64>,
    pub v_mode: VMode,
    pub iterations: usize,
    pub final_residual: f64,
    pub converged: bool,
}

pub fn converge(op: &OperatorKind, mdp: &TabularMdp) -> Result<ConvergedTable> {
    if op.domain() != TableDomain::StateAction {
        return Err(Error::invalid(format!("{} does not act on action values", op.label())));
    }
    let (n_s, n_a) = (mdp.n_states(), mdp.n_actions());
    let mut j = 0u64;
    let outcome = try_iterate_to_fixed_point(
        |x: &Vec<f64>| {
            j += 1;
            op.apply(mdp, x, j)
        },
        vec![0.0; n_s * n_a],
        ANALYSIS_TOLERANCE,
        DEFAULT_MAX_ITER,
    );
    let v_mode = VMode::for_operator(op);
    let (q, iterations, final_residual, converged) = match outcome {
        Ok(run) => (run.fixed_point, run.iterations, run.final_residual, run.converged),
        Err(Error::Divergence { iteration }) => (vec![f64::NAN; n_s * n_a], iteration, f64::INFINITY, false),
        Err(e) => return Err(e),
    };
    let q = ActionValueFn::new(n_s, n_a, q)?;
    let v = v_mode.state_values(&q);
    Ok(ConvergedTable { operator: op.label(), q, v, v_mode, iterations, final_residual, converged })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Holds,
    Violated,
    /// The alternative operator did not converge; nothing is claimed.
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Holds => "holds",
            Verdict::Violated => "violated",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

/// One `(s, a)` entry comparing the classical and alternative fixed points.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairComparison {
    pub state: usize,
    pub action: usize,
    /// `Q*(s,a) − V*(s)`.
    pub classical_gap: f64,
    /// `Q̃(s,a) − Ṽ(s)`.
    pub alternative_gap: f64,
}

impl PairComparison {
    /// Strictly suboptimal classically implies strictly below `Ṽ`.
    pub fn preserves_optimality(&self) -> bool {
        self.classical_gap >= -STRICTNESS_MARGIN || self.alternative_gap < 0.0
    }

    /// `|Q* − V*| ≤ |Q̃ − Ṽ| + margin`.
    pub fn gap_increases(&self) -> bool {
        self.classical_gap.abs() <= self.alternative_gap.abs() + STRICTNESS_MARGIN
    }
}

#[derive(Clone, Debug)]
pub struct PropertyReport {
    pub operator: String,
    pub basis: Basis,
    pub v_mode: &'static str,
    pub verdict: Verdict,
    pub pairs: Vec<PairComparison>,
    pub alternative: ConvergedTable,
}

impl PropertyReport {
    pub fn failing_pairs(&self, test: fn(&PairComparison) -> bool) -> Vec<PairComparison> {
        self.pairs.iter().copied().filter(|p| !test(p)).collect()
    }
}

fn classical(mdp: &TabularMdp) -> Result<ConvergedTable> {
    let table = converge(&OperatorKind::OptimalityQ, mdp)?;
    if !table.converged {
        return Err(Error::NotConverged { max_iter: DEFAULT_MAX_ITER, residual: table.final_residual });
    }
    Ok(table)
}

fn compare(mdp: &TabularMdp, alt: &OperatorKind, test: fn(&PairComparison) -> bool) -> Result<PropertyReport> {
    let base = classical(mdp)?;
    let alternative = converge(alt, mdp)?;
    let mut pairs = Vec::with_capacity(mdp.n_states() * mdp.n_actions());
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            pairs.push(PairComparison {
                state: s,
                action: a,
                classical_gap: base.q.get(s, a) - base.v[s],
                alternative_gap: alternative.q.get(s, a) - alternative.v[s],
            });
        }
    }
    let verdict = if !alternative.converged {
        Verdict::Inconclusive
    } else if pairs.iter().all(test) {
        Verdict::Holds
    } else {
        Verdict::Violated
    };
    Ok(PropertyReport {
        operator: alt.label(),
        basis: order_basis(alt),
        v_mode: alternative.v_mode.name(),
        verdict,
        pairs,
        alternative,
    })
}

/// Every action strictly suboptimal for the classical fixed point must stay
/// strictly below `Ṽ` at the alternative's fixed point.
pub fn check_optimality_preservation(mdp: &TabularMdp, alt: &OperatorKind) -> Result<PropertyReport> {
    compare(mdp, alt, PairComparison::preserves_optimality)
}

/// Every action gap of the classical fixed point must be no larger at the
/// alternative's fixed point.
pub fn check_gap_increasing(mdp: &TabularMdp, alt: &OperatorKind) -> Result<PropertyReport> {
    compare(mdp, alt, PairComparison::gap_increases)
}

/// Actions within `STRICTNESS_MARGIN` of the row maximum.
fn argmax_set(row: &[f64]) -> Vec<usize> {
    let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (0..row.len()).filter(|&a| row[a] >= best - STRICTNESS_MARGIN).collect()
}

#[derive(Clone, Debug)]
pub struct OperatorComparisonReport {
    pub mdp_id: String,
    pub classical: ConvergedTable,
    pub entries: Vec<ComparisonEntry>,
}

#[derive(Clone, Debug)]
pub struct ComparisonEntry {
    pub table: ConvergedTable,
    /// Per state: the argmax sets of `Q̃` and `Q*` coincide.
    pub argmax_agreement: Vec<bool>,
}

impl ComparisonEntry {
    pub fn agreement_rate(&self) -> f64 {
        self.argmax_agreement.iter().filter(|&&x| x).count() as f64 / self.argmax_agreement.len() as f64
    }
}

/// Converges each operator and compares its greedy actions with the
/// classical fixed point. Non-convergence is recorded, not raised.
pub fn fixed_point_cross_report(mdp_id: &str, mdp: &TabularMdp, operators: &[OperatorKind]) -> Result<OperatorComparisonReport> {
    let base = classical(mdp)?;
    let entries = operators
        .iter()
        .map(|op| {
            let table = converge(op, mdp)?;
            let argmax_agreement = (0..mdp.n_states())
                .map(|s| table.converged && argmax_set(table.q.row(s)) == argmax_set(base.q.row(s)))
                .collect();
            Ok(ComparisonEntry { table, argmax_agreement })
        })
        .collect::<Result<_>>()?;
    Ok(OperatorComparisonReport { mdp_id: mdp_id.to_string(), classical: base, entries })
}

/// Settings for [`run_suite`].
#[derive(Clone, Debug, PartialEq)]
pub struct SuiteConfig {
    pub mdp_seeds: Vec<u64>,
    pub n_states: usize,
    pub n_actions: usize,
    pub discount: f64,
    pub trials: usize,
    pub seed: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig { mdp_seeds: (1..=20).collect(), n_states: 6, n_actions: 3, discount: 0.9, trials: 1000, seed: 0 }
    }
}

/// The operators whose order properties are probed.
pub fn suite_operators(n_states: usize, n_actions: usize, seed: u64) -> Vec<OperatorKind> {
    let pi = Policy::random(n_states, n_actions, seed);
    vec![
        OperatorKind::ExpectationV(pi.clone()),
        OperatorKind::ExpectationQ(pi),
        OperatorKind::OptimalityV,
        OperatorKind::OptimalityQ,
        OperatorKind::ConsistentQ,
        OperatorKind::AdvantageQ { policy: PolicyChoice::Greedy, beta: BetaSchedule::default() },
        OperatorKind::AdvantageQ { policy: PolicyChoice::Greedy, beta: BetaSchedule::Constant(1.0) },
    ]
}

/// Operators whose fixed points are compared with the classical one.
pub fn comparison_operators() -> Vec<OperatorKind> {
    vec![
        OperatorKind::ConsistentQ,
        OperatorKind::AdvantageQ { policy: PolicyChoice::Greedy, beta: BetaSchedule::default() },
    ]
}

#[derive(Clone, Debug)]
pub struct MdpAnalysis {
    pub mdp_seed: u64,
    pub contraction: Vec<ContractionCheck>,
    pub monotonicity: Vec<MonotonicityCheck>,
    pub preservation: Vec<PropertyReport>,
    pub gap: Vec<PropertyReport>,
    pub comparison: OperatorComparisonReport,
}

#[derive(Clone, Debug)]
pub struct SuiteReport {
    pub config: SuiteConfig,
    pub mdps: Vec<MdpAnalysis>,
}

/// Runs every check on `random_mdp(n_states, n_actions, discount, seed)` for
/// each seed, one MDP per rayon task.
pub fn run_suite(config: &SuiteConfig) -> Result<SuiteReport> {
    check_trials(config.trials)?;
    let mdps = config
        .mdp_seeds
        .par_iter()
        .map(|&mdp_seed| {
            let mdp = random_mdp(config.n_states, config.n_actions, config.discount, mdp_seed)?;
            let ops = suite_operators(config.n_states, config.n_actions, mdp_seed);
            let probe_seed = config.seed ^ mdp_seed.wrapping_mul(0x9E37_79B9_7F4A_7C15);
            let contraction =
                ops.iter().map(|op| check_contraction(op, &mdp, config.trials, probe_seed)).collect::<Result<_>>()?;
            let monotonicity =
                ops.iter().map(|op| check_monotonicity(op, &mdp, config.trials, probe_seed)).collect::<Result<_>>()?;
            let alts = comparison_operators();
            let preservation = alts.iter().map(|op| check_optimality_preservation(&mdp, op)).collect::<Result<_>>()?;
            let gap = alts.iter().map(|op| check_gap_increasing(&mdp, op)).collect::<Result<_>>()?;
            let comparison = fixed_point_cross_report(&format!("random-{mdp_seed}"), &mdp, &alts)?;
            Ok(MdpAnalysis { mdp_seed, contraction, monotonicity, preservation, gap, comparison })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SuiteReport { config: config.clone(), mdps })
}

impl SuiteReport {
    /// Violations of theorem-backed properties. Non-empty means a bug.
    pub fn theorem_failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        for m in &self.mdps {
            for c in m.contraction.iter().filter(|c| c.basis == Basis::Theorem && c.violated) {
                out.push(format!("mdp {}: {} modulus {}", m.mdp_seed, c.operator, c.report.estimated_modulus));
            }
            for c in m.monotonicity.iter().filter(|c| c.basis == Basis::Theorem && c.violations > 0) {
                out.push(format!("mdp {}: {} monotonicity violated on {} pairs", m.mdp_seed, c.operator, c.violations));
            }
            for r in m.preservation.iter().chain(&m.gap).filter(|r| r.basis == Basis::Theorem) {
                if r.verdict != Verdict::Holds {
                    out.push(format!("mdp {}: {} order property {}", m.mdp_seed, r.operator, r.verdict));
                }
            }
        }
        out
    }

    pub fn write_csvs(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let open = |name: &str, header: &[&str]| -> Result<csv::Writer<fs::File>> {
            let mut w = csv::Writer::from_path(dir.join(name)).map_err(csv_err)?;
            w.write_record(header).map_err(csv_err)?;
            Ok(w)
        };
        let mut contraction =
            open("contraction.csv", &["mdp_seed", "operator", "basis", "discount", "estimated_modulus", "samples", "violated"])?;
        let mut monotonicity =
            open("monotonicity.csv", &["mdp_seed", "operator", "basis", "pairs", "violations", "max_excess"])?;
        let mut order =
            open("order_properties.csv", &["mdp_seed", "property", "operator", "basis", "v_mode", "verdict", "failing_pairs"])?;
        let mut gap = open(
            "gap.csv",
            &["mdp_seed", "operator", "state", "action", "classical_gap", "alternative_gap", "preserves", "gap_increases"],
        )?;
        let mut comparison =
            open("comparison.csv", &["mdp_id", "operator", "state", "argmax_agrees", "converged", "iterations"])?;
        for m in &self.mdps {
            let seed = m.mdp_seed.to_string();
            for c in &m.contraction {
                let r = &c.report;
                contraction
                    .write_record([
                        seed.clone(),
                        c.operator.clone(),
                        c.basis.to_string(),
                        c.discount.to_string(),
                        r.estimated_modulus.to_string(),
                        r.sample_count.to_string(),
                        c.violated.to_string(),
                    ])
                    .map_err(csv_err)?;
            }
            for c in &m.monotonicity {
                monotonicity
                    .write_record([
                        seed.clone(),
                        c.operator.clone(),
                        c.basis.to_string(),
                        c.pairs.to_string(),
                        c.violations.to_string(),
                        c.max_excess.to_string(),
                    ])
                    .map_err(csv_err)?;
            }
            let rows = m
                .preservation
                .iter()
                .map(|r| ("preservation", r, r.failing_pairs(PairComparison::preserves_optimality)))
                .chain(m.gap.iter().map(|r| ("gap", r, r.failing_pairs(PairComparison::gap_increases))));
            for (property, r, failing) in rows {
                order
                    .write_record([
                        seed.clone(),
                        property.to_string(),
                        r.operator.clone(),
                        r.basis.to_string(),
                        r.v_mode.to_string(),
                        r.verdict.to_string(),
                        failing.len().to_string(),
                    ])
                    .map_err(csv_err)?;
            }
            for r in &m.gap {
                for p in &r.pairs {
                    gap.write_record([
                        seed.clone(),
                        r.operator.clone(),
                        p.state.to_string(),
                        p.action.to_string(),
                        p.classical_gap.to_string(),
                        p.alternative_gap.to_string(),
                        p.preserves_optimality().to_string(),
                        p.gap_increases().to_string(),
                    ])
                    .map_err(csv_err)?;
                }
            }
            for e in &m.comparison.entries {
                for (s, agrees) in e.argmax_agreement.iter().enumerate() {
                    comparison
                        .write_record([
                            m.comparison.mdp_id.clone(),
                            e.table.operator.clone(),
                            s.to_string(),
                            agrees.to_string(),
                            e.table.converged.to_string(),
                            e.table.iterations.to_string(),
                        ])
                        .map_err(csv_err)?;
                }
            }
        }
        for w in [&mut contraction, &mut monotonicity, &mut order, &mut gap, &mut comparison] {
            w.flush()?;
        }
        fs::write(dir.join("summary.txt"), self.summary())?;
        Ok(())
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        let c = &self.config;
        writeln!(
            out,
            "{} random MDPs ({} states, {} actions, discount {}), {} probe pairs per check",
            self.mdps.len(), c.n_states, c.n_actions, c.discount, c.trials
        )
        .ok();
        let failures = self.theorem_failures();
        if failures.is_empty() {
            writeln!(out, "theorem-backed checks: all passed").ok();
        } else {
            writeln!(out, "theorem-backed checks: {} FAILED", failures.len()).ok();
            for f in &failures {
                writeln!(out, "  {f}").ok();
            }
        }
        writeln!(out, "claims under test:").ok();
        let claim_ops: Vec<String> = self
            .mdps
            .first()
            .map(|m| m.contraction.iter().filter(|c| c.basis == Basis::Claim).map(|c| c.operator.clone()).collect())
            .unwrap_or_default();
        for op in &claim_ops {
            let checks: Vec<&ContractionCheck> =
                self.mdps.iter().flat_map(|m| m.contraction.iter().filter(|c| &c.operator == op)).collect();
            let ok = checks.iter().filter(|c| !c.violated).count();
            let worst = checks.iter().map(|c| c.report.estimated_modulus).fold(0.0, f64::max);
            writeln!(out, "  {op} contraction: {ok}/{} MDPs within discount (largest modulus {worst:.4})", checks.len()).ok();
            let mono: Vec<&MonotonicityCheck> =
                self.mdps.iter().flat_map(|m| m.monotonicity.iter().filter(|c| &c.operator == op)).collect();
            let ok = mono.iter().filter(|c| c.violations == 0).count();
            writeln!(out, "  {op} monotonicity: {ok}/{} MDPs without violations", mono.len()).ok();
        }
        for (property, pick) in [("preservation", 0usize), ("gap increase", 1)] {
            for op in comparison_operators() {
                let label = op.label();
                let reports: Vec<&PropertyReport> = self
                    .mdps
                    .iter()
                    .flat_map(|m| if pick == 0 { &m.preservation } else { &m.gap })
                    .filter(|r| r.operator == label)
                    .collect();
                let holds = reports.iter().filter(|r| r.verdict == Verdict::Holds).count();
                let inconclusive = reports.iter().filter(|r| r.verdict == Verdict::Inconclusive).count();
                let basis = reports.first().map(|r| r.basis).unwrap_or(Basis::Claim);
                writeln!(out, "  [{basis}] {label} {property}: holds on {holds}/{} MDPs ({inconclusive} inconclusive)", reports.len()).ok();
            }
        }
        for op in comparison_operators() {
            let label = op.label();
            let (agree, total) = self
                .mdps
                .iter()
                .flat_map(|m| m.comparison.entries.iter().filter(|e| e.table.operator == label))
                .flat_map(|e| e.argmax_agreement.iter())
                .fold((0, 0), |(a, t), &x| (a + x as usize, t + 1));
            writeln!(out, "  {label} greedy actions match classical on {agree}/{total} states").ok();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn advantage(beta: BetaSchedule) -> OperatorKind {
        OperatorKind::AdvantageQ { policy: PolicyChoice::Greedy, beta }
    }

    #[test]
    fn classical_operators_contract() {
        let mdp = random_mdp(6, 3, 0.8, 2).unwrap();
        for op in [OperatorKind::OptimalityQ, OperatorKind::ConsistentQ] {
            let c = check_contraction(&op, &mdp, 1000, 5).unwrap();
            assert!(!c.violated && c.report.estimated_modulus <= 0.8 + 1e-12, "{}", c.report.estimated_modulus);
            assert_eq!(c.basis, Basis::Theorem);
        }
        assert!(check_contraction(&OperatorKind::OptimalityQ, &mdp, 10, 0).is_err());
    }

    #[test]
    fn constant_beta_advantage_breaks_contraction() {
        let op = advantage(BetaSchedule::Constant(1.0));
        let found = (0..50).any(|seed| {
            let mdp = random_mdp(6, 3, 0.8, seed).unwrap();
            check_contraction(&op, &mdp, 100, seed).unwrap().violated
        });
        assert!(found);
    }

    #[test]
    fn expectation_and_consistent_are_monotone() {
        let mdp = random_mdp(5, 3, 0.9, 4).unwrap();
        let pi = Policy::random(5, 3, 4);
        for op in [OperatorKind::ExpectationV(pi), OperatorKind::ConsistentQ] {
            assert_eq!(check_monotonicity(&op, &mdp, 1000, 1).unwrap().violations, 0);
        }
    }

    #[test]
    fn identical_inputs_map_identically() {
        let mdp = random_mdp(4, 2, 0.9, 1).unwrap();
        let u: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let op = OperatorKind::ConsistentQ;
        assert_eq!(op.apply(&mdp, &u, 1).unwrap(), op.apply(&mdp, &u, 1).unwrap());
    }

    #[test]
    fn classical_against_itself() {
        let mdp = random_mdp(5, 3, 0.9, 6).unwrap();
        let p = check_optimality_preservation(&mdp, &OperatorKind::OptimalityQ).unwrap();
        assert_eq!(p.verdict, Verdict::Holds);
        let g = check_gap_increasing(&mdp, &OperatorKind::OptimalityQ).unwrap();
        assert!(g.pairs.iter().all(|p| p.classical_gap == p.alternative_gap));
    }

    #[test]
    fn two_state_consistent_gap() {
        let mdp = TabularMdp::two_state();
        let p = check_optimality_preservation(&mdp, &OperatorKind::ConsistentQ).unwrap();
        assert_eq!(p.verdict, Verdict::Holds);
        assert_eq!(crate::mdp::argmax(p.alternative.q.row(0)).0, 1);
        let g = check_gap_increasing(&mdp, &OperatorKind::ConsistentQ).unwrap();
        assert_eq!(g.verdict, Verdict::Holds);
        let pair = g.pairs[0];
        assert!((pair.classical_gap + 0.5).abs() < 1e-9);
        assert!((pair.alternative_gap + 1.0).abs() < 1e-9);
    }

    #[test]
    fn cross_report_on_two_state() {
        let mdp = TabularMdp::two_state();
        let r = fixed_point_cross_report("two-state", &mdp, &[OperatorKind::OptimalityQ, OperatorKind::ConsistentQ]).unwrap();
        assert!(r.entries[0].argmax_agreement.iter().all(|&x| x));
        assert!(r.entries[1].argmax_agreement.iter().all(|&x| x));
        assert!((r.entries[1].table.q.get(0, 0) - r.classical.q.get(0, 0)).abs() > 0.4);
    }

    #[test]
    fn diverging_operator_is_inconclusive() {
        let mdp = random_mdp(4, 2, 0.95, 3).unwrap();
        let r = check_gap_increasing(&mdp, &advantage(BetaSchedule::Constant(5.0))).unwrap();
        assert_eq!(r.verdict, Verdict::Inconclusive);
    }
}
