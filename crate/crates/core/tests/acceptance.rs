//! Acceptance criteria 1–12. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Tolerances are pinned below; nothing is tuned per
//! run. Experiment seeds come from the committed configs under `configs/`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use bellman_core::analysis::{check_contraction, check_gap_increasing, check_monotonicity, check_optimality_preservation, converge, Verdict};
use bellman_core::dp::{policy_evaluation, policy_evaluation_exact, policy_iteration, solution_csv, value_iteration};
use bellman_core::experiment::{self, ExperimentConfig, OperatorSummary};
use bellman_core::fixed_point::{apriori_error_bound, try_iterate_observed};
use bellman_core::mdp::{argmax, greedy_policy, random_mdp, Policy, StateValueFn, SupNormMetric, TabularMdp};
use bellman_core::operators::{apply_optimality_v, BetaSchedule, OperatorKind, OperatorName, PolicyChoice};
use bellman_core::picard::{solve_ivp_picard, PicardProblem};
use bellman_core::analysis;

const EVAL_TOL: f64 = 1e-8;
const EVAL_MATCH: f64 = 1e-7;
const BOUND_SLACK: f64 = 1e-9;
const MODULUS_SLACK: f64 = 1e-9;
const PROBE_PAIRS: usize = 1000;
const AGREEMENT: f64 = 1e-6;
const GOLDEN: f64 = 1e-8;
const PICARD_ERROR: f64 = 1e-3;
const BETA_SUM_SLACK: f64 = 1e-6;
const BETA_TAIL: f64 = 1e-10;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn sup(a: &[f64], b: &[f64]) -> f64 {
    SupNormMetric.distance(a, b)
}

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn c1_policy_evaluation() -> Outcome {
    let t = Instant::now();
    let mut worst = 0.0f64;
    for i in 0..50u64 {
        let (n_s, n_a) = (2 + (i as usize * 7) % 29, 1 + i as usize % 5);
        let mdp = random_mdp(n_s, n_a, 0.9, 1000 + i).unwrap();
        let pi = Policy::random(n_s, n_a, 2000 + i);
        let iterative = policy_evaluation(&mdp, &pi, EVAL_TOL).unwrap();
        let exact = policy_evaluation_exact(&mdp, &pi).unwrap();
        worst = worst.max(sup(iterative.values(), exact.values()));
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(worst <= EVAL_MATCH && secs < 10.0, format!("50 MDPs, max |iterative - exact| = {worst:.2e} (limit {EVAL_MATCH:e}), {secs:.2}s"))
}

fn c2_bcp_bound() -> Outcome {
    let t = Instant::now();
    let mut checked = 0usize;
    let mut worst_margin = f64::INFINITY;
    for gamma in [0.5, 0.9, 0.99] {
        for seed in 0..20u64 {
            let mdp = random_mdp(8, 3, gamma, 300 + seed).unwrap();
            let (v_vi, _) = value_iteration(&mdp, 1e-12).unwrap();
            // Independent oracle: exact evaluation of the greedy policy.
            let (greedy, _) = bellman_core::dp::policy_improvement(&mdp, &v_vi).unwrap();
            let v_star = policy_evaluation_exact(&mdp, &greedy).unwrap();
            let x0 = StateValueFn::zeros(mdp.n_states());
            let d0 = sup(apply_optimality_v(&mdp, &x0).unwrap().values(), x0.values());
            let mut trace = Vec::new();
            try_iterate_observed(
                |v| apply_optimality_v(&mdp, v),
                x0,
                1e-11,
                100_000,
                |n, v: &StateValueFn| trace.push((n, sup(v.values(), v_star.values()))),
            )
            .unwrap();
            for (n, err) in trace {
                let bound = apriori_error_bound(gamma, n as u32, d0).unwrap();
                worst_margin = worst_margin.min(bound + BOUND_SLACK - err);
                checked += 1;
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(
        worst_margin >= 0.0 && secs < 10.0,
        format!("60 runs, {checked} iterates, min (bound + 1e-9 - error) = {worst_margin:.2e}, {secs:.2}s"),
    )
}

fn contractive_ops(n_s: usize, n_a: usize, seed: u64) -> Vec<OperatorKind> {
    let pi = Policy::random(n_s, n_a, seed);
    vec![
        OperatorKind::ExpectationV(pi.clone()),
        OperatorKind::ExpectationQ(pi),
        OperatorKind::OptimalityV,
        OperatorKind::OptimalityQ,
        OperatorKind::ConsistentQ,
    ]
}

fn c3_contraction() -> Outcome {
    let t = Instant::now();
    let mut worst_excess = f64::NEG_INFINITY;
    for seed in 0..10u64 {
        let mdp = random_mdp(8, 3, 0.9, 500 + seed).unwrap();
        for op in contractive_ops(8, 3, seed) {
            let c = check_contraction(&op, &mdp, PROBE_PAIRS, seed).unwrap();
            worst_excess = worst_excess.max(c.report.estimated_modulus - 0.9);
        }
    }
    let advantage = OperatorKind::AdvantageQ { policy: PolicyChoice::Greedy, beta: BetaSchedule::Constant(1.0) };
    let witness = (0..50u64).find_map(|seed| {
        let mdp = random_mdp(8, 3, 0.9, 500 + seed).unwrap();
        let c = check_contraction(&advantage, &mdp, 100, seed).unwrap();
        c.violated.then_some((seed, c.report.estimated_modulus))
    });
    let secs = t.elapsed().as_secs_f64();
    let witness_text = match witness {
        Some((seed, m)) => format!("advantage(beta=1) witness on MDP {seed} with ratio {m:.3}"),
        None => "no advantage(beta=1) violation found".into(),
    };
    outcome(
        worst_excess <= MODULUS_SLACK && witness.is_some() && secs < 30.0,
        format!("5 ops x 10 MDPs x {PROBE_PAIRS} pairs, max (modulus - gamma) = {worst_excess:.2e}; {witness_text}; {secs:.2}s"),
    )
}

fn c4_monotonicity() -> Outcome {
    let mut violations = 0;
    let mut pairs = 0;
    for seed in 0..10u64 {
        let mdp = random_mdp(8, 3, 0.9, 500 + seed).unwrap();
        for op in contractive_ops(8, 3, seed) {
            let m = check_monotonicity(&op, &mdp, PROBE_PAIRS, seed).unwrap();
            violations += m.violations;
            pairs += m.pairs;
        }
    }
    outcome(violations == 0, format!("{violations} violations over {pairs} ordered pairs"))
}

/// Second-best action gap of `Q*` over all states.
fn min_action_gap(mdp: &TabularMdp) -> f64 {
    let q = converge(&OperatorKind::OptimalityQ, mdp).unwrap().q;
    (0..mdp.n_states())
        .map(|s| {
            let mut row = q.row(s).to_vec();
            row.sort_by(|a, b| b.total_cmp(a));
            if row.len() > 1 { row[0] - row[1] } else { f64::INFINITY }
        })
        .fold(f64::INFINITY, f64::min)
}

fn c5_pi_vi_agreement() -> Outcome {
    // Tie-broken: take seeds in order, keeping MDPs whose optimal action is
    // unique by at least 1e-4 in every state.
    let mut mdps = Vec::new();
    let mut skipped = 0;
    let mut seed = 700;
    while mdps.len() < 20 {
        let mdp = random_mdp(10, 4, 0.9, seed).unwrap();
        if min_action_gap(&mdp) >= 1e-4 {
            mdps.push(mdp);
        } else {
            skipped += 1;
        }
        seed += 1;
    }
    let mut worst = 0.0f64;
    let mut policy_mismatch = 0;
    for mdp in &mdps {
        let pi = policy_iteration(mdp, 1e-10).unwrap();
        let (v, vi_policy) = value_iteration(mdp, 1e-10).unwrap();
        worst = worst.max(sup(pi.state_values.values(), v.values()));
        if pi.policy != vi_policy {
            policy_mismatch += 1;
        }
    }
    outcome(
        worst <= AGREEMENT && policy_mismatch == 0,
        format!("20 MDPs ({skipped} near-tied skipped), max |V_PI - V_VI| = {worst:.2e}, {policy_mismatch} policy mismatches"),
    )
}

fn c6_two_state() -> Outcome {
    let mdp = TabularMdp::two_state();
    let mut errors = BTreeMap::new();
    let (v_star, _) = value_iteration(&mdp, 1e-12).unwrap();
    let greedy = Policy::deterministic(2, &[1, 0]).unwrap();
    let v_exact = policy_evaluation_exact(&mdp, &greedy).unwrap();
    errors.insert("V*", sup(v_star.values(), &[1.0, 0.0]).max(sup(v_exact.values(), &[1.0, 0.0])));
    let q_star = converge(&OperatorKind::OptimalityQ, &mdp).unwrap().q;
    errors.insert("Q*", sup(q_star.values(), &[0.5, 1.0, 0.0, 0.0]));
    let v_pi = policy_evaluation_exact(&mdp, &Policy::uniform(2, 2)).unwrap();
    let v_pi_iter = policy_evaluation(&mdp, &Policy::uniform(2, 2), 1e-12).unwrap();
    errors.insert("v_uniform", sup(v_pi.values(), &[2.0 / 3.0, 0.0]).max(sup(v_pi_iter.values(), &[2.0 / 3.0, 0.0])));
    let q_c = converge(&OperatorKind::ConsistentQ, &mdp).unwrap().q;
    errors.insert("Q_c", sup(q_c.values(), &[0.0, 1.0, 0.0, 0.0]));
    let gap = check_gap_increasing(&mdp, &OperatorKind::ConsistentQ).unwrap();
    let p = gap.pairs[0];
    errors.insert("gap", (p.classical_gap.abs() - 0.5).abs().max((p.alternative_gap.abs() - 1.0).abs()));
    let preserved = check_optimality_preservation(&mdp, &OperatorKind::ConsistentQ).unwrap().verdict == Verdict::Holds
        && argmax(q_c.row(0)).0 == 1
        && greedy_policy(&q_star) == greedy_policy(&q_c);
    let worst = errors.values().copied().fold(0.0, f64::max);
    let detail: Vec<String> = errors.iter().map(|(k, e)| format!("{k} {e:.1e}")).collect();
    outcome(worst <= GOLDEN && preserved, format!("{}; argmax preserved: {preserved}", detail.join(", ")))
}

fn c7_picard() -> Outcome {
    let t = Instant::now();
    let problem = PicardProblem::worked_example(4001).unwrap();
    let sol = solve_ivp_picard(&problem, 30).unwrap();
    let err = |n: usize| {
        let it = &sol.iterates[n];
        it.grid().iter().zip(it.values()).map(|(&x, &y)| (y - PicardProblem::worked_example_solution(x)).abs()).fold(0.0, f64::max)
    };
    let final_err = err(30);
    let r = &sol.residual_history;
    // residual_history[n - 1] is the step taken by iteration n. Once the
    // discrete fixed point is reached exactly the residual stays at 0, so the
    // check is non-increasing rather than strict.
    let monotone = r[2..].windows(2).all(|w| w[1] <= w[0]);
    let (e1, e5) = (err(1), err(5));
    let secs = t.elapsed().as_secs_f64();
    outcome(
        final_err < PICARD_ERROR && monotone && e5 * 10.0 <= e1 && secs < 5.0,
        format!("error after 30 = {final_err:.2e}, residuals non-increasing from iteration 3: {monotone}, err(1) = {e1:.3}, err(5) = {e5:.4}, {secs:.2}s"),
    )
}

fn c8_beta() -> Outcome {
    let schedule = BetaSchedule::family(1).unwrap();
    let limit = PI * PI / 6.0 + BETA_SUM_SLACK;
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    let mut decreasing = true;
    let mut bounded = true;
    for j in 1..=1_000_000u64 {
        let b = schedule.beta_at(j).unwrap();
        decreasing &= b < prev;
        prev = b;
        sum += b;
        bounded &= sum <= limit;
    }
    outcome(
        bounded && decreasing && prev < BETA_TAIL,
        format!("partial sum to 1e6 = {sum:.9} (limit {limit:.9}), strictly decreasing: {decreasing}, beta_1e6 = {prev:.1e}"),
    )
}

struct ExperimentRun {
    summaries: Vec<OperatorSummary>,
    secs: f64,
    files: BTreeMap<String, Vec<u8>>,
}

fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(dir).unwrap().display().to_string(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn run_config(name: &str) -> ExperimentRun {
    let mut config = ExperimentConfig::load(repo_root().join("configs").join(format!("{name}.toml"))).unwrap();
    let dir = tempfile::tempdir().unwrap();
    config.output_dir = dir.path().to_path_buf();
    let t = Instant::now();
    let run = experiment::run_experiment(&config, experiment::threads_from_env().unwrap()).unwrap();
    let secs = t.elapsed().as_secs_f64();
    assert!(run.failures().is_empty(), "{name}: failed cells {:?}", run.failures());
    ExperimentRun { summaries: experiment::summarize(&config, &run), secs, files: read_tree(dir.path()) }
}

fn stats(run: &ExperimentRun, op: OperatorName) -> (f64, f64) {
    let s = run.summaries.iter().find(|s| s.operator == op).expect("operator present");
    (s.mean, s.seed_std)
}

/// `|a − b|` within the larger of the two seed standard deviations.
fn within_one_std(a: (f64, f64), b: (f64, f64)) -> bool {
    (a.0 - b.0).abs() <= a.1.max(b.1)
}

fn describe(run: &ExperimentRun) -> String {
    run.summaries
        .iter()
        .map(|s| format!("{} {:.2}±{:.2}", s.operator, s.mean, s.seed_std))
        .collect::<Vec<_>>()
        .join(", ")
}

fn c9_mountain_car(run: &ExperimentRun) -> Outcome {
    let (b, c, a) = (stats(run, OperatorName::Bellman), stats(run, OperatorName::Consistent), stats(run, OperatorName::Advantage));
    let ok = a.0 >= b.0 && within_one_std(c, b) && run.secs < 600.0;
    outcome(ok, format!("final-quartile mean±seed-std: {}; advantage >= bellman: {}, consistent within 1 std: {}; {:.1}s", describe(run), a.0 >= b.0, within_one_std(c, b), run.secs))
}

fn c10_cart_pole(run: &ExperimentRun) -> Outcome {
    let (b, a) = (stats(run, OperatorName::Bellman), stats(run, OperatorName::Advantage));
    outcome(a.0 >= b.0 && run.secs < 900.0, format!("final-quartile mean±seed-std: {}; advantage >= bellman: {}; {:.1}s", describe(run), a.0 >= b.0, run.secs))
}

fn c11_acrobot(run: &ExperimentRun) -> Outcome {
    let ops = [OperatorName::Bellman, OperatorName::Consistent, OperatorName::Advantage];
    let all = ops.iter().all(|&x| ops.iter().all(|&y| within_one_std(stats(run, x), stats(run, y))));
    outcome(all && run.secs < 900.0, format!("final-quartile mean±seed-std: {}; pairwise within 1 std: {all}; {:.1}s", describe(run), run.secs))
}

fn c12_determinism(first: &[(&str, &ExperimentRun)]) -> Outcome {
    let mut mismatches = Vec::new();
    let mut files = 0;
    for (name, run) in first {
        let again = run_config(name);
        files += run.files.len();
        if again.files != run.files {
            mismatches.push(format!("experiment {name}"));
        }
    }

    let solve = |mdp: &TabularMdp| {
        let pi = policy_iteration(mdp, 1e-10).unwrap();
        let (v, p) = value_iteration(mdp, 1e-10).unwrap();
        solution_csv(&pi.state_values, &pi.policy).unwrap() + &solution_csv(&v, &p).unwrap()
    };
    let mdp = random_mdp(12, 3, 0.95, 42).unwrap();
    if solve(&mdp) != solve(&mdp) {
        mismatches.push("solver".into());
    }
    files += 2;

    let picard = || {
        let sol = solve_ivp_picard(&PicardProblem::worked_example(4001).unwrap(), 30).unwrap();
        sol.solution_csv(PicardProblem::worked_example_solution) + &sol.residual_csv()
    };
    if picard() != picard() {
        mismatches.push("picard".into());
    }
    files += 2;

    let config = analysis::SuiteConfig { mdp_seeds: (1..=4).collect(), trials: 200, ..Default::default() };
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        analysis::run_suite(&config).unwrap().write_csvs(d.path()).unwrap();
    }
    let (a, b) = (read_tree(dirs[0].path()), read_tree(dirs[1].path()));
    files += a.len();
    if a != b {
        mismatches.push("analysis".into());
    }
    outcome(mismatches.is_empty(), format!("{files} output files compared across two runs; mismatches: {mismatches:?}"))
}

fn main() -> ExitCode {
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut record = |n: u32, name: &'static str, o: Outcome| {
        println!("criterion {n:>2} [{}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((n, name, o));
    };
    record(1, "policy evaluation vs exact solve", c1_policy_evaluation());
    record(2, "a-priori contraction bound on value iteration", c2_bcp_bound());
    record(3, "contraction suite", c3_contraction());
    record(4, "monotonicity suite", c4_monotonicity());
    record(5, "policy iteration vs value iteration", c5_pi_vi_agreement());
    record(6, "two-state golden values", c6_two_state());
    record(7, "Picard iteration", c7_picard());
    record(8, "beta schedule conditions", c8_beta());
    let mc = run_config("mountain-car");
    record(9, "mountain car operator comparison", c9_mountain_car(&mc));
    let cp = run_config("cart-pole");
    record(10, "cart-pole operator comparison", c10_cart_pole(&cp));
    let ac = run_config("acrobot");
    record(11, "acrobot operator comparison", c11_acrobot(&ac));
    record(12, "determinism", c12_determinism(&[("mountain-car", &mc), ("cart-pole", &cp), ("acrobot", &ac)]));

    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!("acceptance: {}/{} criteria passed", results.len() - failed.len(), results.len());
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed criteria: {failed:?}");
        ExitCode::FAILURE
    }
}
