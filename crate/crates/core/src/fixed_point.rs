//! Banach-contraction iteration over value tables under the sup-norm.
//!
//! The engine iterates `x_{n+1} = T(x_n)` until the successive residual
//! `‖x_{n+1} − x_n‖∞` drops below the tolerance. For a γ-contraction that
//! residual also bounds the distance to the fixed point:
//! `‖x_{n+1} − x*‖∞ ≤ γ/(1 − γ) · residual`.

use std::io::Write;

use rand::Rng;

use crate::mdp::{ActionValueFn, StateValueFn, SupNormMetric};
use crate::rng::{self, FIXTURE_STREAM};
use crate::{Error, Result};

pub const DEFAULT_TOLERANCE: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 100_000;

/// Anything the engine can iterate: a flat vector of reals with a fixed shape.
pub trait ValueTable: Clone {
    fn values(&self) -> &[f64];

    /// A table of the same shape holding `values`.
    fn with_values(&self, values: Vec<f64>) -> Self;
}

impl ValueTable for Vec<f64> {
    fn values(&self) -> &[f64] {
        self
    }

    fn with_values(&self, values: Vec<f64>) -> Self {
        values
    }
}

impl ValueTable for StateValueFn {
    fn values(&self) -> &[f64] {
        StateValueFn::values(self)
    }

    fn with_values(&self, values: Vec<f64>) -> Self {
        StateValueFn::new(values)
    }
}

impl ValueTable for ActionValueFn {
    fn values(&self) -> &[f64] {
        ActionValueFn::values(self)
    }

    fn with_values(&self, values: Vec<f64>) -> Self {
        ActionValueFn::new(self.n_states(), self.n_actions(), values).expect("same shape")
    }
}

#[derive(Clone, Debug)]
pub struct FixedPointResult<T> {
    pub fixed_point: T,
    /// Number of map applications performed.
    pub iterations: usize,
    pub final_residual: f64,
    /// `residual_history[n] = ‖x_{n+1} − x_n‖∞`.
    pub residual_history: Vec<f64>,
    pub converged: bool,
}

impl<T> FixedPointResult<T> {
    /// Writes `iteration,residual` rows, iterations counted from 1.
    pub fn write_residual_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "iteration,residual")?;
        for (i, r) in self.residual_history.iter().enumerate() {
            writeln!(out, "{},{}", i + 1, r)?;
        }
        Ok(())
    }
}

/// Iterates an infallible map from `x0`.
pub fn iterate_to_fixed_point<T, F>(
    mut map: F,
    x0: T,
    tolerance: f64,
    max_iter: usize,
) -> Result<FixedPointResult<T>>
where
    T: ValueTable,
    F: FnMut(&T) -> T,
{
    try_iterate_observed(|x| Ok(map(x)), x0, tolerance, max_iter, |_, _| {})
}

/// Iterates a fallible map; the first error aborts the run.
pub fn try_iterate_to_fixed_point<T, F>(
    map: F,
    x0: T,
    tolerance: f64,
    max_iter: usize,
) -> Result<FixedPointResult<T>>
where
    T: ValueTable,
    F: FnMut(&T) -> Result<T>,
{
    try_iterate_observed(map, x0, tolerance, max_iter, |_, _| {})
}

/// Like [`try_iterate_to_fixed_point`], calling `observe(n, x_n)` for every
/// iterate including `x_0`.
pub fn try_iterate_observed<T, F, O>(
    mut map: F,
    x0: T,
    tolerance: f64,
    max_iter: usize,
    mut observe: O,
) -> Result<FixedPointResult<T>>
where
    T: ValueTable,
    F: FnMut(&T) -> Result<T>,
    O: FnMut(usize, &T),
{
    if !(tolerance > 0.0) {
        return Err(Error::invalid(format!("tolerance must be positive, got {tolerance}")));
    }
    if max_iter == 0 {
        return Err(Error::invalid("max_iter must be at least 1"));
    }
    let metric = SupNormMetric;
    let mut current = x0;
    let mut history = Vec::new();
    observe(0, &current);
    for n in 1..=max_iter {
        let next = map(&current)?;
        if next.values().len() != current.values().len() {
            return Err(Error::shape(current.values().len(), next.values().len()));
        }
        if next.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { iteration: n });
        }
        let residual = metric.distance(next.values(), current.values());
        history.push(residual);
        observe(n, &next);
        current = next;
        if residual < tolerance {
            return Ok(FixedPointResult {
                fixed_point: current,
                iterations: n,
                final_residual: residual,
                residual_history: history,
                converged: true,
            });
        }
    }
    Ok(FixedPointResult {
        fixed_point: current,
        iterations: max_iter,
        final_residual: *history.last().expect("max_iter >= 1"),
        residual_history: history,
        converged: false,
    })
}

/// A-priori Banach estimate `γ^n / (1 − γ) · d(x_0, x_1)` on `d(x_n, x*)`.
pub fn apriori_error_bound(modulus: f64, n: u32, first_step: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&modulus) {
        return Err(Error::invalid(format!("contraction modulus {modulus} outside [0, 1)")));
    }
    if !(first_step >= 0.0) {
        return Err(Error::invalid(format!("first step {first_step} must be non-negative")));
    }
    if first_step == 0.0 {
        return Ok(0.0);
    }
    Ok(modulus.powi(n as i32) / (1.0 - modulus) * first_step)
}

#[derive(Clone, Debug)]
pub struct ContractionReport<T> {
    /// Largest observed `‖T(u) − T(v)‖∞ / ‖u − v‖∞`; a lower bound on the
    /// Lipschitz constant of the map.
    pub estimated_modulus: f64,
    pub sample_count: usize,
    pub worst_pair: (T, T),
}

/// Probes the Lipschitz constant of `map` with random pairs whose entries are
/// uniform in `[−10, 10]`, shaped like `template`.
pub fn estimate_contraction_modulus<T, F>(
    mut map: F,
    template: &T,
    trials: usize,
    seed: u64,
) -> Result<ContractionReport<T>>
where
    T: ValueTable,
    F: FnMut(&T) -> Result<T>,
{
    if trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    let metric = SupNormMetric;
    let mut rng = rng::stream(seed, FIXTURE_STREAM);
    let len = template.values().len();
    let draw = |rng: &mut rng::PortableRng| {
        template.with_values((0..len).map(|_| rng.gen_range(-10.0..=10.0)).collect())
    };

    let mut best = 0.0_f64;
    let mut samples = 0;
    let mut worst: Option<(T, T)> = None;
    for _ in 0..trials {
        let (u, v) = (draw(&mut rng), draw(&mut rng));
        let input = metric.distance(u.values(), v.values());
        if input == 0.0 {
            continue;
        }
        samples += 1;
        let ratio = metric.distance(map(&u)?.values(), map(&v)?.values()) / input;
        if worst.is_none() || ratio > best {
            best = ratio;
            worst = Some((u, v));
        }
    }
    let worst_pair = worst.unwrap_or_else(|| (template.clone(), template.clone()));
    Ok(ContractionReport { estimated_modulus: best, sample_count: samples, worst_pair })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::policy_evaluation_exact;
    use crate::mdp::{random_mdp, Policy, TabularMdp};
    use crate::operators::{apply_expectation_v, apply_optimality_q, apply_optimality_v};

    #[test]
    fn identity_converges_immediately() {
        let r = iterate_to_fixed_point(|x: &Vec<f64>| x.clone(), vec![3.0, -1.0], 1e-8, 10).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 1);
        assert_eq!(r.final_residual, 0.0);
        assert_eq!(r.fixed_point, vec![3.0, -1.0]);
    }

    #[test]
    fn halving_map_iteration_count() {
        // residual after n applications is 0.5^n; 0.5^19 > 1e-6 > 0.5^20
        let r = iterate_to_fixed_point(|x: &Vec<f64>| vec![0.5 * x[0]], vec![1.0], 1e-6, 100).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 20);
        assert!(r.fixed_point[0].abs() < 1e-6);
        for (n, res) in r.residual_history.iter().enumerate() {
            assert_eq!(*res, 0.5_f64.powi(n as i32 + 1));
        }
    }

    #[test]
    fn hits_max_iter_without_converging() {
        let r = iterate_to_fixed_point(|x: &Vec<f64>| vec![0.99 * x[0]], vec![1.0], 1e-12, 5).unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations, 5);
        assert_eq!(r.residual_history.len(), 5);
    }

    #[test]
    fn divergence_names_iteration() {
        let err = iterate_to_fixed_point(|x: &Vec<f64>| vec![x[0] * 1e200], vec![1.0], 1e-8, 10).unwrap_err();
        assert!(matches!(err, Error::Divergence { iteration: 2 }), "{err}");
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(iterate_to_fixed_point(|x: &Vec<f64>| x.clone(), vec![0.0], 0.0, 10).is_err());
        assert!(iterate_to_fixed_point(|x: &Vec<f64>| x.clone(), vec![0.0], 1e-3, 0).is_err());
    }

    #[test]
    fn expectation_operator_matches_linear_solve() {
        let mdp = TabularMdp::two_state();
        let pi = Policy::uniform(2, 2);
        let r = try_iterate_to_fixed_point(
            |v| apply_expectation_v(&mdp, &pi, v),
            StateValueFn::zeros(2),
            1e-10,
            DEFAULT_MAX_ITER,
        )
        .unwrap();
        let exact = policy_evaluation_exact(&mdp, &pi).unwrap();
        assert!(SupNormMetric.distance(r.fixed_point.values(), exact.values()) < 1e-9);
    }

    #[test]
    fn residual_csv_layout() {
        let r = iterate_to_fixed_point(|x: &Vec<f64>| vec![0.5 * x[0]], vec![1.0], 0.2, 10).unwrap();
        let mut buf = Vec::new();
        r.write_residual_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "iteration,residual\n1,0.5\n2,0.25\n3,0.125\n");
    }

    #[test]
    fn apriori_bound_examples() {
        assert_eq!(apriori_error_bound(0.5, 0, 1.0).unwrap(), 2.0);
        assert_eq!(apriori_error_bound(0.3, 7, 0.0).unwrap(), 0.0);
        let b = apriori_error_bound(0.9, 10, 1.0).unwrap();
        assert!((b - 0.9_f64.powi(10) / 0.1).abs() < 1e-12);
        assert!((b - 3.4868).abs() < 1e-4);
        assert!(apriori_error_bound(1.0, 3, 1.0).is_err());
        assert!(apriori_error_bound(0.5, 3, -1.0).is_err());
    }

    #[test]
    fn identity_modulus_is_exactly_one() {
        let rep = estimate_contraction_modulus(|x: &Vec<f64>| Ok(x.clone()), &vec![0.0; 4], 200, 3).unwrap();
        assert_eq!(rep.estimated_modulus, 1.0);
        assert_eq!(rep.sample_count, 200);
    }

    #[test]
    fn optimality_operator_modulus_below_discount() {
        let mdp = random_mdp(6, 3, 0.9, 4).unwrap();
        let rep = estimate_contraction_modulus(
            |q| apply_optimality_q(&mdp, q),
            &ActionValueFn::zeros(6, 3),
            1000,
            11,
        )
        .unwrap();
        assert!(rep.estimated_modulus <= 0.9 + 1e-9, "{}", rep.estimated_modulus);
        assert!(rep.estimated_modulus > 0.0);
    }

    fn contraction_run(seed: u64) -> (FixedPointResult<StateValueFn>, f64) {
        let mdp = random_mdp(7, 3, 0.8, seed).unwrap();
        let rep = estimate_contraction_modulus(
            |v| apply_optimality_v(&mdp, v),
            &StateValueFn::zeros(7),
            1000,
            seed,
        )
        .unwrap();
        let mut rng = rng::stream(seed, 9);
        let x0 = StateValueFn::new((0..7).map(|_| rng.gen_range(-10.0..10.0)).collect());
        let run = try_iterate_to_fixed_point(|v| apply_optimality_v(&mdp, v), x0, 1e-10, 10_000).unwrap();
        (run, rep.estimated_modulus)
    }

    #[test]
    fn residuals_shrink_geometrically() {
        for seed in 0..5 {
            let (run, modulus) = contraction_run(seed);
            assert!(modulus <= 0.8 + 1e-9);
            // the a-priori guarantee uses the known modulus 0.8
            for w in run.residual_history.windows(2) {
                assert!(w[1] <= 0.8 * w[0] + 1e-9);
            }
        }
    }

    #[test]
    fn apriori_bound_holds_along_run() {
        let mdp = random_mdp(5, 2, 0.7, 12).unwrap();
        let mut iterates = Vec::new();
        let run = try_iterate_observed(
            |v| apply_optimality_v(&mdp, v),
            StateValueFn::zeros(5),
            1e-13,
            10_000,
            |_, v| iterates.push(v.clone()),
        )
        .unwrap();
        let star = run.fixed_point.values().to_vec();
        let d0 = run.residual_history[0];
        for (n, x) in iterates.iter().enumerate() {
            let err = SupNormMetric.distance(x.values(), &star);
            assert!(err <= apriori_error_bound(0.7, n as u32, d0).unwrap() + 1e-9);
        }
    }

    #[test]
    fn fixed_point_is_unique_across_starts() {
        let mdp = random_mdp(6, 3, 0.8, 21).unwrap();
        // each run ends within γ/(1−γ)·tol = 4·tol of x*
        let tol = 1e-9;
        let mut rng = rng::stream(5, 9);
        let mut runs = Vec::new();
        for _ in 0..2 {
            let x0 = ActionValueFn::new(6, 3, (0..18).map(|_| rng.gen_range(-10.0..10.0)).collect()).unwrap();
            runs.push(try_iterate_to_fixed_point(|q| apply_optimality_q(&mdp, q), x0, tol, DEFAULT_MAX_ITER).unwrap());
        }
        let d = SupNormMetric.distance(runs[0].fixed_point.values(), runs[1].fixed_point.values());
        assert!(d <= 10.0 * tol, "{d}");
    }
}
