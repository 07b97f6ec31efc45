//! Picard iteration for scalar initial value problems `y' = F(x, y)`,
//! `y(x0) = y0`, on a fixed uniform grid.
//!
//! The integral operator `(T g)(x) = y0 + ∫_{x0}^{x} F(t, g(t)) dt` is
//! evaluated with the composite trapezoid rule over grid points, so `T` maps
//! grid functions to grid functions and the engine's convergence story applies
//! verbatim.

use std::fmt;

use rand::Rng;

use crate::mdp::SupNormMetric;
use crate::rng;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    grid: Vec<f64>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.len() != values.len() {
            return Err(Error::shape(grid.len(), values.len()));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("grid must be strictly increasing"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("value at x = {} is not finite", grid[i])));
        }
        Ok(GridFunction { grid, values })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sup_distance(&self, other: &GridFunction) -> f64 {
        SupNormMetric.distance(&self.values, &other.values)
    }
}

pub type Rhs = Box<dyn Fn(f64, f64) -> f64 + Send + Sync>;

pub struct PicardProblem {
    rhs: Rhs,
    x0: f64,
    y0: f64,
    interval: (f64, f64),
    grid: Vec<f64>,
    origin: usize,
}

impl fmt::Debug for PicardProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PicardProblem")
            .field("x0", &self.x0)
            .field("y0", &self.y0)
            .field("interval", &self.interval)
            .field("grid_n", &self.grid.len())
            .finish()
    }
}

impl PicardProblem {
    /// `x0` must coincide with a point of the uniform `grid_n`-point grid on
    /// `interval` (within 1e-9 of the spacing).
    pub fn new(
        rhs: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        x0: f64,
        y0: f64,
        interval: (f64, f64),
        grid_n: usize,
    ) -> Result<Self> {
        let (lo, hi) = interval;
        if !(lo < hi) {
            return Err(Error::invalid(format!("empty interval [{lo}, {hi}]")));
        }
        if grid_n < 2 {
            return Err(Error::invalid("grid_n must be at least 2"));
        }
        if !(lo <= x0 && x0 <= hi) {
            return Err(Error::invalid(format!("x0 = {x0} outside [{lo}, {hi}]")));
        }
        let h = (hi - lo) / (grid_n - 1) as f64;
        let grid: Vec<f64> = (0..grid_n)
            .map(|i| if i == grid_n - 1 { hi } else { lo + i as f64 * h })
            .collect();
        let origin = ((x0 - lo) / h).round() as usize;
        if (grid[origin] - x0).abs() > 1e-9 * h {
            return Err(Error::invalid(format!("x0 = {x0} is not a grid point")));
        }
        Ok(PicardProblem { rhs: Box::new(rhs), x0, y0, interval, grid, origin })
    }

    /// `x'(t) = x/2 − t`, `x(0) = 0` on `[0, 4]`.
    pub fn worked_example(grid_n: usize) -> Result<Self> {
        Self::new(|t, x| 0.5 * x - t, 0.0, 0.0, (0.0, 4.0), grid_n)
    }

    /// Closed-form solution of [`PicardProblem::worked_example`].
    pub fn worked_example_solution(t: f64) -> f64 {
        2.0 * t + 4.0 - 4.0 * (t / 2.0).exp()
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn y0(&self) -> f64 {
        self.y0
    }

    pub fn interval(&self) -> (f64, f64) {
        self.interval
    }

    pub fn rhs(&self, x: f64, y: f64) -> f64 {
        (self.rhs)(x, y)
    }

    /// The constant function `y0`, the default first iterate.
    pub fn constant_start(&self) -> GridFunction {
        GridFunction { grid: self.grid.clone(), values: vec![self.y0; self.grid.len()] }
    }

    /// Empirical Lipschitz constant of `F` in `y`: the largest difference
    /// quotient over random `(x, y1, y2)` with `x` on the interval and `y`s in
    /// `y_range`.
    pub fn estimate_lipschitz(&self, y_range: (f64, f64), samples: usize, seed: u64) -> f64 {
        let mut rng = rng::stream(seed, rng::FIXTURE_STREAM);
        let (lo, hi) = self.interval;
        let mut best = 0.0_f64;
        for _ in 0..samples {
            let x = rng.gen_range(lo..=hi);
            let y1 = rng.gen_range(y_range.0..=y_range.1);
            let y2 = rng.gen_range(y_range.0..=y_range.1);
            if y1 != y2 {
                best = best.max(((self.rhs)(x, y1) - (self.rhs)(x, y2)).abs() / (y1 - y2).abs());
            }
        }
        best
    }
}

/// One application of the integral operator.
pub fn picard_step(problem: &PicardProblem, current: &GridFunction) -> Result<GridFunction> {
    if current.grid.len() != problem.grid.len() || current.grid != problem.grid {
        return Err(Error::shape(
            format!("grid of {} points", problem.grid.len()),
            format!("{} points", current.grid.len()),
        ));
    }
    let grid = &problem.grid;
    let integrand: Vec<f64> = grid
        .iter()
        .zip(&current.values)
        .map(|(&x, &y)| {
            let f = (problem.rhs)(x, y);
            if f.is_finite() {
                Ok(f)
            } else {
                Err(Error::NonFinite(format!("F({x}, {y}) is not finite")))
            }
        })
        .collect::<Result<_>>()?;

    let n = grid.len();
    let o = problem.origin;
    let mut values = vec![problem.y0; n];
    for i in o + 1..n {
        let h = grid[i] - grid[i - 1];
        values[i] = values[i - 1] + 0.5 * h * (integrand[i - 1] + integrand[i]);
    }
    // left of x0 the integral runs backwards and picks up a sign
    for i in (0..o).rev() {
        let h = grid[i + 1] - grid[i];
        values[i] = values[i + 1] - 0.5 * h * (integrand[i] + integrand[i + 1]);
    }
    Ok(GridFunction { grid: grid.clone(), values })
}

#[derive(Clone, Debug)]
pub struct PicardSolution {
    pub solution: GridFunction,
    /// `residual_history[n] = ‖y_{n+1} − y_n‖∞`.
    pub residual_history: Vec<f64>,
    /// Every iterate, starting with the initial function.
    pub iterates: Vec<GridFunction>,
}

/// Runs `iterations` Picard steps from the constant function `y0`.
pub fn solve_ivp_picard(problem: &PicardProblem, iterations: usize) -> Result<PicardSolution> {
    solve_ivp_picard_from(problem, problem.constant_start(), iterations)
}

/// Runs `iterations` Picard steps from an arbitrary starting function.
pub fn solve_ivp_picard_from(
    problem: &PicardProblem,
    start: GridFunction,
    iterations: usize,
) -> Result<PicardSolution> {
    if iterations == 0 {
        return Err(Error::invalid("iterations must be at least 1"));
    }
    let mut iterates = vec![start];
    let mut residual_history = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let prev = iterates.last().expect("non-empty");
        let next = picard_step(problem, prev)?;
        residual_history.push(next.sup_distance(prev));
        iterates.push(next);
    }
    let solution = iterates.last().expect("non-empty").clone();
    Ok(PicardSolution { solution, residual_history, iterates })
}

/// Classical fourth-order Runge–Kutta on the problem's grid, marching out
/// from `x0` in both directions. Used as an independent reference.
pub fn runge_kutta_reference(problem: &PicardProblem) -> GridFunction {
    let grid = &problem.grid;
    let f = |x: f64, y: f64| (problem.rhs)(x, y);
    let rk4 = |x: f64, y: f64, h: f64| {
        let k1 = f(x, y);
        let k2 = f(x + h / 2.0, y + h / 2.0 * k1);
        let k3 = f(x + h / 2.0, y + h / 2.0 * k2);
        let k4 = f(x + h, y + h * k3);
        y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    };
    let mut values = vec![problem.y0; grid.len()];
    for i in problem.origin + 1..grid.len() {
        values[i] = rk4(grid[i - 1], values[i - 1], grid[i] - grid[i - 1]);
    }
    for i in (0..problem.origin).rev() {
        values[i] = rk4(grid[i + 1], values[i + 1], grid[i] - grid[i + 1]);
    }
    GridFunction { grid: grid.clone(), values }
}

impl PicardSolution {
    /// `x,y_numeric,y_reference,abs_error` for the final iterate against
    /// `reference(x)`.
    pub fn solution_csv(&self, reference: impl Fn(f64) -> f64) -> String {
        let mut out = String::from("x,y_numeric,y_reference,abs_error\n");
        for (&x, &y) in self.solution.grid().iter().zip(self.solution.values()) {
            let r = reference(x);
            out.push_str(&format!("{x},{y},{r},{}\n", (y - r).abs()));
        }
        out
    }

    /// `iteration,residual`, counted from 1.
    pub fn residual_csv(&self) -> String {
        let mut out = String::from("iteration,residual\n");
        for (n, r) in self.residual_history.iter().enumerate() {
            out.push_str(&format!("{},{r}\n", n + 1));
        }
        out
    }
}
