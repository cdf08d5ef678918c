//! Box-constrained maximization over the six extrinsic parameters.
//!
//! Three interchangeable methods share one contract: every evaluated point
//! lies inside the box, the reported optimum is the best point evaluated, and
//! the best-so-far objective never decreases across iterations. Internally
//! each method minimizes `−f`.
//!
//! * [`Method::SequentialQuadratic`]: at each iterate a box-constrained
//!   quadratic model built from a damped-BFGS Hessian is solved exactly by an
//!   active-set method, followed by a backtracking line search.
//! * [`Method::QuasiNewtonBounded`]: limited-memory BFGS restricted to the
//!   variables not held at a bound, with a projected backtracking search.
//! * [`Method::PatternSearch`]: Powell's conjugate direction set with bounded
//!   Brent line searches; uses no gradients.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{SMatrix, SVector};

use crate::error::{Error, Result};
use crate::geometry::ExtrinsicParams;

pub const DIM: usize = 6;

type Vec6 = SVector<f64, DIM>;
type Mat6 = SMatrix<f64, DIM, DIM>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub lower: [f64; DIM],
    pub upper: [f64; DIM],
}

impl Bounds {
    pub fn new(lower: [f64; DIM], upper: [f64; DIM]) -> Result<Self> {
        for i in 0..DIM {
            if !(lower[i] < upper[i]) {
                return Err(Error::invalid(format!(
                    "bound {i}: lower {} is not below upper {}",
                    lower[i], upper[i]
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// Box of half-widths `translation` (meters) and `rotation` (radians)
    /// centred on `seed`.
    pub fn around(seed: &ExtrinsicParams, translation: f64, rotation: f64) -> Result<Self> {
        let c = seed.to_array();
        let half = [translation, translation, translation, rotation, rotation, rotation];
        Self::new(
            std::array::from_fn(|i| c[i] - half[i]),
            std::array::from_fn(|i| c[i] + half[i]),
        )
    }

    pub fn contains(&self, x: &[f64; DIM]) -> bool {
        (0..DIM).all(|i| x[i] >= self.lower[i] && x[i] <= self.upper[i])
    }

    pub fn project(&self, x: &[f64; DIM]) -> [f64; DIM] {
        std::array::from_fn(|i| x[i].clamp(self.lower[i], self.upper[i]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    QuasiNewtonBounded,
    #[default]
    SequentialQuadratic,
    PatternSearch,
}

impl Method {
    pub const ALL: [Method; 3] = [
        Method::QuasiNewtonBounded,
        Method::SequentialQuadratic,
        Method::PatternSearch,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::QuasiNewtonBounded => "quasi-newton-bounded",
            Method::SequentialQuadratic => "sequential-quadratic",
            Method::PatternSearch => "pattern-search",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "quasi-newton-bounded" | "l-bfgs-b" | "lbfgsb" => Ok(Method::QuasiNewtonBounded),
            "sequential-quadratic" | "slsqp" | "sqp" => Ok(Method::SequentialQuadratic),
            "pattern-search" | "powell" => Ok(Method::PatternSearch),
            other => Err(Error::invalid(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizeOptions {
    pub method: Method,
    /// Stop once an iteration improves the objective by less than this, or
    /// the projected gradient norm falls below it.
    pub tol: f64,
    pub max_iter: usize,
    /// Finite-difference steps (meters for 0..3, radians for 3..6).
    pub gradient_step: [f64; DIM],
    /// Length of the first trial step.
    pub initial_step: f64,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            method: Method::SequentialQuadratic,
            tol: 1e-6,
            max_iter: 500,
            gradient_step: [3e-3; DIM],
            initial_step: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeResult {
    pub theta_hat: ExtrinsicParams,
    pub objective_value: f64,
    pub iterations: usize,
    pub objective_evaluations: usize,
    pub converged: bool,
    pub wall_time: f64,
    /// Best objective after each iteration, starting with the seed.
    pub history: Vec<f64>,
}

/// Progress after one iteration.
#[derive(Debug, Clone, Copy)]
pub struct IterationReport {
    pub iteration: usize,
    pub best_value: f64,
    pub theta: [f64; DIM],
    pub evaluations: usize,
}

/// Central differences per component, switching to one-sided differences
/// where a step would leave `bounds`.
pub fn numeric_gradient<F>(
    mut f: F,
    theta: &[f64; DIM],
    step: &[f64; DIM],
    bounds: Option<&Bounds>,
) -> Result<[f64; DIM]>
where
    F: FnMut(&[f64; DIM]) -> f64,
{
    let mut center = None;
    gradient_with(&mut |x| Ok(f(x)), theta, step, bounds, &mut center)
}

fn gradient_with(
    f: &mut dyn FnMut(&[f64; DIM]) -> Result<f64>,
    theta: &[f64; DIM],
    step: &[f64; DIM],
    bounds: Option<&Bounds>,
    center: &mut Option<f64>,
) -> Result<[f64; DIM]> {
    if let Some(i) = step.iter().position(|&h| !(h > 0.0)) {
        return Err(Error::invalid(format!("gradient step {i} must be positive")));
    }
    let mut g = [0.0; DIM];
    for i in 0..DIM {
        let h = step[i];
        let (lo, hi) = bounds.map_or((f64::NEG_INFINITY, f64::INFINITY), |b| {
            (b.lower[i], b.upper[i])
        });
        let can_up = theta[i] + h <= hi;
        let can_down = theta[i] - h >= lo;
        if !(can_up && can_down) && center.is_none() {
            *center = Some(f(theta)?);
        }
        let f0 = center.unwrap_or(f64::NAN);
        let mut at = |delta: f64| {
            let mut x = *theta;
            x[i] += delta;
            f(&x)
        };
        g[i] = match (can_up, can_down) {
            (true, true) => (at(h)? - at(-h)?) / (2.0 * h),
            (true, false) => (at(h)? - f0) / h,
            (false, true) => (f0 - at(-h)?) / h,
            (false, false) => {
                return Err(Error::invalid(format!(
                    "gradient step {h} does not fit inside bound {i}"
                )))
            }
        };
    }
    Ok(g)
}

/// Wraps the user objective as a bounded minimization target and keeps the
/// best point seen.
struct Problem<'a> {
    f: &'a mut dyn FnMut(&[f64; DIM]) -> f64,
    bounds: Bounds,
    evaluations: usize,
    best_x: [f64; DIM],
    best_f: f64,
}

impl Problem<'_> {
    /// `−f(x)`; trial points update the best-so-far record.
    fn eval(&mut self, x: &[f64; DIM]) -> Result<f64> {
        let v = self.probe(x)?;
        if v < self.best_f {
            self.best_f = v;
            self.best_x = *x;
        }
        Ok(v)
    }

    /// `−f(x)` without touching the best-so-far record.
    fn probe(&mut self, x: &[f64; DIM]) -> Result<f64> {
        assert!(
            self.bounds.contains(x),
            "objective evaluated outside the box at {x:?}"
        );
        self.evaluations += 1;
        let v = (self.f)(x);
        if !v.is_finite() {
            return Err(Error::NonFiniteObjective { theta: *x, value: v });
        }
        Ok(-v)
    }

    fn gradient(&mut self, x: &[f64; DIM], fx: f64, step: &[f64; DIM]) -> Result<Vec6> {
        let bounds = self.bounds;
        let mut center = Some(fx);
        let g = gradient_with(&mut |p| self.probe(p), x, step, Some(&bounds), &mut center)?;
        Ok(Vec6::from(g))
    }

    fn projected_gradient_norm(&self, x: &Vec6, g: &Vec6) -> f64 {
        (0..DIM)
            .map(|i| (x[i] - (x[i] - g[i]).clamp(self.bounds.lower[i], self.bounds.upper[i])).abs())
            .fold(0.0, f64::max)
    }
}

/// Runs the selected method from `seed` and reports the best point found.
pub fn maximize<F>(
    f: F,
    seed: &ExtrinsicParams,
    bounds: &Bounds,
    options: &OptimizeOptions,
) -> Result<OptimizeResult>
where
    F: FnMut(&[f64; DIM]) -> f64,
{
    maximize_with_observer(f, seed, bounds, options, |_| {})
}

/// [`maximize`] with a callback after every iteration.
pub fn maximize_with_observer<F, O>(
    mut f: F,
    seed: &ExtrinsicParams,
    bounds: &Bounds,
    options: &OptimizeOptions,
    mut observer: O,
) -> Result<OptimizeResult>
where
    F: FnMut(&[f64; DIM]) -> f64,
    O: FnMut(&IterationReport),
{
    let start = Instant::now();
    let x0 = seed.to_array();
    if !bounds.contains(&x0) {
        return Err(Error::invalid(format!("seed {x0:?} lies outside the bounds")));
    }
    if !(options.tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let mut problem = Problem {
        f: &mut f,
        bounds: *bounds,
        evaluations: 0,
        best_x: x0,
        best_f: f64::INFINITY,
    };
    let f0 = problem.eval(&x0)?;
    let mut history = vec![-f0];
    let mut report = |problem: &Problem, iteration: usize| {
        history.push(-problem.best_f);
        observer(&IterationReport {
            iteration,
            best_value: -problem.best_f,
            theta: problem.best_x,
            evaluations: problem.evaluations,
        });
    };
    let outcome = match options.method {
        Method::SequentialQuadratic => sequential_quadratic(&mut problem, x0, f0, options, &mut report),
        Method::QuasiNewtonBounded => quasi_newton(&mut problem, x0, f0, options, &mut report),
        Method::PatternSearch => pattern_search(&mut problem, x0, f0, options, &mut report),
    }?;
    Ok(OptimizeResult {
        theta_hat: ExtrinsicParams::from_array(problem.best_x),
        objective_value: -problem.best_f,
        iterations: outcome.iterations,
        objective_evaluations: problem.evaluations,
        converged: outcome.converged,
        wall_time: start.elapsed().as_secs_f64(),
        history,
    })
}

struct Outcome {
    iterations: usize,
    converged: bool,
}

type Reporter<'r> = dyn FnMut(&Problem, usize) + 'r;

fn to_array(v: &Vec6) -> [f64; DIM] {
    std::array::from_fn(|i| v[i])
}

/// Clamps away rounding that would step a hair outside the box.
fn clamp_into(bounds: &Bounds, v: &Vec6) -> [f64; DIM] {
    bounds.project(&to_array(v))
}

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 16;

fn sequential_quadratic(
    problem: &mut Problem,
    x0: [f64; DIM],
    f0: f64,
    options: &OptimizeOptions,
    report: &mut Reporter,
) -> Result<Outcome> {
    let mut x = Vec6::from(x0);
    let mut fx = f0;
    let mut g = problem.gradient(&x0, fx, &options.gradient_step)?;
    let mut hessian = scaled_identity(&g, options.initial_step);
    let mut fresh = true;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < options.max_iter {
        if problem.projected_gradient_norm(&x, &g) < options.tol {
            converged = true;
            break;
        }
        let lower = Vec6::from_fn(|i, _| problem.bounds.lower[i] - x[i]);
        let upper = Vec6::from_fn(|i, _| problem.bounds.upper[i] - x[i]);
        let d = solve_box_qp(&hessian, &g, &lower, &upper);
        let slope = g.dot(&d);
        let accepted = if slope < 0.0 {
            backtrack(problem, &x, fx, &d, slope)?
        } else {
            None
        };
        let Some((x_new, f_new)) = accepted else {
            if fresh {
                converged = true;
                break;
            }
            // retry once from a fresh curvature model before giving up
            hessian = scaled_identity(&g, options.initial_step);
            fresh = true;
            continue;
        };
        iterations += 1;
        let g_new = problem.gradient(&to_array(&x_new), f_new, &options.gradient_step)?;
        damped_bfgs_update(&mut hessian, &(x_new - x), &(g_new - g));
        let stepped_fresh = fresh;
        fresh = false;
        let improvement = fx - f_new;
        x = x_new;
        fx = f_new;
        g = g_new;
        report(problem, iterations);
        if improvement < options.tol {
            if stepped_fresh {
                converged = true;
                break;
            }
            // a stale model can stall on a slope; confirm with a fresh one
            hessian = scaled_identity(&g, options.initial_step);
            fresh = true;
        }
    }
    Ok(Outcome {
        iterations,
        converged,
    })
}

fn scaled_identity(g: &Vec6, step: f64) -> Mat6 {
    let scale = (g.norm() / step).max(1e-8);
    Mat6::identity() * scale
}

/// Armijo backtracking from the full step; `None` when no sufficient
/// decrease is found.
fn backtrack(
    problem: &mut Problem,
    x: &Vec6,
    fx: f64,
    d: &Vec6,
    slope: f64,
) -> Result<Option<(Vec6, f64)>> {
    let mut alpha = 1.0;
    for _ in 0..MAX_BACKTRACKS {
        let trial = clamp_into(&problem.bounds, &(x + d * alpha));
        let ft = problem.eval(&trial)?;
        if ft <= fx + ARMIJO * alpha * slope {
            return Ok(Some((Vec6::from(trial), ft)));
        }
        alpha *= 0.5;
    }
    Ok(None)
}

/// Powell-damped BFGS update keeping the model positive definite.
fn damped_bfgs_update(b: &mut Mat6, s: &Vec6, y: &Vec6) {
    let bs = *b * s;
    let sbs = s.dot(&bs);
    if !(sbs > 1e-300) {
        return;
    }
    let sy = s.dot(y);
    let r = if sy >= 0.2 * sbs {
        *y
    } else {
        let t = 0.8 * sbs / (sbs - sy);
        y * t + bs * (1.0 - t)
    };
    let sr = s.dot(&r);
    if !(sr > 1e-300) {
        return;
    }
    *b += r * r.transpose() / sr - bs * bs.transpose() / sbs;
}

/// Minimizes `gᵀd + ½dᵀBd` subject to `lower ≤ d ≤ upper` with a primal
/// active-set method. `B` must be positive definite and `0` feasible.
pub(crate) fn solve_box_qp(b: &Mat6, g: &Vec6, lower: &Vec6, upper: &Vec6) -> Vec6 {
    #[derive(Clone, Copy, PartialEq)]
    enum State {
        Free,
        AtLower,
        AtUpper,
    }
    let mut d = Vec6::zeros();
    let mut state = [State::Free; DIM];
    for _ in 0..(8 * DIM) {
        let free: Vec<usize> = (0..DIM).filter(|&i| state[i] == State::Free).collect();
        // minimizer over the free variables with the rest held fixed
        let mut target = d;
        if !free.is_empty() {
            let nf = free.len();
            let mut bff = nalgebra::DMatrix::<f64>::zeros(nf, nf);
            let mut rhs = nalgebra::DVector::<f64>::zeros(nf);
            for (a, &i) in free.iter().enumerate() {
                for (c, &j) in free.iter().enumerate() {
                    bff[(a, c)] = b[(i, j)];
                }
                let mut r = -g[i];
                for j in 0..DIM {
                    if state[j] != State::Free {
                        r -= b[(i, j)] * d[j];
                    }
                }
                rhs[a] = r;
            }
            let sol = bff
                .cholesky()
                .map(|c| c.solve(&rhs))
                .unwrap_or_else(|| rhs.clone());
            for (a, &i) in free.iter().enumerate() {
                target[i] = sol[a];
            }
        }
        let p = target - d;
        if p.amax() <= 1e-15 * (1.0 + d.amax()) {
            // stationary on the working set; check multiplier signs
            let grad = g + b * d;
            let mut worst = None;
            let mut worst_val = 0.0;
            for i in 0..DIM {
                let wrong = match state[i] {
                    State::AtLower => -grad[i],
                    State::AtUpper => grad[i],
                    State::Free => 0.0,
                };
                if wrong > worst_val {
                    worst_val = wrong;
                    worst = Some(i);
                }
            }
            match worst {
                Some(i) => state[i] = State::Free,
                None => return d,
            }
            continue;
        }
        let mut alpha = 1.0;
        let mut blocking = None;
        for &i in &free {
            if p[i] > 0.0 && d[i] + p[i] > upper[i] {
                let a = (upper[i] - d[i]) / p[i];
                if a < alpha {
                    alpha = a;
                    blocking = Some((i, State::AtUpper));
                }
            } else if p[i] < 0.0 && d[i] + p[i] < lower[i] {
                let a = (lower[i] - d[i]) / p[i];
                if a < alpha {
                    alpha = a;
                    blocking = Some((i, State::AtLower));
                }
            }
        }
        d += p * alpha.max(0.0);
        if let Some((i, s)) = blocking {
            state[i] = s;
            d[i] = if s == State::AtUpper { upper[i] } else { lower[i] };
        }
    }
    d.zip_zip_map(lower, upper, |v, l, u| v.clamp(l, u))
}

const LBFGS_MEMORY: usize = 8;

fn quasi_newton(
    problem: &mut Problem,
    x0: [f64; DIM],
    f0: f64,
    options: &OptimizeOptions,
    report: &mut Reporter,
) -> Result<Outcome> {
    let mut x = Vec6::from(x0);
    let mut fx = f0;
    let mut g = problem.gradient(&x0, fx, &options.gradient_step)?;
    let mut memory: Vec<(Vec6, Vec6)> = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < options.max_iter {
        if problem.projected_gradient_norm(&x, &g) < options.tol {
            converged = true;
            break;
        }
        let eps = 1e-12;
        let free = Vec6::from_fn(|i, _| {
            let at_lower = x[i] <= problem.bounds.lower[i] + eps && g[i] > 0.0;
            let at_upper = x[i] >= problem.bounds.upper[i] - eps && g[i] < 0.0;
            if at_lower || at_upper {
                0.0
            } else {
                1.0
            }
        });
        let q = g.component_mul(&free);
        let mut d = if memory.is_empty() {
            -q * (options.initial_step / q.norm().max(1e-300))
        } else {
            -two_loop(&memory, &q, &free)
        };
        if g.dot(&d) >= 0.0 {
            memory.clear();
            d = -q * (options.initial_step / q.norm().max(1e-300));
        }
        let stepped_fresh = memory.is_empty();
        let accepted = projected_backtrack(problem, &x, fx, &g, &d)?;
        let Some((x_new, f_new)) = accepted else {
            if memory.is_empty() {
                converged = true;
                break;
            }
            memory.clear();
            continue;
        };
        iterations += 1;
        let g_new = problem.gradient(&to_array(&x_new), f_new, &options.gradient_step)?;
        let s = x_new - x;
        let y = g_new - g;
        if s.dot(&y) > 1e-10 * y.norm_squared().max(1e-300) {
            if memory.len() == LBFGS_MEMORY {
                memory.remove(0);
            }
            memory.push((s, y));
        }
        let improvement = fx - f_new;
        x = x_new;
        fx = f_new;
        g = g_new;
        report(problem, iterations);
        if improvement < options.tol {
            if stepped_fresh {
                converged = true;
                break;
            }
            memory.clear();
        }
    }
    Ok(Outcome {
        iterations,
        converged,
    })
}

/// Inverse-Hessian product restricted to the free variables.
fn two_loop(memory: &[(Vec6, Vec6)], q: &Vec6, free: &Vec6) -> Vec6 {
    let pairs: Vec<(Vec6, Vec6, f64)> = memory
        .iter()
        .filter_map(|(s, y)| {
            let (s, y) = (s.component_mul(free), y.component_mul(free));
            let sy = s.dot(&y);
            (sy > 1e-300).then(|| (s, y, 1.0 / sy))
        })
        .collect();
    let Some((s_last, y_last, _)) = pairs.last() else {
        return *q;
    };
    let gamma = s_last.dot(y_last) / y_last.norm_squared();
    let mut r = *q;
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y, rho) in pairs.iter().rev() {
        let a = rho * s.dot(&r);
        r -= y * a;
        alphas.push(a);
    }
    r *= gamma;
    for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
        let beta = rho * y.dot(&r);
        r += s * (a - beta);
    }
    r.component_mul(free)
}

fn projected_backtrack(
    problem: &mut Problem,
    x: &Vec6,
    fx: f64,
    g: &Vec6,
    d: &Vec6,
) -> Result<Option<(Vec6, f64)>> {
    let mut alpha = 1.0;
    for _ in 0..MAX_BACKTRACKS {
        let trial = Vec6::from(clamp_into(&problem.bounds, &(x + d * alpha)));
        let decrease = g.dot(&(trial - x));
        if decrease >= 0.0 {
            alpha *= 0.5;
            continue;
        }
        let ft = problem.eval(&to_array(&trial))?;
        if ft <= fx + ARMIJO * decrease {
            return Ok(Some((trial, ft)));
        }
        alpha *= 0.5;
    }
    Ok(None)
}

const GOLDEN: f64 = 1.618_033_988_749_895;
const CGOLD: f64 = 0.381_966_011_250_105;
const LINE_MAX_EVALS: usize = 60;

fn pattern_search(
    problem: &mut Problem,
    x0: [f64; DIM],
    f0: f64,
    options: &OptimizeOptions,
    report: &mut Reporter,
) -> Result<Outcome> {
    let mut directions: Vec<Vec6> = (0..DIM)
        .map(|i| Vec6::from_fn(|j, _| if i == j { 1.0 } else { 0.0 }))
        .collect();
    let mut x = Vec6::from(x0);
    let mut fx = f0;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < options.max_iter {
        let x_start = x;
        let f_start = fx;
        let mut biggest = (0usize, 0.0f64);
        for (i, dir) in directions.iter().enumerate() {
            let before = fx;
            let (xn, fnew) = line_minimize(problem, &x, fx, dir, options.initial_step)?;
            x = xn;
            fx = fnew;
            if before - fx > biggest.1 {
                biggest = (i, before - fx);
            }
        }
        iterations += 1;
        let improvement = f_start - fx;
        if improvement < options.tol {
            report(problem, iterations);
            converged = true;
            break;
        }
        let shift = x - x_start;
        let norm = shift.norm();
        if norm > 0.0 {
            // Powell's test for replacing the direction of largest decrease
            let extrapolated = clamp_into(&problem.bounds, &(x + shift));
            let fe = problem.eval(&extrapolated)?;
            if fe < f_start {
                let t = 2.0 * (f_start - 2.0 * fx + fe) * (f_start - fx - biggest.1).powi(2)
                    - biggest.1 * (f_start - fe).powi(2);
                if t < 0.0 {
                    let dir = shift / norm;
                    let (xn, fnew) = line_minimize(problem, &x, fx, &dir, options.initial_step)?;
                    x = xn;
                    fx = fnew;
                    directions.remove(biggest.0);
                    directions.push(dir);
                }
            }
        }
        report(problem, iterations);
    }
    Ok(Outcome {
        iterations,
        converged,
    })
}

/// Minimizes along `x + a·dir` within the box: downhill bracketing with
/// golden-ratio growth, then Brent's method.
fn line_minimize(
    problem: &mut Problem,
    x: &Vec6,
    fx: f64,
    dir: &Vec6,
    initial_step: f64,
) -> Result<(Vec6, f64)> {
    let (lo, hi) = feasible_interval(&problem.bounds, x, dir);
    if hi - lo <= 0.0 {
        return Ok((*x, fx));
    }
    let mut evals = 0usize;
    let eval_at = |problem: &mut Problem, evals: &mut usize, a: f64| -> Result<f64> {
        *evals += 1;
        problem.eval(&clamp_into(&problem.bounds, &(x + dir * a)))
    };

    let step = initial_step.min(hi - lo);
    let forward = step.min(hi);
    let backward = (-step).max(lo);
    let mut downhill = None;
    let mut f_forward = f64::INFINITY;
    let mut f_backward = f64::INFINITY;
    if forward > 0.0 {
        f_forward = eval_at(problem, &mut evals, forward)?;
        if f_forward < fx {
            downhill = Some((forward, f_forward));
        }
    }
    if downhill.is_none() && backward < 0.0 {
        f_backward = eval_at(problem, &mut evals, backward)?;
        if f_backward < fx {
            downhill = Some((backward, f_backward));
        }
    }
    let (mut left, mut right, mut best, mut fbest);
    if let Some((mut b, mut fb)) = downhill {
        // expand downhill until the function rises or the box ends
        let mut a = 0.0;
        let limit = if b > 0.0 { hi } else { lo };
        let mut c = (b + GOLDEN * (b - a)).clamp(lo, hi);
        let mut fc = eval_at(problem, &mut evals, c)?;
        while fc < fb && c != limit && evals < LINE_MAX_EVALS {
            a = b;
            b = c;
            fb = fc;
            c = (b + GOLDEN * (b - a)).clamp(lo, hi);
            fc = eval_at(problem, &mut evals, c)?;
        }
        if fc < fb {
            return Ok((Vec6::from(clamp_into(&problem.bounds, &(x + dir * c))), fc));
        }
        left = a.min(c);
        right = a.max(c);
        best = b;
        fbest = fb;
    } else {
        // both neighbours are no better: the minimum is bracketed around 0
        left = if f_backward.is_finite() { backward } else { 0.0 };
        right = if f_forward.is_finite() { forward } else { 0.0 };
        best = 0.0;
        fbest = fx;
    }

    // Brent's method on [left, right] with `best` as the incumbent
    let tol_abs = 1e-9;
    let (mut w, mut v) = (best, best);
    let (mut fw, mut fv) = (fbest, fbest);
    let (mut e, mut dstep) = (0.0f64, 0.0f64);
    while evals < LINE_MAX_EVALS {
        let mid = 0.5 * (left + right);
        let tol1 = 1.5e-8 * best.abs() + tol_abs;
        let tol2 = 2.0 * tol1;
        if (best - mid).abs() <= tol2 - 0.5 * (right - left) {
            break;
        }
        let mut use_golden = true;
        if e.abs() > tol1 {
            let r = (best - w) * (fbest - fv);
            let mut q = (best - v) * (fbest - fw);
            let mut p = (best - v) * q - (best - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let e_prev = e;
            if p.abs() < (0.5 * q * e_prev).abs() && p > q * (left - best) && p < q * (right - best) {
                e = dstep;
                dstep = p / q;
                let u = best + dstep;
                if u - left < tol2 || right - u < tol2 {
                    dstep = if mid >= best { tol1 } else { -tol1 };
                }
                use_golden = false;
            }
        }
        if use_golden {
            e = if best >= mid { left - best } else { right - best };
            dstep = CGOLD * e;
        }
        let u = if dstep.abs() >= tol1 {
            best + dstep
        } else {
            best + tol1.copysign(dstep)
        };
        let fu = eval_at(problem, &mut evals, u)?;
        if fu <= fbest {
            if u >= best {
                left = best;
            } else {
                right = best;
            }
            v = w;
            fv = fw;
            w = best;
            fw = fbest;
            best = u;
            fbest = fu;
        } else {
            if u < best {
                left = u;
            } else {
                right = u;
            }
            if fu <= fw || w == best {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == best || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    Ok((Vec6::from(clamp_into(&problem.bounds, &(x + dir * best))), fbest))
}

/// Range of `a` keeping `x + a·dir` inside the box.
fn feasible_interval(bounds: &Bounds, x: &Vec6, dir: &Vec6) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for i in 0..DIM {
        if dir[i].abs() < 1e-15 {
            continue;
        }
        let a = (bounds.lower[i] - x[i]) / dir[i];
        let b = (bounds.upper[i] - x[i]) / dir[i];
        lo = lo.max(a.min(b));
        hi = hi.min(a.max(b));
    }
    (lo.min(0.0), hi.max(0.0))
}
