//! Contrast maximisation over the velocity plane.
//!
//! [`estimate_trajectory`] runs a bounded Nelder-Mead simplex from several
//! random starts. [`grid_search`] evaluates the same objective exhaustively
//! on a uniform grid and serves as an independent check.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event::EventWindow;
use crate::warp::{
    accumulate_into, reference_time, variance_objective, Accumulation, CountImage, Velocity,
};

const REFLECTION: f64 = 1.0;
const EXPANSION: f64 = 2.0;
const CONTRACTION: f64 = 0.5;
const SHRINK: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    /// Half-width of the search box on each axis, px/s.
    pub v_max: f64,
    pub n_restarts: usize,
    /// Edge length of the initial simplex, px/s.
    pub simplex_init_scale: f64,
    /// Relative objective spread at which a restart stops.
    pub f_tol: f64,
    /// Simplex diameter (px/s) at which a restart stops.
    pub x_tol: f64,
    pub max_iters: usize,
    pub seed: u64,
    pub accumulation: Accumulation,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            v_max: 500.0,
            n_restarts: 5,
            simplex_init_scale: 50.0,
            f_tol: 1e-6,
            x_tol: 0.01,
            max_iters: 200,
            seed: 0,
            accumulation: Accumulation::Signed,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("v_max", self.v_max),
            ("simplex_init_scale", self.simplex_init_scale),
            ("f_tol", self.f_tol),
            ("x_tol", self.x_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if self.n_restarts == 0 {
            return Err(Error::InvalidParameter("n_restarts must be >= 1".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub theta_star: Velocity,
    pub f_star: f64,
    pub iterations: usize,
    pub restarts_used: usize,
    pub converged: bool,
}

/// Contrast objective bound to one window, with a reusable image buffer.
pub struct ContrastObjective<'a> {
    window: &'a EventWindow,
    t_ref: f64,
    mode: Accumulation,
    scratch: CountImage,
}

impl<'a> ContrastObjective<'a> {
    pub fn new(window: &'a EventWindow, mode: Accumulation) -> Result<Self> {
        let t_ref = reference_time(window)?;
        Ok(Self {
            window,
            t_ref,
            mode,
            scratch: CountImage::zeros(window.geometry(), t_ref),
        })
    }

    pub fn t_ref(&self) -> f64 {
        self.t_ref
    }

    pub fn eval(&mut self, theta: Velocity) -> f64 {
        accumulate_into(
            &mut self.scratch,
            self.window.events(),
            theta,
            self.t_ref,
            self.mode,
        );
        variance_objective(&self.scratch)
    }
}

fn check_identifiable(window: &EventWindow) -> Result<()> {
    if window.len() < 2 {
        return Err(Error::TooFewEvents(window.len()));
    }
    let events = window.events();
    if events[events.len() - 1].t - events[0].t <= 0.0 {
        return Err(Error::ZeroTimeSpan);
    }
    Ok(())
}

/// Which move closed a simplex iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimplexStep {
    Reflect,
    Expand,
    ContractOutside,
    ContractInside,
    Shrink,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IterationRecord {
    pub step: SimplexStep,
    pub evaluations: usize,
}

#[derive(Debug, Clone)]
pub struct SimplexOutcome {
    pub best: [f64; 2],
    pub f_best: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub trace: Vec<IterationRecord>,
}

#[derive(Debug, Clone, Copy)]
pub struct SimplexSettings {
    /// Box half-width. Trial points outside `[-bound, bound]^2` score
    /// negative infinity without calling the objective.
    pub bound: f64,
    pub init_scale: f64,
    pub f_tol: f64,
    pub x_tol: f64,
    pub max_iters: usize,
}

#[derive(Clone, Copy)]
struct Vertex {
    x: [f64; 2],
    f: f64,
}

/// Maximises `f` over the box with Nelder-Mead, starting from `x0`.
///
/// A non-shrink iteration evaluates one or two trial points; a shrink adds
/// one evaluation per non-best vertex.
pub fn nelder_mead_maximize<F>(mut f: F, x0: [f64; 2], settings: &SimplexSettings) -> SimplexOutcome
where
    F: FnMut([f64; 2]) -> f64,
{
    let b = settings.bound;
    let project = |p: [f64; 2]| [p[0].clamp(-b, b), p[1].clamp(-b, b)];
    let mut evaluations = 0usize;
    // projecting trial points instead would flatten the simplex against a wall
    let mut eval = |p: [f64; 2], evaluations: &mut usize| {
        if p[0].abs() > b || p[1].abs() > b {
            return f64::NEG_INFINITY;
        }
        *evaluations += 1;
        f(p)
    };

    let x0 = project(x0);
    let mut simplex: Vec<Vertex> = Vec::with_capacity(3);
    simplex.push(Vertex {
        x: x0,
        f: eval(x0, &mut evaluations),
    });
    for axis in 0..2 {
        let mut p = x0;
        // step away from the nearer wall so the simplex never collapses
        p[axis] += if x0[axis] + settings.init_scale <= b {
            settings.init_scale
        } else {
            -settings.init_scale
        };
        let p = project(p);
        simplex.push(Vertex {
            x: p,
            f: eval(p, &mut evaluations),
        });
    }

    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < settings.max_iters {
        // best first; stable so equal values keep their order
        simplex.sort_by(|a, b| b.f.total_cmp(&a.f));
        if has_converged(&simplex, settings) {
            converged = true;
            break;
        }
        iterations += 1;
        let before = evaluations;
        let (best, second, worst) = (simplex[0], simplex[1], simplex[2]);
        let centroid = [
            (best.x[0] + second.x[0]) / 2.0,
            (best.x[1] + second.x[1]) / 2.0,
        ];
        let along = |coef: f64, from: [f64; 2]| {
            [
                centroid[0] + coef * (from[0] - centroid[0]),
                centroid[1] + coef * (from[1] - centroid[1]),
            ]
        };

        let xr = along(-REFLECTION, worst.x);
        let fr = eval(xr, &mut evaluations);
        let step = if fr > best.f {
            let xe = along(EXPANSION, xr);
            let fe = eval(xe, &mut evaluations);
            if fe > fr {
                simplex[2] = Vertex { x: xe, f: fe };
            } else {
                simplex[2] = Vertex { x: xr, f: fr };
            }
            SimplexStep::Expand
        } else if fr > second.f {
            simplex[2] = Vertex { x: xr, f: fr };
            SimplexStep::Reflect
        } else {
            let (xc, outside) = if fr > worst.f {
                (along(CONTRACTION, xr), true)
            } else {
                (along(CONTRACTION, worst.x), false)
            };
            let fc = eval(xc, &mut evaluations);
            let accept = if outside { fc >= fr } else { fc > worst.f };
            if accept {
                simplex[2] = Vertex { x: xc, f: fc };
                if outside {
                    SimplexStep::ContractOutside
                } else {
                    SimplexStep::ContractInside
                }
            } else {
                for v in simplex.iter_mut().skip(1) {
                    let x = [
                        best.x[0] + SHRINK * (v.x[0] - best.x[0]),
                        best.x[1] + SHRINK * (v.x[1] - best.x[1]),
                    ];
                    *v = Vertex {
                        x,
                        f: eval(x, &mut evaluations),
                    };
                }
                SimplexStep::Shrink
            }
        };
        trace.push(IterationRecord {
            step,
            evaluations: evaluations - before,
        });
    }
    simplex.sort_by(|a, b| b.f.total_cmp(&a.f));
    if !converged && has_converged(&simplex, settings) {
        converged = true;
    }
    SimplexOutcome {
        best: simplex[0].x,
        f_best: simplex[0].f,
        iterations,
        evaluations,
        converged,
        trace,
    }
}

fn has_converged(sorted: &[Vertex], s: &SimplexSettings) -> bool {
    let mut diameter: f64 = 0.0;
    for i in 0..sorted.len() {
        for j in i + 1..sorted.len() {
            let d = (sorted[i].x[0] - sorted[j].x[0]).hypot(sorted[i].x[1] - sorted[j].x[1]);
            diameter = diameter.max(d);
        }
    }
    let spread = sorted[0].f - sorted[sorted.len() - 1].f;
    diameter < s.x_tol || spread <= s.f_tol * sorted[0].f.abs()
}

/// Start point of restart `index`; independent of how restarts are scheduled.
fn restart_start(seed: u64, index: usize, v_max: f64) -> [f64; 2] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    [
        rng.random_range(-v_max..=v_max),
        rng.random_range(-v_max..=v_max),
    ]
}

/// Multi-start Nelder-Mead estimate of the velocity maximising contrast.
pub fn estimate_trajectory(window: &EventWindow, cfg: &OptimizerConfig) -> Result<OptimizationResult> {
    cfg.validate()?;
    check_identifiable(window)?;
    // fail early on an empty window before spawning work
    ContrastObjective::new(window, cfg.accumulation)?;

    let settings = SimplexSettings {
        bound: cfg.v_max,
        init_scale: cfg.simplex_init_scale,
        f_tol: cfg.f_tol,
        x_tol: cfg.x_tol,
        max_iters: cfg.max_iters,
    };
    let outcomes: Vec<SimplexOutcome> = (0..cfg.n_restarts)
        .into_par_iter()
        .map(|i| {
            let mut objective =
                ContrastObjective::new(window, cfg.accumulation).expect("window checked non-empty");
            let x0 = restart_start(cfg.seed, i, cfg.v_max);
            nelder_mead_maximize(|p| objective.eval(Velocity::new(p[0], p[1])), x0, &settings)
        })
        .collect();

    // first strictly better wins, so ties resolve to the lower restart index
    let mut best = &outcomes[0];
    for o in &outcomes[1..] {
        if o.f_best > best.f_best {
            best = o;
        }
    }
    Ok(OptimizationResult {
        theta_star: Velocity::new(best.best[0], best.best[1]),
        f_star: best.f_best,
        iterations: best.iterations,
        restarts_used: cfg.n_restarts,
        converged: best.converged,
    })
}

/// The velocities visited by [`grid_search`], row-major in (vx, vy).
pub fn grid_axis(v_max: f64, steps_per_axis: usize) -> Vec<f64> {
    let last = (steps_per_axis - 1) as f64;
    (0..steps_per_axis)
        .map(|i| -v_max + i as f64 * (2.0 * v_max) / last)
        .collect()
}

/// Objective value at every grid point, indexed `[ix * steps + iy]`.
pub fn grid_landscape(
    window: &EventWindow,
    v_max: f64,
    steps_per_axis: usize,
    mode: Accumulation,
) -> Result<Vec<f64>> {
    if steps_per_axis < 2 {
        return Err(Error::InvalidParameter(format!(
            "steps_per_axis must be >= 2, got {steps_per_axis}"
        )));
    }
    if !(v_max > 0.0) || !v_max.is_finite() {
        return Err(Error::InvalidParameter(format!("v_max must be positive, got {v_max}")));
    }
    check_identifiable(window)?;
    let axis = grid_axis(v_max, steps_per_axis);
    Ok(axis
        .par_iter()
        .flat_map_iter(|&vx| {
            let mut objective =
                ContrastObjective::new(window, mode).expect("window checked non-empty");
            axis.iter()
                .map(|&vy| objective.eval(Velocity::new(vx, vy)))
                .collect::<Vec<_>>()
        })
        .collect())
}

/// Exhaustive search over a uniform grid on `[-v_max, v_max]^2`.
///
/// Ties go to the smaller speed, then to the lexicographically smaller
/// `(vx, vy)`.
pub fn grid_search(
    window: &EventWindow,
    v_max: f64,
    steps_per_axis: usize,
) -> Result<OptimizationResult> {
    grid_search_with(window, v_max, steps_per_axis, Accumulation::Signed)
}

pub fn grid_search_with(
    window: &EventWindow,
    v_max: f64,
    steps_per_axis: usize,
    mode: Accumulation,
) -> Result<OptimizationResult> {
    let values = grid_landscape(window, v_max, steps_per_axis, mode)?;
    let axis = grid_axis(v_max, steps_per_axis);
    let mut best: Option<(f64, Velocity)> = None;
    for (ix, &vx) in axis.iter().enumerate() {
        for (iy, &vy) in axis.iter().enumerate() {
            let f = values[ix * steps_per_axis + iy];
            let theta = Velocity::new(vx, vy);
            let better = match best {
                None => true,
                Some((bf, bt)) => {
                    f > bf
                        || (f == bf
                            && (theta.norm() < bt.norm()
                                || (theta.norm() == bt.norm() && (vx, vy) < (bt.vx, bt.vy))))
                }
            };
            if better {
                best = Some((f, theta));
            }
        }
    }
    let (f_star, theta_star) = best.expect("grid has at least 4 points");
    Ok(OptimizationResult {
        theta_star,
        f_star,
        iterations: steps_per_axis * steps_per_axis,
        restarts_used: 0,
        converged: true,
    })
}
