//! Derivative-free minimization with inequality constraints by linear
//! approximations (COBYLA).
//!
//! The objective and every constraint are interpolated linearly on a simplex
//! of `k + 1` vertices. Each iteration solves a linear program inside a trust
//! region around the best vertex, with constraint violation handled through
//! an adaptive penalty `f + mu * max(0, -min c)`. The new point replaces the
//! vertex whose removal keeps the simplex best conditioned. The trust radius
//! doubles after full-length steps that pay off and halves after poor ones,
//! never dropping below the resolution `rho`. Once steps stop paying off at
//! radius `rho` on a well-shaped simplex, `rho` is halved; the run ends when
//! it reaches `fractional_tolerance * initial_trust_radius`.
//!
//! Box bounds enter as `2k` additional linear constraints. The trust region
//! is a sup-norm box, which turns the subproblem into a plain LP.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::lp::{self, LpOutcome};
use crate::error::{PlsError, Result};

/// Constraint slack tolerated in the returned point.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-8;

const GEOMETRY_STEP: f64 = 0.5;
const MIN_FACE_DISTANCE: f64 = 0.25;
const MAX_VERTEX_DISTANCE: f64 = 2.1;
const FAR_VERTEX: f64 = 1.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CobylaConfig {
    pub initial_trust_radius: f64,
    /// Final radius as a fraction of the initial one.
    pub fractional_tolerance: f64,
    pub max_evaluations: usize,
}

impl Default for CobylaConfig {
    fn default() -> Self {
        Self {
            initial_trust_radius: 0.5,
            fractional_tolerance: 1e-6,
            max_evaluations: 2000,
        }
    }
}

impl CobylaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_trust_radius > 0.0) {
            return Err(PlsError::invalid("cobyla config", "initial_trust_radius must be > 0"));
        }
        if !(self.fractional_tolerance > 0.0 && self.fractional_tolerance <= 1e-2) {
            return Err(PlsError::invalid("cobyla config", "fractional_tolerance must lie in (0, 1e-2]"));
        }
        if self.max_evaluations == 0 {
            return Err(PlsError::invalid("cobyla config", "max_evaluations must be >= 1"));
        }
        Ok(())
    }
}

/// Objective value and constraint values (each required `>= 0`) at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub objective: f64,
    pub constraints: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct CobylaOutcome {
    pub argmin: DVector<f64>,
    pub value: f64,
    /// Constraint values at `argmin` (user constraints only).
    pub constraints: Vec<f64>,
    pub evaluations: usize,
    pub final_radius: f64,
}

#[derive(Debug, Clone)]
struct Vertex {
    x: DVector<f64>,
    f: f64,
    /// User constraints followed by the `2k` bound constraints.
    c: Vec<f64>,
    violation: f64,
}

impl Vertex {
    fn merit(&self, mu: f64) -> f64 {
        self.f + mu * self.violation
    }
}

struct Evaluator<'a, F> {
    problem: F,
    bounds: &'a [(f64, f64)],
    n_constraints: usize,
    evaluations: usize,
    budget: usize,
    best_feasible: Option<(DVector<f64>, f64, Vec<f64>)>,
    least_violation: f64,
}

impl<F> Evaluator<'_, F>
where
    F: FnMut(&DVector<f64>) -> Result<Evaluation>,
{
    fn eval(&mut self, x: DVector<f64>) -> Result<Vertex> {
        if self.evaluations >= self.budget {
            return Err(PlsError::MaxEvaluations { budget: self.budget });
        }
        self.evaluations += 1;
        let e = (self.problem)(&x)?;
        if e.constraints.len() != self.n_constraints {
            return Err(PlsError::DimensionMismatch {
                expected: self.n_constraints,
                found: e.constraints.len(),
            });
        }
        if !e.objective.is_finite() || e.constraints.iter().any(|c| !c.is_finite()) {
            return Err(PlsError::NonFiniteObjective {
                point: x.as_slice().to_vec(),
            });
        }
        let mut c = e.constraints.clone();
        for (i, &(lo, hi)) in self.bounds.iter().enumerate() {
            c.push(x[i] - lo);
            c.push(hi - x[i]);
        }
        let violation = c.iter().fold(0.0f64, |v, &ci| v.max(-ci));
        self.least_violation = self.least_violation.min(violation);
        if violation <= FEASIBILITY_TOLERANCE {
            let better = match &self.best_feasible {
                None => true,
                Some((_, f, _)) => e.objective < *f,
            };
            if better {
                self.best_feasible = Some((x.clone(), e.objective, e.constraints));
            }
        }
        Ok(Vertex {
            x,
            f: e.objective,
            c,
            violation,
        })
    }
}

/// Minimizes subject to `constraints(x) >= 0` and `bounds`, with objective
/// and constraints supplied by one callback.
///
/// The returned point is the best evaluated point whose constraints (bounds
/// included) all hold within [`FEASIBILITY_TOLERANCE`].
pub fn cobyla_minimize<F>(
    problem: F,
    n_constraints: usize,
    start: &DVector<f64>,
    bounds: &[(f64, f64)],
    config: &CobylaConfig,
) -> Result<CobylaOutcome>
where
    F: FnMut(&DVector<f64>) -> Result<Evaluation>,
{
    config.validate()?;
    let k = start.len();
    if k == 0 {
        return Err(PlsError::invalid("cobyla", "need at least one variable"));
    }
    if bounds.len() != k {
        return Err(PlsError::DimensionMismatch {
            expected: k,
            found: bounds.len(),
        });
    }
    for (i, &(lo, hi)) in bounds.iter().enumerate() {
        if !(lo <= hi) {
            return Err(PlsError::invalid("cobyla bounds", format!("empty interval on coordinate {i}")));
        }
        if start[i] < lo || start[i] > hi {
            return Err(PlsError::invalid("cobyla start", format!("coordinate {i} outside its bounds")));
        }
    }

    let mut ev = Evaluator {
        problem,
        bounds,
        n_constraints,
        evaluations: 0,
        budget: config.max_evaluations,
        best_feasible: None,
        least_violation: f64::INFINITY,
    };
    let rho_end = config.fractional_tolerance * config.initial_trust_radius;
    let rho = search(&mut ev, k, start, config.initial_trust_radius, rho_end)?;

    match ev.best_feasible {
        Some((argmin, value, constraints)) => Ok(CobylaOutcome {
            argmin,
            value,
            constraints,
            evaluations: ev.evaluations,
            final_radius: rho,
        }),
        None => Err(PlsError::Infeasible {
            max_violation: ev.least_violation,
        }),
    }
}

/// Convenience form with separate objective and constraint closures.
pub fn cobyla_minimize_fn(
    objective: impl Fn(&DVector<f64>) -> f64,
    constraints: &[&dyn Fn(&DVector<f64>) -> f64],
    start: &DVector<f64>,
    bounds: &[(f64, f64)],
    config: &CobylaConfig,
) -> Result<CobylaOutcome> {
    cobyla_minimize(
        |x| {
            Ok(Evaluation {
                objective: objective(x),
                constraints: constraints.iter().map(|c| c(x)).collect(),
            })
        },
        constraints.len(),
        start,
        bounds,
        config,
    )
}

fn search<F>(
    ev: &mut Evaluator<'_, F>,
    k: usize,
    start: &DVector<f64>,
    rho_begin: f64,
    rho_end: f64,
) -> Result<f64>
where
    F: FnMut(&DVector<f64>) -> Result<Evaluation>,
{
    let mut rho = rho_begin;
    // trust radius; never below rho, may grow again after good steps
    let mut delta = rho_begin;
    let mut mu = 0.0f64;
    let mut simplex = Vec::with_capacity(k + 1);
    simplex.push(ev.eval(start.clone())?);
    for i in 0..k {
        let mut x = start.clone();
        x[i] += rho;
        simplex.push(ev.eval(x)?);
    }
    let mut check_geometry = false;

    loop {
        pivot_best(&mut simplex, mu);
        let x0 = simplex[0].x.clone();
        let dmat = DMatrix::from_fn(k, k, |r, j| simplex[j + 1].x[r] - x0[r]);
        let Some(dinv) = dmat.try_inverse() else {
            // degenerate simplex: rebuild around the best vertex
            for i in 0..k {
                let mut x = x0.clone();
                x[i] += rho;
                simplex[i + 1] = ev.eval(x)?;
            }
            continue;
        };

        if check_geometry {
            check_geometry = false;
            if let Some(l) = worst_vertex(&simplex, &dinv, delta) {
                geometry_step(ev, &mut simplex, &dinv, l, delta, mu)?;
                continue;
            }
            if delta > rho {
                delta = (0.5 * delta).max(rho);
                continue;
            }
            if rho <= rho_end {
                return Ok(rho);
            }
            rho *= 0.5;
            if rho <= 1.5 * rho_end {
                rho = rho_end;
            }
            delta = rho;
            continue;
        }

        let (gf, gc) = linear_models(&simplex, &dinv);
        let v0 = &simplex[0];
        let step = trust_region_step(&gf, &gc, &v0.c, delta);
        let step_len = step.amax();
        if step_len < 0.5 * rho {
            check_geometry = true;
            continue;
        }

        let predicted_violation = v0
            .c
            .iter()
            .zip(&gc)
            .fold(0.0f64, |v, (&c, g)| v.max(-(c + g.dot(&step))));
        let dv = v0.violation - predicted_violation;
        let df = -gf.dot(&step);
        if dv > 0.0 {
            let barmu = (-df / dv).max(0.0);
            if mu < 1.5 * barmu {
                mu = 2.0 * barmu;
                if best_index(&simplex, mu) != 0 {
                    continue;
                }
            }
        }
        let predicted = df + mu * dv;
        if !(predicted > 0.0) {
            check_geometry = true;
            continue;
        }

        let new = ev.eval(&x0 + &step)?;
        let actual = simplex[0].merit(mu) - new.merit(mu);

        // Pick the vertex to drop: large |coefficient| keeps the simplex
        // volume, distant vertices are preferred.
        let coeffs = &dinv * &step;
        let mut best: Option<(usize, f64)> = None;
        for j in 0..k {
            let anchor = if actual > 0.0 { &new.x } else { &x0 };
            let dist = (&simplex[j + 1].x - anchor).amax();
            let w = (dist / (FAR_VERTEX * delta)).max(1.0).powi(2);
            let score = coeffs[j].abs() * w;
            if best.map_or(true, |(_, s)| score > s) {
                best = Some((j + 1, score));
            }
        }
        if let Some((j, score)) = best {
            if actual > 0.0 || score > 1.0 {
                simplex[j] = new;
            }
        }
        if actual < 0.1 * predicted {
            check_geometry = true;
        } else if actual > 0.7 * predicted && step_len > 0.9 * delta {
            delta = (2.0 * delta).min(rho_begin);
        }
    }
}

fn best_index(simplex: &[Vertex], mu: f64) -> usize {
    let mut best = 0;
    for (i, v) in simplex.iter().enumerate().skip(1) {
        let (mb, mv) = (simplex[best].merit(mu), v.merit(mu));
        if mv < mb || (mv == mb && v.violation < simplex[best].violation) {
            best = i;
        }
    }
    best
}

fn pivot_best(simplex: &mut [Vertex], mu: f64) {
    let b = best_index(simplex, mu);
    if b != 0 {
        simplex.swap(0, b);
    }
}

/// Gradients of the linear interpolants of the objective and each constraint.
fn linear_models(simplex: &[Vertex], dinv: &DMatrix<f64>) -> (DVector<f64>, Vec<DVector<f64>>) {
    let k = dinv.nrows();
    let v0 = &simplex[0];
    let df = DVector::from_fn(k, |j, _| simplex[j + 1].f - v0.f);
    let gf = dinv.tr_mul(&df);
    let gc = (0..v0.c.len())
        .map(|m| {
            let dc = DVector::from_fn(k, |j, _| simplex[j + 1].c[m] - v0.c[m]);
            dinv.tr_mul(&dc)
        })
        .collect();
    (gf, gc)
}

/// Vertex to move for a geometry step, or `None` when the simplex is
/// acceptable at radius `rho`.
fn worst_vertex(simplex: &[Vertex], dinv: &DMatrix<f64>, rho: f64) -> Option<usize> {
    let k = dinv.nrows();
    let x0 = &simplex[0].x;
    let mut far: Option<(usize, f64)> = None;
    for j in 0..k {
        let d = (&simplex[j + 1].x - x0).amax();
        if d > MAX_VERTEX_DISTANCE * rho && far.map_or(true, |(_, best)| d > best) {
            far = Some((j, d));
        }
    }
    if let Some((j, _)) = far {
        return Some(j);
    }
    let mut flat: Option<(usize, f64)> = None;
    for j in 0..k {
        let face = 1.0 / dinv.row(j).norm();
        if face < MIN_FACE_DISTANCE * rho && flat.map_or(true, |(_, best)| face < best) {
            flat = Some((j, face));
        }
    }
    flat.map(|(j, _)| j)
}

/// Replaces vertex `l + 1` by a point at distance `GEOMETRY_STEP * rho` from
/// the best vertex, along the normal of the opposite face.
fn geometry_step<F>(
    ev: &mut Evaluator<'_, F>,
    simplex: &mut [Vertex],
    dinv: &DMatrix<f64>,
    l: usize,
    rho: f64,
    mu: f64,
) -> Result<()>
where
    F: FnMut(&DVector<f64>) -> Result<Evaluation>,
{
    let normal = dinv.row(l).transpose();
    let dir = &normal * (GEOMETRY_STEP * rho / normal.norm());
    let (gf, gc) = linear_models(simplex, dinv);
    let v0 = &simplex[0];
    let predict = |s: &DVector<f64>| {
        let viol = v0
            .c
            .iter()
            .zip(&gc)
            .fold(0.0f64, |v, (&c, g)| v.max(-(c + g.dot(s))));
        gf.dot(s) + mu * viol
    };
    let minus = -dir.clone();
    let step = if predict(&minus) < predict(&dir) { minus } else { dir };
    let x = &v0.x + step;
    simplex[l + 1] = ev.eval(x)?;
    Ok(())
}

/// Lexicographic trust-region LP: first minimize the largest predicted
/// constraint violation, then the objective model without letting that
/// violation grow. Variables are scaled by `rho` and split into positive and
/// negative parts so a zero step is the natural starting vertex.
fn trust_region_step(gf: &DVector<f64>, gc: &[DVector<f64>], c0: &[f64], rho: f64) -> DVector<f64> {
    let k = gf.len();
    let m = gc.len();
    // variables: w+ (k), w- (k), tau; step = rho (w+ - w-)
    let nv = 2 * k + 1;
    let mut a = Vec::with_capacity(m + 2 * k);
    let mut b = Vec::with_capacity(m + 2 * k);
    for (g, &c) in gc.iter().zip(c0) {
        // c + rho g.w + rho tau >= 0  ->  -g.w+ + g.w- - tau <= c / rho
        let mut row = vec![0.0; nv];
        for i in 0..k {
            row[i] = -g[i];
            row[k + i] = g[i];
        }
        row[2 * k] = -1.0;
        a.push(row);
        b.push(c / rho);
    }
    for i in 0..2 * k {
        let mut row = vec![0.0; nv];
        row[i] = 1.0;
        a.push(row);
        b.push(1.0);
    }
    let mut cost = vec![0.0; nv];
    cost[2 * k] = 1.0;
    let tau = match lp::solve(&cost, &a, &b) {
        LpOutcome::Optimal { value, .. } => value.max(0.0),
        _ => return DVector::zeros(k),
    };

    // phase two: tau fixed, drop its column
    let slack = tau + 1e-12 * (1.0 + tau);
    let a2: Vec<Vec<f64>> = a.iter().map(|r| r[..2 * k].to_vec()).collect();
    let mut b2 = b.clone();
    for bj in b2.iter_mut().take(m) {
        *bj += slack;
    }
    let gscale = gf.amax().max(f64::MIN_POSITIVE);
    let mut cost2 = vec![0.0; 2 * k];
    for i in 0..k {
        cost2[i] = gf[i] / gscale;
        cost2[k + i] = -gf[i] / gscale;
    }
    match lp::solve(&cost2, &a2, &b2) {
        LpOutcome::Optimal { x, .. } => DVector::from_fn(k, |i, _| rho * (x[i] - x[k + i])),
        _ => DVector::zeros(k),
    }
}
