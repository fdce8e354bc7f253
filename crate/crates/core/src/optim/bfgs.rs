//! BFGS with an inverse-Hessian update and backtracking Armijo line search.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{PlsError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BfgsConfig {
    /// Stop once the gradient sup-norm is at most this.
    pub gradient_tolerance: f64,
    pub max_iterations: usize,
    /// Armijo sufficient-decrease constant.
    pub armijo_c1: f64,
    /// Step shrink factor applied on each rejected trial.
    pub shrink: f64,
}

impl Default for BfgsConfig {
    fn default() -> Self {
        Self {
            gradient_tolerance: 1e-6,
            max_iterations: 500,
            armijo_c1: 1e-4,
            shrink: 0.5,
        }
    }
}

impl BfgsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gradient_tolerance > 0.0) {
            return Err(PlsError::invalid("bfgs config", "gradient_tolerance must be > 0"));
        }
        if self.max_iterations == 0 {
            return Err(PlsError::invalid("bfgs config", "max_iterations must be >= 1"));
        }
        if !(self.armijo_c1 > 0.0 && self.armijo_c1 < 1.0) || !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(PlsError::invalid("bfgs config", "armijo_c1 and shrink must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BfgsStatus {
    Converged,
    MaxIterations,
    /// No step along the search direction decreased the objective, even
    /// after resetting the curvature estimate.
    LineSearchStalled,
}

#[derive(Debug, Clone)]
pub struct BfgsOutcome {
    pub argmin: DVector<f64>,
    pub value: f64,
    pub gradient: DVector<f64>,
    pub iterations: usize,
    pub status: BfgsStatus,
    /// Objective value after each accepted iteration, starting with the
    /// value at `start`.
    pub trace: Vec<f64>,
}

impl BfgsOutcome {
    pub fn gradient_norm(&self) -> f64 {
        self.gradient.amax()
    }

    pub fn converged(&self) -> bool {
        self.status == BfgsStatus::Converged
    }

    pub fn into_converged(self) -> Result<Self> {
        if self.converged() {
            Ok(self)
        } else {
            Err(PlsError::BfgsNonConvergence {
                gradient_norm: self.gradient_norm(),
                iterations: self.iterations,
            })
        }
    }
}

/// Minimizes `objective` from `start`.
///
/// A non-finite trial value is treated like a failed Armijo test. The inverse
/// Hessian update is skipped when `s^T y <= 1e-10 |s| |y|`, which keeps the
/// approximation positive definite.
pub fn bfgs_minimize<F, G>(
    mut objective: F,
    mut gradient: G,
    start: &DVector<f64>,
    config: &BfgsConfig,
) -> Result<BfgsOutcome>
where
    F: FnMut(&DVector<f64>) -> f64,
    G: FnMut(&DVector<f64>) -> DVector<f64>,
{
    config.validate()?;
    let n = start.len();
    let mut x = start.clone();
    let mut fx = objective(&x);
    if !fx.is_finite() {
        return Err(PlsError::NonFiniteObjective {
            point: x.as_slice().to_vec(),
        });
    }
    let mut gx = gradient(&x);
    if gx.iter().any(|v| !v.is_finite()) {
        return Err(PlsError::NonFiniteObjective {
            point: x.as_slice().to_vec(),
        });
    }
    let mut h_inv = DMatrix::<f64>::identity(n, n);
    let mut fresh = true;
    let mut trace = vec![fx];
    let mut iterations = 0;

    let status = loop {
        if gx.amax() <= config.gradient_tolerance {
            break BfgsStatus::Converged;
        }
        if iterations >= config.max_iterations {
            break BfgsStatus::MaxIterations;
        }

        let mut dir = -(&h_inv * &gx);
        let mut slope = gx.dot(&dir);
        if !(slope < 0.0) {
            h_inv.fill_with_identity();
            fresh = true;
            dir = -gx.clone();
            slope = gx.dot(&dir);
        }

        // First trial of a fresh (identity) metric is scaled to unit length.
        let mut step = if fresh { (1.0 / dir.norm()).min(1.0) } else { 1.0 };
        let mut accepted = None;
        for _ in 0..60 {
            let trial = &x + &dir * step;
            let ft = objective(&trial);
            if ft.is_finite() && ft <= fx + config.armijo_c1 * step * slope {
                accepted = Some((trial, ft));
                break;
            }
            step *= config.shrink;
        }
        let Some((x_new, f_new)) = accepted else {
            if fresh {
                break BfgsStatus::LineSearchStalled;
            }
            h_inv.fill_with_identity();
            fresh = true;
            continue;
        };
        if !(f_new < fx) {
            // below the resolution of f
            break BfgsStatus::LineSearchStalled;
        }
        let g_new = gradient(&x_new);
        if g_new.iter().any(|v| !v.is_finite()) {
            return Err(PlsError::NonFiniteObjective {
                point: x_new.as_slice().to_vec(),
            });
        }

        let s = &x_new - &x;
        let y = &g_new - &gx;
        let sy = s.dot(&y);
        if sy > 1e-10 * s.norm() * y.norm() {
            if fresh {
                // Shanno-Phua initial scaling
                h_inv *= sy / y.norm_squared();
            }
            let rho = 1.0 / sy;
            let hy = &h_inv * &y;
            let yhy = y.dot(&hy);
            // H+ = H - rho (H y s^T + s y^T H) + (rho^2 y^T H y + rho) s s^T
            h_inv -= (&hy * s.transpose() + &s * hy.transpose()) * rho;
            h_inv += (&s * s.transpose()) * (rho * rho * yhy + rho);
            fresh = false;
        }

        x = x_new;
        fx = f_new;
        gx = g_new;
        iterations += 1;
        trace.push(fx);
    };

    Ok(BfgsOutcome {
        argmin: x,
        value: fx,
        gradient: gx,
        iterations,
        status,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_bowl() {
        let c = DVector::from_vec(vec![1.0, -2.0, 3.0, 0.5]);
        for start in [DVector::zeros(4), DVector::from_element(4, 10.0)] {
            let out = bfgs_minimize(
                |x| 0.5 * (x - &c).norm_squared(),
                |x| x - &c,
                &start,
                &BfgsConfig {
                    gradient_tolerance: 1e-10,
                    ..Default::default()
                },
            )
            .unwrap();
            assert!(out.converged());
            assert!((&out.argmin - &c).amax() < 1e-8);
            assert!(out.iterations <= 50);
        }
    }

    #[test]
    fn rosenbrock() {
        let f = |x: &DVector<f64>| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let g = |x: &DVector<f64>| {
            DVector::from_vec(vec![
                -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]),
                200.0 * (x[1] - x[0] * x[0]),
            ])
        };
        let out = bfgs_minimize(
            f,
            g,
            &DVector::from_vec(vec![-1.2, 1.0]),
            &BfgsConfig {
                gradient_tolerance: 1e-9,
                max_iterations: 2000,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(out.converged(), "{:?}", out.status);
        assert!((out.argmin[0] - 1.0).abs() < 1e-5 && (out.argmin[1] - 1.0).abs() < 1e-5);
        assert!(out.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn max_iterations_flags_best_point() {
        let f = |x: &DVector<f64>| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let g = |x: &DVector<f64>| {
            DVector::from_vec(vec![
                -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]),
                200.0 * (x[1] - x[0] * x[0]),
            ])
        };
        let start = DVector::from_vec(vec![-1.2, 1.0]);
        let out = bfgs_minimize(
            f,
            g,
            &start,
            &BfgsConfig {
                max_iterations: 3,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(out.status, BfgsStatus::MaxIterations);
        assert!(out.value < f(&start));
        assert!(out.into_converged().is_err());
    }

    #[test]
    fn non_finite_start_is_reported() {
        let err = bfgs_minimize(
            |_| f64::NAN,
            |x| x.clone(),
            &DVector::from_vec(vec![1.0, 2.0]),
            &BfgsConfig::default(),
        )
        .unwrap_err();
        match err {
            PlsError::NonFiniteObjective { point } => assert_eq!(point, vec![1.0, 2.0]),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn deterministic_iterates() {
        let f = |x: &DVector<f64>| x[0].powi(4) + (x[1] - 1.0).powi(2) + x[0] * x[1];
        let g = |x: &DVector<f64>| DVector::from_vec(vec![4.0 * x[0].powi(3) + x[1], 2.0 * (x[1] - 1.0) + x[0]]);
        let s = DVector::from_vec(vec![2.0, -3.0]);
        let a = bfgs_minimize(f, g, &s, &BfgsConfig::default()).unwrap();
        let b = bfgs_minimize(f, g, &s, &BfgsConfig::default()).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.argmin, b.argmin);
    }
}
