//! Brute-force tensor-grid quadrature of evidence integrals for `d <= 2`.
//!
//! Verification oracle for the Laplace approximations. It locates the
//! posterior mode by its own damped Newton iteration (not the BFGS path),
//! integrates with the trapezoid rule over the mode ± 10 posterior standard
//! deviations per axis, and sums in log space.

use nalgebra::{DMatrix, DVector};

use crate::error::{PlsError, Result};
use crate::laplace::{GaussianPrior, LogJoint};
use crate::logistic::{Candidate, Design};

const HALF_WIDTH_SD: f64 = 10.0;
const START_RESOLUTION: usize = 101;
const CONVERGENCE: f64 = 1e-6;

fn newton_mode(joint: &LogJoint<'_>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let mut theta = joint.prior.mean().clone();
    let mut value = joint.value(&theta);
    for _ in 0..200 {
        let g = joint.gradient(&theta);
        let neg_h = -joint.hessian(&theta);
        if g.amax() < 1e-12 {
            return Ok((theta, neg_h));
        }
        let chol = neg_h.clone().cholesky().ok_or(PlsError::NotPositiveDefinite {
            context: "quadrature Newton",
        })?;
        let step = chol.solve(&g);
        let mut t = 1.0;
        loop {
            let trial = &theta + &step * t;
            let v = joint.value(&trial);
            if v >= value || t < 1e-10 {
                if v >= value {
                    theta = trial;
                    value = v;
                }
                break;
            }
            t *= 0.5;
        }
        if t < 1e-10 {
            break;
        }
    }
    let neg_h = -joint.hessian(&theta);
    Ok((theta, neg_h))
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Trapezoid rule with `resolution` nodes per axis.
pub fn log_integral(joint: &LogJoint<'_>, resolution: usize) -> Result<f64> {
    let d = joint.dim();
    if d > 2 {
        return Err(PlsError::invalid("quadrature", format!("dimension {d} exceeds 2")));
    }
    if resolution < 3 {
        return Err(PlsError::invalid("quadrature", "resolution must be >= 3"));
    }
    let (mode, neg_h) = newton_mode(joint)?;
    let cov = neg_h.try_inverse().ok_or(PlsError::NotPositiveDefinite {
        context: "quadrature curvature",
    })?;
    let sd: Vec<f64> = (0..d).map(|i| cov[(i, i)].sqrt()).collect();
    let axes: Vec<(Vec<f64>, Vec<f64>)> = (0..d)
        .map(|i| {
            let lo = mode[i] - HALF_WIDTH_SD * sd[i];
            let h = 2.0 * HALF_WIDTH_SD * sd[i] / (resolution - 1) as f64;
            let nodes = (0..resolution).map(|k| lo + k as f64 * h).collect();
            let log_w = (0..resolution)
                .map(|k| {
                    let end = k == 0 || k == resolution - 1;
                    (if end { 0.5 * h } else { h }).ln()
                })
                .collect();
            (nodes, log_w)
        })
        .collect();

    let mut terms = Vec::with_capacity(resolution.pow(d as u32));
    let mut theta = DVector::zeros(d);
    match d {
        1 => {
            for k in 0..resolution {
                theta[0] = axes[0].0[k];
                terms.push(joint.value(&theta) + axes[0].1[k]);
            }
        }
        _ => {
            for a in 0..resolution {
                for b in 0..resolution {
                    theta[0] = axes[0].0[a];
                    theta[1] = axes[1].0[b];
                    terms.push(joint.value(&theta) + axes[0].1[a] + axes[1].1[b]);
                }
            }
        }
    }
    Ok(log_sum_exp(&terms))
}

/// Doubles the resolution (nested nodes) until successive values differ by
/// less than `1e-6`.
pub fn converged_log_integral(joint: &LogJoint<'_>) -> Result<f64> {
    let max_resolution = if joint.dim() == 1 { 12_801 } else { 1_601 };
    let mut r = START_RESOLUTION;
    let mut prev = log_integral(joint, r)?;
    while r < max_resolution {
        r = 2 * r - 1;
        let next = log_integral(joint, r)?;
        if (next - prev).abs() < CONVERGENCE {
            return Ok(next);
        }
        prev = next;
    }
    Ok(prev)
}

pub fn log_marginal(data: &Design, prior: &GaussianPrior, resolution: usize) -> Result<f64> {
    log_integral(&LogJoint::marginal(data, prior), resolution)
}

pub fn log_q(data: &Design, candidate: &Candidate, prior: &GaussianPrior, resolution: usize) -> Result<f64> {
    log_integral(&LogJoint::predictive(data, candidate, prior), resolution)
}

pub fn converged_log_marginal(data: &Design, prior: &GaussianPrior) -> Result<f64> {
    converged_log_integral(&LogJoint::marginal(data, prior))
}

pub fn converged_log_q(data: &Design, candidate: &Candidate, prior: &GaussianPrior) -> Result<f64> {
    converged_log_integral(&LogJoint::predictive(data, candidate, prior))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_data_integrates_to_one() {
        for d in 1..=2 {
            let sigma = DMatrix::from_fn(d, d, |i, j| if i == j { 1.5 } else { 0.4 });
            let prior = GaussianPrior::new(DVector::from_element(d, 0.3), sigma).unwrap();
            let v = log_marginal(&Design::empty(d), &prior, 201).unwrap();
            assert!(v.abs() < 1e-8, "{v}");
        }
    }

    #[test]
    fn self_convergent_under_doubling() {
        let x = DMatrix::from_row_slice(6, 2, &[1.0, -1.0, 1.0, -0.3, 1.0, 0.2, 1.0, 0.8, 1.0, 1.5, 1.0, -2.0]);
        let y = DVector::from_vec(vec![0.0, 1.0, 0.0, 1.0, 1.0, 0.0]);
        let data = Design::from_parts(x, y).unwrap();
        let prior = GaussianPrior::isotropic(DVector::zeros(2), 2.0).unwrap();
        let a = log_marginal(&data, &prior, 201).unwrap();
        let b = log_marginal(&data, &prior, 401).unwrap();
        assert!((a - b).abs() < 1e-6);
    }

    #[test]
    fn rejects_three_dimensions() {
        let prior = GaussianPrior::isotropic(DVector::zeros(3), 1.0).unwrap();
        assert!(log_marginal(&Design::empty(3), &prior, 11).is_err());
    }
}
