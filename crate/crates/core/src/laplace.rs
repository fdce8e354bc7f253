//! Gaussian priors and Laplace approximations of evidence integrals.
//!
//! For a log-integrand `-h(θ)` (log-likelihood plus Gaussian log-prior) the
//! approximation is
//!
//! `log ∫ exp(-h) dθ ≈ (d/2) log(2π) - ½ log|V(θ̃)| - h(θ̃)`
//!
//! with `θ̃ = argmin h` and `V` the Hessian of `h`. Everything stays in log
//! space; determinants come from Cholesky factors.

use nalgebra::{DMatrix, DVector};

use crate::error::{PlsError, Result};
use crate::logistic::{
    grad_log_likelihood, hessian_log_likelihood, log_likelihood, point_log_likelihood, response,
    Candidate, Design,
};
use crate::optim::{bfgs_minimize, BfgsConfig};

pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Maximum Newton refinements applied after BFGS has located the mode.
const POLISH_STEPS: usize = 3;

/// Multivariate normal `N(mu, sigma)` with its Cholesky factor cached.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrior {
    mu: DVector<f64>,
    sigma: DMatrix<f64>,
    chol_lower: DMatrix<f64>,
    precision: DMatrix<f64>,
    log_det_sigma: f64,
}

impl GaussianPrior {
    pub fn new(mu: DVector<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        let d = mu.len();
        if d == 0 {
            return Err(PlsError::invalid("prior", "dimension must be >= 1"));
        }
        if sigma.nrows() != d || sigma.ncols() != d {
            return Err(PlsError::DimensionMismatch {
                expected: d,
                found: sigma.nrows(),
            });
        }
        if mu.iter().chain(sigma.iter()).any(|v| !v.is_finite()) {
            return Err(PlsError::invalid("prior", "non-finite entries"));
        }
        if (&sigma - sigma.transpose()).amax() > 1e-12 {
            return Err(PlsError::invalid("prior", "covariance is not symmetric"));
        }
        let chol = sigma.clone().cholesky().ok_or(PlsError::NotPositiveDefinite {
            context: "prior covariance",
        })?;
        let chol_lower = chol.l();
        let log_det_sigma = 2.0 * chol_lower.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let precision = chol.inverse();
        Ok(Self {
            mu,
            sigma,
            chol_lower,
            precision,
            log_det_sigma,
        })
    }

    /// `N(mu, scale * I)`.
    pub fn isotropic(mu: DVector<f64>, scale: f64) -> Result<Self> {
        let d = mu.len();
        Self::new(mu, DMatrix::identity(d, d) * scale)
    }

    /// Same covariance, new location. Reuses the factorization.
    pub fn with_mean(&self, mu: DVector<f64>) -> Result<Self> {
        if mu.len() != self.dim() {
            return Err(PlsError::DimensionMismatch {
                expected: self.dim(),
                found: mu.len(),
            });
        }
        Ok(Self { mu, ..self.clone() })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn log_det_covariance(&self) -> f64 {
        self.log_det_sigma
    }

    fn quad_form(&self, theta: &DVector<f64>) -> f64 {
        let diff = theta - &self.mu;
        let z = self
            .chol_lower
            .solve_lower_triangular(&diff)
            .expect("cholesky factor has a positive diagonal");
        z.norm_squared()
    }
}

pub fn log_prior_density(prior: &GaussianPrior, theta: &DVector<f64>) -> f64 {
    -0.5 * (prior.dim() as f64 * LN_2PI + prior.log_det_sigma + prior.quad_form(theta))
}

/// A log-integrand of the form
/// `data_weight * log p(D | θ) + log p(extra | θ) + log f_π(θ)`.
#[derive(Debug, Clone)]
pub struct LogJoint<'a> {
    pub data: &'a Design,
    pub data_weight: f64,
    /// Design row (with intercept) and label of an extra observation.
    pub extra: Option<(DVector<f64>, f64)>,
    pub prior: &'a GaussianPrior,
}

impl<'a> LogJoint<'a> {
    /// Integrand of the marginal likelihood `m(π)`.
    pub fn marginal(data: &'a Design, prior: &'a GaussianPrior) -> Self {
        Self {
            data,
            data_weight: 1.0,
            extra: None,
            prior,
        }
    }

    /// Integrand of `q(π) = ∫ p(D ∪ (x, ŷ) | θ) p(D | θ) f_π(θ) dθ`: the data
    /// likelihood enters twice.
    pub fn predictive(data: &'a Design, candidate: &Candidate, prior: &'a GaussianPrior) -> Self {
        Self {
            data,
            data_weight: 2.0,
            extra: Some((candidate.design_row(), f64::from(candidate.pseudo_label))),
            prior,
        }
    }

    pub fn dim(&self) -> usize {
        self.prior.dim()
    }

    fn check_dims(&self) -> Result<()> {
        let d = self.dim();
        if self.data.dim() != d {
            return Err(PlsError::DimensionMismatch {
                expected: d,
                found: self.data.dim(),
            });
        }
        if let Some((row, _)) = &self.extra {
            if row.len() != d {
                return Err(PlsError::DimensionMismatch {
                    expected: d,
                    found: row.len(),
                });
            }
        }
        Ok(())
    }

    pub fn value(&self, theta: &DVector<f64>) -> f64 {
        let mut v = log_prior_density(self.prior, theta);
        if self.data.n_rows() > 0 {
            v += self.data_weight * log_likelihood(self.data, theta);
        }
        if let Some((row, y)) = &self.extra {
            v += point_log_likelihood(row.dot(theta), *y);
        }
        v
    }

    pub fn gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        let mut g = -(self.prior.precision() * (theta - self.prior.mean()));
        if self.data.n_rows() > 0 {
            g += grad_log_likelihood(self.data, theta) * self.data_weight;
        }
        if let Some((row, y)) = &self.extra {
            g += row * (y - response(row.dot(theta)));
        }
        g
    }

    pub fn hessian(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let mut h = -self.prior.precision().clone();
        if self.data.n_rows() > 0 {
            h += hessian_log_likelihood(self.data, theta) * self.data_weight;
        }
        if let Some((row, _)) = &self.extra {
            let p = response(row.dot(theta));
            h -= (row * row.transpose()) * (p * (1.0 - p));
        }
        h
    }
}

/// `h(θ) = -log p(D | θ) - log f_π(θ)`.
pub fn neg_log_joint(data: &Design, prior: &GaussianPrior, theta: &DVector<f64>) -> f64 {
    -LogJoint::marginal(data, prior).value(theta)
}

/// Laplace approximation of one evidence integral.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplaceEvidence {
    /// Minimizer of `h`.
    pub mode: DVector<f64>,
    /// Hessian of `h` at the mode (positive definite).
    pub hessian_at_mode: DMatrix<f64>,
    /// Log of the approximated integral.
    pub log_value: f64,
    pub bfgs_iterations: usize,
}

impl LaplaceEvidence {
    pub fn log_det_hessian(&self) -> f64 {
        let chol = self
            .hessian_at_mode
            .clone()
            .cholesky()
            .expect("hessian at mode is positive definite");
        2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>()
    }
}

/// BFGS from the prior mean, then a few Newton steps with the exact Hessian
/// so the evidence is a smooth function of the prior location.
pub fn laplace(joint: &LogJoint<'_>, config: &BfgsConfig) -> Result<LaplaceEvidence> {
    joint.check_dims()?;
    let d = joint.dim();
    let h = |t: &DVector<f64>| -joint.value(t);
    let grad_h = |t: &DVector<f64>| -joint.gradient(t);
    let out = bfgs_minimize(h, grad_h, joint.prior.mean(), config)?;

    // Newton also finishes what BFGS cannot resolve through function values
    let mut theta = out.argmin;
    let mut value = out.value;
    let mut grad = out.gradient;
    let mut hess = -joint.hessian(&theta);
    for _ in 0..POLISH_STEPS {
        if grad.amax() == 0.0 {
            break;
        }
        let Some(chol) = hess.clone().cholesky() else {
            break;
        };
        let trial = &theta - chol.solve(&grad);
        let tv = h(&trial);
        let tg = grad_h(&trial);
        let roundoff = 4.0 * f64::EPSILON * value.abs().max(1.0);
        if !(tv <= value + roundoff && tg.amax() < grad.amax()) {
            break;
        }
        theta = trial;
        value = tv;
        grad = tg;
        hess = -joint.hessian(&theta);
    }
    if grad.amax() > config.gradient_tolerance {
        return Err(PlsError::BfgsNonConvergence {
            gradient_norm: grad.amax(),
            iterations: out.iterations,
        });
    }

    let chol = hess.clone().cholesky().ok_or(PlsError::NotPositiveDefinite {
        context: "Hessian of h at the Laplace mode",
    })?;
    let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let log_value = 0.5 * d as f64 * LN_2PI - 0.5 * log_det - value;
    if !log_value.is_finite() {
        return Err(PlsError::NonFiniteObjective {
            point: theta.as_slice().to_vec(),
        });
    }
    Ok(LaplaceEvidence {
        mode: theta,
        hessian_at_mode: hess,
        log_value,
        bfgs_iterations: out.iterations,
    })
}

/// `log m(π) = log ∫ p(D | θ) f_π(θ) dθ`. With no rows the likelihood is 1.
pub fn laplace_log_marginal(data: &Design, prior: &GaussianPrior, config: &BfgsConfig) -> Result<LaplaceEvidence> {
    laplace(&LogJoint::marginal(data, prior), config)
}

/// `log q(π)`, see [`LogJoint::predictive`].
pub fn laplace_log_q(
    data: &Design,
    candidate: &Candidate,
    prior: &GaussianPrior,
    config: &BfgsConfig,
) -> Result<LaplaceEvidence> {
    laplace(&LogJoint::predictive(data, candidate, prior), config)
}

/// Both halves of the pseudo posterior predictive under one prior.
#[derive(Debug, Clone, PartialEq)]
pub struct PppParts {
    pub log_q: f64,
    pub log_m: f64,
}

impl PppParts {
    pub fn log_ppp(&self) -> f64 {
        self.log_q - self.log_m
    }
}

pub fn ppp_parts(
    data: &Design,
    candidate: &Candidate,
    prior: &GaussianPrior,
    config: &BfgsConfig,
) -> Result<PppParts> {
    let log_m = laplace_log_marginal(data, prior, config)?.log_value;
    let log_q = laplace_log_q(data, candidate, prior, config)?.log_value;
    Ok(PppParts { log_q, log_m })
}

/// `log q(π) - log m(π)`, the log pseudo posterior predictive of the candidate.
pub fn log_ppp(data: &Design, candidate: &Candidate, prior: &GaussianPrior, config: &BfgsConfig) -> Result<f64> {
    ppp_parts(data, candidate, prior, config).map(|p| p.log_ppp())
}
