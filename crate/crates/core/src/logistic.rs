//! Binary logistic regression: link, log-likelihood with derivatives, ridge
//! Newton fitting and pseudo-label prediction.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{PlsError, Result};

const FIT_GRADIENT_TOLERANCE: f64 = 1e-8;
const FIT_MAX_ITERATIONS: usize = 100;

/// `exp(eta) / (1 + exp(eta))`, evaluated without overflow for any finite `eta`.
#[inline]
pub fn response(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(eta))`.
#[inline]
pub fn log1p_exp(eta: f64) -> f64 {
    eta.max(0.0) + (-eta.abs()).exp().ln_1p()
}

/// Bernoulli log-likelihood of one observation with linear predictor `eta`.
#[inline]
pub fn point_log_likelihood(eta: f64, y: f64) -> f64 {
    y * eta - log1p_exp(eta)
}

/// Logistic coefficients, intercept first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<f64>", try_from = "Vec<f64>")]
pub struct Coefficients(pub DVector<f64>);

impl From<Coefficients> for Vec<f64> {
    fn from(c: Coefficients) -> Self {
        c.0.as_slice().to_vec()
    }
}

impl TryFrom<Vec<f64>> for Coefficients {
    type Error = PlsError;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Coefficients::new(DVector::from_vec(v))
    }
}

impl Coefficients {
    pub fn new(theta: DVector<f64>) -> Result<Self> {
        if theta.len() < 2 {
            return Err(PlsError::invalid("coefficients", "need an intercept and at least one slope"));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(PlsError::invalid("coefficients", "entries must be finite"));
        }
        Ok(Self(theta))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(DVector::zeros(dim))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    /// Linear predictor for a covariate row (without intercept entry).
    pub fn eta(&self, features: &DVector<f64>) -> f64 {
        self.0[0] + self.0.rows(1, self.0.len() - 1).dot(features)
    }
}

/// A pool point with the pseudo-label it would enter the training set with.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub pool_index: usize,
    pub features: DVector<f64>,
    pub pseudo_label: u8,
}

impl Candidate {
    pub fn flipped(&self) -> Self {
        Self {
            pseudo_label: 1 - self.pseudo_label,
            ..self.clone()
        }
    }

    pub fn with_label(&self, label: u8) -> Self {
        Self {
            pseudo_label: label,
            ..self.clone()
        }
    }

    /// Candidate restricted to a covariate subset.
    pub fn project(&self, covariates: &[usize]) -> Self {
        Self {
            pool_index: self.pool_index,
            features: DVector::from_iterator(
                covariates.len(),
                covariates.iter().map(|&j| self.features[j]),
            ),
            pseudo_label: self.pseudo_label,
        }
    }

    pub fn design_row(&self) -> DVector<f64> {
        design_row(&self.features)
    }
}

/// `[1, x_1, ..., x_p]`.
pub fn design_row(features: &DVector<f64>) -> DVector<f64> {
    let mut row = DVector::zeros(features.len() + 1);
    row[0] = 1.0;
    row.rows_mut(1, features.len()).copy_from(features);
    row
}

/// Labeled rows in model form: design matrix with a leading intercept column
/// and a 0/1 response vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    x: DMatrix<f64>,
    y: DVector<f64>,
}

impl Design {
    pub fn from_dataset(d: &Dataset) -> Result<Self> {
        let labels = d
            .labels()
            .ok_or_else(|| PlsError::invalid("design", "dataset has no labels"))?;
        let n = d.n_rows();
        let p = d.n_features();
        let x = DMatrix::from_fn(n, p + 1, |i, j| {
            if j == 0 {
                1.0
            } else {
                d.features()[(i, j - 1)]
            }
        });
        let y = DVector::from_iterator(n, labels.iter().map(|&l| f64::from(l)));
        Ok(Self { x, y })
    }

    /// No rows; `dim` coefficients (intercept included).
    pub fn empty(dim: usize) -> Self {
        Self {
            x: DMatrix::zeros(0, dim),
            y: DVector::zeros(0),
        }
    }

    /// `x` must already contain the intercept column.
    pub fn from_parts(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(PlsError::DimensionMismatch {
                expected: x.nrows(),
                found: y.len(),
            });
        }
        if y.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(PlsError::invalid("design", "responses must be 0 or 1"));
        }
        Ok(Self { x, y })
    }

    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn has_both_classes(&self) -> bool {
        let pos = self.y.iter().filter(|&&v| v == 1.0).count();
        pos > 0 && pos < self.n_rows()
    }

    /// Appends a covariate row (no intercept entry) with its label.
    pub fn push(&mut self, features: &DVector<f64>, label: u8) {
        let n = self.n_rows();
        let x = std::mem::replace(&mut self.x, DMatrix::zeros(0, 0));
        let mut x = x.insert_row(n, 1.0);
        x.view_mut((n, 1), (1, features.len()))
            .copy_from(&features.transpose());
        self.x = x;
        let y = std::mem::replace(&mut self.y, DVector::zeros(0));
        self.y = y.insert_row(n, f64::from(label));
    }

    pub fn with_candidate(&self, candidate: &Candidate) -> Self {
        let mut out = self.clone();
        out.push(&candidate.features, candidate.pseudo_label);
        out
    }

    /// Design on the intercept plus the given covariates (0-based, excluding
    /// the intercept).
    pub fn select_covariates(&self, covariates: &[usize]) -> Self {
        let mut cols = Vec::with_capacity(covariates.len() + 1);
        cols.push(0);
        cols.extend(covariates.iter().map(|&j| j + 1));
        Self {
            x: self.x.select_columns(cols.iter()),
            y: self.y.clone(),
        }
    }

    pub fn linear_predictor(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.x * theta
    }
}

pub fn log_likelihood(data: &Design, theta: &DVector<f64>) -> f64 {
    let eta = data.linear_predictor(theta);
    eta.iter()
        .zip(data.y.iter())
        .map(|(&e, &y)| point_log_likelihood(e, y))
        .sum()
}

/// `X^T (y - p)`.
pub fn grad_log_likelihood(data: &Design, theta: &DVector<f64>) -> DVector<f64> {
    let eta = data.linear_predictor(theta);
    let resid = DVector::from_iterator(
        eta.len(),
        eta.iter().zip(data.y.iter()).map(|(&e, &y)| y - response(e)),
    );
    data.x.tr_mul(&resid)
}

/// `-X^T W X` with `W = diag(p (1 - p))`, symmetric by construction.
pub fn hessian_log_likelihood(data: &Design, theta: &DVector<f64>) -> DMatrix<f64> {
    let eta = data.linear_predictor(theta);
    let d = data.dim();
    let mut h = DMatrix::zeros(d, d);
    for (i, &e) in eta.iter().enumerate() {
        let p = response(e);
        let w = p * (1.0 - p);
        let row = data.x.row(i);
        for a in 0..d {
            let wa = w * row[a];
            for b in 0..=a {
                h[(a, b)] -= wa * row[b];
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            h[(b, a)] = h[(a, b)];
        }
    }
    h
}

/// `log p(D ∪ {(x, ŷ)} | θ)`.
pub fn augmented_log_likelihood(data: &Design, candidate: &Candidate, theta: &DVector<f64>) -> f64 {
    let eta = theta.dot(&candidate.design_row());
    log_likelihood(data, theta) + point_log_likelihood(eta, f64::from(candidate.pseudo_label))
}

/// Maximizes `log_likelihood - ridge/2 * |theta|^2` by damped Newton steps.
pub fn fit_mle(data: &Design, ridge: f64) -> Result<Coefficients> {
    if !(ridge >= 0.0) {
        return Err(PlsError::invalid("ridge", "must be non-negative"));
    }
    let d = data.dim();
    let objective = |t: &DVector<f64>| log_likelihood(data, t) - 0.5 * ridge * t.norm_squared();
    let mut theta = DVector::zeros(d);
    let mut value = objective(&theta);
    let mut grad_norm = f64::INFINITY;
    for _ in 0..FIT_MAX_ITERATIONS {
        let grad = grad_log_likelihood(data, &theta) - &theta * ridge;
        grad_norm = grad.amax();
        if grad_norm <= FIT_GRADIENT_TOLERANCE {
            return Coefficients::new(theta);
        }
        let mut info = -hessian_log_likelihood(data, &theta);
        for i in 0..d {
            info[(i, i)] += ridge;
        }
        let Some(chol) = info.cholesky() else {
            break;
        };
        let step = chol.solve(&grad);
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-12 {
            let trial = &theta + &step * t;
            let v = objective(&trial);
            if v.is_finite() && v >= value - 1e-12 * value.abs() {
                theta = trial;
                value = v;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let grad = grad_log_likelihood(data, &theta) - &theta * ridge;
    if grad.amax() <= FIT_GRADIENT_TOLERANCE {
        return Coefficients::new(theta);
    }
    grad_norm = grad_norm.min(grad.amax());
    Err(PlsError::FitNonConvergence {
        ridge,
        gradient_norm: grad_norm,
        iterations: FIT_MAX_ITERATIONS,
    })
}

/// Ridge values tried in order until a fit converges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RidgeSchedule {
    pub initial: f64,
    pub factor: f64,
    pub max: f64,
}

impl Default for RidgeSchedule {
    fn default() -> Self {
        Self {
            initial: 1e-6,
            factor: 10.0,
            max: 1e-2,
        }
    }
}

/// [`fit_mle`] with ridge escalation; returns the coefficients and the ridge
/// that produced them.
pub fn fit_mle_with_fallback(data: &Design, schedule: &RidgeSchedule) -> Result<(Coefficients, f64)> {
    let mut ridge = schedule.initial;
    loop {
        match fit_mle(data, ridge) {
            Ok(c) => return Ok((c, ridge)),
            Err(e @ PlsError::FitNonConvergence { .. }) => {
                let next = ridge * schedule.factor;
                if next > schedule.max * (1.0 + 1e-12) || schedule.factor <= 1.0 {
                    return Err(e);
                }
                ridge = next;
            }
            Err(e) => return Err(e),
        }
    }
}

/// `1` when the fitted probability is at least one half, else `0`.
pub fn predict_labels(features: &DMatrix<f64>, theta: &Coefficients) -> Vec<u8> {
    features
        .row_iter()
        .map(|r| {
            let eta = theta.eta(&r.transpose());
            u8::from(response(eta) >= 0.5)
        })
        .collect()
}
