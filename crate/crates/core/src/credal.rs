//! Pseudo-label selection criteria.
//!
//! The main criterion is Gamma-Maximin over a credal set of Gaussian priors
//! `{N(μ, Σ) : μ in a box}` after soft revision: only priors whose marginal
//! likelihood reaches `α` times the best one in the box are kept, and a
//! candidate is scored by its worst pseudo posterior predictive over them.
//! Writing `g(μ) = log m(μ) - log α - log max m`, the score is
//!
//! `min { log q(μ) - log m(μ) : μ in box, g(μ) >= 0 }`
//!
//! solved with COBYLA from the marginal-likelihood maximizer, which is always
//! feasible. `max m` does not depend on the candidate and is computed once
//! per self-training iteration ([`AlphaCut`]).
//!
//! The competitor criteria share the higher-is-better convention so one
//! selection rule ([`select_candidate`]) serves all of them.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PlsError, Result};
use crate::laplace::{laplace_log_marginal, laplace_log_q, ppp_parts, GaussianPrior};
use crate::logistic::{
    augmented_log_likelihood, fit_mle_with_fallback, response, Candidate, Coefficients, Design,
    RidgeSchedule,
};
use crate::optim::{cobyla_minimize, multistart_box_maximize, BfgsConfig, CobylaConfig, Evaluation};

/// Prior locations restricted to a box, sharing one covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct CredalBox {
    lower: DVector<f64>,
    upper: DVector<f64>,
    base: GaussianPrior,
}

impl CredalBox {
    pub fn new(lower: DVector<f64>, upper: DVector<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(PlsError::DimensionMismatch {
                expected: lower.len(),
                found: upper.len(),
            });
        }
        if lower.iter().zip(upper.iter()).any(|(l, u)| !(l <= u)) {
            return Err(PlsError::invalid("credal box", "lower must not exceed upper"));
        }
        let center = (&lower + &upper) * 0.5;
        let base = GaussianPrior::new(center, sigma)?;
        Ok(Self { lower, upper, base })
    }

    /// `[-half_width, half_width]^dim` with covariance `sigma_scale * I`.
    pub fn symmetric(dim: usize, half_width: f64, sigma_scale: f64) -> Result<Self> {
        Self::new(
            DVector::from_element(dim, -half_width),
            DVector::from_element(dim, half_width),
            DMatrix::identity(dim, dim) * sigma_scale,
        )
    }

    /// The one-prior set `{N(mu, sigma)}`.
    pub fn degenerate(mu: DVector<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        Self::new(mu.clone(), mu, sigma)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<f64> {
        &self.upper
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        self.base.covariance()
    }

    pub fn center(&self) -> &DVector<f64> {
        self.base.mean()
    }

    pub fn bounds(&self) -> Vec<(f64, f64)> {
        self.lower.iter().zip(self.upper.iter()).map(|(&l, &u)| (l, u)).collect()
    }

    pub fn is_degenerate(&self) -> bool {
        self.lower == self.upper
    }

    pub fn contains(&self, mu: &DVector<f64>, tol: f64) -> bool {
        mu.len() == self.dim()
            && mu
                .iter()
                .zip(self.lower.iter().zip(self.upper.iter()))
                .all(|(&m, (&l, &u))| m >= l - tol && m <= u + tol)
    }

    /// The box-center prior.
    pub fn center_prior(&self) -> &GaussianPrior {
        &self.base
    }

    pub fn prior_at(&self, mu: &DVector<f64>) -> Result<GaussianPrior> {
        self.base.with_mean(mu.clone())
    }
}

/// Numerical settings shared by the evidence-based criteria.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionSettings {
    pub bfgs: BfgsConfig,
    pub cobyla: CobylaConfig,
    pub multistart_starts: usize,
}

impl Default for SelectionSettings {
    fn default() -> Self {
        Self {
            bfgs: BfgsConfig::default(),
            cobyla: CobylaConfig::default(),
            multistart_starts: 5,
        }
    }
}

/// Soft-revision threshold for one training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaCut {
    pub alpha: f64,
    /// `log max_{μ in box} m(N(μ, Σ))`.
    pub log_max_marginal: f64,
    pub argmax_mu: DVector<f64>,
}

impl AlphaCut {
    /// `g = log m - log α - log max m`; a prior survives the cut iff `g >= 0`.
    pub fn constraint(&self, log_marginal: f64) -> f64 {
        log_marginal - self.alpha.ln() - self.log_max_marginal
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(PlsError::invalid("alpha", format!("{alpha} not in (0, 1]")))
    }
}

pub fn compute_alpha_cut(
    data: &Design,
    credal_box: &CredalBox,
    alpha: f64,
    settings: &SelectionSettings,
) -> Result<AlphaCut> {
    check_alpha(alpha)?;
    let bfgs = settings.bfgs;
    let best = multistart_box_maximize(
        |mu| {
            let prior = credal_box.prior_at(mu)?;
            Ok(laplace_log_marginal(data, &prior, &bfgs)?.log_value)
        },
        &credal_box.bounds(),
        settings.multistart_starts,
        &settings.cobyla,
    )?;
    Ok(AlphaCut {
        alpha,
        log_max_marginal: best.value,
        argmax_mu: best.argmax,
    })
}

/// One candidate's value under a criterion. Higher is better.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub pool_index: usize,
    pub pseudo_label: u8,
    pub score: f64,
    /// Least favourable prior location (Gamma-Maximin only).
    pub worst_case_mu: Option<Vec<f64>>,
}

impl CandidateScore {
    fn plain(candidate: &Candidate, score: f64) -> Self {
        Self {
            pool_index: candidate.pool_index,
            pseudo_label: candidate.pseudo_label,
            score,
            worst_case_mu: None,
        }
    }
}

fn with_candidate<T>(candidate: &Candidate, r: Result<T>) -> Result<T> {
    r.map_err(|e| PlsError::Candidate {
        pool_index: candidate.pool_index,
        source: Box::new(e),
    })
}

/// Gamma-Maximin value with soft revision: the smallest log PPP over the
/// priors that pass the cut.
pub fn gamma_maximin_score(
    data: &Design,
    candidate: &Candidate,
    credal_box: &CredalBox,
    cut: &AlphaCut,
    settings: &SelectionSettings,
) -> Result<CandidateScore> {
    let bfgs = settings.bfgs;
    let run = cobyla_minimize(
        |mu| {
            let prior = credal_box.prior_at(mu)?;
            let parts = ppp_parts(data, candidate, &prior, &bfgs)?;
            Ok(Evaluation {
                objective: parts.log_ppp(),
                constraints: vec![cut.constraint(parts.log_m)],
            })
        },
        1,
        &cut.argmax_mu,
        &credal_box.bounds(),
        &settings.cobyla,
    );
    let run = with_candidate(candidate, run)?;
    Ok(CandidateScore {
        pool_index: candidate.pool_index,
        pseudo_label: candidate.pseudo_label,
        score: run.value,
        worst_case_mu: Some(run.argmin.as_slice().to_vec()),
    })
}

/// `max(p̂, 1 - p̂)` under the current model.
pub fn score_probability(model: &Coefficients, candidate: &Candidate) -> f64 {
    let p = response(model.eta(&candidate.features));
    p.max(1.0 - p)
}

/// `-p̂ (1 - p̂)`: low predictive variance ranks high.
pub fn score_predictive_variance(model: &Coefficients, candidate: &Candidate) -> f64 {
    let p = response(model.eta(&candidate.features));
    -p * (1.0 - p)
}

/// Augmented log-likelihood at the refit MLE of `D ∪ (x, ŷ)`.
pub fn score_likelihood_maxmax(data: &Design, candidate: &Candidate, ridge: &RidgeSchedule) -> Result<f64> {
    let (fit, _) = with_candidate(candidate, fit_mle_with_fallback(&data.with_candidate(candidate), ridge))?;
    Ok(augmented_log_likelihood(data, candidate, fit.as_vector()))
}

pub fn score_ppp(data: &Design, candidate: &Candidate, prior: &GaussianPrior, bfgs: &BfgsConfig) -> Result<f64> {
    with_candidate(candidate, ppp_parts(data, candidate, prior, bfgs)).map(|p| p.log_ppp())
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// `log Σ_y exp(log PPP with label y)` over both labels.
pub fn score_ppp_multilabel(
    data: &Design,
    candidate: &Candidate,
    prior: &GaussianPrior,
    bfgs: &BfgsConfig,
) -> Result<f64> {
    let a = score_ppp(data, &candidate.with_label(0), prior, bfgs)?;
    let b = score_ppp(data, &candidate.with_label(1), prior, bfgs)?;
    Ok(log_add_exp(a, b))
}

/// A covariate subset defining an alternative logistic model (the intercept
/// is always included).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelVariant {
    pub covariates: Vec<usize>,
}

impl ModelVariant {
    pub fn full(p: usize) -> Self {
        Self {
            covariates: (0..p).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.covariates.len() + 1
    }

    /// Coordinates of the full coefficient vector this variant keeps.
    fn coordinates(&self) -> Vec<usize> {
        std::iter::once(0).chain(self.covariates.iter().map(|&j| j + 1)).collect()
    }

    /// Marginal of `prior` over the variant's coefficients.
    pub fn marginal_prior(&self, prior: &GaussianPrior) -> Result<GaussianPrior> {
        let idx = self.coordinates();
        if idx.iter().any(|&i| i >= prior.dim()) {
            return Err(PlsError::DimensionMismatch {
                expected: prior.dim(),
                found: idx.len(),
            });
        }
        let mu = DVector::from_iterator(idx.len(), idx.iter().map(|&i| prior.mean()[i]));
        let sigma = DMatrix::from_fn(idx.len(), idx.len(), |a, b| prior.covariance()[(idx[a], idx[b])]);
        GaussianPrior::new(mu, sigma)
    }
}

/// Full model plus every leave-one-covariate-out model. With a single
/// covariate the alternative is the intercept-only model.
pub fn default_model_variants(p: usize) -> Vec<ModelVariant> {
    let mut out = vec![ModelVariant::full(p)];
    for drop in 0..p {
        out.push(ModelVariant {
            covariates: (0..p).filter(|&j| j != drop).collect(),
        });
    }
    out
}

fn variant_ppp(
    data: &Design,
    candidate: &Candidate,
    variant: &ModelVariant,
    prior: &GaussianPrior,
    bfgs: &BfgsConfig,
) -> Result<(f64, f64)> {
    if prior.dim() != variant.dim() {
        return Err(PlsError::DimensionMismatch {
            expected: variant.dim(),
            found: prior.dim(),
        });
    }
    let d = data.select_covariates(&variant.covariates);
    let c = candidate.project(&variant.covariates);
    let parts = with_candidate(candidate, ppp_parts(&d, &c, prior, bfgs))?;
    Ok((parts.log_ppp(), parts.log_m))
}

fn check_variants(priors: &[GaussianPrior], variants: &[ModelVariant]) -> Result<()> {
    if variants.is_empty() {
        return Err(PlsError::invalid("model variants", "need at least one"));
    }
    if priors.len() != variants.len() {
        return Err(PlsError::DimensionMismatch {
            expected: variants.len(),
            found: priors.len(),
        });
    }
    Ok(())
}

/// Mean of the per-variant log PPP values.
pub fn score_ppp_multimodel(
    data: &Design,
    candidate: &Candidate,
    priors: &[GaussianPrior],
    variants: &[ModelVariant],
    bfgs: &BfgsConfig,
) -> Result<f64> {
    check_variants(priors, variants)?;
    let mut sum = 0.0;
    for (v, pr) in variants.iter().zip(priors) {
        sum += variant_ppp(data, candidate, v, pr, bfgs)?.0;
    }
    Ok(sum / variants.len() as f64)
}

/// Weighted mean of the per-variant log PPP values, weights proportional to
/// each variant's marginal likelihood. Returns the score and the weights.
pub fn score_ppp_weighted(
    data: &Design,
    candidate: &Candidate,
    priors: &[GaussianPrior],
    variants: &[ModelVariant],
    bfgs: &BfgsConfig,
) -> Result<(f64, Vec<f64>)> {
    check_variants(priors, variants)?;
    let mut lppp = Vec::with_capacity(variants.len());
    let mut log_m = Vec::with_capacity(variants.len());
    for (v, pr) in variants.iter().zip(priors) {
        let (a, m) = variant_ppp(data, candidate, v, pr, bfgs)?;
        lppp.push(a);
        log_m.push(m);
    }
    let w = normalized_weights(&log_m);
    Ok((w.iter().zip(&lppp).map(|(w, v)| w * v).sum(), w))
}

fn normalized_weights(log_m: &[f64]) -> Vec<f64> {
    let max = log_m.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = log_m.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|v| v / total).collect()
}

/// Argmax by score, ties to the lowest pool index.
pub fn select_candidate(scores: &[CandidateScore]) -> Result<CandidateScore> {
    let mut best: Option<&CandidateScore> = None;
    for s in scores {
        if !s.score.is_finite() {
            return Err(PlsError::Candidate {
                pool_index: s.pool_index,
                source: Box::new(PlsError::NonFiniteObjective { point: vec![s.score] }),
            });
        }
        best = match best {
            None => Some(s),
            Some(b) if s.score > b.score || (s.score == b.score && s.pool_index < b.pool_index) => Some(s),
            keep => keep,
        };
    }
    best.cloned().ok_or(PlsError::EmptyCandidates)
}

/// Selection criteria.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CriterionKind {
    GammaMaximinSoftRevision { alpha: f64 },
    ProbabilityScore,
    PredictiveVariance,
    LikelihoodMaxMax,
    Ppp,
    PppMultiLabel,
    PppMultiModel,
    PppWeighted,
    SupervisedBaseline,
}

impl CriterionKind {
    pub const NAMES: [&'static str; 9] = [
        "gamma-maximin",
        "probability-score",
        "predictive-variance",
        "likelihood-maxmax",
        "ppp",
        "ppp-multilabel",
        "ppp-multimodel",
        "ppp-weighted",
        "supervised",
    ];

    /// The nine benchmark methods, Gamma-Maximin at `alpha`.
    pub fn all(alpha: f64) -> Vec<CriterionKind> {
        Self::NAMES
            .iter()
            .map(|n| Self::from_name(n, Some(alpha)).expect("known name"))
            .collect()
    }

    /// `alpha` is required for (and only used by) `gamma-maximin`.
    pub fn from_name(name: &str, alpha: Option<f64>) -> Result<Self> {
        Ok(match name {
            "gamma-maximin" => {
                let alpha = alpha.ok_or_else(|| PlsError::invalid("criterion", "gamma-maximin needs alpha"))?;
                check_alpha(alpha)?;
                CriterionKind::GammaMaximinSoftRevision { alpha }
            }
            "probability-score" => CriterionKind::ProbabilityScore,
            "predictive-variance" => CriterionKind::PredictiveVariance,
            "likelihood-maxmax" => CriterionKind::LikelihoodMaxMax,
            "ppp" => CriterionKind::Ppp,
            "ppp-multilabel" => CriterionKind::PppMultiLabel,
            "ppp-multimodel" => CriterionKind::PppMultiModel,
            "ppp-weighted" => CriterionKind::PppWeighted,
            "supervised" => CriterionKind::SupervisedBaseline,
            other => return Err(PlsError::invalid("criterion", format!("unknown name `{other}`"))),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            CriterionKind::GammaMaximinSoftRevision { .. } => Self::NAMES[0],
            CriterionKind::ProbabilityScore => Self::NAMES[1],
            CriterionKind::PredictiveVariance => Self::NAMES[2],
            CriterionKind::LikelihoodMaxMax => Self::NAMES[3],
            CriterionKind::Ppp => Self::NAMES[4],
            CriterionKind::PppMultiLabel => Self::NAMES[5],
            CriterionKind::PppMultiModel => Self::NAMES[6],
            CriterionKind::PppWeighted => Self::NAMES[7],
            CriterionKind::SupervisedBaseline => Self::NAMES[8],
        }
    }

    /// Name plus α where relevant, e.g. `gamma-maximin-alpha0.5`.
    pub fn label(&self) -> String {
        match self {
            CriterionKind::GammaMaximinSoftRevision { alpha } => format!("{}-alpha{alpha}", self.name()),
            _ => self.name().to_owned(),
        }
    }

    pub fn is_baseline(&self) -> bool {
        matches!(self, CriterionKind::SupervisedBaseline)
    }
}

impl fmt::Display for CriterionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for CriterionKind {
    type Err = PlsError;

    /// Accepts [`CriterionKind::label`] output.
    fn from_str(s: &str) -> Result<Self> {
        if let Some(rest) = s.strip_prefix("gamma-maximin-alpha") {
            let alpha = rest
                .parse::<f64>()
                .map_err(|_| PlsError::invalid("criterion", format!("bad alpha in `{s}`")))?;
            return Self::from_name("gamma-maximin", Some(alpha));
        }
        Self::from_name(s, None)
    }
}

/// Everything a criterion may consult besides the candidate.
#[derive(Debug, Clone)]
pub struct CriterionContext<'a> {
    pub data: &'a Design,
    pub model: &'a Coefficients,
    pub credal_box: &'a CredalBox,
    pub variants: &'a [ModelVariant],
    pub ridge: RidgeSchedule,
    pub settings: SelectionSettings,
}

enum Prepared {
    Plain,
    GammaMaximin(AlphaCut),
    Ppp { log_m: f64 },
    Variants { priors: Vec<GaussianPrior>, log_m: Vec<f64>, weights: Vec<f64> },
}

/// A criterion bound to one training set. Candidate-independent quantities
/// (the α-cut, `log m` under fixed priors, model weights) are computed once
/// here and shared by every candidate.
pub struct IterationScorer<'a> {
    kind: CriterionKind,
    ctx: CriterionContext<'a>,
    prepared: Prepared,
}

impl<'a> IterationScorer<'a> {
    pub fn prepare(kind: CriterionKind, ctx: CriterionContext<'a>) -> Result<Self> {
        let bfgs = ctx.settings.bfgs;
        let prepared = match kind {
            CriterionKind::GammaMaximinSoftRevision { alpha } => {
                Prepared::GammaMaximin(compute_alpha_cut(ctx.data, ctx.credal_box, alpha, &ctx.settings)?)
            }
            CriterionKind::Ppp | CriterionKind::PppMultiLabel => Prepared::Ppp {
                log_m: laplace_log_marginal(ctx.data, ctx.credal_box.center_prior(), &bfgs)?.log_value,
            },
            CriterionKind::PppMultiModel | CriterionKind::PppWeighted => {
                if ctx.variants.is_empty() {
                    return Err(PlsError::invalid("model variants", "need at least one"));
                }
                let mut priors = Vec::new();
                let mut log_m = Vec::new();
                for v in ctx.variants {
                    let pr = v.marginal_prior(ctx.credal_box.center_prior())?;
                    let d = ctx.data.select_covariates(&v.covariates);
                    log_m.push(laplace_log_marginal(&d, &pr, &bfgs)?.log_value);
                    priors.push(pr);
                }
                let weights = normalized_weights(&log_m);
                Prepared::Variants { priors, log_m, weights }
            }
            _ => Prepared::Plain,
        };
        Ok(Self { kind, ctx, prepared })
    }

    pub fn kind(&self) -> CriterionKind {
        self.kind
    }

    pub fn alpha_cut(&self) -> Option<&AlphaCut> {
        match &self.prepared {
            Prepared::GammaMaximin(cut) => Some(cut),
            _ => None,
        }
    }

    /// Model weights used by the weighted multi-model criterion.
    pub fn model_weights(&self) -> Option<&[f64]> {
        match &self.prepared {
            Prepared::Variants { weights, .. } => Some(weights),
            _ => None,
        }
    }

    pub fn score(&self, candidate: &Candidate) -> Result<CandidateScore> {
        let ctx = &self.ctx;
        let bfgs = &ctx.settings.bfgs;
        let lq = |c: &Candidate, data: &Design, prior: &GaussianPrior| {
            with_candidate(c, laplace_log_q(data, c, prior, bfgs)).map(|e| e.log_value)
        };
        let score = match (&self.kind, &self.prepared) {
            (CriterionKind::GammaMaximinSoftRevision { .. }, Prepared::GammaMaximin(cut)) => {
                return gamma_maximin_score(ctx.data, candidate, ctx.credal_box, cut, &ctx.settings);
            }
            (CriterionKind::ProbabilityScore, _) => score_probability(ctx.model, candidate),
            (CriterionKind::PredictiveVariance, _) => score_predictive_variance(ctx.model, candidate),
            (CriterionKind::LikelihoodMaxMax, _) => score_likelihood_maxmax(ctx.data, candidate, &ctx.ridge)?,
            (CriterionKind::Ppp, Prepared::Ppp { log_m }) => {
                lq(candidate, ctx.data, ctx.credal_box.center_prior())? - log_m
            }
            (CriterionKind::PppMultiLabel, Prepared::Ppp { log_m }) => {
                let prior = ctx.credal_box.center_prior();
                let a = lq(&candidate.with_label(0), ctx.data, prior)? - log_m;
                let b = lq(&candidate.with_label(1), ctx.data, prior)? - log_m;
                log_add_exp(a, b)
            }
            (CriterionKind::PppMultiModel | CriterionKind::PppWeighted, Prepared::Variants { priors, log_m, weights }) => {
                let mut values = Vec::with_capacity(priors.len());
                for ((v, pr), m) in ctx.variants.iter().zip(priors).zip(log_m) {
                    let d = ctx.data.select_covariates(&v.covariates);
                    let c = candidate.project(&v.covariates);
                    values.push(lq(&c, &d, pr)? - m);
                }
                if self.kind == CriterionKind::PppMultiModel {
                    values.iter().sum::<f64>() / values.len() as f64
                } else {
                    weights.iter().zip(&values).map(|(w, v)| w * v).sum()
                }
            }
            (CriterionKind::SupervisedBaseline, _) => {
                return Err(PlsError::invalid("criterion", "the supervised baseline does not score candidates"))
            }
            _ => unreachable!("prepared state matches the criterion"),
        };
        Ok(CandidateScore::plain(candidate, score))
    }

    /// Scores all candidates (in parallel when asked); output order matches
    /// input order.
    pub fn score_all(&self, candidates: &[Candidate], parallel: bool) -> Result<Vec<CandidateScore>> {
        if parallel {
            candidates.par_iter().map(|c| self.score(c)).collect()
        } else {
            candidates.iter().map(|c| self.score(c)).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laplace::log_ppp;
    use crate::logistic::fit_mle;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn design(seed: u64, n: usize, p: usize) -> Design {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, p + 1, |_, j| if j == 0 { 1.0 } else { rng.random_range(-2.0..2.0) });
        let y = DVector::from_fn(n, |i, _| {
            let eta = 0.3 + 1.2 * x[(i, 1)];
            f64::from(rng.random::<f64>() < response(eta))
        });
        Design::from_parts(x, y).unwrap()
    }

    fn cand(i: usize, x: &[f64], y: u8) -> Candidate {
        Candidate {
            pool_index: i,
            features: DVector::from_row_slice(x),
            pseudo_label: y,
        }
    }

    fn fast() -> SelectionSettings {
        SelectionSettings {
            cobyla: CobylaConfig {
                fractional_tolerance: 1e-5,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn alpha_cut_constraint_properties() {
        let data = design(1, 25, 1);
        let bx = CredalBox::symmetric(2, 3.0, 2.0).unwrap();
        let cut = compute_alpha_cut(&data, &bx, 1.0, &fast()).unwrap();
        assert!(bx.contains(&cut.argmax_mu, 1e-8));
        assert_eq!(cut.constraint(cut.log_max_marginal), 0.0);
        // α = 1: nothing in the box does better than the maximizer (up to solver accuracy)
        for mu in [DVector::from_vec(vec![0.0, 0.0]), DVector::from_vec(vec![2.0, -1.0])] {
            let lm = laplace_log_marginal(&data, &bx.prior_at(&mu).unwrap(), &BfgsConfig::default())
                .unwrap()
                .log_value;
            assert!(cut.constraint(lm) <= 1e-6);
        }
        // tiny α: the whole box is feasible
        let tiny = AlphaCut { alpha: 1e-300, ..cut.clone() };
        let corner = laplace_log_marginal(&data, &bx.prior_at(&DVector::from_vec(vec![3.0, -3.0])).unwrap(), &BfgsConfig::default())
            .unwrap()
            .log_value;
        assert!(tiny.constraint(corner) > 0.0);
        assert!(compute_alpha_cut(&data, &bx, 0.0, &fast()).is_err());
        assert!(compute_alpha_cut(&data, &bx, 1.5, &fast()).is_err());
    }

    #[test]
    fn degenerate_box_equals_ppp() {
        let data = design(2, 20, 1);
        let mu0 = DVector::from_vec(vec![0.2, -0.4]);
        let sigma = DMatrix::identity(2, 2) * 2.0;
        let bx = CredalBox::degenerate(mu0.clone(), sigma.clone()).unwrap();
        let prior = GaussianPrior::new(mu0, sigma).unwrap();
        let cut = compute_alpha_cut(&data, &bx, 0.5, &fast()).unwrap();
        for (i, x) in [-1.0, 0.0, 1.3].iter().enumerate() {
            let c = cand(i, &[*x], 1);
            let gm = gamma_maximin_score(&data, &c, &bx, &cut, &fast()).unwrap();
            let ppp = score_ppp(&data, &c, &prior, &BfgsConfig::default()).unwrap();
            assert!((gm.score - ppp).abs() <= 1e-10, "{} vs {ppp}", gm.score);
        }
    }

    #[test]
    fn gamma_maximin_is_conservative_and_feasible() {
        let data = design(3, 30, 1);
        let bx = CredalBox::symmetric(2, 3.0, 2.0).unwrap();
        let cut = compute_alpha_cut(&data, &bx, 0.3, &fast()).unwrap();
        let c = cand(0, &[0.8], 1);
        let gm = gamma_maximin_score(&data, &c, &bx, &cut, &fast()).unwrap();
        let mu = DVector::from_vec(gm.worst_case_mu.clone().unwrap());
        assert!(bx.contains(&mu, 1e-8));
        let lm = laplace_log_marginal(&data, &bx.prior_at(&mu).unwrap(), &BfgsConfig::default()).unwrap().log_value;
        assert!(cut.constraint(lm) >= -1e-8);
        let center_lm = laplace_log_marginal(&data, bx.center_prior(), &BfgsConfig::default()).unwrap().log_value;
        if cut.constraint(center_lm) >= 0.0 {
            let ppp = score_ppp(&data, &c, bx.center_prior(), &BfgsConfig::default()).unwrap();
            assert!(gm.score <= ppp + 1e-6);
        }
    }

    #[test]
    fn alpha_one_scores_at_empirical_bayes_prior() {
        let data = design(4, 30, 1);
        let bx = CredalBox::symmetric(2, 3.0, 2.0).unwrap();
        let cut = compute_alpha_cut(&data, &bx, 1.0, &fast()).unwrap();
        let c = cand(0, &[-0.5], 0);
        let gm = gamma_maximin_score(&data, &c, &bx, &cut, &fast()).unwrap();
        let at_star = log_ppp(&data, &c, &bx.prior_at(&cut.argmax_mu).unwrap(), &BfgsConfig::default()).unwrap();
        assert!((gm.score - at_star).abs() < 1e-4, "{} vs {at_star}", gm.score);
    }

    #[test]
    fn probability_and_variance_scores() {
        let model = Coefficients::new(DVector::from_vec(vec![0.0, 1.0])).unwrap();
        assert_eq!(score_probability(&model, &cand(0, &[0.0], 1)), 0.5);
        assert!((score_probability(&model, &cand(0, &[3.0], 1)) - 0.952_574_126_822_433_4).abs() < 1e-12);
        assert_eq!(score_predictive_variance(&model, &cand(0, &[0.0], 1)), -0.25);
        let far = score_predictive_variance(&model, &cand(0, &[30.0], 1));
        assert!(far < 0.0 && far > -1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cands: Vec<Candidate> = (0..50).map(|i| cand(i, &[rng.random_range(-4.0..4.0)], 1)).collect();
        let order = |f: &dyn Fn(&Candidate) -> f64| {
            let mut idx: Vec<usize> = (0..cands.len()).collect();
            idx.sort_by(|&a, &b| f(&cands[a]).total_cmp(&f(&cands[b])));
            idx
        };
        let by_prob = order(&|c| score_probability(&model, c));
        let by_var = order(&|c| score_predictive_variance(&model, c));
        let by_abs_eta = order(&|c| model.eta(&c.features).abs());
        assert_eq!(by_prob, by_abs_eta);
        assert_eq!(by_var, by_abs_eta);
    }

    #[test]
    fn likelihood_maxmax_properties() {
        let data = design(6, 20, 1);
        let ridge = RidgeSchedule::default();
        let fit = fit_mle(&data, 1e-6).unwrap();
        let (i, _) = (0..20)
            .map(|i| (i, data.x().row(i).transpose().dot(&fit.0).abs()))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        let c = cand(i, &[data.x()[(i, 1)]], data.y()[i] as u8);
        let same = score_likelihood_maxmax(&data, &c, &ridge).unwrap();
        let flip = score_likelihood_maxmax(&data, &c.flipped(), &ridge).unwrap();
        assert!(same > flip);
        assert!(same <= 0.0);
        let (refit, _) = fit_mle_with_fallback(&data.with_candidate(&c), &ridge).unwrap();
        assert!((same - augmented_log_likelihood(&data, &c, refit.as_vector())).abs() <= 1e-10);
    }

    #[test]
    fn multilabel_symmetric_case_and_lower_bound() {
        let prior = GaussianPrior::isotropic(DVector::zeros(2), 2.0).unwrap();
        let empty = Design::empty(2);
        let c = cand(0, &[0.7], 1);
        let cfg = BfgsConfig::default();
        let single = score_ppp(&empty, &c.with_label(0), &prior, &cfg).unwrap();
        // centered prior and no data: the two labels mirror each other at x -> -x,
        // so use x = 0 for exact symmetry
        let c0 = cand(0, &[0.0], 1);
        let s0 = score_ppp(&empty, &c0, &prior, &cfg).unwrap();
        let m0 = score_ppp_multilabel(&empty, &c0, &prior, &cfg).unwrap();
        assert!((m0 - (s0 + 2f64.ln())).abs() < 1e-12);
        let data = design(7, 15, 1);
        for x in [-1.5, 0.2, 1.0] {
            let c = cand(0, &[x], 1);
            let s = score_ppp(&data, &c, &prior, &cfg).unwrap();
            assert!(score_ppp_multilabel(&data, &c, &prior, &cfg).unwrap() >= s);
        }
        let _ = single;
    }

    #[test]
    fn multimodel_reduces_to_ppp() {
        let data = design(8, 20, 2);
        let prior = GaussianPrior::isotropic(DVector::zeros(3), 2.0).unwrap();
        let c = cand(0, &[0.5, -0.3], 1);
        let cfg = BfgsConfig::default();
        let ppp = score_ppp(&data, &c, &prior, &cfg).unwrap();
        let full = ModelVariant::full(2);
        let one = score_ppp_multimodel(&data, &c, &[prior.clone()], &[full.clone()], &cfg).unwrap();
        assert!((one - ppp).abs() < 1e-12);
        let two = score_ppp_multimodel(&data, &c, &[prior.clone(), prior.clone()], &[full.clone(), full.clone()], &cfg).unwrap();
        assert!((two - ppp).abs() < 1e-12);

        let variants = default_model_variants(2);
        assert_eq!(variants.len(), 3);
        let priors: Vec<_> = variants.iter().map(|v| v.marginal_prior(&prior).unwrap()).collect();
        let (_, w) = score_ppp_weighted(&data, &c, &priors, &variants, &cfg).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(score_ppp_multimodel(&data, &c, &priors[..1], &variants, &cfg).is_err());
        assert_eq!(default_model_variants(1)[1].covariates, Vec::<usize>::new());
    }

    #[test]
    fn selection_rule() {
        let s = |i: usize, v: f64| CandidateScore {
            pool_index: i,
            pseudo_label: 0,
            score: v,
            worst_case_mu: None,
        };
        assert_eq!(select_candidate(&[s(4, 1.0)]).unwrap().pool_index, 4);
        assert_eq!(select_candidate(&[s(7, 2.0), s(3, 2.0), s(5, 1.0)]).unwrap().pool_index, 3);
        assert!(matches!(select_candidate(&[]), Err(PlsError::EmptyCandidates)));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let scores: Vec<_> = (0..30).map(|i| s(i, (rng.random_range(0..5) as f64) * 0.5)).collect();
        let winner = select_candidate(&scores).unwrap();
        for _ in 0..20 {
            let mut shuffled = scores.clone();
            rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut rng);
            assert_eq!(select_candidate(&shuffled).unwrap(), winner);
        }
    }

    #[test]
    fn criterion_names_round_trip() {
        for k in CriterionKind::all(0.25) {
            assert_eq!(k.label().parse::<CriterionKind>().unwrap(), k);
        }
        assert!("nonsense".parse::<CriterionKind>().is_err());
        assert!(CriterionKind::from_name("gamma-maximin", None).is_err());
    }

    #[test]
    fn prepared_scorer_matches_direct_functions() {
        let data = design(9, 20, 2);
        let model = fit_mle(&data, 1e-6).unwrap();
        let bx = CredalBox::symmetric(3, 3.0, 2.0).unwrap();
        let variants = default_model_variants(2);
        let ctx = CriterionContext {
            data: &data,
            model: &model,
            credal_box: &bx,
            variants: &variants,
            ridge: RidgeSchedule::default(),
            settings: SelectionSettings::default(),
        };
        let c = cand(2, &[0.4, 1.1], 1);
        let cfg = BfgsConfig::default();
        let prior = bx.center_prior();
        let priors: Vec<_> = variants.iter().map(|v| v.marginal_prior(prior).unwrap()).collect();
        let check = |kind: CriterionKind, expect: f64| {
            let s = IterationScorer::prepare(kind, ctx.clone()).unwrap().score(&c).unwrap();
            assert!((s.score - expect).abs() <= 1e-12, "{kind}: {} vs {expect}", s.score);
        };
        check(CriterionKind::Ppp, score_ppp(&data, &c, prior, &cfg).unwrap());
        check(CriterionKind::PppMultiLabel, score_ppp_multilabel(&data, &c, prior, &cfg).unwrap());
        check(CriterionKind::PppMultiModel, score_ppp_multimodel(&data, &c, &priors, &variants, &cfg).unwrap());
        check(CriterionKind::PppWeighted, score_ppp_weighted(&data, &c, &priors, &variants, &cfg).unwrap().0);
        check(CriterionKind::ProbabilityScore, score_probability(&model, &c));
        check(CriterionKind::PredictiveVariance, score_predictive_variance(&model, &c));
    }
}
