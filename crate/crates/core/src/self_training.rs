//! Incremental self-training: fit, pseudo-label the pool, score, move one
//! point, evaluate, repeat.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::credal::{
    default_model_variants, select_candidate, CredalBox, CriterionContext, CriterionKind, IterationScorer,
    ModelVariant, SelectionSettings,
};
use crate::data::{Dataset, UnlabeledPool};
use crate::error::{PlsError, Result};
use crate::logistic::{fit_mle_with_fallback, predict_labels, Candidate, Coefficients, Design, RidgeSchedule};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoppingRule {
    /// Cap on the number of selections; `None` runs until the pool is empty.
    pub max_iterations: Option<usize>,
}

/// Box of prior locations as configured, before the model dimension is
/// known. Explicit bounds override `half_width`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CredalSpec {
    pub half_width: f64,
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
    pub sigma_scale: f64,
}

impl Default for CredalSpec {
    fn default() -> Self {
        Self {
            half_width: 3.0,
            lower: None,
            upper: None,
            sigma_scale: 2.0,
        }
    }
}

impl CredalSpec {
    pub fn build(&self, dim: usize) -> Result<CredalBox> {
        if !(self.sigma_scale > 0.0 && self.sigma_scale.is_finite()) {
            return Err(PlsError::InvalidConfig {
                field: "sigma_scale".into(),
                reason: "must be positive".into(),
            });
        }
        if !(self.half_width >= 0.0 && self.half_width.is_finite()) {
            return Err(PlsError::InvalidConfig {
                field: "box_half_width".into(),
                reason: "must be finite and >= 0".into(),
            });
        }
        let side = |v: &Option<Vec<f64>>, field: &str, default: f64| -> Result<nalgebra::DVector<f64>> {
            match v {
                None => Ok(nalgebra::DVector::from_element(dim, default)),
                Some(v) if v.len() == dim => Ok(nalgebra::DVector::from_column_slice(v)),
                Some(v) => Err(PlsError::InvalidConfig {
                    field: field.into(),
                    reason: format!("has {} entries, model has {dim} coefficients", v.len()),
                }),
            }
        };
        let lower = side(&self.lower, "box_lower", -self.half_width)?;
        let upper = side(&self.upper, "box_upper", self.half_width)?;
        CredalBox::new(lower, upper, nalgebra::DMatrix::identity(dim, dim) * self.sigma_scale)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfTrainingConfig {
    pub credal: CredalSpec,
    pub ridge: RidgeSchedule,
    pub selection: SelectionSettings,
    /// Covariate subsets for the multi-model criteria; `None` means the full
    /// model plus every leave-one-covariate-out model.
    pub model_variants: Option<Vec<ModelVariant>>,
    /// Score candidates on the rayon pool. Results do not depend on it.
    #[serde(skip)]
    pub parallel: bool,
}

impl Default for SelfTrainingConfig {
    fn default() -> Self {
        Self {
            credal: CredalSpec::default(),
            ridge: RidgeSchedule::default(),
            selection: SelectionSettings::default(),
            model_variants: None,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub labeled_size: usize,
    pub pool_size: usize,
    pub test_accuracy: f64,
    /// Selection fields are absent on the final record of a run.
    pub selected_pool_index: Option<usize>,
    pub pseudo_label: Option<u8>,
    /// For post-hoc analysis only; never consulted by the loop.
    pub true_label_hidden: Option<u8>,
    pub criterion_score: Option<f64>,
    pub worst_case_mu: Option<Vec<f64>>,
    #[serde(skip)]
    pub wall_time: Duration,
}

// timing is not part of a record's identity
impl PartialEq for IterationRecord {
    fn eq(&self, o: &Self) -> bool {
        self.iteration == o.iteration
            && self.labeled_size == o.labeled_size
            && self.pool_size == o.pool_size
            && self.test_accuracy == o.test_accuracy
            && self.selected_pool_index == o.selected_pool_index
            && self.pseudo_label == o.pseudo_label
            && self.true_label_hidden == o.true_label_hidden
            && self.criterion_score == o.criterion_score
            && self.worst_case_mu == o.worst_case_mu
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub fingerprint: String,
    pub library_version: String,
    pub criterion: CriterionKind,
    pub seed: Option<u64>,
    pub records: Vec<IterationRecord>,
    pub final_model: Coefficients,
    pub baseline_accuracy: f64,
    /// Selections a non-baseline criterion makes under the same pool and
    /// stopping rule; the baseline's series is drawn flat over this span.
    pub horizon: usize,
    /// Candidate scores computed over the whole run.
    pub criterion_evaluations: u64,
}

impl RunResult {
    pub fn accuracies(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.test_accuracy).collect()
    }

    pub fn final_accuracy(&self) -> f64 {
        self.records.last().map_or(self.baseline_accuracy, |r| r.test_accuracy)
    }

    /// Accuracy per iteration; the supervised baseline repeats its single
    /// value over `horizon + 1` iterations.
    pub fn accuracy_series(&self) -> Vec<f64> {
        if self.criterion.is_baseline() {
            vec![self.baseline_accuracy; self.horizon + 1]
        } else {
            self.accuracies()
        }
    }

    pub fn selected_indices(&self) -> Vec<usize> {
        self.records.iter().filter_map(|r| r.selected_pool_index).collect()
    }
}

pub fn evaluate_accuracy(model: &Coefficients, test: &Dataset) -> Result<f64> {
    if test.n_rows() == 0 {
        return Err(PlsError::EmptyTestSet);
    }
    let labels = test
        .labels()
        .ok_or_else(|| PlsError::invalid("test set", "has no labels"))?;
    if model.dim() != test.n_features() + 1 {
        return Err(PlsError::DimensionMismatch {
            expected: test.n_features() + 1,
            found: model.dim(),
        });
    }
    let predicted = predict_labels(test.features(), model);
    let hits = predicted.iter().zip(labels).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / test.n_rows() as f64)
}

fn at_iteration<T>(iteration: usize, r: Result<T>) -> Result<T> {
    r.map_err(|e| PlsError::Iteration {
        iteration,
        source: Box::new(e),
    })
}

pub fn run_self_training(
    labeled: &Dataset,
    pool: &UnlabeledPool,
    test: &Dataset,
    criterion: CriterionKind,
    stop: StoppingRule,
    config: &SelfTrainingConfig,
) -> Result<RunResult> {
    if !labeled.has_both_classes() {
        return Err(PlsError::invalid("labeled set", "needs both classes"));
    }
    if !pool.is_empty() && pool.n_features() != labeled.n_features() {
        return Err(PlsError::DimensionMismatch {
            expected: labeled.n_features(),
            found: pool.n_features(),
        });
    }
    let p = labeled.n_features();
    let credal_box = config.credal.build(p + 1)?;
    let variants = config.model_variants.clone().unwrap_or_else(|| default_model_variants(p));
    for v in &variants {
        if v.covariates.iter().any(|&j| j >= p) {
            return Err(PlsError::InvalidConfig {
                field: "model_variants".into(),
                reason: format!("covariate index out of range for {p} covariates"),
            });
        }
    }

    let mut design = Design::from_dataset(labeled)?;
    let mut remaining: Vec<usize> = (0..pool.len()).collect();
    let total = design.n_rows() + remaining.len();
    let mut records = Vec::new();
    let mut evaluations = 0u64;
    let mut iteration = 0usize;
    let final_model = loop {
        let started = Instant::now();
        assert_eq!(design.n_rows() + remaining.len(), total);
        assert_eq!(design.n_rows(), labeled.n_rows() + iteration);
        let (model, _) = at_iteration(iteration, fit_mle_with_fallback(&design, &config.ridge))?;
        let test_accuracy = evaluate_accuracy(&model, test)?;
        let mut record = IterationRecord {
            iteration,
            labeled_size: design.n_rows(),
            pool_size: remaining.len(),
            test_accuracy,
            selected_pool_index: None,
            pseudo_label: None,
            true_label_hidden: None,
            criterion_score: None,
            worst_case_mu: None,
            wall_time: Duration::ZERO,
        };
        let done = criterion.is_baseline()
            || remaining.is_empty()
            || stop.max_iterations.is_some_and(|m| iteration >= m);
        if done {
            record.wall_time = started.elapsed();
            records.push(record);
            break model;
        }

        let features = pool.features().select_rows(&remaining);
        let labels = predict_labels(&features, &model);
        let candidates: Vec<Candidate> = remaining
            .iter()
            .zip(labels)
            .map(|(&i, y)| Candidate {
                pool_index: i,
                features: pool.row(i),
                pseudo_label: y,
            })
            .collect();
        let ctx = CriterionContext {
            data: &design,
            model: &model,
            credal_box: &credal_box,
            variants: &variants,
            ridge: config.ridge,
            settings: config.selection,
        };
        let scorer = at_iteration(iteration, IterationScorer::prepare(criterion, ctx))?;
        let scores = at_iteration(iteration, scorer.score_all(&candidates, config.parallel))?;
        evaluations += scores.len() as u64;
        let chosen = at_iteration(iteration, select_candidate(&scores))?;

        let position = remaining
            .iter()
            .position(|&i| i == chosen.pool_index)
            .expect("selected index comes from the pool");
        design.push(&candidates[position].features, chosen.pseudo_label);
        remaining.remove(position);

        record.selected_pool_index = Some(chosen.pool_index);
        record.pseudo_label = Some(chosen.pseudo_label);
        record.true_label_hidden = Some(pool.hidden_labels().reveal(chosen.pool_index));
        record.criterion_score = Some(chosen.score);
        record.worst_case_mu = chosen.worst_case_mu;
        record.wall_time = started.elapsed();
        records.push(record);
        iteration += 1;
    };

    Ok(RunResult {
        fingerprint: String::new(),
        library_version: env!("CARGO_PKG_VERSION").to_owned(),
        criterion,
        seed: None,
        baseline_accuracy: records[0].test_accuracy,
        horizon: stop.max_iterations.map_or(pool.len(), |m| m.min(pool.len())),
        records,
        final_model,
        criterion_evaluations: evaluations,
    })
}
