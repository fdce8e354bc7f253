//! Experiment configuration, per-run persistence, aggregation and the
//! criterion × seed grid.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::credal::{CriterionKind, SelectionSettings};
use crate::data::{generate_synthetic, load_csv, split, Dataset, Partition, SplitSpec, SyntheticSpec};
use crate::error::{PlsError, Result};
use crate::logistic::RidgeSchedule;
use crate::optim::{BfgsConfig, CobylaConfig};
use crate::self_training::{run_self_training, CredalSpec, RunResult, SelfTrainingConfig, StoppingRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetSource {
    Synthetic,
    Csv,
}

/// Flat key/value experiment description. Every key is optional in the
/// file; missing keys take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub csv_path: Option<PathBuf>,
    pub label_column: String,
    pub positive_class: String,
    /// Rows drawn (per seed) from the CSV before splitting.
    pub subsample: Option<usize>,
    pub synthetic_n_total: usize,
    /// Intercept first.
    pub synthetic_beta: Vec<f64>,
    pub labeled_fraction: f64,
    pub test_fraction: f64,
    pub criteria: Vec<String>,
    pub alphas: Vec<f64>,
    pub box_half_width: f64,
    pub box_lower: Option<Vec<f64>>,
    pub box_upper: Option<Vec<f64>>,
    pub sigma_scale: f64,
    pub seeds: Vec<u64>,
    pub max_iterations: Option<usize>,
    pub bfgs_gradient_tolerance: f64,
    pub bfgs_max_iterations: usize,
    pub cobyla_initial_trust_radius: f64,
    pub cobyla_fractional_tolerance: f64,
    pub cobyla_max_evaluations: usize,
    pub multistart_starts: usize,
    pub ridge_initial: f64,
    pub ridge_factor: f64,
    pub ridge_max: f64,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let bfgs = BfgsConfig::default();
        let cobyla = CobylaConfig::default();
        let ridge = RidgeSchedule::default();
        Self {
            dataset: DatasetSource::Synthetic,
            csv_path: None,
            label_column: "class".into(),
            positive_class: "1".into(),
            subsample: None,
            synthetic_n_total: 80,
            synthetic_beta: vec![0.0, 1.0, -1.0],
            labeled_fraction: 0.1,
            test_fraction: 0.3,
            criteria: CriterionKind::NAMES.iter().map(|s| s.to_string()).collect(),
            alphas: vec![0.5],
            box_half_width: 3.0,
            box_lower: None,
            box_upper: None,
            sigma_scale: 2.0,
            seeds: (0..10).collect(),
            max_iterations: None,
            bfgs_gradient_tolerance: bfgs.gradient_tolerance,
            bfgs_max_iterations: bfgs.max_iterations,
            cobyla_initial_trust_radius: cobyla.initial_trust_radius,
            cobyla_fractional_tolerance: cobyla.fractional_tolerance,
            cobyla_max_evaluations: cobyla.max_evaluations,
            multistart_starts: 5,
            ridge_initial: ridge.initial,
            ridge_factor: ridge.factor,
            ridge_max: ridge.max,
            output_dir: PathBuf::from("out"),
        }
    }
}

fn bad(field: &str, reason: impl Into<String>) -> PlsError {
    PlsError::InvalidConfig {
        field: field.into(),
        reason: reason.into(),
    }
}

fn relabel(field: &str, r: Result<()>) -> Result<()> {
    r.map_err(|e| bad(field, e.to_string()))
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_owned();
            let field = msg
                .split('`')
                .nth(1)
                .filter(|_| msg.starts_with("unknown field"))
                .unwrap_or("<file>")
                .to_owned();
            bad(&field, msg)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| PlsError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        match self.dataset {
            DatasetSource::Csv if self.csv_path.is_none() => {
                return Err(bad("csv_path", "required when dataset = \"csv\""))
            }
            DatasetSource::Synthetic => {
                if self.synthetic_beta.len() < 2 {
                    return Err(bad("synthetic_beta", "need an intercept and at least one slope"));
                }
                if self.synthetic_n_total == 0 {
                    return Err(bad("synthetic_n_total", "must be positive"));
                }
            }
            _ => {}
        }
        if self.subsample == Some(0) {
            return Err(bad("subsample", "must be positive"));
        }
        relabel("labeled_fraction", self.split_spec(0).validate())?;
        if self.criteria.is_empty() {
            return Err(bad("criteria", "at least one criterion is required"));
        }
        if self.seeds.is_empty() {
            return Err(bad("seeds", "at least one seed is required"));
        }
        for &a in &self.alphas {
            if !(a > 0.0 && a <= 1.0) {
                return Err(bad("alphas", format!("{a} not in (0, 1]")));
            }
        }
        if self.criteria.iter().any(|c| c == "gamma-maximin") && self.alphas.is_empty() {
            return Err(bad("alphas", "gamma-maximin needs at least one alpha"));
        }
        for c in &self.criteria {
            if !CriterionKind::NAMES.contains(&c.as_str()) {
                return Err(bad("criteria", format!("unknown criterion `{c}`")));
            }
        }
        if self.multistart_starts == 0 {
            return Err(bad("multistart_starts", "must be >= 1"));
        }
        relabel("bfgs_gradient_tolerance", self.bfgs().validate())?;
        relabel("cobyla_fractional_tolerance", self.cobyla().validate())?;
        if !(self.ridge_initial > 0.0 && self.ridge_factor > 1.0 && self.ridge_max >= self.ridge_initial) {
            return Err(bad("ridge_initial", "need 0 < ridge_initial <= ridge_max and ridge_factor > 1"));
        }
        self.credal_spec().build(2).map(|_| ())?;
        Ok(())
    }

    fn bfgs(&self) -> BfgsConfig {
        BfgsConfig {
            gradient_tolerance: self.bfgs_gradient_tolerance,
            max_iterations: self.bfgs_max_iterations,
            ..BfgsConfig::default()
        }
    }

    fn cobyla(&self) -> CobylaConfig {
        CobylaConfig {
            initial_trust_radius: self.cobyla_initial_trust_radius,
            fractional_tolerance: self.cobyla_fractional_tolerance,
            max_evaluations: self.cobyla_max_evaluations,
        }
    }

    fn credal_spec(&self) -> CredalSpec {
        CredalSpec {
            half_width: self.box_half_width,
            lower: self.box_lower.clone(),
            upper: self.box_upper.clone(),
            sigma_scale: self.sigma_scale,
        }
    }

    pub fn split_spec(&self, seed: u64) -> SplitSpec {
        SplitSpec {
            labeled_fraction: self.labeled_fraction,
            test_fraction: self.test_fraction,
            seed,
        }
    }

    pub fn stopping_rule(&self) -> StoppingRule {
        StoppingRule {
            max_iterations: self.max_iterations,
        }
    }

    pub fn self_training_config(&self) -> SelfTrainingConfig {
        SelfTrainingConfig {
            credal: self.credal_spec(),
            ridge: RidgeSchedule {
                initial: self.ridge_initial,
                factor: self.ridge_factor,
                max: self.ridge_max,
            },
            selection: SelectionSettings {
                bfgs: self.bfgs(),
                cobyla: self.cobyla(),
                multistart_starts: self.multistart_starts,
            },
            model_variants: None,
            parallel: true,
        }
    }

    /// Criterion list with `gamma-maximin` expanded once per alpha, in
    /// configuration order.
    pub fn criterion_kinds(&self) -> Result<Vec<CriterionKind>> {
        let mut out = Vec::new();
        for name in &self.criteria {
            if name == "gamma-maximin" {
                for &a in &self.alphas {
                    out.push(CriterionKind::from_name(name, Some(a))?);
                }
            } else {
                out.push(CriterionKind::from_name(name, None)?);
            }
        }
        let mut seen = Vec::new();
        out.retain(|k| {
            let fresh = !seen.contains(k);
            seen.push(*k);
            fresh
        });
        Ok(out)
    }

    pub fn synthetic_spec(&self, seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            n_total: self.synthetic_n_total,
            true_beta: self.synthetic_beta.clone(),
            seed,
        }
    }

    /// The dataset a seed sees: generated from the seed, or the CSV
    /// (subsampled with the seed when configured).
    pub fn dataset(&self, seed: u64) -> Result<Dataset> {
        match self.dataset {
            DatasetSource::Synthetic => generate_synthetic(&self.synthetic_spec(seed)),
            DatasetSource::Csv => {
                let path = self.csv_path.as_ref().expect("validated");
                let d = load_csv(path, &self.label_column, &self.positive_class)?;
                Ok(match self.subsample {
                    Some(n) => d.subsample(n, seed),
                    None => d,
                })
            }
        }
    }

    /// Split and standardize for one seed.
    pub fn partition(&self, seed: u64) -> Result<Partition> {
        let d = self.dataset(seed)?;
        Ok(split(&d, &self.split_spec(seed))?.standardized().0)
    }

    /// Hash of the canonical JSON form of everything that determines a run
    /// except the seed, plus the criterion. Key order in the file does not
    /// matter; the criterion list, α list, seeds and output directory do not
    /// enter (only the run's own criterion does).
    pub fn fingerprint(&self, criterion: &CriterionKind) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        let map = value.as_object_mut().expect("struct serializes to an object");
        for key in ["criteria", "alphas", "seeds", "output_dir"] {
            map.remove(key);
        }
        map.insert("criterion".into(), serde_json::to_value(criterion).expect("criterion serializes"));
        let canonical = serde_json::to_string(&value).expect("json value serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn runs_dir(&self) -> PathBuf {
        self.output_dir.join("runs")
    }

    pub fn run_path(&self, criterion: &CriterionKind, seed: u64) -> PathBuf {
        self.runs_dir().join(format!("{}_seed{seed}.json", criterion.label()))
    }
}

/// Runs one grid cell.
pub fn run_cell(config: &ExperimentConfig, criterion: CriterionKind, seed: u64) -> Result<RunResult> {
    let part = config.partition(seed)?;
    let mut result = run_self_training(
        &part.labeled,
        &part.unlabeled,
        &part.test,
        criterion,
        config.stopping_rule(),
        &config.self_training_config(),
    )?;
    result.fingerprint = config.fingerprint(&criterion);
    result.seed = Some(seed);
    Ok(result)
}

pub fn persist_run(result: &RunResult, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| PlsError::io(dir, e))?;
    }
    let mut text = serde_json::to_string_pretty(result)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| PlsError::io(path, e))
}

pub fn load_run(path: &Path) -> Result<RunResult> {
    let text = fs::read_to_string(path).map_err(|e| PlsError::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// All `*.json` run files in `dir`, sorted by file name.
pub fn load_runs(dir: &Path) -> Result<Vec<RunResult>> {
    if !dir.is_dir() {
        return Err(PlsError::NoRuns);
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| PlsError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(PlsError::NoRuns);
    }
    paths.iter().map(|p| load_run(p)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub criterion: String,
    pub iteration: usize,
    pub mean_accuracy: f64,
    pub stderr: f64,
    pub n_seeds: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSummary {
    pub rows: Vec<SummaryRow>,
}

/// Per-iteration mean and standard error across runs of one configuration.
/// Series are truncated to the shortest run.
pub fn aggregate(runs: &[RunResult]) -> Result<BenchmarkSummary> {
    let first = runs.first().ok_or(PlsError::NoRuns)?;
    if let Some(other) = runs.iter().find(|r| r.fingerprint != first.fingerprint) {
        return Err(PlsError::MixedFingerprints {
            first: first.fingerprint.clone(),
            other: other.fingerprint.clone(),
        });
    }
    let series: Vec<Vec<f64>> = runs.iter().map(RunResult::accuracy_series).collect();
    let len = series.iter().map(Vec::len).min().unwrap_or(0);
    let n = runs.len();
    let label = first.criterion.label();
    let rows = (0..len)
        .map(|t| {
            let values: Vec<f64> = series.iter().map(|s| s[t]).collect();
            let mean = values.iter().sum::<f64>() / n as f64;
            let stderr = if n > 1 {
                let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                (var / n as f64).sqrt()
            } else {
                0.0
            };
            SummaryRow {
                criterion: label.clone(),
                iteration: t,
                mean_accuracy: mean,
                stderr,
                n_seeds: n,
            }
        })
        .collect();
    Ok(BenchmarkSummary { rows })
}

/// Groups runs by criterion (ordered by `order`, unknown criteria last by
/// label) and aggregates each group.
pub fn summarize(runs: &[RunResult], order: &[CriterionKind]) -> Result<BenchmarkSummary> {
    if runs.is_empty() {
        return Err(PlsError::NoRuns);
    }
    let mut groups: BTreeMap<(usize, String), Vec<RunResult>> = BTreeMap::new();
    for r in runs {
        let rank = order.iter().position(|k| *k == r.criterion).unwrap_or(order.len());
        groups.entry((rank, r.criterion.label())).or_default().push(r.clone());
    }
    let mut out = BenchmarkSummary::default();
    for mut group in groups.into_values() {
        group.sort_by_key(|r| r.seed);
        out.rows.extend(aggregate(&group)?.rows);
    }
    Ok(out)
}

impl BenchmarkSummary {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["criterion", "iteration", "mean_accuracy", "stderr"])?;
        for r in &self.rows {
            w.write_record([
                r.criterion.clone(),
                r.iteration.to_string(),
                r.mean_accuracy.to_string(),
                r.stderr.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| PlsError::invalid("csv", e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
        fs::create_dir_all(dir).map_err(|e| PlsError::io(dir, e))?;
        let csv_path = dir.join(format!("{stem}.csv"));
        let json_path = dir.join(format!("{stem}.json"));
        fs::write(&csv_path, self.to_csv()?).map_err(|e| PlsError::io(&csv_path, e))?;
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        fs::write(&json_path, json).map_err(|e| PlsError::io(&json_path, e))?;
        Ok((csv_path, json_path))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GridReport {
    pub computed: usize,
    pub reused: usize,
}

fn reusable(path: &Path, fingerprint: &str, seed: u64) -> Option<RunResult> {
    let r = load_run(path).ok()?;
    (r.fingerprint == fingerprint && r.seed == Some(seed)).then_some(r)
}

/// Runs every (criterion, seed) cell, reusing run files whose fingerprint
/// matches, and writes `summary.csv` / `summary.json` to the output
/// directory.
pub fn run_grid(config: &ExperimentConfig) -> Result<(BenchmarkSummary, GridReport)> {
    let kinds = config.criterion_kinds()?;
    let cells: Vec<(CriterionKind, u64)> = kinds
        .iter()
        .flat_map(|&k| config.seeds.iter().map(move |&s| (k, s)))
        .collect();
    let outcomes: Vec<Result<(RunResult, bool)>> = cells
        .par_iter()
        .map(|&(k, seed)| {
            let path = config.run_path(&k, seed);
            if let Some(r) = reusable(&path, &config.fingerprint(&k), seed) {
                return Ok((r, true));
            }
            let r = run_cell(config, k, seed)?;
            persist_run(&r, &path)?;
            Ok((r, false))
        })
        .collect();
    let mut runs = Vec::with_capacity(outcomes.len());
    let mut report = GridReport::default();
    for o in outcomes {
        let (r, reused) = o?;
        if reused {
            report.reused += 1;
        } else {
            report.computed += 1;
        }
        runs.push(r);
    }
    let summary = summarize(&runs, &kinds)?;
    summary.write(&config.output_dir, "summary")?;
    Ok((summary, report))
}
