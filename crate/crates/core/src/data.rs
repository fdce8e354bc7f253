//! Dataset ingestion, synthesis, standardization and partitioning.
//!
//! Labels are binary (`0`/`1`). The unlabeled partition keeps its true labels
//! behind [`HiddenLabels`], whose only accessor is audited, so selection code
//! cannot read them without it showing up in [`HiddenLabels::read_count`].

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use crate::error::{PlsError, Result};
use crate::logistic::response;

/// Upper bound on reshuffles when drawing a labeled partition with both classes.
pub const MAX_SPLIT_ATTEMPTS: usize = 1000;

const MISSING_TOKENS: [&str; 6] = ["", "NA", "N/A", "?", "nan", "NaN"];

/// Feature rows with optional binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: DMatrix<f64>,
    labels: Option<Vec<u8>>,
    feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        features: DMatrix<f64>,
        labels: Option<Vec<u8>>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        if features.ncols() == 0 {
            return Err(PlsError::invalid("dataset", "at least one covariate is required"));
        }
        if feature_names.len() != features.ncols() {
            return Err(PlsError::DimensionMismatch {
                expected: features.ncols(),
                found: feature_names.len(),
            });
        }
        if let Some(labels) = &labels {
            if labels.len() != features.nrows() {
                return Err(PlsError::DimensionMismatch {
                    expected: features.nrows(),
                    found: labels.len(),
                });
            }
            if labels.iter().any(|&y| y > 1) {
                return Err(PlsError::invalid("dataset", "labels must be 0 or 1"));
            }
        }
        for (j, name) in feature_names.iter().enumerate() {
            if features.column(j).iter().any(|v| !v.is_finite()) {
                return Err(PlsError::NonFiniteFeature {
                    column: name.clone(),
                });
            }
        }
        Ok(Self {
            features,
            labels,
            feature_names,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.features.row(i).transpose()
    }

    /// `(negatives, positives)`; `(0, 0)` when unlabeled.
    pub fn class_counts(&self) -> (usize, usize) {
        match &self.labels {
            Some(labels) => {
                let pos = labels.iter().filter(|&&y| y == 1).count();
                (labels.len() - pos, pos)
            }
            None => (0, 0),
        }
    }

    pub fn has_both_classes(&self) -> bool {
        let (neg, pos) = self.class_counts();
        neg > 0 && pos > 0
    }

    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        let features = self.features.select_rows(rows.iter());
        let labels = self
            .labels
            .as_ref()
            .map(|l| rows.iter().map(|&i| l[i]).collect());
        Dataset {
            features,
            labels,
            feature_names: self.feature_names.clone(),
        }
    }

    /// SHA-256 over shape, names, feature bits and labels, hex encoded.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.n_rows() as u64).to_le_bytes());
        h.update((self.n_features() as u64).to_le_bytes());
        for name in &self.feature_names {
            h.update(name.as_bytes());
            h.update([0u8]);
        }
        for i in 0..self.n_rows() {
            for j in 0..self.n_features() {
                h.update(self.features[(i, j)].to_bits().to_le_bytes());
            }
        }
        if let Some(labels) = &self.labels {
            h.update(labels);
        }
        hex::encode(h.finalize())
    }

    /// Random subset of `n` rows (all rows when `n >= n_rows`), order preserved.
    pub fn subsample(&self, n: usize, seed: u64) -> Dataset {
        if n >= self.n_rows() {
            return self.clone();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx: Vec<usize> = (0..self.n_rows()).collect();
        idx.shuffle(&mut rng);
        let mut keep = idx[..n].to_vec();
        keep.sort_unstable();
        self.select_rows(&keep)
    }

    /// Writes covariates plus a `label_column` (when labeled) as CSV with header.
    pub fn write_csv(&self, path: &Path, label_column: &str) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        if self.labels.is_some() {
            header.push(label_column);
        }
        w.write_record(&header)?;
        for i in 0..self.n_rows() {
            let mut rec: Vec<String> = (0..self.n_features())
                .map(|j| format!("{}", self.features[(i, j)]))
                .collect();
            if let Some(labels) = &self.labels {
                rec.push(labels[i].to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| PlsError::io(path, e))?;
        Ok(())
    }
}

/// What ingestion discarded.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub dropped_rows: usize,
    pub dropped_constant_columns: Vec<String>,
}

pub fn load_csv(path: &Path, label_column: &str, positive_class: &str) -> Result<Dataset> {
    load_csv_with_report(path, label_column, positive_class).map(|(d, _)| d)
}

/// Reads a headed, comma-separated file.
///
/// Rows with a missing entry are dropped. Numeric columns pass through,
/// anything else is one-hot encoded against its lexicographically first level.
/// Constant columns are removed after encoding.
pub fn load_csv_with_report(
    path: &Path,
    label_column: &str,
    positive_class: &str,
) -> Result<(Dataset, IngestReport)> {
    if !path.exists() {
        return Err(PlsError::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
        ));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let label_idx = header
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| PlsError::MissingColumn(label_column.to_owned()))?;

    let mut report = IngestReport::default();
    let mut rows: Vec<Vec<String>> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let fields: Vec<String> = record.iter().map(str::to_owned).collect();
        if fields.iter().any(|f| MISSING_TOKENS.contains(&f.as_str())) {
            report.dropped_rows += 1;
            continue;
        }
        rows.push(fields);
    }

    let levels: BTreeSet<&str> = rows.iter().map(|r| r[label_idx].as_str()).collect();
    match levels.len() {
        0 | 1 => {
            return Err(PlsError::DegenerateLabel {
                column: label_column.to_owned(),
            })
        }
        2 => {}
        n => {
            return Err(PlsError::TooManyLabelLevels {
                column: label_column.to_owned(),
                levels: n,
            })
        }
    }
    if !levels.contains(positive_class) {
        return Err(PlsError::UnknownPositiveClass {
            column: label_column.to_owned(),
            class: positive_class.to_owned(),
        });
    }
    let labels: Vec<u8> = rows
        .iter()
        .map(|r| u8::from(r[label_idx] == positive_class))
        .collect();

    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut names: Vec<String> = Vec::new();
    for (j, name) in header.iter().enumerate() {
        if j == label_idx {
            continue;
        }
        let parsed: Option<Vec<f64>> = rows.iter().map(|r| r[j].parse::<f64>().ok()).collect();
        match parsed {
            Some(values) => {
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(PlsError::NonFiniteFeature {
                        column: name.clone(),
                    });
                }
                columns.push(values);
                names.push(name.clone());
            }
            None => {
                let cats: BTreeSet<&str> = rows.iter().map(|r| r[j].as_str()).collect();
                for level in cats.iter().skip(1) {
                    columns.push(
                        rows.iter()
                            .map(|r| if r[j] == *level { 1.0 } else { 0.0 })
                            .collect(),
                    );
                    names.push(format!("{name}={level}"));
                }
            }
        }
    }

    let mut kept_cols = Vec::new();
    let mut kept_names = Vec::new();
    for (col, name) in columns.into_iter().zip(names) {
        let constant = col.windows(2).all(|w| w[0] == w[1]);
        if constant {
            report.dropped_constant_columns.push(name);
        } else {
            kept_cols.push(col);
            kept_names.push(name);
        }
    }
    if kept_cols.is_empty() {
        return Err(PlsError::NoCovariates {
            label_column: label_column.to_owned(),
        });
    }
    let n = labels.len();
    let features = DMatrix::from_fn(n, kept_cols.len(), |i, j| kept_cols[j][i]);
    Ok((Dataset::new(features, Some(labels), kept_names)?, report))
}

/// Per-column location and scale, estimated once and reused on other data.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaling {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Scaling {
    /// Sample mean and sample (n - 1) standard deviation per column. A column
    /// with zero spread keeps scale 1 so it is only centred.
    pub fn fit(x: &DMatrix<f64>) -> Self {
        let n = x.nrows();
        let mut mean = Vec::with_capacity(x.ncols());
        let mut sd = Vec::with_capacity(x.ncols());
        for col in x.column_iter() {
            let m = if n == 0 { 0.0 } else { col.sum() / n as f64 };
            let var = if n < 2 {
                0.0
            } else {
                col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64
            };
            mean.push(m);
            sd.push(if var > 0.0 { var.sqrt() } else { 1.0 });
        }
        Self { mean, sd }
    }

    pub fn apply_matrix(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| {
            (x[(i, j)] - self.mean[j]) / self.sd[j]
        })
    }

    pub fn apply(&self, d: &Dataset) -> Dataset {
        Dataset {
            features: self.apply_matrix(&d.features),
            labels: d.labels.clone(),
            feature_names: d.feature_names.clone(),
        }
    }
}

pub fn standardize(d: &Dataset) -> (Dataset, Scaling) {
    let scaling = Scaling::fit(&d.features);
    (scaling.apply(d), scaling)
}

/// True labels of the unlabeled pool, readable only through an audited call.
#[derive(Debug, Clone)]
pub struct HiddenLabels {
    labels: Vec<u8>,
    reads: Arc<AtomicUsize>,
}

impl HiddenLabels {
    pub fn new(labels: Vec<u8>) -> Self {
        Self {
            labels,
            reads: Arc::new(AtomicUsize::new(0)),
        }
    }

    /// Post-hoc diagnostics only. Every call is counted.
    pub fn reveal(&self, pool_index: usize) -> u8 {
        self.reads.fetch_add(1, Ordering::Relaxed);
        self.labels[pool_index]
    }

    pub fn read_count(&self) -> usize {
        self.reads.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Unlabeled feature rows. Pool indices are row indices of `features`.
#[derive(Debug, Clone)]
pub struct UnlabeledPool {
    features: DMatrix<f64>,
    feature_names: Vec<String>,
    hidden: HiddenLabels,
}

impl UnlabeledPool {
    pub fn new(features: DMatrix<f64>, feature_names: Vec<String>, hidden: HiddenLabels) -> Result<Self> {
        if hidden.len() != features.nrows() {
            return Err(PlsError::DimensionMismatch {
                expected: features.nrows(),
                found: hidden.len(),
            });
        }
        Ok(Self {
            features,
            feature_names,
            hidden,
        })
    }

    /// Pool from a labeled dataset; its labels become hidden.
    pub fn from_dataset(d: &Dataset) -> Result<Self> {
        let labels = d
            .labels
            .clone()
            .ok_or_else(|| PlsError::invalid("pool", "source dataset must carry labels to hide"))?;
        Self::new(d.features.clone(), d.feature_names.clone(), HiddenLabels::new(labels))
    }

    pub fn empty(n_features: usize) -> Self {
        Self {
            features: DMatrix::zeros(0, n_features),
            feature_names: (1..=n_features).map(|j| format!("x{j}")).collect(),
            hidden: HiddenLabels::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.features.row(i).transpose()
    }

    pub fn hidden_labels(&self) -> &HiddenLabels {
        &self.hidden
    }

    fn rescaled(&self, scaling: &Scaling) -> Self {
        Self {
            features: scaling.apply_matrix(&self.features),
            feature_names: self.feature_names.clone(),
            hidden: self.hidden.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SplitSpec {
    pub labeled_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = |f: f64| f > 0.0 && f < 1.0;
        if !ok(self.labeled_fraction) || !ok(self.test_fraction) {
            return Err(PlsError::invalid("split", "fractions must lie in (0, 1)"));
        }
        if self.labeled_fraction + self.test_fraction >= 1.0 {
            return Err(PlsError::invalid(
                "split",
                "labeled_fraction + test_fraction must be < 1",
            ));
        }
        Ok(())
    }
}

/// Disjoint, exhaustive labeled / unlabeled / test partition.
#[derive(Debug, Clone)]
pub struct Partition {
    pub labeled: Dataset,
    pub unlabeled: UnlabeledPool,
    pub test: Dataset,
    /// Shuffles needed before the labeled part held both classes.
    pub attempts: usize,
}

impl Partition {
    /// Standardizes all parts with statistics from the training features
    /// (labeled rows plus unlabeled rows); the test part never contributes.
    pub fn standardized(&self) -> (Partition, Scaling) {
        let train = stack_rows(self.labeled.features(), self.unlabeled.features());
        let scaling = Scaling::fit(&train);
        let part = Partition {
            labeled: scaling.apply(&self.labeled),
            unlabeled: self.unlabeled.rescaled(&scaling),
            test: scaling.apply(&self.test),
            attempts: self.attempts,
        };
        (part, scaling)
    }
}

pub(crate) fn stack_rows(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols());
    out.rows_mut(0, a.nrows()).copy_from(a);
    out.rows_mut(a.nrows(), b.nrows()).copy_from(b);
    out
}

/// Labeled size `round(n * labeled_fraction)`, test size
/// `round(n * test_fraction)`, the rest unlabeled.
pub fn split(d: &Dataset, s: &SplitSpec) -> Result<Partition> {
    s.validate()?;
    let labels = d
        .labels()
        .ok_or_else(|| PlsError::invalid("split", "dataset has no labels"))?;
    let n = d.n_rows();
    let n_labeled = (n as f64 * s.labeled_fraction).round() as usize;
    let n_test = (n as f64 * s.test_fraction).round() as usize;
    if n_labeled < 2 || n_labeled + n_test > n {
        return Err(PlsError::invalid(
            "split",
            format!("{n} rows cannot hold {n_labeled} labeled (>= 2) and {n_test} test rows"),
        ));
    }
    if !d.has_both_classes() {
        return Err(PlsError::SplitUnsatisfiable { attempts: 0 });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let mut order: Vec<usize> = (0..n).collect();
    for attempt in 1..=MAX_SPLIT_ATTEMPTS {
        order.shuffle(&mut rng);
        let lab = &order[..n_labeled];
        let pos = lab.iter().filter(|&&i| labels[i] == 1).count();
        if pos == 0 || pos == n_labeled {
            continue;
        }
        let test = &order[n_labeled..n_labeled + n_test];
        let pool = &order[n_labeled + n_test..];
        return Ok(Partition {
            labeled: d.select_rows(lab),
            unlabeled: UnlabeledPool::from_dataset(&d.select_rows(pool))?,
            test: d.select_rows(test),
            attempts: attempt,
        });
    }
    Err(PlsError::SplitUnsatisfiable {
        attempts: MAX_SPLIT_ATTEMPTS,
    })
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SyntheticSpec {
    pub n_total: usize,
    /// Intercept first, then one coefficient per covariate.
    pub true_beta: Vec<f64>,
    pub seed: u64,
}

/// Standard-normal covariates, Bernoulli responses through the logistic link.
pub fn generate_synthetic(s: &SyntheticSpec) -> Result<Dataset> {
    if s.n_total < 4 {
        return Err(PlsError::invalid("synthetic spec", "n_total must be >= 4"));
    }
    if s.true_beta.len() < 2 {
        return Err(PlsError::invalid(
            "synthetic spec",
            "true_beta needs an intercept and at least one slope",
        ));
    }
    if s.true_beta.iter().any(|b| !b.is_finite()) {
        return Err(PlsError::invalid("synthetic spec", "true_beta must be finite"));
    }
    let p = s.true_beta.len() - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let mut features = DMatrix::zeros(s.n_total, p);
    let mut labels = Vec::with_capacity(s.n_total);
    for i in 0..s.n_total {
        let mut eta = s.true_beta[0];
        for j in 0..p {
            let x: f64 = rng.sample(StandardNormal);
            features[(i, j)] = x;
            eta += s.true_beta[j + 1] * x;
        }
        let u: f64 = rng.random();
        labels.push(u8::from(u < response(eta)));
    }
    let names = (1..=p).map(|j| format!("x{j}")).collect();
    Dataset::new(features, Some(labels), names)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_banknote_shaped_csv() {
        let f = write_tmp(
            "variance,skewness,curtosis,entropy,class\n\
             3.6216,8.6661,-2.8073,-0.44699,0\n\
             4.5459,8.1674,-2.4586,-1.4621,0\n\
             -1.3971,3.3191,-1.3927,-1.9948,1\n\
             0.39012,-0.14279,-0.031994,0.35084,1\n",
        );
        let d = load_csv(f.path(), "class", "1").unwrap();
        assert_eq!(d.n_features(), 4);
        assert_eq!(d.labels().unwrap(), &[0, 0, 1, 1]);
    }

    #[test]
    fn one_label_level_is_degenerate() {
        let f = write_tmp("a,y\n1,x\n2,x\n3,x\n");
        let err = load_csv(f.path(), "y", "x").unwrap_err();
        assert!(err.to_string().contains("degenerate label column"), "{err}");
        assert!(err.to_string().contains("`y`"));
    }

    #[test]
    fn three_label_levels_rejected() {
        let f = write_tmp("a,y\n1,x\n2,y\n3,z\n");
        assert!(matches!(
            load_csv(f.path(), "y", "x"),
            Err(PlsError::TooManyLabelLevels { levels: 3, .. })
        ));
    }

    #[test]
    fn categorical_three_levels_gives_two_columns() {
        let f = write_tmp("color,y\nred,1\ngreen,0\nblue,1\n");
        let d = load_csv(f.path(), "y", "1").unwrap();
        assert_eq!(d.n_features(), 2);
        assert_eq!(d.feature_names(), &["color=green", "color=red"]);
        // blue is the dropped reference level
        assert_eq!(d.row(2).as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn missing_rows_dropped_and_constant_columns_removed() {
        let f = write_tmp("a,b,y\n1,5,1\n2,5,0\nNA,5,1\n3,5,0\n");
        let (d, report) = load_csv_with_report(f.path(), "y", "1").unwrap();
        assert_eq!(report.dropped_rows, 1);
        assert_eq!(report.dropped_constant_columns, vec!["b".to_string()]);
        assert_eq!(d.n_rows(), 3);
        assert_eq!(d.feature_names(), &["a"]);
    }

    #[test]
    fn only_constant_covariates_is_an_error() {
        let f = write_tmp("a,y\n1,1\n1,0\n");
        assert!(matches!(
            load_csv(f.path(), "y", "1"),
            Err(PlsError::NoCovariates { .. })
        ));
    }

    #[test]
    fn missing_file_and_column_errors() {
        assert!(matches!(
            load_csv(Path::new("/nonexistent/x.csv"), "y", "1"),
            Err(PlsError::Io { .. })
        ));
        let f = write_tmp("a,y\n1,1\n2,0\n");
        assert!(matches!(
            load_csv(f.path(), "label", "1"),
            Err(PlsError::MissingColumn(c)) if c == "label"
        ));
    }

    #[test]
    fn standardize_simple_column() {
        let d = Dataset::new(
            DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]),
            None,
            vec!["a".into()],
        )
        .unwrap();
        let (s, scaling) = standardize(&d);
        assert_eq!(scaling.mean, vec![2.0]);
        assert_eq!(scaling.sd, vec![1.0]);
        assert_eq!(s.features().as_slice(), &[-1.0, 0.0, 1.0]);
        let (again, _) = standardize(&s);
        for (a, b) in again.features().iter().zip(s.features().iter()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn split_sizes_and_determinism() {
        let d = generate_synthetic(&SyntheticSpec {
            n_total: 100,
            true_beta: vec![0.0, 1.0],
            seed: 3,
        })
        .unwrap();
        let spec = SplitSpec {
            labeled_fraction: 0.1,
            test_fraction: 0.3,
            seed: 11,
        };
        let a = split(&d, &spec).unwrap();
        assert_eq!(a.labeled.n_rows(), 10);
        assert_eq!(a.unlabeled.len(), 60);
        assert_eq!(a.test.n_rows(), 30);
        assert!(a.labeled.has_both_classes());
        let b = split(&d, &spec).unwrap();
        assert_eq!(a.labeled, b.labeled);
        assert_eq!(a.test, b.test);
        assert_eq!(a.unlabeled.features(), b.unlabeled.features());
    }

    #[test]
    fn split_resamples_until_both_classes() {
        // one negative among 50 rows and only two labeled slots: most shuffles
        // give an all-positive labeled set
        let features = DMatrix::from_fn(50, 1, |i, _| i as f64);
        let mut labels = vec![1u8; 50];
        labels[17] = 0;
        let d = Dataset::new(features, Some(labels), vec!["a".into()]).unwrap();
        let mut resampled = 0;
        for seed in 0..20 {
            let part = split(
                &d,
                &SplitSpec {
                    labeled_fraction: 0.04,
                    test_fraction: 0.2,
                    seed,
                },
            )
            .unwrap();
            assert!(part.labeled.has_both_classes());
            if part.attempts > 1 {
                resampled += 1;
            }
        }
        assert!(resampled > 0);
    }

    #[test]
    fn split_rejects_single_class_and_bad_fractions() {
        let d = Dataset::new(
            DMatrix::from_fn(20, 1, |i, _| i as f64),
            Some(vec![1; 20]),
            vec!["a".into()],
        )
        .unwrap();
        let spec = SplitSpec {
            labeled_fraction: 0.2,
            test_fraction: 0.2,
            seed: 0,
        };
        assert!(matches!(split(&d, &spec), Err(PlsError::SplitUnsatisfiable { .. })));
        let bad = SplitSpec {
            labeled_fraction: 0.6,
            test_fraction: 0.4,
            seed: 0,
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn synthetic_zero_beta_is_balanced() {
        let d = generate_synthetic(&SyntheticSpec {
            n_total: 10_000,
            true_beta: vec![0.0, 0.0, 0.0],
            seed: 5,
        })
        .unwrap();
        let (_, pos) = d.class_counts();
        let rate = pos as f64 / 10_000.0;
        // 4 binomial standard errors
        assert!((rate - 0.5).abs() < 4.0 * (0.25f64 / 10_000.0).sqrt(), "{rate}");
    }

    #[test]
    fn synthetic_saturated_intercept() {
        let d = generate_synthetic(&SyntheticSpec {
            n_total: 1000,
            true_beta: vec![10.0, 0.0],
            seed: 1,
        })
        .unwrap();
        let (_, pos) = d.class_counts();
        assert!(pos as f64 / 1000.0 >= 0.999);
    }

    #[test]
    fn synthetic_rejects_invalid_spec() {
        let bad = SyntheticSpec {
            n_total: 3,
            true_beta: vec![0.0, 1.0],
            seed: 0,
        };
        assert!(generate_synthetic(&bad).is_err());
        let bad = SyntheticSpec {
            n_total: 10,
            true_beta: vec![0.0, f64::NAN],
            seed: 0,
        };
        assert!(generate_synthetic(&bad).is_err());
    }

    #[test]
    fn hidden_labels_count_reads() {
        let h = HiddenLabels::new(vec![0, 1, 1]);
        assert_eq!(h.read_count(), 0);
        assert_eq!(h.reveal(1), 1);
        let h2 = h.clone();
        h2.reveal(0);
        assert_eq!(h.read_count(), 2);
    }

    #[test]
    fn content_hash_tracks_changes() {
        let d = generate_synthetic(&SyntheticSpec {
            n_total: 10,
            true_beta: vec![0.0, 1.0],
            seed: 0,
        })
        .unwrap();
        let mut labels = d.labels().unwrap().to_vec();
        labels[0] ^= 1;
        let e = Dataset::new(d.features().clone(), Some(labels), d.feature_names().to_vec()).unwrap();
        assert_eq!(d.content_hash(), d.clone().content_hash());
        assert_ne!(d.content_hash(), e.content_hash());
    }
}
