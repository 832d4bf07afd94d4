//! Datasets, synthetic generators and reproducible subset sampling.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Task {
    Classification { num_classes: usize },
    Regression,
}

impl Task {
    pub fn num_classes(&self) -> Option<usize> {
        match *self {
            Task::Classification { num_classes } => Some(num_classes),
            Task::Regression => None,
        }
    }

    pub fn is_classification(&self) -> bool {
        matches!(self, Task::Classification { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    #[default]
    TrainPool,
    CandidatePool,
    Test,
    Validation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Label {
    Class(usize),
    Value(f64),
}

impl Label {
    pub fn as_f64(&self) -> f64 {
        match *self {
            Label::Class(c) => c as f64,
            Label::Value(v) => v,
        }
    }
}

/// A single owned example.
#[derive(Debug, Clone, PartialEq)]
pub struct DataPoint {
    pub id: usize,
    pub x: Vec<f64>,
    pub y: Label,
}

/// Generation parameters recorded on synthetic datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SynthMetadata {
    Linear {
        beta_star: Vec<f64>,
        /// Row-major `d × d` covariance.
        covariance: Vec<f64>,
        noise_std: f64,
        seed: u64,
    },
    TwoGaussian {
        separation: f64,
        seed: u64,
    },
}

/// Points stored row-major with their labels. Immutable once built.
///
/// Class labels are kept as `f64` class indices in `targets` so the trainers
/// can treat both tasks uniformly; [`Dataset::label`] restores the enum.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    d: usize,
    task: Task,
    role: Role,
    features: Vec<f64>,
    targets: Vec<f64>,
    class_members: Vec<Vec<usize>>,
    class_names: Option<Vec<String>>,
    metadata: Option<SynthMetadata>,
}

impl Dataset {
    pub fn new(d: usize, task: Task, role: Role, features: Vec<f64>, targets: Vec<f64>) -> Result<Self> {
        if d == 0 {
            return Err(invalid("feature dimension must be at least 1"));
        }
        if features.len() != targets.len() * d {
            return Err(Error::DimensionMismatch { expected: targets.len() * d, got: features.len() });
        }
        if let Some(i) = features.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("non-finite feature in row {}", i / d)));
        }
        let mut class_members = Vec::new();
        if let Task::Classification { num_classes } = task {
            if num_classes < 2 {
                return Err(invalid("classification needs at least two classes"));
            }
            class_members = vec![Vec::new(); num_classes];
            for (i, &t) in targets.iter().enumerate() {
                let c = t as usize;
                if t < 0.0 || t.fract() != 0.0 || c >= num_classes {
                    return Err(invalid(format!("row {i}: label {t} outside [0, {num_classes})")));
                }
                class_members[c].push(i);
            }
        } else if let Some(i) = targets.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("non-finite target in row {i}")));
        }
        Ok(Self { d, task, role, features, targets, class_members, class_names: None, metadata: None })
    }

    pub fn with_role(mut self, role: Role) -> Self {
        self.role = role;
        self
    }

    pub fn with_metadata(mut self, metadata: SynthMetadata) -> Self {
        self.metadata = Some(metadata);
        self
    }

    pub fn with_class_names(mut self, names: Vec<String>) -> Self {
        self.class_names = Some(names);
        self
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn metadata(&self) -> Option<&SynthMetadata> {
        self.metadata.as_ref()
    }

    pub fn class_names(&self) -> Option<&[String]> {
        self.class_names.as_deref()
    }

    /// Ids of each class, ascending. Empty for regression.
    pub fn class_members(&self) -> &[Vec<usize>] {
        &self.class_members
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    #[inline]
    pub fn target(&self, i: usize) -> f64 {
        self.targets[i]
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn label(&self, i: usize) -> Label {
        match self.task {
            Task::Classification { .. } => Label::Class(self.targets[i] as usize),
            Task::Regression => Label::Value(self.targets[i]),
        }
    }

    pub fn point(&self, i: usize) -> DataPoint {
        DataPoint { id: i, x: self.row(i).to_vec(), y: self.label(i) }
    }

    pub fn points(&self) -> impl Iterator<Item = DataPoint> + '_ {
        (0..self.len()).map(|i| self.point(i))
    }

    /// New dataset holding `ids` (in that order), optionally followed by one
    /// extra point. Ids are re-densified.
    pub fn gather(&self, ids: &[usize], extra: Option<(&[f64], f64)>) -> Dataset {
        let n = ids.len() + extra.is_some() as usize;
        let mut features = Vec::with_capacity(n * self.d);
        let mut targets = Vec::with_capacity(n);
        for &i in ids {
            features.extend_from_slice(self.row(i));
            targets.push(self.targets[i]);
        }
        if let Some((x, y)) = extra {
            assert_eq!(x.len(), self.d, "gather: extra point dimension");
            features.extend_from_slice(x);
            targets.push(y);
        }
        self.derived(features, targets)
    }

    /// Concatenation of two datasets sharing `d` and task.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if self.d != other.d {
            return Err(Error::DimensionMismatch { expected: self.d, got: other.d });
        }
        if self.task != other.task {
            return Err(Error::TaskMismatch("cannot concatenate datasets with different tasks".into()));
        }
        let mut features = self.features.clone();
        features.extend_from_slice(&other.features);
        let mut targets = self.targets.clone();
        targets.extend_from_slice(&other.targets);
        Ok(self.derived(features, targets))
    }

    fn derived(&self, features: Vec<f64>, targets: Vec<f64>) -> Dataset {
        let mut class_members = vec![Vec::new(); self.class_members.len()];
        for (i, &t) in targets.iter().enumerate() {
            if let Some(m) = class_members.get_mut(t as usize) {
                m.push(i);
            }
        }
        Dataset {
            d: self.d,
            task: self.task,
            role: self.role,
            features,
            targets,
            class_members,
            class_names: self.class_names.clone(),
            metadata: None,
        }
    }

    pub fn metadata_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.metadata)?)
    }

    pub fn write_metadata(&self, path: &Path) -> Result<()> {
        fs::write(path, self.metadata_json()?)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Classification,
    Regression,
}

/// Column layout for [`load_csv`].
#[derive(Debug, Clone)]
pub struct CsvSchema {
    pub label_column: String,
    pub task: TaskKind,
    pub role: Role,
    /// Class names in index order. When present, non-train roles reject
    /// labels outside it and train roles append new labels at the end.
    pub class_map: Option<Vec<String>>,
}

impl CsvSchema {
    pub fn new(label_column: impl Into<String>, task: TaskKind) -> Self {
        Self { label_column: label_column.into(), task, role: Role::TrainPool, class_map: None }
    }
}

pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<Dataset> {
    let text = fs::read_to_string(path)?;
    parse_csv(&text, path, schema)
}

pub(crate) fn parse_csv(text: &str, path: &Path, schema: &CsvSchema) -> Result<Dataset> {
    let parse_err = |msg: String| Error::Parse { path: path.to_path_buf(), msg };
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = match reader.headers() {
        Ok(h) => h.clone(),
        Err(_) => return Err(Error::NoDataRows(path.to_path_buf())),
    };
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(Error::NoDataRows(path.to_path_buf()));
    }
    let label_idx = header
        .iter()
        .position(|h| h == schema.label_column)
        .ok_or_else(|| Error::MissingLabelColumn(schema.label_column.clone()))?;
    let feature_names: Vec<&str> =
        header.iter().enumerate().filter(|(i, _)| *i != label_idx).map(|(_, h)| h).collect();
    let d = feature_names.len();
    if d == 0 {
        return Err(parse_err("no feature columns".into()));
    }

    let mut features = Vec::new();
    let mut raw_labels = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = row + 2;
        if rec.len() != header.len() {
            return Err(parse_err(format!("line {line}: expected {} fields, got {}", header.len(), rec.len())));
        }
        for (i, cell) in rec.iter().enumerate() {
            if i == label_idx {
                continue;
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(format!("line {line}: non-numeric feature `{cell}` in column `{}`", &header[i])))?;
            if !v.is_finite() {
                return Err(parse_err(format!("line {line}: non-finite feature in column `{}`", &header[i])));
            }
            features.push(v);
        }
        raw_labels.push(rec[label_idx].to_string());
    }
    if raw_labels.is_empty() {
        return Err(Error::NoDataRows(path.to_path_buf()));
    }

    match schema.task {
        TaskKind::Regression => {
            let targets = raw_labels
                .iter()
                .enumerate()
                .map(|(i, s)| s.parse::<f64>().map_err(|_| parse_err(format!("line {}: non-numeric label `{s}`", i + 2))))
                .collect::<Result<Vec<_>>>()?;
            Dataset::new(d, Task::Regression, schema.role, features, targets)
        }
        TaskKind::Classification => {
            let names = match &schema.class_map {
                Some(map) => {
                    let mut names = map.clone();
                    for label in &raw_labels {
                        if !names.contains(label) {
                            if schema.role == Role::TrainPool {
                                names.push(label.clone());
                            } else {
                                return Err(parse_err(format!("label `{label}` not present in the supplied class map")));
                            }
                        }
                    }
                    names
                }
                None => sorted_class_names(&raw_labels),
            };
            let lookup: BTreeMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
            let targets = raw_labels.iter().map(|l| lookup[l.as_str()] as f64).collect();
            let num_classes = names.len().max(2);
            Ok(Dataset::new(d, Task::Classification { num_classes }, schema.role, features, targets)?
                .with_class_names(names))
        }
    }
}

/// Unique labels, numerically ordered when every label parses as a number.
fn sorted_class_names(labels: &[String]) -> Vec<String> {
    let mut names: Vec<String> = labels.to_vec();
    names.sort();
    names.dedup();
    if names.iter().all(|n| n.parse::<f64>().is_ok()) {
        names.sort_by(|a, b| a.parse::<f64>().unwrap().total_cmp(&b.parse::<f64>().unwrap()));
    }
    names
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type", content = "value")]
pub enum CovarianceSpec {
    Identity,
    Diagonal(Vec<f64>),
    /// Row-major `d × d`.
    Matrix(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type", content = "value")]
pub enum BetaSpec {
    Ones,
    Explicit(Vec<f64>),
    /// Standard normal coefficients drawn from the given seed.
    Gaussian(u64),
}

/// The linear-Gaussian generative model `y = xᵀβ* + ε`, `x ~ N(0, Σ)`,
/// `ε ~ N(0, σ²)`.
#[derive(Debug, Clone)]
pub struct LinearPopulation {
    beta_star: DVector<f64>,
    covariance: DMatrix<f64>,
    chol: DMatrix<f64>,
    noise_std: f64,
}

impl LinearPopulation {
    pub fn new(d: usize, noise_std: f64, covariance: &CovarianceSpec, beta: &BetaSpec) -> Result<Self> {
        if d == 0 {
            return Err(invalid("d must be at least 1"));
        }
        if !(noise_std >= 0.0) || !noise_std.is_finite() {
            return Err(invalid("noise standard deviation must be finite and non-negative"));
        }
        let cov = match covariance {
            CovarianceSpec::Identity => DMatrix::identity(d, d),
            CovarianceSpec::Diagonal(diag) => {
                if diag.len() != d {
                    return Err(Error::DimensionMismatch { expected: d, got: diag.len() });
                }
                DMatrix::from_diagonal(&DVector::from_column_slice(diag))
            }
            CovarianceSpec::Matrix(m) => {
                if m.len() != d * d {
                    return Err(Error::DimensionMismatch { expected: d * d, got: m.len() });
                }
                let m = DMatrix::from_row_slice(d, d, m);
                if (&m - m.transpose()).abs().max() > 1e-12 * m.abs().max().max(1.0) {
                    return Err(Error::NotPositiveDefinite);
                }
                m
            }
        };
        let chol = cov.clone().cholesky().ok_or(Error::NotPositiveDefinite)?.l();
        let beta_star = match beta {
            BetaSpec::Ones => DVector::from_element(d, 1.0),
            BetaSpec::Explicit(b) => {
                if b.len() != d {
                    return Err(Error::DimensionMismatch { expected: d, got: b.len() });
                }
                DVector::from_column_slice(b)
            }
            BetaSpec::Gaussian(seed) => {
                let mut rng = rng_from_seed(*seed);
                DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng))
            }
        };
        Ok(Self { beta_star, covariance: cov, chol, noise_std })
    }

    pub fn dim(&self) -> usize {
        self.beta_star.len()
    }

    pub fn beta_star(&self) -> &DVector<f64> {
        &self.beta_star
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_std * self.noise_std
    }

    /// Population mean squared error `σ² + (β − β*)ᵀ Σ (β − β*)`.
    pub fn population_mse(&self, beta: &[f64]) -> f64 {
        let d = self.dim();
        assert_eq!(beta.len(), d);
        let diff: Vec<f64> = beta.iter().zip(self.beta_star.iter()).map(|(b, s)| b - s).collect();
        let mut q = 0.0;
        for i in 0..d {
            let mut row = 0.0;
            for j in 0..d {
                row += self.covariance[(i, j)] * diff[j];
            }
            q += diff[i] * row;
        }
        self.noise_var() + q
    }

    pub fn draw(&self, n: usize, seed: u64) -> Dataset {
        let d = self.dim();
        let mut rng = rng_from_seed(seed);
        let mut features = Vec::with_capacity(n * d);
        let mut targets = Vec::with_capacity(n);
        let mut g = vec![0.0; d];
        for _ in 0..n {
            for v in g.iter_mut() {
                *v = StandardNormal.sample(&mut rng);
            }
            let mut y = 0.0;
            for i in 0..d {
                let mut xi = 0.0;
                for j in 0..=i {
                    xi += self.chol[(i, j)] * g[j];
                }
                features.push(xi);
                y += xi * self.beta_star[i];
            }
            let eps: f64 = StandardNormal.sample(&mut rng);
            targets.push(y + self.noise_std * eps);
        }
        Dataset::new(d, Task::Regression, Role::TrainPool, features, targets)
            .expect("generated data is finite")
            .with_metadata(self.metadata(seed))
    }

    fn metadata(&self, seed: u64) -> SynthMetadata {
        let d = self.dim();
        let mut cov = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                cov.push(self.covariance[(i, j)]);
            }
        }
        SynthMetadata::Linear {
            beta_star: self.beta_star.iter().copied().collect(),
            covariance: cov,
            noise_std: self.noise_std,
            seed,
        }
    }
}

/// Two classes with identity covariance and means `±(separation/2)·e₁`.
/// Point `i` has class `i mod 2`, so labels are balanced up to rounding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoGaussian {
    pub d: usize,
    pub separation: f64,
}

impl TwoGaussian {
    pub fn new(d: usize, separation: f64) -> Result<Self> {
        if d == 0 {
            return Err(invalid("d must be at least 1"));
        }
        if !(separation >= 0.0) || !separation.is_finite() {
            return Err(invalid("separation must be finite and non-negative"));
        }
        Ok(Self { d, separation })
    }

    pub fn draw(&self, n: usize, seed: u64) -> Dataset {
        let mut rng = rng_from_seed(seed);
        let mut features = Vec::with_capacity(n * self.d);
        let mut targets = Vec::with_capacity(n);
        for i in 0..n {
            let class = i % 2;
            let shift = if class == 0 { -self.separation / 2.0 } else { self.separation / 2.0 };
            for j in 0..self.d {
                let g: f64 = StandardNormal.sample(&mut rng);
                features.push(if j == 0 { g + shift } else { g });
            }
            targets.push(class as f64);
        }
        Dataset::new(self.d, Task::Classification { num_classes: 2 }, Role::TrainPool, features, targets)
            .expect("generated data is valid")
            .with_metadata(SynthMetadata::TwoGaussian { separation: self.separation, seed })
    }
}

pub fn synth_linear(
    n: usize,
    d: usize,
    sigma_noise: f64,
    covariance: &CovarianceSpec,
    beta_star: &BetaSpec,
    seed: u64,
) -> Result<Dataset> {
    if n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    Ok(LinearPopulation::new(d, sigma_noise, covariance, beta_star)?.draw(n, seed))
}

pub fn synth_classification(n: usize, d: usize, class_separation: f64, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(invalid("n must be at least 2"));
    }
    Ok(TwoGaussian::new(d, class_separation)?.draw(n, seed))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetSpec {
    pub k: usize,
    pub exclude: Option<usize>,
    pub balanced: bool,
    pub seed: u64,
}

/// Draws `spec.k` distinct ids without replacement, never returning
/// `spec.exclude`.
///
/// Balanced draws give every class `k / C` points and hand the remainder
/// out one each to the lowest class indices.
pub fn sample_subset(pool: &Dataset, spec: &SubsetSpec) -> Result<Vec<usize>> {
    if spec.k == 0 {
        return Err(invalid("subset size k must be at least 1"));
    }
    let n = pool.len();
    if let Some(e) = spec.exclude {
        if e >= n {
            return Err(invalid(format!("excluded id {e} is outside the pool of {n}")));
        }
    }
    let available = n - spec.exclude.is_some() as usize;
    if spec.k > available {
        return Err(Error::Insufficient(format!("k={} exceeds the {available} available points", spec.k)));
    }
    let mut rng = rng_from_seed(spec.seed);
    if !spec.balanced {
        let mut out: Vec<usize> = index::sample(&mut rng, available, spec.k).into_iter().collect();
        if let Some(e) = spec.exclude {
            for v in out.iter_mut() {
                if *v >= e {
                    *v += 1;
                }
            }
        }
        return Ok(out);
    }

    let members = match pool.task() {
        Task::Classification { .. } => pool.class_members(),
        Task::Regression => return Err(invalid("balanced sampling requires a classification task")),
    };
    let classes = members.len();
    let base = spec.k / classes;
    let rem = spec.k % classes;
    let mut out = Vec::with_capacity(spec.k);
    for (c, ids) in members.iter().enumerate() {
        let quota = base + usize::from(c < rem);
        let skip = spec.exclude.and_then(|e| ids.binary_search(&e).ok());
        let avail_c = ids.len() - skip.is_some() as usize;
        if quota > avail_c {
            return Err(Error::Insufficient(format!(
                "class {c} has {avail_c} available points, balanced draw needs {quota}"
            )));
        }
        for pos in index::sample(&mut rng, avail_c, quota) {
            let pos = match skip {
                Some(s) if pos >= s => pos + 1,
                _ => pos,
            };
            out.push(ids[pos]);
        }
    }
    out.shuffle(&mut rng);
    Ok(out)
}
