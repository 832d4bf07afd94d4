use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use scalelaw::amortized::AmortizedConfig;
use scalelaw::data::{
    load_csv, BetaSpec, CovarianceSpec, CsvSchema, Dataset, LinearPopulation, Role, TaskKind, TwoGaussian,
};
use scalelaw::fitting::{FitMethod, LikelihoodConfig};
use scalelaw::models::{Evaluator, ModelSpec};
use scalelaw::rng::{mix, streams};
use scalelaw::valuation::random_selection;
use scalelaw::sampler::{CampaignPoint, CardinalityGrid, GridSpec, PoolSource, Population, SamplingContext, SamplingMode};

use crate::error::{CliError, CliResult};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub dataset: DatasetConfig,
    pub model: ModelSpec,
    pub grid: GridSpec,
    pub sampling: SamplingMode,
    #[serde(default)]
    pub points: PointsConfig,
    #[serde(default = "yes")]
    pub balanced: bool,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub amortized: AmortizedConfig,
    #[serde(default)]
    pub valuation: ValuationConfig,
    #[serde(default)]
    pub selection: SelectionConfig,
    #[serde(default)]
    pub addition: AdditionConfig,
    #[serde(default)]
    pub theory: TheoryConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub workers: Option<usize>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    /// Two Gaussian classes. With `fresh_draws`, every preceding dataset is a
    /// new sample from the distribution instead of a subset of the pool.
    TwoGaussian {
        d: usize,
        separation: f64,
        pool_size: usize,
        test_size: usize,
        #[serde(default)]
        fresh_draws: bool,
    },
    /// Linear-Gaussian regression. Without `pool_size` preceding datasets are
    /// fresh draws; without `test_size` losses are exact population MSE.
    Linear {
        d: usize,
        noise_std: f64,
        #[serde(default = "identity")]
        covariance: CovarianceSpec,
        #[serde(default = "ones")]
        beta: BetaSpec,
        #[serde(default)]
        pool_size: Option<usize>,
        #[serde(default)]
        test_size: Option<usize>,
    },
    Csv {
        train: PathBuf,
        test: PathBuf,
        label_column: String,
        task: TaskKind,
    },
}

fn identity() -> CovarianceSpec {
    CovarianceSpec::Identity
}

fn ones() -> BetaSpec {
    BetaSpec::Ones
}

/// Which points get contributions measured. Pool-based datasets default to
/// every pool row; population-based datasets need `count`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointsConfig {
    #[serde(default)]
    pub count: Option<usize>,
    #[serde(default)]
    pub ids: Option<Vec<u32>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub methods: Vec<FitMethod>,
    pub min_samples: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig { methods: vec![FitMethod::Likelihood], min_samples: LikelihoodConfig::default().min_samples }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValuationConfig {
    pub k_min: u32,
    pub k_max: u32,
}

impl Default for ValuationConfig {
    fn default() -> Self {
        ValuationConfig { k_min: scalelaw::valuation::DEFAULT_K_MIN, k_max: scalelaw::valuation::DEFAULT_K_MAX }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectionConfig {
    pub k_targets: Vec<f64>,
    pub m: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig { k_targets: vec![100.0, 1000.0], m: 20 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdditionConfig {
    pub preceding_sizes: Vec<usize>,
    pub n_added: usize,
    pub trials: usize,
    pub balanced: bool,
    /// Size of the preceding-set pool drawn for population-based datasets.
    pub pool_size: usize,
}

impl Default for AdditionConfig {
    fn default() -> Self {
        AdditionConfig { preceding_sizes: vec![100, 1000], n_added: 20, trials: 100, balanced: true, pool_size: 5000 }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TheoryConfig {
    pub theorem1: Theorem1Config,
    pub theorem2: Theorem2Config,
    pub alpha_rate: AlphaRateConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Theorem1Config {
    pub d: usize,
    pub k: usize,
    pub noise_var: f64,
    pub eps: f64,
    /// Defaults to the first basis vector.
    pub x: Option<Vec<f64>>,
    pub draws: usize,
    pub relative_tolerance: f64,
}

impl Default for Theorem1Config {
    fn default() -> Self {
        Theorem1Config { d: 2, k: 200, noise_var: 1.0, eps: 0.0, x: None, draws: 50_000, relative_tolerance: 0.2 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Theorem2Config {
    pub d: usize,
    pub separation: f64,
    pub k: u32,
    pub samples: usize,
    pub reference_size: usize,
    pub validation_size: usize,
    /// Defaults to `(1, 1, 0, …)` with label 1.
    pub x: Option<Vec<f64>>,
    pub y: f64,
    pub relative_slack: f64,
}

impl Default for Theorem2Config {
    fn default() -> Self {
        Theorem2Config {
            d: 2,
            separation: 2.0,
            k: 500,
            samples: 20_000,
            reference_size: 200_000,
            validation_size: 1000,
            x: None,
            y: 1.0,
            relative_slack: 0.3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlphaRateConfig {
    pub expected: f64,
    pub tolerance: f64,
    /// A soft check reports its outcome without failing the command.
    pub hard: bool,
}

impl Default for AlphaRateConfig {
    fn default() -> Self {
        AlphaRateConfig { expected: 2.0, tolerance: 0.4, hard: true }
    }
}

fn field(name: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{name}: {e}"))
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn grid(&self) -> CliResult<CardinalityGrid> {
        CardinalityGrid::from_spec(&self.grid).map_err(|e| field("grid", e))
    }

    pub fn likelihood(&self) -> LikelihoodConfig {
        LikelihoodConfig { min_samples: self.fit.min_samples, ..LikelihoodConfig::default() }
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.version != CONFIG_VERSION {
            return Err(field("version", format!("expected {CONFIG_VERSION}, got {}", self.version)));
        }
        self.grid()?;
        if self.sampling.m() == 0 {
            return Err(field("sampling.m", "must be at least 1"));
        }
        self.model.validate().map_err(|e| field("model", e))?;
        match &self.dataset {
            DatasetConfig::TwoGaussian { d, separation, pool_size, test_size, .. } => {
                if *d == 0 || *pool_size == 0 || *test_size == 0 {
                    return Err(field("dataset", "d, pool_size and test_size must be positive"));
                }
                if !separation.is_finite() {
                    return Err(field("dataset.separation", "must be finite"));
                }
            }
            DatasetConfig::Linear { d, noise_std, pool_size, test_size, .. } => {
                if *d == 0 || !(*noise_std >= 0.0) {
                    return Err(field("dataset", "d must be positive and noise_std non-negative"));
                }
                if pool_size == &Some(0) || test_size == &Some(0) {
                    return Err(field("dataset", "pool_size and test_size must be positive when given"));
                }
            }
            DatasetConfig::Csv { train, test, .. } => {
                for (name, p) in [("dataset.train", train), ("dataset.test", test)] {
                    if !p.is_file() {
                        return Err(field(name, format!("file not found: {}", p.display())));
                    }
                }
            }
        }
        if self.points.count == Some(0) {
            return Err(field("points.count", "must be positive"));
        }
        if self.valuation.k_min == 0 || self.valuation.k_min > self.valuation.k_max {
            return Err(field("valuation", "need 1 <= k_min <= k_max"));
        }
        if self.selection.m == 0 || self.selection.k_targets.iter().any(|k| !(*k >= 1.0)) {
            return Err(field("selection", "m must be positive and every k_target >= 1"));
        }
        if self.addition.trials == 0 {
            return Err(field("addition.trials", "must be positive"));
        }
        if self.workers == Some(0) {
            return Err(field("workers", "must be at least 1"));
        }
        if self.fit.methods.is_empty() {
            return Err(field("fit.methods", "list at least one method"));
        }
        Ok(())
    }
}

pub mod seeds {
    pub const POOL: u64 = 0;
    pub const TEST: u64 = 1;
    pub const POINTS: u64 = 2;
    pub const ADDITION_POOL: u64 = 3;
}

/// Data materialized from a config: where preceding datasets come from, how
/// loss is measured, and the evaluated points. `points_data` rows are indexed
/// by point id.
pub struct Workspace {
    pub pool: Option<Dataset>,
    pub population: Option<Population>,
    pub linear: Option<LinearPopulation>,
    pub test: Option<Dataset>,
    pub points_data: Dataset,
    pub points: Vec<CampaignPoint>,
}

impl Workspace {
    pub fn build(cfg: &RunConfig) -> CliResult<Self> {
        let seed = |s| mix(cfg.seed, streams::POPULATION, s);
        let (pool, population, linear, test) = match &cfg.dataset {
            DatasetConfig::TwoGaussian { d, separation, pool_size, test_size, fresh_draws } => {
                let tg = TwoGaussian::new(*d, *separation).map_err(|e| field("dataset", e))?;
                let test = tg.draw(*test_size, seed(seeds::TEST)).with_role(Role::Test);
                if *fresh_draws {
                    (None, Some(Population::TwoGaussian(tg)), None, Some(test))
                } else {
                    (Some(tg.draw(*pool_size, seed(seeds::POOL))), None, None, Some(test))
                }
            }
            DatasetConfig::Linear { d, noise_std, covariance, beta, pool_size, test_size } => {
                let lp = LinearPopulation::new(*d, *noise_std, covariance, beta).map_err(|e| field("dataset", e))?;
                let test = test_size.map(|n| lp.draw(n, seed(seeds::TEST)).with_role(Role::Test));
                let pool = pool_size.map(|n| lp.draw(n, seed(seeds::POOL)));
                let population = pool.is_none().then(|| Population::Linear(lp.clone()));
                (pool, population, Some(lp), test)
            }
            DatasetConfig::Csv { train, test, label_column, task } => {
                let pool = load_csv(train, &CsvSchema::new(label_column.clone(), *task))?;
                let schema = CsvSchema {
                    label_column: label_column.clone(),
                    task: *task,
                    role: Role::Test,
                    class_map: pool.class_names().map(<[String]>::to_vec),
                };
                (Some(pool), None, None, Some(load_csv(test, &schema)?))
            }
        };

        let (points_data, points) = match (&pool, &population) {
            (Some(pool), _) => {
                let ids: Vec<usize> = match (&cfg.points.ids, cfg.points.count) {
                    (Some(ids), _) => {
                        if let Some(bad) = ids.iter().find(|&&i| i as usize >= pool.len()) {
                            return Err(field("points.ids", format!("{bad} is not a pool row")));
                        }
                        let mut v: Vec<usize> = ids.iter().map(|&i| i as usize).collect();
                        v.sort_unstable();
                        v.dedup();
                        v
                    }
                    (None, Some(n)) => {
                        if n > pool.len() {
                            return Err(field("points.count", format!("{n} exceeds the pool size {}", pool.len())));
                        }
                        let all: Vec<u32> = (0..pool.len() as u32).collect();
                        random_selection(&all, n, mix(cfg.seed, streams::SUBSET, u64::MAX))?
                            .into_iter()
                            .map(|i| i as usize)
                            .collect()
                    }
                    (None, None) => (0..pool.len()).collect(),
                };
                (pool.clone(), CampaignPoint::from_pool(pool, &ids))
            }
            (None, Some(popn)) => {
                let n = cfg.points.count.ok_or_else(|| field("points.count", "required when preceding datasets are fresh draws"))?;
                let data = popn.draw(n, seed(seeds::POINTS));
                let pts = CampaignPoint::from_dataset(&data);
                (data, pts)
            }
            (None, None) => unreachable!("every dataset kind yields a pool or a population"),
        };
        Ok(Workspace { pool, population, linear, test, points_data, points })
    }

    pub fn context<'a>(&'a self, cfg: &'a RunConfig) -> CliResult<SamplingContext<'a>> {
        let pool = match (&self.pool, &self.population) {
            (Some(p), _) => PoolSource::Finite(p),
            (None, Some(p)) => PoolSource::Population(p),
            (None, None) => unreachable!(),
        };
        let evaluator = match (&self.test, &self.linear) {
            (Some(t), _) => Evaluator::TestSet(t),
            (None, Some(lp)) => Evaluator::LinearPopulation(lp),
            (None, None) => return Err(field("dataset", "no test set or population to evaluate loss on")),
        };
        Ok(SamplingContext { pool, evaluator, model: &cfg.model, balanced: cfg.balanced })
    }

    /// Preceding-set pool for point addition. Pool rows in `exclude` (the
    /// candidates that may be added) never enter a preceding set.
    pub fn addition_pool(&self, cfg: &RunConfig, exclude: &[u32]) -> Dataset {
        match &self.pool {
            Some(pool) => {
                let mut taken = vec![false; pool.len()];
                for &i in exclude {
                    if let Some(t) = taken.get_mut(i as usize) {
                        *t = true;
                    }
                }
                let rest: Vec<usize> = (0..pool.len()).filter(|&i| !taken[i]).collect();
                pool.gather(&rest, None)
            }
            None => self
                .population
                .as_ref()
                .expect("population-based workspace")
                .draw(cfg.addition.pool_size, mix(cfg.seed, streams::POPULATION, seeds::ADDITION_POOL)),
        }
    }
}
