use std::sync::atomic::{AtomicUsize, Ordering};

use rand::Rng as _;
use rayon::prelude::*;

use crate::data::{sample_subset, Dataset, LinearPopulation, SubsetSpec, TwoGaussian};
use crate::error::{invalid, Error, Result};
use crate::models::{train_warm, Evaluator, ModelSpec};
use crate::rng::{mix, rng_from_seed, streams};

use super::grid::CardinalityGrid;
use super::store::{CampaignMeta, SampleRecord, SampleStatus, SampleStore, SamplingMode, STORE_VERSION};

/// A generative distribution preceding datasets can be drawn from afresh.
#[derive(Debug, Clone)]
pub enum Population {
    Linear(LinearPopulation),
    TwoGaussian(TwoGaussian),
}

impl Population {
    pub fn draw(&self, n: usize, seed: u64) -> Dataset {
        match self {
            Population::Linear(p) => p.draw(n, seed),
            Population::TwoGaussian(p) => p.draw(n, seed),
        }
    }
}

/// Where preceding datasets `D` come from.
#[derive(Debug, Clone, Copy)]
pub enum PoolSource<'a> {
    /// Subsets drawn without replacement from a fixed pool.
    Finite(&'a Dataset),
    /// Fresh i.i.d. draws for every sample.
    Population(&'a Population),
}

impl PoolSource<'_> {
    pub fn describe(&self) -> String {
        match self {
            PoolSource::Finite(d) => format!("finite(n={}, d={})", d.len(), d.dim()),
            PoolSource::Population(Population::Linear(p)) => format!("linear_population(d={})", p.dim()),
            PoolSource::Population(Population::TwoGaussian(p)) => {
                format!("two_gaussian_population(d={}, separation={})", p.d, p.separation)
            }
        }
    }
}

/// A point whose contribution is measured.
#[derive(Debug, Clone, PartialEq)]
pub struct CampaignPoint {
    pub id: u32,
    pub x: Vec<f64>,
    pub y: f64,
    /// Index in a finite pool; that entry is never drawn into `D`.
    pub pool_index: Option<usize>,
}

impl CampaignPoint {
    /// Pool members evaluated in place (excluded from their own subsets).
    pub fn from_pool(pool: &Dataset, ids: &[usize]) -> Vec<CampaignPoint> {
        ids.iter()
            .map(|&i| CampaignPoint { id: i as u32, x: pool.row(i).to_vec(), y: pool.target(i), pool_index: Some(i) })
            .collect()
    }

    /// Points from a separate dataset, numbered by their row.
    pub fn from_dataset(data: &Dataset) -> Vec<CampaignPoint> {
        (0..data.len())
            .map(|i| CampaignPoint { id: i as u32, x: data.row(i).to_vec(), y: data.target(i), pool_index: None })
            .collect()
    }
}

/// Everything a single contribution sample needs besides the point and seed.
#[derive(Debug, Clone, Copy)]
pub struct SamplingContext<'a> {
    pub pool: PoolSource<'a>,
    pub evaluator: Evaluator<'a>,
    pub model: &'a ModelSpec,
    pub balanced: bool,
}

/// `Δ(z, D) = L(f_D) − L(f_{D∪{z}})` for one preceding dataset drawn from
/// `seed`. Both fits share `D` and the weight-init seed.
pub fn try_sample_contribution(ctx: &SamplingContext, z: &CampaignPoint, k: usize, seed: u64) -> Result<f64> {
    let subset_seed = mix(seed, streams::SUBSET, 0);
    let spec = ctx.model.with_init_seed(mix(seed, streams::MODEL_INIT, 0));
    let (without, with) = match ctx.pool {
        PoolSource::Finite(pool) => {
            let ids = sample_subset(
                pool,
                &SubsetSpec { k, exclude: z.pool_index, balanced: ctx.balanced, seed: subset_seed },
            )?;
            (pool.gather(&ids, None), pool.gather(&ids, Some((&z.x, z.y))))
        }
        PoolSource::Population(pop) => {
            let d = pop.draw(k, subset_seed);
            let all: Vec<usize> = (0..k).collect();
            let with = d.gather(&all, Some((&z.x, z.y)));
            (d, with)
        }
    };
    let f_without = train_warm(&spec, &without, None)?;
    let init = spec.supports_warm_start().then_some(&f_without);
    let f_with = train_warm(&spec, &with, init)?;
    let delta = ctx.evaluator.loss(&f_without)? - ctx.evaluator.loss(&f_with)?;
    if !delta.is_finite() {
        return Err(Error::NonFinite(format!("delta for point {} at k={k}", z.id)));
    }
    Ok(delta)
}

/// One record; training failures become tombstones rather than errors.
pub fn sample_contribution(ctx: &SamplingContext, z: &CampaignPoint, k: usize, seed: u64) -> SampleRecord {
    let (delta, status) = match try_sample_contribution(ctx, z, k, seed) {
        Ok(d) => (d, SampleStatus::Ok),
        Err(_) => (0.0, SampleStatus::Failed),
    };
    SampleRecord { point_id: z.id, k: k as u32, delta, seed, status }
}

/// Seed and cardinality of the `counter`-th task of `point_id`.
pub fn task_plan(grid: &CardinalityGrid, mode: SamplingMode, master_seed: u64, point_id: u32, counter: u64) -> (u32, u64) {
    let seed = mix(master_seed, point_id as u64, counter);
    let k = match mode {
        SamplingMode::PerCardinality { m } => grid.values()[counter as usize / m.max(1)],
        SamplingMode::Uniform { .. } => {
            let mut rng = rng_from_seed(mix(seed, streams::CARDINALITY, 0));
            grid.values()[rng.random_range(0..grid.len())]
        }
    };
    (k, seed)
}

pub struct CampaignSpec<'a> {
    pub grid: &'a CardinalityGrid,
    pub mode: SamplingMode,
    pub master_seed: u64,
    /// Worker threads; `None` uses rayon's global pool.
    pub workers: Option<usize>,
}

/// Runs every (point, sample) task in parallel. Each task's seed is a pure
/// function of `(master_seed, point_id, counter)`, so the canonical store is
/// identical for any worker count.
pub fn run_campaign(
    ctx: &SamplingContext,
    points: &[CampaignPoint],
    spec: &CampaignSpec,
    progress: Option<&(dyn Fn(usize, usize) + Sync)>,
) -> Result<SampleStore> {
    if points.is_empty() {
        return Err(invalid("campaign has no points"));
    }
    ctx.model.validate()?;
    let max_k = spec.grid.max() as usize;
    if let PoolSource::Finite(pool) = ctx.pool {
        for p in points {
            let avail = pool.len() - p.pool_index.is_some() as usize;
            if max_k > avail {
                return Err(Error::Insufficient(format!(
                    "grid maximum {max_k} exceeds the {avail} pool points available to point {}",
                    p.id
                )));
            }
        }
    }
    let per_point = match spec.mode {
        SamplingMode::PerCardinality { m } => m * spec.grid.len(),
        SamplingMode::Uniform { m } => m,
    };
    let tasks: Vec<(usize, u64)> =
        (0..points.len()).flat_map(|p| (0..per_point as u64).map(move |c| (p, c))).collect();
    let total = tasks.len();
    let done = AtomicUsize::new(0);
    let work = || -> Vec<SampleRecord> {
        tasks
            .par_iter()
            .map(|&(p, counter)| {
                let z = &points[p];
                let (k, seed) = task_plan(spec.grid, spec.mode, spec.master_seed, z.id, counter);
                let rec = sample_contribution(ctx, z, k as usize, seed);
                if let Some(cb) = progress {
                    let n = done.fetch_add(1, Ordering::Relaxed) + 1;
                    cb(n, total);
                }
                rec
            })
            .collect()
    };
    let records = match spec.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| invalid(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };
    let mut ids: Vec<u32> = points.iter().map(|p| p.id).collect();
    ids.sort_unstable();
    let meta = CampaignMeta {
        version: STORE_VERSION,
        grid: spec.grid.values().to_vec(),
        sampling: spec.mode,
        model: ctx.model.clone(),
        master_seed: spec.master_seed,
        balanced: ctx.balanced,
        pool: ctx.pool.describe(),
        evaluator: ctx.evaluator.describe(),
        points: ids,
    };
    Ok(SampleStore::new(meta, records))
}
