//! Applications of fitted scaling laws: distributional Shapley values, point
//! selection, point addition experiments and cross-fit correlations.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};

use crate::data::{sample_subset, Dataset, SubsetSpec, Task};
use crate::error::{Error, Result};
use crate::fitting::{predict_psi, FitMethod, ScalingFit};
use crate::models::{decision_boundary_distance, eval_accuracy, train, ModelSpec};
use crate::rng::{mix, rng_from_seed, streams};
use crate::sampler::SampleStore;
use crate::stats::{self, CompensatedSum};

pub const DEFAULT_K_MIN: u32 = 100;
pub const DEFAULT_K_MAX: u32 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValuationMethod {
    Scaling(FitMethod),
    MonteCarlo,
}

impl std::fmt::Display for ValuationMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ValuationMethod::Scaling(m) => write!(f, "scaling({m})"),
            ValuationMethod::MonteCarlo => f.write_str("monte_carlo"),
        }
    }
}

impl Serialize for ValuationMethod {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Uniform average of `ψ_k(z)` over `k ∈ [k_min, k_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValuationScore {
    pub point_id: u32,
    pub psi: f64,
    pub method: ValuationMethod,
    pub k_min: u32,
    pub k_max: u32,
    pub n_samples_used: usize,
    /// Standard error of a Monte Carlo estimate.
    pub stderr: Option<f64>,
}

fn check_range(k_min: u32, k_max: u32) -> Result<()> {
    if k_min < 1 || k_min > k_max {
        return Err(Error::InvalidArgument(format!("need 1 <= k_min <= k_max, got [{k_min}, {k_max}]")));
    }
    Ok(())
}

/// `(1 / (k_max − k_min + 1)) Σ_k c k^{−α}`, summed term by term.
pub fn shapley_from_scaling(fit: &ScalingFit, k_min: u32, k_max: u32) -> Result<ValuationScore> {
    check_range(k_min, k_max)?;
    let mut acc = CompensatedSum::new();
    for k in k_min..=k_max {
        acc.add(predict_psi(fit, k as f64));
    }
    let psi = acc.value() / (k_max - k_min + 1) as f64;
    if !psi.is_finite() {
        return Err(Error::NonFinite(format!("shapley value of point {}", fit.point_id)));
    }
    Ok(ValuationScore {
        point_id: fit.point_id,
        psi,
        method: ValuationMethod::Scaling(fit.method),
        k_min,
        k_max,
        n_samples_used: 0,
        stderr: None,
    })
}

/// Mean of a point's recorded contributions. The campaign grid must span
/// exactly `[k_min, k_max]`.
pub fn shapley_monte_carlo(store: &SampleStore, point_id: u32, k_min: u32, k_max: u32) -> Result<ValuationScore> {
    check_range(k_min, k_max)?;
    let grid = &store.meta().grid;
    let (lo, hi) = (grid.iter().min().copied(), grid.iter().max().copied());
    if lo != Some(k_min) || hi != Some(k_max) {
        return Err(Error::InvalidArgument(format!(
            "campaign cardinalities span [{}, {}], not the requested [{k_min}, {k_max}]",
            lo.unwrap_or(0),
            hi.unwrap_or(0)
        )));
    }
    let deltas: Vec<f64> = store.point_records(point_id).iter().filter(|r| r.is_ok()).map(|r| r.delta).collect();
    let psi = stats::mean(&deltas).ok_or(Error::NoRecords { point_id, k: 0 })?;
    Ok(ValuationScore {
        point_id,
        psi,
        method: ValuationMethod::MonteCarlo,
        k_min,
        k_max,
        n_samples_used: deltas.len(),
        stderr: stats::variance(&deltas).map(|v| (v / deltas.len() as f64).sqrt()),
    })
}

pub fn write_scores_csv<W: Write>(out: W, scores: &[ValuationScore]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["point_id", "psi", "method", "k_min", "k_max"])?;
    for s in scores {
        w.write_record([
            s.point_id.to_string(),
            format!("{:e}", s.psi),
            s.method.to_string(),
            s.k_min.to_string(),
            s.k_max.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Ids of the `m` fits with the largest predicted `ψ_{k_target}`; ties go to
/// the lower id.
pub fn select_points(fits: &[ScalingFit], k_target: f64, m: usize) -> Result<Vec<u32>> {
    if fits.is_empty() {
        return Err(Error::Insufficient("no fits to select from".into()));
    }
    if m > fits.len() {
        return Err(Error::InvalidArgument(format!("cannot select {m} of {} points", fits.len())));
    }
    let mut scored: Vec<(f64, u32)> = fits.iter().map(|f| (predict_psi(f, k_target), f.point_id)).collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    Ok(scored.into_iter().take(m).map(|(_, id)| id).collect())
}

/// `m` ids drawn uniformly without replacement, returned in ascending order.
pub fn random_selection(ids: &[u32], m: usize, seed: u64) -> Result<Vec<u32>> {
    if m > ids.len() {
        return Err(Error::InvalidArgument(format!("cannot select {m} of {} points", ids.len())));
    }
    let mut rng = rng_from_seed(mix(seed, streams::RANDOM_SELECT, 0));
    let mut out: Vec<u32> = sample(&mut rng, ids.len(), m).into_iter().map(|i| ids[i]).collect();
    out.sort_unstable();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdditionSpec {
    pub preceding_size: usize,
    pub trials: usize,
    /// Class-balanced preceding sets.
    pub balanced: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdditionResult {
    pub mean_improvement: f64,
    pub std_improvement: f64,
    pub baseline_accuracy: f64,
    pub trials_run: usize,
    pub trials_failed: usize,
    /// Per-trial accuracy differences, `None` for skipped trials.
    pub improvements: Vec<Option<f64>>,
}

/// Test-accuracy change from adding rows `added` of `candidates` to random
/// preceding sets drawn from `pool`. Trial `t` draws its preceding set from
/// a seed that depends only on `(spec.seed, t)`, so runs with different
/// selections are paired.
pub fn point_addition_eval(
    pool: &Dataset,
    candidates: &Dataset,
    added: &[usize],
    test: &Dataset,
    model: &ModelSpec,
    spec: &AdditionSpec,
) -> Result<AdditionResult> {
    if !matches!(pool.task(), Task::Classification { .. }) {
        return Err(Error::TaskMismatch("point addition measures accuracy and needs classification".into()));
    }
    if spec.preceding_size > pool.len() {
        return Err(Error::InvalidArgument(format!("preceding size {} exceeds pool size {}", spec.preceding_size, pool.len())));
    }
    if spec.trials == 0 {
        return Err(Error::InvalidArgument("trials must be positive".into()));
    }
    if let Some(&i) = added.iter().find(|&&i| i >= candidates.len()) {
        return Err(Error::InvalidArgument(format!("candidate row {i} out of range")));
    }
    let extra = candidates.gather(added, None);
    let outcomes: Vec<Result<(f64, f64)>> = (0..spec.trials)
        .into_par_iter()
        .map(|t| {
            let seed = mix(spec.seed, streams::PRECEDING, t as u64);
            let ids = sample_subset(pool, &SubsetSpec { k: spec.preceding_size, exclude: None, balanced: spec.balanced, seed })?;
            let base = pool.gather(&ids, None);
            let with = base.concat(&extra)?;
            let model = model.with_init_seed(mix(seed, streams::MODEL_INIT, 0));
            let acc_base = eval_accuracy(&train(&model, &base)?, test)?;
            let acc_with = eval_accuracy(&train(&model, &with)?, test)?;
            Ok((acc_base, acc_with - acc_base))
        })
        .collect();
    let mut improvements = Vec::with_capacity(spec.trials);
    let mut baselines = Vec::new();
    for o in outcomes {
        match o {
            Ok((b, d)) => {
                baselines.push(b);
                improvements.push(Some(d));
            }
            Err(_) => improvements.push(None),
        }
    }
    let ok: Vec<f64> = improvements.iter().flatten().copied().collect();
    if ok.is_empty() {
        return Err(Error::Insufficient("every point-addition trial failed".into()));
    }
    Ok(AdditionResult {
        mean_improvement: stats::mean(&ok).unwrap_or(0.0),
        std_improvement: stats::variance(&ok).map(f64::sqrt).unwrap_or(0.0),
        baseline_accuracy: stats::mean(&baselines).unwrap_or(0.0),
        trials_run: ok.len(),
        trials_failed: spec.trials - ok.len(),
        improvements,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryRow {
    pub point_id: u32,
    /// Distance to the boundary, positive on the side of the point's label.
    pub distance: f64,
    pub alpha: f64,
    pub log_abs_c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryReport {
    /// `None` when either side has zero variance.
    pub pearson_alpha_vs_distance: Option<f64>,
    pub pearson_logc_vs_distance: Option<f64>,
    pub rows: Vec<BoundaryRow>,
}

/// Correlates fitted parameters with distance to the boundary of one model
/// trained on all fitted points (rows of `data` by point id).
pub fn boundary_correlation(fits: &[ScalingFit], data: &Dataset, model: &ModelSpec) -> Result<BoundaryReport> {
    if data.task() != (Task::Classification { num_classes: 2 }) {
        return Err(Error::TaskMismatch("boundary distance needs a binary classification task".into()));
    }
    let ids: Vec<usize> = fits.iter().map(|f| f.point_id as usize).collect();
    if let Some(&i) = ids.iter().find(|&&i| i >= data.len()) {
        return Err(Error::InvalidArgument(format!("point {i} is not a row of the dataset")));
    }
    let trained = train(model, &data.gather(&ids, None))?;
    let mut rows = Vec::with_capacity(fits.len());
    for f in fits {
        let i = f.point_id as usize;
        let d = decision_boundary_distance(&trained, data.row(i))?;
        let signed = if data.target(i) == 1.0 { d } else { -d };
        rows.push(BoundaryRow { point_id: f.point_id, distance: signed, alpha: f.alpha, log_abs_c: f.c.abs().ln() });
    }
    Ok(boundary_report(rows))
}

/// Correlations over precomputed rows.
pub fn boundary_report(rows: Vec<BoundaryRow>) -> BoundaryReport {
    let dist: Vec<f64> = rows.iter().map(|r| r.distance).collect();
    let alpha: Vec<f64> = rows.iter().map(|r| r.alpha).collect();
    let logc: Vec<f64> = rows.iter().map(|r| r.log_abs_c).collect();
    let finite = logc.iter().all(|v| v.is_finite());
    BoundaryReport {
        pearson_alpha_vs_distance: stats::pearson(&alpha, &dist),
        pearson_logc_vs_distance: if finite { stats::pearson(&logc, &dist) } else { None },
        rows,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossCorrelation {
    pub pearson_alpha: Option<f64>,
    pub pearson_c: Option<f64>,
    pub n_points: usize,
}

pub const CROSS_R2_FILTER: f64 = 0.8;

/// Pearson correlations of `α` and `c` over points present in both sets,
/// skipping points whose fit reports `r2 < 0.8` in either.
pub fn cross_model_correlation(a: &[ScalingFit], b: &[ScalingFit]) -> Result<CrossCorrelation> {
    let keep = |f: &ScalingFit| f.diagnostics.r2.is_none_or(|r| r >= CROSS_R2_FILTER);
    let by_id: BTreeMap<u32, &ScalingFit> = b.iter().filter(|f| keep(f)).map(|f| (f.point_id, f)).collect();
    let pairs: Vec<(&ScalingFit, &ScalingFit)> =
        a.iter().filter(|f| keep(f)).filter_map(|fa| by_id.get(&fa.point_id).map(|fb| (fa, *fb))).collect();
    if pairs.is_empty() {
        return Err(Error::Insufficient("no common points after filtering".into()));
    }
    let col = |sel: fn(&ScalingFit) -> f64, side: usize| -> Vec<f64> {
        pairs.iter().map(|p| sel(if side == 0 { p.0 } else { p.1 })).collect()
    };
    Ok(CrossCorrelation {
        pearson_alpha: stats::pearson(&col(|f| f.alpha, 0), &col(|f| f.alpha, 1)),
        pearson_c: stats::pearson(&col(|f| f.c, 0), &col(|f| f.c, 1)),
        n_points: pairs.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fitting::simple_fit;
    use crate::sampler::{test_meta, SampleRecord, SampleStatus, SamplingMode};
    use proptest::prelude::*;

    #[test]
    fn shapley_examples() {
        let s = shapley_from_scaling(&simple_fit(0, 2.5, 0.0), 7, 90).unwrap();
        assert!((s.psi - 2.5).abs() < 1e-14);
        let s = shapley_from_scaling(&simple_fit(0, 1.0, 1.0), 1, 3).unwrap();
        assert!((s.psi - 11.0 / 18.0).abs() < 1e-15);
        let f = simple_fit(0, 3.0, 1.7);
        assert_eq!(shapley_from_scaling(&f, 250, 250).unwrap().psi, predict_psi(&f, 250.0));
        assert!(shapley_from_scaling(&f, 0, 5).is_err());
        assert!(shapley_from_scaling(&f, 6, 5).is_err());
    }

    fn store(records: &[(u32, f64)], grid: Vec<u32>) -> SampleStore {
        let recs = records
            .iter()
            .enumerate()
            .map(|(i, &(k, delta))| SampleRecord { point_id: 0, k, delta, seed: i as u64, status: SampleStatus::Ok })
            .collect();
        SampleStore::new(test_meta(grid, SamplingMode::Uniform { m: records.len() }), recs)
    }

    #[test]
    fn monte_carlo_examples() {
        let s = store(&[(100, 0.5), (400, 0.5), (900, 0.5)], vec![100, 400, 900]);
        assert_eq!(shapley_monte_carlo(&s, 0, 100, 900).unwrap().psi, 0.5);
        let s = store(&[(100, 0.4), (900, 0.0)], vec![100, 900]);
        assert!((shapley_monte_carlo(&s, 0, 100, 900).unwrap().psi - 0.2).abs() < 1e-15);
        assert!(shapley_monte_carlo(&s, 0, 100, 1000).is_err());
        assert!(shapley_monte_carlo(&s, 3, 100, 900).is_err());
    }

    #[test]
    fn selection_examples() {
        let fits = [simple_fit(0, 1.0, 2.0), simple_fit(1, 1.0, 1.0)];
        assert_eq!(select_points(&fits, 10.0, 1).unwrap(), vec![1]);
        assert_eq!(select_points(&fits, 1.0, 1).unwrap(), vec![0]);
        let crossing = [simple_fit(0, 10.0, 1.5), simple_fit(1, 1.0, 0.5)];
        // Both predict 10^{-1/2} at k = 10 up to rounding; the lines cross there.
        assert!((predict_psi(&crossing[0], 10.0) - predict_psi(&crossing[1], 10.0)).abs() < 1e-15);
        assert_eq!(select_points(&crossing, 100.0, 1).unwrap(), vec![1]);
        assert_eq!(select_points(&crossing, 2.0, 1).unwrap(), vec![0]);
        assert!(select_points(&crossing, 2.0, 3).is_err());
    }

    #[test]
    fn random_selection_is_seeded() {
        let ids: Vec<u32> = (0..50).collect();
        let a = random_selection(&ids, 10, 3).unwrap();
        assert_eq!(a, random_selection(&ids, 10, 3).unwrap());
        assert_eq!(a.len(), 10);
        assert_eq!(random_selection(&ids, 50, 1).unwrap(), ids);
    }

    #[test]
    fn cross_correlation_examples() {
        let a: Vec<ScalingFit> = (0..10).map(|i| simple_fit(i, 1.0 + i as f64, 0.5 + 0.1 * (i * i) as f64)).collect();
        let r = cross_model_correlation(&a, &a).unwrap();
        assert!((r.pearson_alpha.unwrap() - 1.0).abs() < 1e-12 && (r.pearson_c.unwrap() - 1.0).abs() < 1e-12);
        let b: Vec<ScalingFit> = a.iter().map(|f| simple_fit(f.point_id, f.c, 3.0 - f.alpha)).collect();
        assert!((cross_model_correlation(&a, &b).unwrap().pearson_alpha.unwrap() + 1.0).abs() < 1e-12);
        let mut low = a.clone();
        low.iter_mut().for_each(|f| f.diagnostics.r2 = Some(0.5));
        assert!(cross_model_correlation(&a, &low).is_err());
    }

    #[test]
    fn boundary_plumbing() {
        let rows: Vec<BoundaryRow> =
            (0..8).map(|i| BoundaryRow { point_id: i, distance: i as f64 - 3.0, alpha: i as f64 - 3.0, log_abs_c: 0.0 }).collect();
        let r = boundary_report(rows.clone());
        assert!((r.pearson_alpha_vs_distance.unwrap() - 1.0).abs() < 1e-12);
        assert!(r.pearson_logc_vs_distance.is_none());
        let flat: Vec<BoundaryRow> = rows.into_iter().map(|r| BoundaryRow { alpha: 1.0, ..r }).collect();
        assert!(boundary_report(flat).pearson_alpha_vs_distance.is_none());
    }

    #[test]
    fn adding_nothing_changes_nothing() {
        let pool = crate::data::synth_classification(300, 4, 1.5, 1).unwrap();
        let cand = crate::data::synth_classification(50, 4, 1.5, 2).unwrap();
        let test = crate::data::synth_classification(200, 4, 1.5, 3).unwrap();
        let spec = AdditionSpec { preceding_size: 40, trials: 5, balanced: true, seed: 9 };
        let r = point_addition_eval(&pool, &cand, &[], &test, &ModelSpec::logistic(), &spec).unwrap();
        assert!(r.improvements.iter().all(|d| *d == Some(0.0)));
        let all: Vec<usize> = (0..50).collect();
        let x = point_addition_eval(&pool, &cand, &all, &test, &ModelSpec::logistic(), &spec).unwrap();
        let ids: Vec<u32> = (0..50).collect();
        let rand: Vec<usize> = random_selection(&ids, 50, 4).unwrap().into_iter().map(|i| i as usize).collect();
        let y = point_addition_eval(&pool, &cand, &rand, &test, &ModelSpec::logistic(), &spec).unwrap();
        assert_eq!(x.improvements, y.improvements);
    }

    proptest! {
        #[test]
        fn shapley_linear_in_c(c in -5.0f64..5.0, a in 0.0f64..3.0, lo in 1u32..50, span in 0u32..50) {
            let one = shapley_from_scaling(&simple_fit(0, c, a), lo, lo + span).unwrap().psi;
            let two = shapley_from_scaling(&simple_fit(0, 2.0 * c, a), lo, lo + span).unwrap().psi;
            prop_assert!((two - 2.0 * one).abs() <= 1e-12 * one.abs().max(1e-300));
        }

        #[test]
        fn selection_invariant_to_positive_rescaling(
            params in proptest::collection::vec((-2.0f64..2.0, 0.0f64..3.0), 1..30),
            scale in 0.01f64..100.0, k in 1.0f64..2000.0, m_frac in 0.0f64..1.0
        ) {
            let fits: Vec<ScalingFit> = params.iter().enumerate().map(|(i, &(c, a))| simple_fit(i as u32, c, a)).collect();
            let scaled: Vec<ScalingFit> = fits.iter().map(|f| simple_fit(f.point_id, f.c * scale, f.alpha)).collect();
            let m = ((fits.len() as f64) * m_frac) as usize;
            let a = select_points(&fits, k, m).unwrap();
            let b = select_points(&scaled, k, m).unwrap();
            // Exact ties may reorder only if rescaling breaks them through rounding.
            let psi = |ids: &[u32]| -> Vec<f64> { ids.iter().map(|&i| predict_psi(&fits[i as usize], k)).collect() };
            prop_assert_eq!(psi(&a), psi(&b));
        }
    }
}
