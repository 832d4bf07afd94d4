use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufReader, BufWriter, Write as _};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use scalelaw::data::{TwoGaussian, Task};
use scalelaw::fitting::{
    fit_store, predict_psi, r2_report, read_fits_jsonl, write_fits_jsonl, FitMethod, R2Report, ScalingFit,
};
use scalelaw::nalgebra::DVector;
use scalelaw::rng::{mix, streams};
use scalelaw::sampler::{estimate_psi, run_campaign, CampaignSpec, SampleStore};
use scalelaw::stats;
use scalelaw::theory::{
    alpha_rate_check, theorem1_exact, theorem1_oracle, theorem1_prediction, theorem2_leading_term,
    theorem2_sampled, LinearTheoryInstance, MEstimatorInstance, MonteCarloEstimate,
};
use scalelaw::valuation::{
    boundary_correlation, point_addition_eval, random_selection, select_points, shapley_from_scaling,
    shapley_monte_carlo, write_scores_csv, AdditionSpec, ValuationScore,
};
use scalelaw::data::{BetaSpec, CovarianceSpec, LinearPopulation};

use crate::config::{RunConfig, TheoryConfig, Workspace};
use crate::error::{CliError, CliResult};
use crate::plot::{self, Series, Style};

/// Fixed output file names under `--out`.
pub mod files {
    pub const STORE: &str = "store.bin";
    pub const SAMPLE_SUMMARY: &str = "sample_summary.json";
    pub const AMORTIZED_NET: &str = "amortized.net";
    pub const AMORTIZED_RUN: &str = "amortized_run.json";
    pub const VALUES_CSV: &str = "values.csv";
    pub const VALUES_JSON: &str = "values.json";
    pub const VALUE_CORRELATION: &str = "value_correlation.json";
    pub const BOUNDARY: &str = "boundary.json";
    pub const SELECTION: &str = "selection.json";
    pub const ADDITION: &str = "addition.json";
    pub const REPORT: &str = "report.md";
    pub const LOG: &str = "run.log";

    pub fn fits(method: impl std::fmt::Display) -> String {
        format!("fits_{method}.jsonl")
    }
    pub fn fit_summary(method: impl std::fmt::Display) -> String {
        format!("fit_summary_{method}.json")
    }
    pub fn r2(method: impl std::fmt::Display) -> String {
        format!("r2_{method}.json")
    }
    pub fn verify(check: &str) -> String {
        format!("verify_{check}.json")
    }
}

/// Per-invocation state shared by every command.
pub struct Ctx {
    pub config: Option<RunConfig>,
    pub out: PathBuf,
    pub store: Option<PathBuf>,
    pub fits: Option<PathBuf>,
    pub seed: Option<u64>,
}

impl Ctx {
    fn cfg(&self) -> CliResult<&RunConfig> {
        self.config.as_ref().ok_or_else(|| CliError::Config("this command needs --config".into()))
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn store_path(&self) -> PathBuf {
        self.store.clone().unwrap_or_else(|| self.path(files::STORE))
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> CliResult<PathBuf> {
        let path = self.path(name);
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(&path, text)?;
        Ok(path)
    }

    fn write_text(&self, name: &str, text: &str) -> CliResult<PathBuf> {
        let path = self.path(name);
        fs::write(&path, text)?;
        Ok(path)
    }

    fn load_store(&self) -> CliResult<SampleStore> {
        let path = self.store_path();
        if !path.is_file() {
            return Err(CliError::Input(format!("store not found: {} (run `sample` first)", path.display())));
        }
        Ok(SampleStore::read(&path)?)
    }

    /// `--fits` if given, else the first configured method's fits under `--out`.
    fn load_fits(&self) -> CliResult<Vec<ScalingFit>> {
        let path = match &self.fits {
            Some(p) => p.clone(),
            None => {
                let method = self.config.as_ref().and_then(|c| c.fit.methods.first().copied()).unwrap_or(FitMethod::Likelihood);
                self.path(&files::fits(method))
            }
        };
        read_fits(&path)
    }
}

fn read_fits(path: &Path) -> CliResult<Vec<ScalingFit>> {
    let f = fs::File::open(path).map_err(|e| CliError::Input(format!("cannot open fits {}: {e}", path.display())))?;
    let fits = read_fits_jsonl(BufReader::new(f))?;
    if fits.is_empty() {
        return Err(CliError::Input(format!("{} holds no fits", path.display())));
    }
    Ok(fits)
}

fn check_meta(cfg: &RunConfig, store: &SampleStore) -> CliResult<()> {
    let meta = store.meta();
    let grid = cfg.grid()?;
    let mut bad = Vec::new();
    if meta.grid != grid.values() {
        bad.push("grid");
    }
    if meta.sampling != cfg.sampling {
        bad.push("sampling");
    }
    if meta.model != cfg.model {
        bad.push("model");
    }
    if meta.master_seed != cfg.seed {
        bad.push("seed");
    }
    if meta.balanced != cfg.balanced {
        bad.push("balanced");
    }
    if bad.is_empty() {
        Ok(())
    } else {
        Err(CliError::Input(format!("store metadata does not match config in: {}", bad.join(", "))))
    }
}

#[derive(Debug, Serialize)]
struct SampleSummary {
    records: usize,
    failed: usize,
    points: usize,
    grid: Vec<u32>,
    failures_by_k: BTreeMap<u32, usize>,
}

pub fn sample(ctx: &Ctx) -> CliResult<()> {
    let cfg = ctx.cfg()?;
    let grid = cfg.grid()?;
    let ws = Workspace::build(cfg)?;
    let sctx = ws.context(cfg)?;
    let spec = CampaignSpec { grid: &grid, mode: cfg.sampling, master_seed: cfg.seed, workers: None };
    let progress = |n: usize, total: usize| {
        if n * 10 / total != (n - 1) * 10 / total {
            eprintln!("sample: {n}/{total} contributions");
        }
    };
    let store = run_campaign(&sctx, &ws.points, &spec, Some(&progress)).map_err(|e| match e {
        scalelaw::Error::Insufficient(m) => CliError::Config(format!("grid: {m}")),
        other => other.into(),
    })?;
    let path = ctx.store_path();
    store.write(&path)?;
    let failures = store.failure_counts();
    let summary = SampleSummary {
        records: store.len(),
        failed: failures.values().sum(),
        points: store.meta().points.len(),
        grid: store.meta().grid.clone(),
        failures_by_k: failures,
    };
    ctx.write_json(files::SAMPLE_SUMMARY, &summary)?;
    println!("wrote {} records for {} points to {}", summary.records, summary.points, path.display());
    if summary.failed > 0 {
        println!("failed samples: {}", summary.failed);
        for (k, n) in &summary.failures_by_k {
            println!("  k={k}: {n}");
        }
    } else {
        println!("failed samples: 0");
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FailedFit {
    pub point_id: u32,
    pub error: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitSummary {
    pub method: FitMethod,
    pub points_fitted: usize,
    pub points_failed: usize,
    pub warnings: BTreeMap<String, usize>,
    pub alpha_median: Option<f64>,
    pub alpha_q1: Option<f64>,
    pub alpha_q3: Option<f64>,
    /// Pooled R² of predictions against per-cardinality means.
    pub r2_overall: Option<f64>,
    pub r2_point_median: Option<f64>,
    pub frac_point_r2_ge_0_9: Option<f64>,
    pub failures: Vec<FailedFit>,
}

/// Grid values at which every listed point has at least one usable record.
fn common_grid(store: &SampleStore, ids: &[u32]) -> Vec<u32> {
    store.meta().grid.iter().copied().filter(|&k| ids.iter().all(|&id| estimate_psi(store, id, k).is_ok())).collect()
}

fn r2_hist_csv(values: &[f64]) -> String {
    const BINS: usize = 20;
    let mut below = 0;
    let mut counts = [0usize; BINS];
    for &v in values {
        if v < 0.0 {
            below += 1;
        } else {
            counts[((v * BINS as f64) as usize).min(BINS - 1)] += 1;
        }
    }
    let mut s = String::from("bin_lower,bin_upper,count\n");
    s.push_str(&format!("-inf,0,{below}\n"));
    for (i, c) in counts.iter().enumerate() {
        s.push_str(&format!("{},{},{c}\n", i as f64 / BINS as f64, (i + 1) as f64 / BINS as f64));
    }
    s
}

fn psi_curves_svg(store: &SampleStore, fits: &[ScalingFit], method: FitMethod) -> String {
    let mut series = Vec::new();
    let grid = &store.meta().grid;
    let (lo, hi) = (*grid.iter().min().unwrap_or(&1) as f64, *grid.iter().max().unwrap_or(&1) as f64);
    for (i, f) in fits.iter().take(6).enumerate() {
        let empirical: Vec<(f64, f64)> = grid
            .iter()
            .filter_map(|&k| estimate_psi(store, f.point_id, k).ok().map(|e| (k as f64, e.mean.abs())))
            .collect();
        let curve: Vec<(f64, f64)> = (0..=40)
            .map(|j| {
                let k = lo * (hi / lo).powf(j as f64 / 40.0);
                (k, predict_psi(f, k).abs())
            })
            .collect();
        series.push(Series { label: format!("point {}", f.point_id), points: empirical, style: Style::Markers, color: i });
        series.push(Series { label: String::new(), points: curve, style: Style::Line, color: i });
    }
    plot::line_plot(&format!("|psi_k| and {method} fits"), "k", "|psi_k|", &series, true, true)
}

fn summarize(store: &SampleStore, fits: &[ScalingFit], failures: Vec<FailedFit>) -> (FitSummary, Option<R2Report>) {
    let mut warnings = BTreeMap::new();
    for f in fits {
        for w in &f.diagnostics.warnings {
            *warnings.entry(w.clone()).or_insert(0) += 1;
        }
    }
    let alphas: Vec<f64> = fits.iter().map(|f| f.alpha).collect();
    let ids: Vec<u32> = fits.iter().map(|f| f.point_id).collect();
    let grid = common_grid(store, &ids);
    let report = if grid.is_empty() { None } else { r2_report(store, fits, &grid).ok() };
    let point_r2: Vec<f64> = report.iter().flat_map(|r| r.per_point.iter().filter_map(|p| p.1)).collect();
    let summary = FitSummary {
        method: fits[0].method,
        points_fitted: fits.len(),
        points_failed: failures.len(),
        warnings,
        alpha_median: stats::median(&alphas),
        alpha_q1: stats::quantile(&alphas, 0.25),
        alpha_q3: stats::quantile(&alphas, 0.75),
        r2_overall: report.as_ref().map(|r| r.overall),
        r2_point_median: stats::median(&point_r2),
        frac_point_r2_ge_0_9: (!point_r2.is_empty())
            .then(|| point_r2.iter().filter(|&&r| r >= 0.9).count() as f64 / point_r2.len() as f64),
        failures,
    };
    (summary, report)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.4}"))
}

fn print_fit_table(rows: &[FitSummary]) {
    println!("{:<11} {:>7} {:>7} {:>9} {:>9} {:>9} {:>9} {:>9}", "method", "fitted", "failed", "warned", "alpha_med", "r2_all", "r2_pt_med", "r2>=0.9");
    for s in rows {
        let warned: usize = s.warnings.values().sum();
        println!(
            "{:<11} {:>7} {:>7} {:>9} {:>9} {:>9} {:>9} {:>9}",
            s.method.to_string(),
            s.points_fitted,
            s.points_failed,
            warned,
            fmt_opt(s.alpha_median),
            fmt_opt(s.r2_overall),
            fmt_opt(s.r2_point_median),
            fmt_opt(s.frac_point_r2_ge_0_9)
        );
    }
}

/// Writes fits plus their summary, R² report and figures.
fn emit_fits(ctx: &Ctx, store: &SampleStore, fits: &[ScalingFit], failures: Vec<FailedFit>) -> CliResult<FitSummary> {
    let method = fits[0].method;
    let mut w = BufWriter::new(fs::File::create(ctx.path(&files::fits(method)))?);
    write_fits_jsonl(&mut w, fits)?;
    w.flush()?;
    let (summary, report) = summarize(store, fits, failures);
    if let Some(r) = &report {
        ctx.write_json(&files::r2(method), r)?;
    }
    if method == FitMethod::Loglinear {
        let r2: Vec<f64> = fits.iter().filter_map(|f| f.diagnostics.r2).collect();
        ctx.write_text("r2_hist_loglinear.csv", &r2_hist_csv(&r2))?;
    }
    let alphas: Vec<f64> = fits.iter().map(|f| f.alpha).collect();
    ctx.write_text(&format!("alpha_hist_{method}.svg"), &plot::histogram(&format!("fitted alpha ({method})"), "alpha", &alphas, 30))?;
    ctx.write_text(&format!("psi_curves_{method}.svg"), &psi_curves_svg(store, fits, method))?;
    ctx.write_json(&files::fit_summary(method), &summary)?;
    Ok(summary)
}

pub fn fit(ctx: &Ctx) -> CliResult<()> {
    let cfg = ctx.cfg()?;
    let store = ctx.load_store()?;
    check_meta(cfg, &store)?;
    let lcfg = cfg.likelihood();
    let mut rows = Vec::new();
    for &method in &cfg.fit.methods {
        if method == FitMethod::Amortized {
            eprintln!("fit: amortized fits come from the `amortize` command; skipping");
            continue;
        }
        let mut fits = Vec::new();
        let mut failures = Vec::new();
        for (point_id, r) in fit_store(&store, method, &lcfg) {
            match r {
                Ok(f) => fits.push(f),
                Err(e) => failures.push(FailedFit { point_id, error: e.to_string() }),
            }
        }
        if fits.is_empty() {
            return Err(CliError::Input(format!("{method}: no point could be fitted ({})", failures[0].error)));
        }
        let summary = emit_fits(ctx, &store, &fits, failures)?;
        for (w, n) in &summary.warnings {
            eprintln!("fit: {method}: {n} fits flagged {w}");
        }
        rows.push(summary);
    }
    print_fit_table(&rows);
    Ok(())
}

pub fn amortize(ctx: &Ctx) -> CliResult<()> {
    let cfg = ctx.cfg()?;
    let store = ctx.load_store()?;
    check_meta(cfg, &store)?;
    let ws = Workspace::build(cfg)?;
    let (net, run) = scalelaw::amortized::train_amortized(&store, &ws.points_data, &cfg.amortized)?;
    net.write(&ctx.path(files::AMORTIZED_NET))?;
    ctx.write_json(files::AMORTIZED_RUN, &run)?;
    let fits = store
        .point_ids()
        .into_iter()
        .map(|id| {
            let i = id as usize;
            let mut f = net.predict_params(id, ws.points_data.row(i), ws.points_data.target(i))?;
            f.diagnostics.n_samples = store.point_records(id).iter().filter(|r| r.is_ok()).count();
            Ok(f)
        })
        .collect::<CliResult<Vec<_>>>()?;
    let summary = emit_fits(ctx, &store, &fits, Vec::new())?;
    println!(
        "trained {} epochs (best {}), validation NLL {:.6e} -> {:.6e}",
        run.epochs_run,
        run.best_epoch,
        run.validation_nll.first().copied().unwrap_or(f64::NAN),
        run.validation_nll.get(run.best_epoch).copied().unwrap_or(f64::NAN)
    );
    print_fit_table(&[summary]);
    Ok(())
}

#[derive(Debug, Serialize)]
struct CorrelationRow {
    a: String,
    b: String,
    n: usize,
    pearson: Option<f64>,
    spearman: Option<f64>,
}

fn fit_files_present(ctx: &Ctx) -> Vec<PathBuf> {
    match &ctx.fits {
        Some(p) => vec![p.clone()],
        None => [FitMethod::Loglinear, FitMethod::Likelihood, FitMethod::Amortized]
            .iter()
            .map(|m| ctx.path(&files::fits(m)))
            .filter(|p| p.is_file())
            .collect(),
    }
}

pub fn value(ctx: &Ctx) -> CliResult<()> {
    let cfg = ctx.cfg()?;
    let (k_min, k_max) = (cfg.valuation.k_min, cfg.valuation.k_max);
    let mut groups: Vec<(String, Vec<ValuationScore>)> = Vec::new();

    let store_path = ctx.store_path();
    if store_path.is_file() {
        let store = SampleStore::read(&store_path)?;
        let scores: scalelaw::Result<Vec<_>> =
            store.point_ids().into_iter().map(|id| shapley_monte_carlo(&store, id, k_min, k_max)).collect();
        match scores {
            Ok(s) => groups.push(("monte_carlo".into(), s)),
            Err(e) => eprintln!("value: skipping monte_carlo: {e}"),
        }
    }
    let mut first_fits = None;
    for path in fit_files_present(ctx) {
        let fits = read_fits(&path)?;
        let scores = fits.iter().map(|f| shapley_from_scaling(f, k_min, k_max)).collect::<scalelaw::Result<Vec<_>>>()?;
        groups.push((format!("scaling({})", fits[0].method), scores));
        first_fits.get_or_insert(fits);
    }
    if groups.is_empty() {
        return Err(CliError::Input("no store or fits to value".into()));
    }

    let all: Vec<ValuationScore> = groups.iter().flat_map(|g| g.1.iter().copied()).collect();
    let mut w = BufWriter::new(fs::File::create(ctx.path(files::VALUES_CSV))?);
    write_scores_csv(&mut w, &all)?;
    w.flush()?;
    ctx.write_json(files::VALUES_JSON, &all)?;

    let mut rows = Vec::new();
    for i in 0..groups.len() {
        for j in i + 1..groups.len() {
            let b: BTreeMap<u32, f64> = groups[j].1.iter().map(|s| (s.point_id, s.psi)).collect();
            let (xa, xb): (Vec<f64>, Vec<f64>) =
                groups[i].1.iter().filter_map(|s| b.get(&s.point_id).map(|&v| (s.psi, v))).unzip();
            rows.push(CorrelationRow {
                a: groups[i].0.clone(),
                b: groups[j].0.clone(),
                n: xa.len(),
                pearson: stats::pearson(&xa, &xb),
                spearman: stats::spearman(&xa, &xb),
            });
        }
    }
    ctx.write_json(files::VALUE_CORRELATION, &rows)?;
    println!("values over k in [{k_min}, {k_max}]: {} scores", all.len());
    if !rows.is_empty() {
        println!("{:<22} {:<22} {:>6} {:>9} {:>9}", "a", "b", "n", "pearson", "spearman");
        for r in &rows {
            println!("{:<22} {:<22} {:>6} {:>9} {:>9}", r.a, r.b, r.n, fmt_opt(r.pearson), fmt_opt(r.spearman));
        }
    }

    if let Some(fits) = first_fits {
        let ws = Workspace::build(cfg)?;
        if ws.points_data.task() == (Task::Classification { num_classes: 2 }) {
            match boundary_correlation(&fits, &ws.points_data, &cfg.model) {
                Ok(r) => {
                    ctx.write_json(files::BOUNDARY, &r)?;
                    println!(
                        "boundary distance: pearson(alpha) {} pearson(log|c|) {}",
                        fmt_opt(r.pearson_alpha_vs_distance),
                        fmt_opt(r.pearson_logc_vs_distance)
                    );
                }
                Err(e) => eprintln!("value: skipping boundary correlation: {e}"),
            }
        }
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct SelectionList {
    k_target: f64,
    ids: Vec<u32>,
}

#[derive(Debug, Serialize)]
struct Overlap {
    k_a: f64,
    k_b: f64,
    size: usize,
}

#[derive(Debug, Serialize)]
struct Selection {
    m: usize,
    lists: Vec<SelectionList>,
    overlaps: Vec<Overlap>,
}

pub fn select(ctx: &Ctx) -> CliResult<()> {
    let cfg = ctx.cfg()?;
    let fits = ctx.load_fits()?;
    let m = cfg.selection.m.min(fits.len());
    let lists = cfg
        .selection
        .k_targets
        .iter()
        .map(|&k| Ok(SelectionList { k_target: k, ids: select_points(&fits, k, m)? }))
        .collect::<CliResult<Vec<_>>>()?;
    let mut overlaps = Vec::new();
    for i in 0..lists.len() {
        for j in i + 1..lists.len() {
            let a: BTreeSet<u32> = lists[i].ids.iter().copied().collect();
            let size = lists[j].ids.iter().filter(|id| a.contains(id)).count();
            overlaps.push(Overlap { k_a: lists[i].k_target, k_b: lists[j].k_target, size });
        }
    }
    for l in &lists {
        println!("k={}: {:?}", l.k_target, l.ids);
    }
    for o in &overlaps {
        println!("overlap k={} vs k={}: {}/{m}", o.k_a, o.k_b, o.size);
    }
    ctx.write_json(files::SELECTION, &Selection { m, lists, overlaps })?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct AdditionRow {
    preceding_size: usize,
    strategy: String,
    added: Vec<u32>,
    mean_improvement: f64,
    std_improvement: f64,
    baseline_accuracy: f64,
    trials_run: usize,
    trials_failed: usize,
}

pub fn add_eval(ctx: &Ctx) -> CliResult<()> {
    let cfg = ctx.cfg()?;
    let fits = ctx.load_fits()?;
    let ws = Workspace::build(cfg)?;
    let test = ws.test.as_ref().ok_or_else(|| CliError::Config("dataset: point addition needs a test set".into()))?;
    let ids: Vec<u32> = fits.iter().map(|f| f.point_id).collect();
    let n = cfg.addition.n_added.min(ids.len());
    let mut rows = Vec::new();
    for &size in &cfg.addition.preceding_sizes {
        let mut strategies: Vec<(String, Vec<u32>)> = Vec::new();
        let mut targets = vec![size as f64];
        targets.extend(cfg.selection.k_targets.iter().copied().filter(|&k| k != size as f64));
        for k in targets {
            strategies.push((format!("scaling(k={k})"), select_points(&fits, k, n)?));
        }
        strategies.push(("random".into(), random_selection(&ids, n, mix(cfg.seed, streams::RANDOM_SELECT, size as u64))?));
        let chosen: Vec<u32> = strategies.iter().flat_map(|s| s.1.iter().copied()).collect();
        let pool = ws.addition_pool(cfg, &chosen);
        let spec = AdditionSpec {
            preceding_size: size,
            trials: cfg.addition.trials,
            balanced: cfg.addition.balanced,
            seed: mix(cfg.seed, streams::PRECEDING, size as u64),
        };
        for (name, added) in strategies {
            let rows_idx: Vec<usize> = added.iter().map(|&i| i as usize).collect();
            let r = point_addition_eval(&pool, &ws.points_data, &rows_idx, test, &cfg.model, &spec)?;
            rows.push(AdditionRow {
                preceding_size: size,
                strategy: name,
                added,
                mean_improvement: r.mean_improvement,
                std_improvement: r.std_improvement,
                baseline_accuracy: r.baseline_accuracy,
                trials_run: r.trials_run,
                trials_failed: r.trials_failed,
            });
        }
    }
    println!("{:>9} {:<20} {:>12} {:>10} {:>9} {:>7}", "preceding", "strategy", "mean_gain", "std", "baseline", "trials");
    for r in &rows {
        println!(
            "{:>9} {:<20} {:>12.5} {:>10.5} {:>9.4} {:>7}",
            r.preceding_size, r.strategy, r.mean_improvement, r.std_improvement, r.baseline_accuracy, r.trials_run
        );
    }
    ctx.write_json(files::ADDITION, &rows)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct Theorem1Report<'a> {
    config: &'a crate::config::Theorem1Config,
    seed: u64,
    prediction: f64,
    exact: f64,
    sampled: MonteCarloEstimate,
    within_3se_of_exact: bool,
    relative_gap: f64,
    pass: bool,
}

#[derive(Debug, Serialize)]
struct Theorem2Report<'a> {
    config: &'a crate::config::Theorem2Config,
    seed: u64,
    x: Vec<f64>,
    prediction: f64,
    sampled: MonteCarloEstimate,
    failed_samples: usize,
    allowed_gap: f64,
    pass: bool,
}

fn theory_cfg(ctx: &Ctx) -> (TheoryConfig, u64) {
    match &ctx.config {
        Some(c) => (c.theory.clone(), c.seed),
        None => (TheoryConfig::default(), ctx.seed.unwrap_or(0)),
    }
}

fn verdict(ctx: &Ctx, check: &str, pass: bool, hard: bool) -> CliResult<()> {
    println!("{check}: {}", if pass { "PASS" } else { "FAIL" });
    println!("report: {}", ctx.path(&files::verify(check)).display());
    if !pass && hard {
        return Err(CliError::Check(format!("{check} outside its bound")));
    }
    Ok(())
}

fn unit_or(x: &Option<Vec<f64>>, d: usize, ones: usize) -> CliResult<Vec<f64>> {
    match x {
        Some(v) if v.len() != d => Err(CliError::Config(format!("theory: x has {} entries, d is {d}", v.len()))),
        Some(v) => Ok(v.clone()),
        None => Ok((0..d).map(|i| if i < ones { 1.0 } else { 0.0 }).collect()),
    }
}

pub fn verify_theorem1(ctx: &Ctx) -> CliResult<()> {
    let (theory, seed) = theory_cfg(ctx);
    let t = &theory.theorem1;
    let x = unit_or(&t.x, t.d, 1)?;
    let pop = LinearPopulation::new(t.d, t.noise_var.sqrt(), &CovarianceSpec::Identity, &BetaSpec::Ones)
        .map_err(|e| CliError::Config(format!("theory.theorem1: {e}")))?;
    let inst = LinearTheoryInstance::with_random_design(&pop, t.k, DVector::from_vec(x), t.eps, mix(seed, streams::POPULATION, 10))
        .map_err(|e| CliError::Config(format!("theory.theorem1: {e}")))?;
    let prediction = theorem1_prediction(&inst, t.k as f64)?;
    let exact = theorem1_exact(&inst)?;
    let sampled = theorem1_oracle(&inst, t.draws, mix(seed, streams::NOISE, 10))?;
    let within = (sampled.mean - exact).abs() <= 3.0 * sampled.stderr;
    let relative_gap = (prediction - sampled.mean).abs() / sampled.mean.abs();
    let pass = within && relative_gap <= t.relative_tolerance;
    let report = Theorem1Report { config: t, seed, prediction, exact, sampled, within_3se_of_exact: within, relative_gap, pass };
    ctx.write_json(&files::verify("theorem1"), &report)?;
    println!(
        "leading term {prediction:.6e}, exact {exact:.6e}, sampled {:.6e} ± {:.2e}",
        sampled.mean, sampled.stderr
    );
    verdict(ctx, "theorem1", pass, true)
}

pub fn verify_theorem2(ctx: &Ctx) -> CliResult<()> {
    let (theory, seed) = theory_cfg(ctx);
    let t = &theory.theorem2;
    let x = unit_or(&t.x, t.d, 2)?;
    let tg = TwoGaussian::new(t.d, t.separation).map_err(|e| CliError::Config(format!("theory.theorem2: {e}")))?;
    let reference = tg.draw(t.reference_size, mix(seed, streams::POPULATION, 20));
    let validation = tg.draw(t.validation_size, mix(seed, streams::POPULATION, 21));
    const NEWTON_TOL: f64 = 1e-10;
    let inst = MEstimatorInstance::logistic(&reference, &validation, NEWTON_TOL)?;
    let prediction = theorem2_leading_term(&inst, &x, t.y, t.k as f64)?;
    let (sampled, failed_samples) =
        theorem2_sampled(&tg, &validation, &x, t.y, t.k as usize, t.samples, NEWTON_TOL, mix(seed, streams::PRECEDING, 20))?;
    let allowed_gap = 3.0 * sampled.stderr + t.relative_slack * prediction.abs();
    let pass = (sampled.mean - prediction).abs() <= allowed_gap;
    println!("leading term {prediction:.6e}, sampled {:.6e} ± {:.2e}", sampled.mean, sampled.stderr);
    let report = Theorem2Report { config: t, seed, x, prediction, sampled, failed_samples, allowed_gap, pass };
    ctx.write_json(&files::verify("theorem2"), &report)?;
    verdict(ctx, "theorem2", pass, true)
}

pub fn verify_alpha_rate(ctx: &Ctx) -> CliResult<()> {
    let a = match &ctx.config {
        Some(c) => c.theory.alpha_rate.clone(),
        None => Default::default(),
    };
    let fits = ctx.load_fits()?;
    let report = alpha_rate_check(&fits, a.expected, a.tolerance)?;
    println!(
        "median alpha {:.4} (IQR {:.4} .. {:.4}) over {} points, expected {} ± {}",
        report.median, report.q1, report.q3, report.n_points, a.expected, a.tolerance
    );
    ctx.write_json(&files::verify("alpha_rate"), &serde_json::json!({ "hard": a.hard, "report": report }))?;
    verdict(ctx, "alpha_rate", report.pass, a.hard)
}

fn read_value(path: &Path) -> Option<Value> {
    serde_json::from_str(&fs::read_to_string(path).ok()?).ok()
}

fn num(v: &Value) -> String {
    match v.as_f64() {
        Some(f) => format!("{f:.4}"),
        None if v.is_null() => "-".into(),
        None => v.to_string(),
    }
}

/// Collects every JSON output under `--out` into a Markdown summary.
pub fn report(ctx: &Ctx) -> CliResult<()> {
    let mut md = String::from("# Run report\n");
    if let Some(v) = read_value(&ctx.path(files::SAMPLE_SUMMARY)) {
        md.push_str(&format!(
            "\n## Campaign\n\nrecords: {}, failed: {}, points: {}, grid: {}\n",
            v["records"], v["failed"], v["points"], v["grid"]
        ));
    }
    let summaries: Vec<Value> = [FitMethod::Loglinear, FitMethod::Likelihood, FitMethod::Amortized]
        .iter()
        .filter_map(|m| read_value(&ctx.path(&files::fit_summary(m))))
        .collect();
    if !summaries.is_empty() {
        md.push_str("\n## Fits\n\n| method | fitted | failed | median alpha | overall R² | median point R² | share R² ≥ 0.9 |\n|---|---|---|---|---|---|---|\n");
        for s in &summaries {
            md.push_str(&format!(
                "| {} | {} | {} | {} | {} | {} | {} |\n",
                s["method"].as_str().unwrap_or("?"),
                s["points_fitted"],
                s["points_failed"],
                num(&s["alpha_median"]),
                num(&s["r2_overall"]),
                num(&s["r2_point_median"]),
                num(&s["frac_point_r2_ge_0_9"])
            ));
        }
    }
    if let Some(Value::Array(rows)) = read_value(&ctx.path(files::VALUE_CORRELATION)) {
        md.push_str("\n## Valuation agreement\n\n| a | b | n | Pearson | Spearman |\n|---|---|---|---|---|\n");
        for r in rows {
            md.push_str(&format!(
                "| {} | {} | {} | {} | {} |\n",
                r["a"].as_str().unwrap_or("?"),
                r["b"].as_str().unwrap_or("?"),
                r["n"],
                num(&r["pearson"]),
                num(&r["spearman"])
            ));
        }
    }
    if let Some(v) = read_value(&ctx.path(files::SELECTION)) {
        md.push_str("\n## Selection overlap\n\n");
        for o in v["overlaps"].as_array().into_iter().flatten() {
            md.push_str(&format!("- k={} vs k={}: {} of {}\n", o["k_a"], o["k_b"], o["size"], v["m"]));
        }
    }
    if let Some(Value::Array(rows)) = read_value(&ctx.path(files::ADDITION)) {
        md.push_str("\n## Point addition\n\n| preceding | strategy | mean gain | std | baseline |\n|---|---|---|---|---|\n");
        for r in rows {
            md.push_str(&format!(
                "| {} | {} | {} | {} | {} |\n",
                r["preceding_size"],
                r["strategy"].as_str().unwrap_or("?"),
                num(&r["mean_improvement"]),
                num(&r["std_improvement"]),
                num(&r["baseline_accuracy"])
            ));
        }
    }
    let checks: Vec<(&str, Value)> = ["theorem1", "theorem2", "alpha_rate"]
        .iter()
        .filter_map(|c| read_value(&ctx.path(&files::verify(c))).map(|v| (*c, v)))
        .collect();
    if !checks.is_empty() {
        md.push_str("\n## Checks\n\n");
        for (name, v) in checks {
            let pass = v.get("pass").or_else(|| v["report"].get("pass")).and_then(Value::as_bool);
            md.push_str(&format!("- {name}: {}\n", match pass {
                Some(true) => "pass",
                Some(false) => "fail",
                None => "unknown",
            }));
        }
    }
    let path = ctx.write_text(files::REPORT, &md)?;
    print!("{md}");
    eprintln!("wrote {}", path.display());
    Ok(())
}
