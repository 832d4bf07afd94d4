//! Amortized scaling-law estimation.
//!
//! A two-layer network maps a point's features to raw head values for every
//! class; the row of the point's own label is decoded into `(c, α, σ², β)`
//! and trained with the same Gaussian NLL used by per-point fits, pooled over
//! all records of all points.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::fitting::{Diagnostics, FitMethod, ScalingFit, ALPHA_BOUNDS};
use crate::models::sigmoid;
use crate::optim::{clip_grad_norm, Adam};
use crate::rng::{mix, rng_from_seed, streams};
use crate::sampler::SampleStore;

/// Raw values per class: sign logit, log|c|, α, log σ², β.
pub const HEAD_WIDTH: usize = 5;
const SIGN: usize = 0;
const LOG_ABS_C: usize = 1;
const ALPHA: usize = 2;
const LOG_SIGMA2: usize = 3;
const BETA: usize = 4;

const MAGIC: &[u8; 8] = b"SLAMNET\0";
const FORMAT_VERSION: u32 = 1;

fn beta_max() -> f64 {
    std::f64::consts::E * std::f64::consts::E
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AmortizedConfig {
    pub hidden: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub prior_lambda: f64,
    pub clip_norm: f64,
    pub validation_fraction: f64,
    /// Initial `|ψ_100|` implied by the log|c| bias.
    pub init_psi100: f64,
    pub seed: u64,
}

impl Default for AmortizedConfig {
    fn default() -> Self {
        AmortizedConfig {
            hidden: 128,
            lr: 1e-3,
            batch_size: 256,
            max_epochs: 200,
            patience: 10,
            prior_lambda: 1e-3,
            clip_norm: 1.0,
            validation_fraction: 0.1,
            init_psi100: 1e-3,
            seed: 0,
        }
    }
}

/// One contribution sample tied to an input row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Record {
    pub point: usize,
    pub k: f64,
    pub delta: f64,
}

/// Standardized features plus the head row to read.
#[derive(Debug, Clone, PartialEq)]
pub struct NetInput {
    pub x: Vec<f64>,
    pub head: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRun {
    pub train_points: Vec<usize>,
    pub validation_points: Vec<usize>,
    /// Mean training objective per epoch (NLL plus prior).
    pub train_loss: Vec<f64>,
    /// Validation NLL; index 0 is the initialization.
    pub validation_nll: Vec<f64>,
    pub best_epoch: usize,
    pub epochs_run: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Decoded {
    /// Smooth signed magnitude used in training.
    c_train: f64,
    /// Hard sign used at inference.
    c_infer: f64,
    sign_prob: f64,
    alpha: f64,
    log_sigma2: f64,
    beta: f64,
    beta_active: bool,
}

fn decode(raw: &[f64]) -> Decoded {
    let s = sigmoid(raw[SIGN]);
    let mag = raw[LOG_ABS_C].exp();
    let beta = raw[BETA].clamp(0.0, beta_max());
    Decoded {
        c_train: (2.0 * s - 1.0) * mag,
        c_infer: if raw[SIGN] >= 0.0 { mag } else { -mag },
        sign_prob: s,
        alpha: raw[ALPHA],
        log_sigma2: raw[LOG_SIGMA2],
        beta,
        beta_active: raw[BETA] > 0.0 && raw[BETA] < beta_max(),
    }
}

/// NLL of one record and its gradient with respect to the raw head values.
fn record_nll(raw: &[f64], k: f64, delta: f64, grad: Option<&mut [f64]>) -> f64 {
    let p = decode(raw);
    let ln_k = k.ln();
    let k_alpha = (-p.alpha * ln_k).exp();
    let r = delta - p.c_train * k_alpha;
    let w = (p.beta * ln_k - p.log_sigma2).exp();
    let nll = 0.5 * (2.0 * std::f64::consts::PI).ln() + 0.5 * p.log_sigma2 - 0.5 * p.beta * ln_k + 0.5 * r * r * w;
    if let Some(g) = grad {
        let d_c = -w * r * k_alpha;
        let mag = raw[LOG_ABS_C].exp();
        g[SIGN] += d_c * 2.0 * p.sign_prob * (1.0 - p.sign_prob) * mag;
        g[LOG_ABS_C] += d_c * p.c_train;
        g[ALPHA] += w * r * p.c_train * k_alpha * ln_k;
        g[LOG_SIGMA2] += 0.5 - 0.5 * r * r * w;
        if p.beta_active {
            g[BETA] += -0.5 * ln_k + 0.5 * r * r * w * ln_k;
        }
    }
    nll
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmortizedNet {
    d: usize,
    hidden: usize,
    heads: usize,
    classification: bool,
    input_mean: Vec<f64>,
    input_std: Vec<f64>,
    params: Vec<f64>,
    config: AmortizedConfig,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    d: usize,
    hidden: usize,
    heads: usize,
    classification: bool,
    input_mean: Vec<f64>,
    input_std: Vec<f64>,
    n_params: usize,
    config: AmortizedConfig,
}

impl AmortizedNet {
    /// Random first layer, zero output weights; output biases put every
    /// point at `α = 1`, `β = 1`, `|ψ_100| = init_psi100` and the given
    /// `log σ²`.
    pub fn new(d: usize, heads: usize, classification: bool, log_sigma2_init: f64, config: &AmortizedConfig) -> Result<Self> {
        if d == 0 || heads == 0 || config.hidden == 0 {
            return Err(Error::InvalidArgument("network dimensions must be positive".into()));
        }
        let mut net = AmortizedNet {
            d,
            hidden: config.hidden,
            heads,
            classification,
            input_mean: vec![0.0; d],
            input_std: vec![1.0; d],
            params: vec![0.0; config.hidden * (d + 1) + HEAD_WIDTH * heads * (config.hidden + 1)],
            config: config.clone(),
        };
        let mut rng = rng_from_seed(mix(config.seed, streams::MODEL_INIT, 0));
        let scale = 1.0 / (d as f64).sqrt();
        for v in &mut net.params[..config.hidden * d] {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = scale * z;
        }
        let b2 = net.b2_offset();
        let log_abs_c = (config.init_psi100 * 100.0).ln();
        for h in 0..heads {
            let o = b2 + h * HEAD_WIDTH;
            net.params[o + LOG_ABS_C] = log_abs_c;
            net.params[o + ALPHA] = 1.0;
            net.params[o + LOG_SIGMA2] = log_sigma2_init;
            net.params[o + BETA] = 1.0;
        }
        Ok(net)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn config(&self) -> &AmortizedConfig {
        &self.config
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn b1_offset(&self) -> usize {
        self.hidden * self.d
    }

    fn w2_offset(&self) -> usize {
        self.hidden * (self.d + 1)
    }

    fn b2_offset(&self) -> usize {
        self.w2_offset() + HEAD_WIDTH * self.heads * self.hidden
    }

    /// Sets the input standardization from feature rows.
    pub fn fit_standardization(&mut self, rows: &[&[f64]]) {
        for j in 0..self.d {
            let vals: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            let m = crate::stats::mean(&vals).unwrap_or(0.0);
            let sd = crate::stats::variance(&vals).map(f64::sqrt).unwrap_or(1.0);
            self.input_mean[j] = m;
            self.input_std[j] = if sd > 1e-12 { sd } else { 1.0 };
        }
    }

    pub fn standardize(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, got: x.len() });
        }
        Ok(x.iter().zip(self.input_mean.iter().zip(&self.input_std)).map(|(v, (m, s))| (v - m) / s).collect())
    }

    fn hidden_act(&self, x: &[f64]) -> Vec<f64> {
        let b1 = self.b1_offset();
        (0..self.hidden)
            .map(|u| {
                let row = &self.params[u * self.d..(u + 1) * self.d];
                let pre = self.params[b1 + u] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
                pre.tanh()
            })
            .collect()
    }

    fn head_raw(&self, h: &[f64], head: usize) -> [f64; HEAD_WIDTH] {
        let w2 = self.w2_offset();
        let b2 = self.b2_offset();
        let mut out = [0.0; HEAD_WIDTH];
        for (q, o) in out.iter_mut().enumerate() {
            let row = head * HEAD_WIDTH + q;
            let w = &self.params[w2 + row * self.hidden..w2 + (row + 1) * self.hidden];
            *o = self.params[b2 + row] + w.iter().zip(h).map(|(a, b)| a * b).sum::<f64>();
        }
        out
    }

    /// Mean NLL over `records` plus `prior_lambda · mean (α − 1)²`, and its
    /// gradient in the flat parameter vector when requested. Records are
    /// grouped by point so each input is propagated once.
    pub fn objective(&self, inputs: &[NetInput], records: &[Record], prior_lambda: f64, want_grad: bool) -> (f64, Option<Vec<f64>>) {
        let mut by_point: BTreeMap<usize, Vec<&Record>> = BTreeMap::new();
        for r in records {
            by_point.entry(r.point).or_default().push(r);
        }
        let n = records.len() as f64;
        let mut grad = want_grad.then(|| vec![0.0; self.params.len()]);
        let mut total = 0.0;
        for (p, recs) in by_point {
            let input = &inputs[p];
            let h = self.hidden_act(&input.x);
            let raw = self.head_raw(&h, input.head);
            let mut d_raw = [0.0; HEAD_WIDTH];
            for r in &recs {
                total += record_nll(&raw, r.k, r.delta, want_grad.then_some(&mut d_raw[..]));
                let a = raw[ALPHA] - 1.0;
                total += prior_lambda * a * a;
                d_raw[ALPHA] += 2.0 * prior_lambda * a;
            }
            if let Some(g) = grad.as_mut() {
                self.backprop(g, &input.x, &h, input.head, &d_raw, 1.0 / n);
            }
        }
        (total / n, grad)
    }

    fn backprop(&self, g: &mut [f64], x: &[f64], h: &[f64], head: usize, d_raw: &[f64; HEAD_WIDTH], scale: f64) {
        let w2 = self.w2_offset();
        let b2 = self.b2_offset();
        let b1 = self.b1_offset();
        let mut d_h = vec![0.0; self.hidden];
        for (q, &dr) in d_raw.iter().enumerate() {
            let dr = dr * scale;
            if dr == 0.0 {
                continue;
            }
            let row = head * HEAD_WIDTH + q;
            g[b2 + row] += dr;
            let wo = w2 + row * self.hidden;
            for u in 0..self.hidden {
                g[wo + u] += dr * h[u];
                d_h[u] += dr * self.params[wo + u];
            }
        }
        for u in 0..self.hidden {
            let d_pre = d_h[u] * (1.0 - h[u] * h[u]);
            if d_pre == 0.0 {
                continue;
            }
            g[b1 + u] += d_pre;
            for (j, &xj) in x.iter().enumerate() {
                g[u * self.d + j] += d_pre * xj;
            }
        }
    }

    fn head_for(&self, y: f64) -> Result<usize> {
        if !self.classification {
            return Ok(0);
        }
        if y >= 0.0 && y.fract() == 0.0 && (y as usize) < self.heads {
            Ok(y as usize)
        } else {
            Err(Error::InvalidArgument(format!("invalid class {y} for a {}-class network", self.heads)))
        }
    }

    /// Decoded `(c, α, σ², β)` for a raw (unstandardized) point.
    pub fn predict_params(&self, point_id: u32, x: &[f64], y: f64) -> Result<ScalingFit> {
        let head = self.head_for(y)?;
        let xs = self.standardize(x)?;
        let p = decode(&self.head_raw(&self.hidden_act(&xs), head));
        Ok(ScalingFit {
            point_id,
            method: FitMethod::Amortized,
            c: p.c_infer,
            alpha: p.alpha.clamp(ALPHA_BOUNDS.0, ALPHA_BOUNDS.1),
            sigma2: p.log_sigma2.exp().max(f64::MIN_POSITIVE),
            beta: p.beta,
            diagnostics: Diagnostics { r2: None, nll: None, n_samples: 0, converged: true, warnings: vec![] },
        })
    }

    /// Predictions for every row, numbered by row index.
    pub fn predict_dataset(&self, data: &Dataset) -> Result<Vec<ScalingFit>> {
        (0..data.len()).map(|i| self.predict_params(i as u32, data.row(i), data.target(i))).collect()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            d: self.d,
            hidden: self.hidden,
            heads: self.heads,
            classification: self.classification,
            input_mean: self.input_mean.clone(),
            input_std: self.input_std.clone(),
            n_params: self.params.len(),
            config: self.config.clone(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(16 + json.len() + 8 * self.params.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| Error::Store(format!("network file: {msg}"));
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("bad magic"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let hlen = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let body = bytes.get(16..16 + hlen).ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(body)?;
        let weights = &bytes[16 + hlen..];
        let expected = header.hidden * (header.d + 1) + HEAD_WIDTH * header.heads * (header.hidden + 1);
        if header.n_params != expected || weights.len() != 8 * expected {
            return Err(bad("weight count does not match dimensions"));
        }
        if header.input_mean.len() != header.d || header.input_std.len() != header.d {
            return Err(bad("standardization length does not match dimension"));
        }
        let params = weights.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(AmortizedNet {
            d: header.d,
            hidden: header.hidden,
            heads: header.heads,
            classification: header.classification,
            input_mean: header.input_mean,
            input_std: header.input_std,
            params,
            config: header.config,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::File::create(path)?.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }
}

/// Trains on raw feature rows. `heads[i]` selects the output row of point
/// `i`; `records[*].point` indexes `features`.
pub fn train_from_records(
    features: &[Vec<f64>],
    heads: &[usize],
    num_heads: usize,
    classification: bool,
    records: &[Record],
    cfg: &AmortizedConfig,
) -> Result<(AmortizedNet, TrainRun)> {
    if records.is_empty() || features.is_empty() {
        return Err(Error::Insufficient("amortized training needs at least one record".into()));
    }
    let d = features[0].len();
    if let Some(bad) = features.iter().find(|f| f.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, got: bad.len() });
    }
    if heads.len() != features.len() || heads.iter().any(|&h| h >= num_heads) {
        return Err(Error::InvalidArgument("head index out of range".into()));
    }
    if records.iter().any(|r| r.point >= features.len() || !(r.k >= 1.0) || !r.delta.is_finite()) {
        return Err(Error::InvalidArgument("record refers to an unknown point or has invalid k/delta".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be positive".into()));
    }

    // Split by point.
    let mut with_records: Vec<usize> = records.iter().map(|r| r.point).collect();
    with_records.sort_unstable();
    with_records.dedup();
    let mut order = with_records.clone();
    order.shuffle(&mut rng_from_seed(mix(cfg.seed, streams::SPLIT, 0)));
    let n_val = if order.len() >= 2 {
        ((cfg.validation_fraction * order.len() as f64).round() as usize).clamp(usize::from(cfg.validation_fraction > 0.0), order.len() - 1)
    } else {
        0
    };
    let mut validation_points = order[..n_val].to_vec();
    let mut train_points = order[n_val..].to_vec();
    validation_points.sort_unstable();
    train_points.sort_unstable();
    let mut is_val = vec![false; features.len()];
    validation_points.iter().for_each(|&p| is_val[p] = true);
    let train: Vec<Record> = records.iter().copied().filter(|r| !is_val[r.point]).collect();
    let val: Vec<Record> = records.iter().copied().filter(|r| is_val[r.point]).collect();

    // With c = 0 at initialization, the σ² optimum at β = 1 is mean(k Δ²).
    let s2 = crate::stats::sum(train.iter().map(|r| r.k * r.delta * r.delta)) / train.len() as f64;
    let mut net = AmortizedNet::new(d, num_heads, classification, s2.max(1e-300).ln(), cfg)?;
    let rows: Vec<&[f64]> = train_points.iter().map(|&p| features[p].as_slice()).collect();
    net.fit_standardization(&rows);
    let inputs: Vec<NetInput> = features
        .iter()
        .zip(heads)
        .map(|(f, &head)| Ok(NetInput { x: net.standardize(f)?, head }))
        .collect::<Result<_>>()?;

    let val_nll = |net: &AmortizedNet| -> f64 {
        if val.is_empty() {
            return f64::NAN;
        }
        let v = net.objective(&inputs, &val, 0.0, false).0;
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };

    let mut adam = Adam::new(net.params.len(), cfg.lr);
    let mut run = TrainRun {
        train_points,
        validation_points,
        train_loss: Vec::new(),
        validation_nll: vec![val_nll(&net)],
        best_epoch: 0,
        epochs_run: 0,
    };
    let mut best_params = net.params.clone();
    let mut best_val = run.validation_nll[0];
    let mut idx: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.max_epochs {
        idx.sort_unstable();
        idx.shuffle(&mut rng_from_seed(mix(cfg.seed, streams::SHUFFLE, epoch as u64)));
        let mut loss_sum = 0.0;
        for chunk in idx.chunks(cfg.batch_size) {
            let batch: Vec<Record> = chunk.iter().map(|&i| train[i]).collect();
            let (loss, grad) = net.objective(&inputs, &batch, cfg.prior_lambda, true);
            let mut grad = grad.expect("gradient requested");
            if !grad.iter().all(|g| g.is_finite()) {
                return Err(Error::NonFinite(format!("amortized gradient at epoch {epoch}")));
            }
            clip_grad_norm(&mut grad, cfg.clip_norm);
            adam.step(&mut net.params, &grad);
            loss_sum += loss * batch.len() as f64;
        }
        run.train_loss.push(loss_sum / train.len() as f64);
        run.epochs_run = epoch;
        let v = val_nll(&net);
        run.validation_nll.push(v);
        if run.validation_points.is_empty() {
            best_params.clone_from(&net.params);
            run.best_epoch = epoch;
            continue;
        }
        if v < best_val {
            best_val = v;
            best_params.clone_from(&net.params);
            run.best_epoch = epoch;
        } else if epoch - run.best_epoch >= cfg.patience {
            break;
        }
    }
    net.params = best_params;
    Ok((net, run))
}

/// Trains on a campaign store whose point ids index rows of `data`.
pub fn train_amortized(store: &SampleStore, data: &Dataset, cfg: &AmortizedConfig) -> Result<(AmortizedNet, TrainRun)> {
    let records: Vec<Record> = store
        .records()
        .iter()
        .filter(|r| r.is_ok())
        .map(|r| Record { point: r.point_id as usize, k: r.k as f64, delta: r.delta })
        .collect();
    if records.is_empty() {
        return Err(Error::Insufficient("store has no successful records".into()));
    }
    if let Some(r) = records.iter().find(|r| r.point >= data.len()) {
        return Err(Error::InvalidArgument(format!("point {} is not a row of the dataset ({} rows)", r.point, data.len())));
    }
    let features: Vec<Vec<f64>> = (0..data.len()).map(|i| data.row(i).to_vec()).collect();
    let (num_heads, classification) = match data.task().num_classes() {
        Some(k) => (k, true),
        None => (1, false),
    };
    let heads: Vec<usize> = (0..data.len()).map(|i| if classification { data.target(i) as usize } else { 0 }).collect();
    train_from_records(&features, &heads, num_heads, classification, &records, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;
    use rand_distr::Normal;

    fn grid() -> Vec<f64> {
        (0..10).map(|i| (100f64.ln() + i as f64 * 10f64.ln() / 9.0).exp().round()).collect()
    }

    /// Records drawn from the Gaussian model with per-point parameters.
    fn synth(
        n: usize,
        m: usize,
        seed: u64,
        params: impl Fn(&[f64]) -> (f64, f64, f64, f64),
    ) -> (Vec<Vec<f64>>, Vec<Record>, Vec<(f64, f64, f64, f64)>) {
        let mut rng = rng_from_seed(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let ks = grid();
        let mut feats = Vec::new();
        let mut recs = Vec::new();
        let mut truth = Vec::new();
        for p in 0..n {
            let x: Vec<f64> = (0..3).map(|_| normal.sample(&mut rng)).collect();
            let (c, a, s, b) = params(&x);
            for _ in 0..m {
                let k = ks[rng.random_range(0..ks.len())];
                let mean = c * k.powf(-a);
                recs.push(Record { point: p, k, delta: mean + s * k.powf(-b / 2.0) * normal.sample(&mut rng) });
            }
            feats.push(x);
            truth.push((c, a, s, b));
        }
        (feats, recs, truth)
    }

    #[test]
    fn zero_epochs_keep_initialization() {
        let (f, r, _) = synth(20, 3, 1, |_| (1.0, 1.2, 0.5, 2.0));
        let cfg = AmortizedConfig { max_epochs: 0, hidden: 8, ..Default::default() };
        let (net, run) = train_from_records(&f, &vec![0; 20], 1, false, &r, &cfg).unwrap();
        assert_eq!(run.epochs_run, 0);
        for (i, x) in f.iter().enumerate() {
            let p = net.predict_params(i as u32, x, 0.0).unwrap();
            assert_eq!(p.alpha, 1.0);
            assert_eq!(p.beta, 1.0);
            assert!((p.c * 100f64.powf(-p.alpha) - 1e-3).abs() < 1e-15);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (f, r, _) = synth(6, 4, 2, |x| (if x[0] > 0.0 { 1.0 } else { -0.5 }, 1.0 + 0.2 * x[1], 0.3, 1.5));
        let cfg = AmortizedConfig { hidden: 4, seed: 3, ..Default::default() };
        let mut net = AmortizedNet::new(3, 2, true, -3.0, &cfg).unwrap();
        // Move off the zero-initialized output layer so every weight matters.
        let mut rng = rng_from_seed(9);
        for v in net.params_mut() {
            *v += 0.3 * rng.random_range(-1.0..1.0);
        }
        let inputs: Vec<NetInput> = f.iter().enumerate().map(|(i, x)| NetInput { x: x.clone(), head: i % 2 }).collect();
        let (_, g) = net.objective(&inputs, &r, 0.05, true);
        let g = g.unwrap();
        let h = 1e-5;
        for i in 0..net.params().len() {
            let orig = net.params()[i];
            net.params_mut()[i] = orig + h;
            let up = net.objective(&inputs, &r, 0.05, false).0;
            net.params_mut()[i] = orig - h;
            let down = net.objective(&inputs, &r, 0.05, false).0;
            net.params_mut()[i] = orig;
            let fd = (up - down) / (2.0 * h);
            let denom = g[i].abs().max(fd.abs());
            assert!(denom < 1e-8 || (g[i] - fd).abs() / denom < 1e-4, "param {i}: {} vs {fd}", g[i]);
        }
    }

    #[test]
    fn early_stopping_restores_best_epoch() {
        let (f, r, _) = synth(60, 5, 4, |_| (1.0, 1.2, 0.5, 2.0));
        let cfg = AmortizedConfig { hidden: 16, max_epochs: 40, patience: 3, lr: 1e-2, batch_size: 32, ..Default::default() };
        let (_, run) = train_from_records(&f, &vec![0; 60], 1, false, &r, &cfg).unwrap();
        let min = run.validation_nll.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(run.validation_nll[run.best_epoch], min);
        assert!(!run.validation_points.is_empty());
        assert!(run.validation_points.iter().all(|p| !run.train_points.contains(p)));
    }

    #[test]
    fn training_is_deterministic() {
        let (f, r, _) = synth(30, 4, 5, |_| (1.0, 1.0, 0.5, 2.0));
        let cfg = AmortizedConfig { hidden: 8, max_epochs: 5, ..Default::default() };
        let a = train_from_records(&f, &vec![0; 30], 1, false, &r, &cfg).unwrap();
        let b = train_from_records(&f, &vec![0; 30], 1, false, &r, &cfg).unwrap();
        assert_eq!(a.0.params(), b.0.params());
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn constant_parameters_recovered() {
        let (f, r, _) = synth(300, 10, 6, |_| (1.0, 1.2, 0.5, 2.0));
        let cfg = AmortizedConfig { hidden: 32, lr: 1e-2, ..Default::default() };
        let (net, _) = train_from_records(&f, &vec![0; 300], 1, false, &r, &cfg).unwrap();
        let close = f.iter().enumerate().filter(|(i, x)| (net.predict_params(*i as u32, x, 0.0).unwrap().alpha - 1.2).abs() <= 0.1).count();
        assert!(close as f64 >= 0.9 * 300.0, "{close}/300 within 0.1");
    }

    #[test]
    fn head_selection_and_clamps() {
        let cfg = AmortizedConfig { hidden: 4, ..Default::default() };
        let mut net = AmortizedNet::new(2, 3, true, 0.0, &cfg).unwrap();
        let b2 = net.b2_offset();
        net.params_mut()[b2 + HEAD_WIDTH + BETA] = 50.0;
        net.params_mut()[b2 + HEAD_WIDTH + SIGN] = -1.0;
        let a = net.predict_params(0, &[0.1, 0.2], 0.0).unwrap();
        let b = net.predict_params(0, &[0.1, 0.2], 1.0).unwrap();
        assert_eq!(a, net.predict_params(9, &[0.1, 0.2], 0.0).map(|mut f| {
            f.point_id = 0;
            f
        }).unwrap());
        assert_ne!(a, b);
        assert!(b.beta <= beta_max() && b.c < 0.0);
        assert!(net.predict_params(0, &[0.1, 0.2], 3.0).is_err());
        assert!(net.predict_params(0, &[0.1], 0.0).is_err());
    }

    #[test]
    fn weights_round_trip() {
        let (f, r, _) = synth(10, 3, 7, |_| (1.0, 1.0, 0.5, 2.0));
        let cfg = AmortizedConfig { hidden: 5, max_epochs: 2, ..Default::default() };
        let (net, _) = train_from_records(&f, &vec![0; 10], 1, false, &r, &cfg).unwrap();
        let back = AmortizedNet::from_bytes(&net.to_bytes().unwrap()).unwrap();
        assert_eq!(back, net);
        let mut bytes = net.to_bytes().unwrap();
        bytes.pop();
        assert!(AmortizedNet::from_bytes(&bytes).is_err());
    }
}
