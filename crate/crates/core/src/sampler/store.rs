//! Sample records, campaign metadata and the on-disk store format.
//!
//! The record file is a flat sequence of 25-byte little-endian records
//! `(u32 point_id, u32 k, f64 delta, u64 seed, u8 status)`; campaign
//! metadata lives next to it as JSON.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{ModelKind, ModelSpec};
use crate::stats;

pub const RECORD_BYTES: usize = 25;
pub const STORE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleStatus {
    Ok = 0,
    /// Training failed; kept so failures are counted, never used in estimates.
    Failed = 1,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleRecord {
    pub point_id: u32,
    pub k: u32,
    pub delta: f64,
    pub seed: u64,
    pub status: SampleStatus,
}

impl SampleRecord {
    pub fn is_ok(&self) -> bool {
        self.status == SampleStatus::Ok
    }

    fn sort_key(&self) -> (u32, u32, u64, u64, u8) {
        (self.point_id, self.k, self.seed, self.delta.to_bits(), self.status as u8)
    }

    pub fn to_bytes(&self) -> [u8; RECORD_BYTES] {
        let mut b = [0u8; RECORD_BYTES];
        b[0..4].copy_from_slice(&self.point_id.to_le_bytes());
        b[4..8].copy_from_slice(&self.k.to_le_bytes());
        b[8..16].copy_from_slice(&self.delta.to_le_bytes());
        b[16..24].copy_from_slice(&self.seed.to_le_bytes());
        b[24] = self.status as u8;
        b
    }

    pub fn from_bytes(b: &[u8; RECORD_BYTES]) -> Result<Self> {
        let status = match b[24] {
            0 => SampleStatus::Ok,
            1 => SampleStatus::Failed,
            s => return Err(Error::Store(format!("unknown status byte {s}"))),
        };
        Ok(Self {
            point_id: u32::from_le_bytes(b[0..4].try_into().unwrap()),
            k: u32::from_le_bytes(b[4..8].try_into().unwrap()),
            delta: f64::from_le_bytes(b[8..16].try_into().unwrap()),
            seed: u64::from_le_bytes(b[16..24].try_into().unwrap()),
            status,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum SamplingMode {
    /// `m` samples at every grid cardinality for every point.
    PerCardinality { m: usize },
    /// `m` samples per point, each at a cardinality drawn uniformly from the grid.
    Uniform { m: usize },
}

impl SamplingMode {
    pub fn m(&self) -> usize {
        match *self {
            SamplingMode::PerCardinality { m } | SamplingMode::Uniform { m } => m,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignMeta {
    pub version: u32,
    pub grid: Vec<u32>,
    pub sampling: SamplingMode,
    pub model: ModelSpec,
    pub master_seed: u64,
    pub balanced: bool,
    pub pool: String,
    pub evaluator: String,
    pub points: Vec<u32>,
}

/// Campaign records kept in canonical `(point_id, k, seed)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleStore {
    meta: CampaignMeta,
    records: Vec<SampleRecord>,
}

impl SampleStore {
    pub fn new(meta: CampaignMeta, mut records: Vec<SampleRecord>) -> Self {
        records.sort_by_key(SampleRecord::sort_key);
        Self { meta, records }
    }

    pub fn meta(&self) -> &CampaignMeta {
        &self.meta
    }

    pub fn model_kind(&self) -> ModelKind {
        self.meta.model.kind()
    }

    pub fn records(&self) -> &[SampleRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Appends records, restoring canonical order. Metadata is unchanged.
    pub fn extend(&mut self, more: impl IntoIterator<Item = SampleRecord>) {
        self.records.extend(more);
        self.records.sort_by_key(SampleRecord::sort_key);
    }

    /// Merges another store from the same campaign (same metadata apart from
    /// the evaluated point list).
    pub fn merge(&mut self, other: &SampleStore) -> Result<()> {
        let mut a = self.meta.clone();
        let mut b = other.meta.clone();
        a.points.clear();
        b.points.clear();
        if a != b {
            return Err(Error::Store("cannot merge stores from different campaigns".into()));
        }
        let mut points = self.meta.points.clone();
        points.extend(&other.meta.points);
        points.sort_unstable();
        points.dedup();
        self.meta.points = points;
        self.extend(other.records.iter().copied());
        Ok(())
    }

    fn point_range(&self, point_id: u32) -> &[SampleRecord] {
        let lo = self.records.partition_point(|r| r.point_id < point_id);
        let hi = self.records.partition_point(|r| r.point_id <= point_id);
        &self.records[lo..hi]
    }

    /// All records of one point (including failures).
    pub fn point_records(&self, point_id: u32) -> &[SampleRecord] {
        self.point_range(point_id)
    }

    /// Successful deltas at `(point_id, k)`.
    pub fn deltas_at(&self, point_id: u32, k: u32) -> Vec<f64> {
        let recs = self.point_range(point_id);
        let lo = recs.partition_point(|r| r.k < k);
        let hi = recs.partition_point(|r| r.k <= k);
        recs[lo..hi].iter().filter(|r| r.is_ok()).map(|r| r.delta).collect()
    }

    /// Successful `(k, delta)` samples of one point.
    pub fn samples(&self, point_id: u32) -> Vec<(u32, f64)> {
        self.point_range(point_id).iter().filter(|r| r.is_ok()).map(|r| (r.k, r.delta)).collect()
    }

    /// Distinct point ids present in the records.
    pub fn point_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.records.iter().map(|r| r.point_id).collect();
        ids.dedup();
        ids
    }

    pub fn failure_counts(&self) -> BTreeMap<u32, usize> {
        let mut out = BTreeMap::new();
        for r in self.records.iter().filter(|r| !r.is_ok()) {
            *out.entry(r.point_id).or_insert(0) += 1;
        }
        out
    }

    pub fn record_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.records.len() * RECORD_BYTES);
        for r in &self.records {
            out.extend_from_slice(&r.to_bytes());
        }
        out
    }

    pub fn meta_path(path: &Path) -> PathBuf {
        let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(".meta.json");
        path.with_file_name(name)
    }

    /// Writes the record file at `path` and the metadata sidecar beside it.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        for r in &self.records {
            w.write_all(&r.to_bytes())?;
        }
        w.flush()?;
        fs::write(Self::meta_path(path), serde_json::to_string_pretty(&self.meta)?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        if bytes.len() % RECORD_BYTES != 0 {
            return Err(Error::Store(format!("{}: length {} is not a multiple of {RECORD_BYTES}", path.display(), bytes.len())));
        }
        let records = bytes
            .chunks_exact(RECORD_BYTES)
            .map(|c| SampleRecord::from_bytes(c.try_into().unwrap()))
            .collect::<Result<Vec<_>>>()?;
        let meta: CampaignMeta = serde_json::from_str(&fs::read_to_string(Self::meta_path(path))?)?;
        if meta.version != STORE_VERSION {
            return Err(Error::Store(format!("unsupported store version {}", meta.version)));
        }
        Ok(Self::new(meta, records))
    }

    /// CSV export with header `point_id,k,delta,seed,status`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["point_id", "k", "delta", "seed", "status"])?;
        for r in &self.records {
            w.write_record([
                r.point_id.to_string(),
                r.k.to_string(),
                format!("{:e}", r.delta),
                r.seed.to_string(),
                (r.status as u8).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Sample mean of `Δ` at one key with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiEstimate {
    pub mean: f64,
    /// `None` with a single record.
    pub stderr: Option<f64>,
    pub n: usize,
}

pub fn estimate_psi(store: &SampleStore, point_id: u32, k: u32) -> Result<PsiEstimate> {
    let deltas = store.deltas_at(point_id, k);
    let mean = stats::mean(&deltas).ok_or(Error::NoRecords { point_id, k })?;
    let stderr = stats::variance(&deltas).map(|v| (v / deltas.len() as f64).sqrt());
    Ok(PsiEstimate { mean, stderr, n: deltas.len() })
}

/// Unbiased variance of `Δ` at one key and the record count.
pub fn estimate_variance(store: &SampleStore, point_id: u32, k: u32) -> Result<(f64, usize)> {
    let deltas = store.deltas_at(point_id, k);
    match stats::variance(&deltas) {
        Some(v) => Ok((v, deltas.len())),
        None => Err(Error::Insufficient(format!(
            "variance at point {point_id}, k={k} needs 2 records, found {}",
            deltas.len()
        ))),
    }
}

#[cfg(test)]
pub(crate) fn test_meta(grid: Vec<u32>, sampling: SamplingMode) -> CampaignMeta {
    CampaignMeta {
        version: STORE_VERSION,
        grid,
        sampling,
        model: ModelSpec::ols(),
        master_seed: 0,
        balanced: false,
        pool: "test".into(),
        evaluator: "test".into(),
        points: vec![],
    }
}
