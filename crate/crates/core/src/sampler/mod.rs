//! Parallel marginal-contribution campaigns over a cardinality grid.

mod campaign;
mod grid;
mod store;

pub use campaign::{
    run_campaign, sample_contribution, task_plan, try_sample_contribution, CampaignPoint, CampaignSpec, PoolSource,
    Population, SamplingContext,
};
pub use grid::{CardinalityGrid, GridSpec, DEFAULT_MIN_K};
pub use store::{
    estimate_psi, estimate_variance, CampaignMeta, PsiEstimate, SampleRecord, SampleStatus, SampleStore, SamplingMode,
    RECORD_BYTES, STORE_VERSION,
};

#[cfg(test)]
pub(crate) use store::test_meta;
