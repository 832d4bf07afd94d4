use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub const DEFAULT_MIN_K: u32 = 100;

/// How a grid is described in configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type", deny_unknown_fields)]
pub enum GridSpec {
    Explicit {
        values: Vec<u32>,
        #[serde(default = "default_min_k")]
        min_k: u32,
    },
    LogSpaced {
        k_min: u32,
        k_max: u32,
        count: usize,
        #[serde(default = "default_min_k")]
        min_k: u32,
    },
}

fn default_min_k() -> u32 {
    DEFAULT_MIN_K
}

/// Strictly increasing dataset sizes at which contributions are sampled.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CardinalityGrid {
    values: Vec<u32>,
}

impl CardinalityGrid {
    pub fn explicit(values: Vec<u32>, min_k: u32) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("grid: no cardinalities"));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("grid: values must be strictly increasing"));
        }
        if values[0] < min_k.max(1) {
            return Err(invalid(format!("grid: smallest cardinality {} is below the lower bound {min_k}", values[0])));
        }
        Ok(Self { values })
    }

    /// `count` values spaced evenly in `log k` between the endpoints,
    /// rounded to integers with duplicates removed.
    pub fn log_spaced(k_min: u32, k_max: u32, count: usize, min_k: u32) -> Result<Self> {
        if k_min > k_max {
            return Err(invalid(format!("grid: k_min ({k_min}) exceeds k_max ({k_max})")));
        }
        if count == 0 {
            return Err(invalid("grid: count must be at least 1"));
        }
        if k_min == 0 {
            return Err(invalid("grid: k_min must be at least 1"));
        }
        let (lo, hi) = ((k_min as f64).ln(), (k_max as f64).ln());
        let mut values: Vec<u32> = (0..count)
            .map(|i| {
                if count == 1 {
                    k_min
                } else {
                    (lo + (hi - lo) * i as f64 / (count - 1) as f64).exp().round() as u32
                }
            })
            .collect();
        values.dedup();
        Self::explicit(values, min_k)
    }

    pub fn from_spec(spec: &GridSpec) -> Result<Self> {
        match spec {
            GridSpec::Explicit { values, min_k } => Self::explicit(values.clone(), *min_k),
            GridSpec::LogSpaced { k_min, k_max, count, min_k } => Self::log_spaced(*k_min, *k_max, *count, *min_k),
        }
    }

    pub fn values(&self) -> &[u32] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> u32 {
        self.values[0]
    }

    pub fn max(&self) -> u32 {
        *self.values.last().unwrap()
    }

    pub fn contains(&self, k: u32) -> bool {
        self.values.binary_search(&k).is_ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_log_spaced_values() {
        let g = CardinalityGrid::log_spaced(100, 1000, 10, 100).unwrap();
        assert_eq!(g.values(), &[100, 129, 167, 215, 278, 359, 464, 599, 774, 1000]);
    }

    #[test]
    fn rounding_duplicates_removed() {
        let g = CardinalityGrid::log_spaced(1, 3, 10, 1).unwrap();
        assert_eq!(g.values(), &[1, 2, 3]);
    }

    #[test]
    fn invalid_grids() {
        assert!(CardinalityGrid::log_spaced(500, 100, 4, 1).unwrap_err().to_string().contains("k_min"));
        assert!(CardinalityGrid::explicit(vec![200, 150], 100).is_err());
        assert!(CardinalityGrid::explicit(vec![50, 150], 100).is_err());
        assert!(CardinalityGrid::explicit(vec![], 100).is_err());
    }
}
