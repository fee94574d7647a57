use serde::{Deserialize, Serialize};

use crate::{GbdtError, Result};

/// Learning parameters. The defaults are part of the reproducibility
/// contract: a given seed and input always yield the same model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbdtParams {
    pub num_trees: usize,
    pub learning_rate: f64,
    pub max_leaves: usize,
    /// Minimum hessian mass in each child.
    pub min_child_weight: f64,
    /// Minimum number of rows in each child.
    pub min_child_samples: usize,
    pub lambda_l2: f64,
    pub gamma_min_gain: f64,
    /// Maximum number of non-missing bins per feature (≤ 255).
    pub max_bins: usize,
    pub seed: u64,
}

impl Default for GbdtParams {
    fn default() -> Self {
        Self {
            num_trees: 200,
            learning_rate: 0.1,
            max_leaves: 31,
            min_child_weight: 1.0,
            min_child_samples: 20,
            lambda_l2: 1.0,
            gamma_min_gain: 0.0,
            max_bins: 255,
            seed: 0,
        }
    }
}

impl GbdtParams {
    pub fn validate(&self) -> Result<()> {
        fn bad(name: &'static str, reason: impl Into<String>) -> GbdtError {
            GbdtError::InvalidParam { name, reason: reason.into() }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(bad("learning_rate", format!("{} not in (0, 1]", self.learning_rate)));
        }
        if self.max_leaves < 2 {
            return Err(bad("max_leaves", "must be at least 2"));
        }
        if self.min_child_weight.is_nan() || self.min_child_weight < 0.0 {
            return Err(bad("min_child_weight", "must be non-negative"));
        }
        if self.lambda_l2.is_nan() || self.lambda_l2 < 0.0 {
            return Err(bad("lambda_l2", "must be non-negative"));
        }
        if self.gamma_min_gain.is_nan() || self.gamma_min_gain < 0.0 {
            return Err(bad("gamma_min_gain", "must be non-negative"));
        }
        if self.max_bins < 2 || self.max_bins > 255 {
            return Err(bad("max_bins", format!("{} not in [2, 255]", self.max_bins)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        GbdtParams::default().validate().unwrap();
    }

    #[test]
    fn rejects_out_of_range() {
        let p = GbdtParams { learning_rate: 0.0, ..Default::default() };
        assert!(p.validate().is_err());
        let p = GbdtParams { max_leaves: 1, ..Default::default() };
        assert!(p.validate().is_err());
        let p = GbdtParams { max_bins: 256, ..Default::default() };
        assert!(p.validate().is_err());
        let p = GbdtParams { lambda_l2: -1.0, ..Default::default() };
        assert!(p.validate().is_err());
    }
}
