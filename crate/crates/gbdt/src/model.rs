use sha2::{Digest, Sha256};

use crate::importance::FeatureImportance;
use crate::loss::sigmoid;
use crate::tree::{Node, Tree};
use crate::{BinMapper, GbdtError, GbdtParams, Result};

/// Short hex digest identifying an ordered list of feature names.
pub fn schema_fingerprint(feature_names: &[String]) -> String {
    let mut hasher = Sha256::new();
    for name in feature_names {
        hasher.update(name.as_bytes());
        hasher.update([0u8]);
    }
    hex::encode(hasher.finalize())[..16].to_string()
}

/// A trained, immutable tree ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct GbdtModel {
    pub(crate) feature_names: Vec<String>,
    pub(crate) fingerprint: String,
    pub(crate) params: GbdtParams,
    pub(crate) base_score: f64,
    pub(crate) mapper: BinMapper,
    pub(crate) trees: Vec<Tree>,
}

impl GbdtModel {
    pub(crate) fn new(
        feature_names: Vec<String>,
        params: GbdtParams,
        base_score: f64,
        mapper: BinMapper,
        trees: Vec<Tree>,
    ) -> Self {
        let fingerprint = schema_fingerprint(&feature_names);
        Self { feature_names, fingerprint, params, base_score, mapper, trees }
    }

    /// A model with no trees: predicts `sigmoid(base_score)` everywhere.
    pub fn constant(feature_names: Vec<String>, base_score: f64) -> Self {
        let cuts = vec![Vec::new(); feature_names.len()];
        Self::new(feature_names, GbdtParams::default(), base_score, BinMapper::from_cuts(cuts), Vec::new())
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn params(&self) -> &GbdtParams {
        &self.params
    }

    pub fn base_score(&self) -> f64 {
        self.base_score
    }

    pub fn bin_mapper(&self) -> &BinMapper {
        &self.mapper
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    /// Raw log-odds: base score plus every tree's output, in order.
    pub fn predict_score(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.n_features() {
            return Err(GbdtError::WidthMismatch { expected: self.n_features(), got: row.len() });
        }
        Ok(self.base_score + self.trees.iter().map(|t| t.predict(row)).sum::<f64>())
    }

    pub fn predict_proba(&self, row: &[f64]) -> Result<f64> {
        self.predict_score(row).map(sigmoid)
    }

    /// Like [`predict_proba`](Self::predict_proba) but first checks that the
    /// caller's column schema is the one the model was trained on.
    pub fn predict_checked(&self, fingerprint: &str, row: &[f64]) -> Result<f64> {
        if fingerprint != self.fingerprint {
            return Err(GbdtError::FingerprintMismatch {
                model: self.fingerprint.clone(),
                input: fingerprint.to_string(),
            });
        }
        self.predict_proba(row)
    }

    /// Total split gain and split count per feature index.
    pub fn split_gains(&self) -> Vec<(f64, usize)> {
        let mut acc = vec![(0.0, 0usize); self.n_features()];
        for tree in &self.trees {
            for node in tree.nodes() {
                if let Node::Split { feature, gain, .. } = node {
                    acc[*feature].0 += gain;
                    acc[*feature].1 += 1;
                }
            }
        }
        acc
    }

    /// Gain importance sorted by descending total gain (ties by feature index).
    pub fn feature_importance(&self) -> Vec<FeatureImportance> {
        FeatureImportance::from_gains(&self.feature_names, &self.split_gains())
    }
}
