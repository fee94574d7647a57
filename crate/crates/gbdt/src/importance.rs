use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureImportance {
    pub feature: usize,
    pub name: String,
    pub total_gain: f64,
    pub split_count: usize,
    /// `total_gain / split_count`, zero for unused features.
    pub mean_gain: f64,
    /// Fraction of the ensemble's total gain.
    pub share: f64,
}

impl FeatureImportance {
    pub(crate) fn from_gains(names: &[String], gains: &[(f64, usize)]) -> Vec<Self> {
        let grand: f64 = gains.iter().map(|g| g.0).sum();
        let mut out: Vec<Self> = names
            .iter()
            .zip(gains)
            .enumerate()
            .map(|(feature, (name, &(total_gain, split_count)))| Self {
                feature,
                name: name.clone(),
                total_gain,
                split_count,
                mean_gain: if split_count == 0 { 0.0 } else { total_gain / split_count as f64 },
                share: if grand > 0.0 { total_gain / grand } else { 0.0 },
            })
            .collect();
        out.sort_by(|a, b| b.total_gain.total_cmp(&a.total_gain).then(a.feature.cmp(&b.feature)));
        out
    }
}
