use serde::{Deserialize, Serialize};

use crate::Matrix;

/// Per-feature quantile cut points learned from training data.
///
/// A value `v` of feature `f` falls in bin `b` when `cuts[b-1] < v <= cuts[b]`;
/// `NaN` falls in the reserved missing bin, which is always the last one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinMapper {
    cuts: Vec<Vec<f64>>,
}

impl BinMapper {
    pub fn fit(matrix: &Matrix, max_bins: usize) -> Self {
        let cuts = (0..matrix.n_cols()).map(|c| feature_cuts(matrix.column(c).collect(), max_bins)).collect();
        Self { cuts }
    }

    pub fn from_cuts(cuts: Vec<Vec<f64>>) -> Self {
        Self { cuts }
    }

    pub fn cuts(&self) -> &[Vec<f64>] {
        &self.cuts
    }

    pub fn n_features(&self) -> usize {
        self.cuts.len()
    }

    /// Number of non-missing bins of a feature.
    pub fn n_real_bins(&self, feature: usize) -> usize {
        self.cuts[feature].len() + 1
    }

    pub fn missing_bin(&self, feature: usize) -> usize {
        self.n_real_bins(feature)
    }

    pub fn bin(&self, feature: usize, value: f64) -> usize {
        if value.is_nan() {
            return self.missing_bin(feature);
        }
        self.cuts[feature].partition_point(|&c| c < value)
    }

    /// Upper bound of a real bin, used as the raw-value split threshold.
    pub fn upper_bound(&self, feature: usize, bin: usize) -> f64 {
        self.cuts[feature].get(bin).copied().unwrap_or(f64::MAX)
    }

    pub fn transform(&self, matrix: &Matrix) -> BinnedMatrix {
        let columns = (0..matrix.n_cols()).map(|c| matrix.column(c).map(|v| self.bin(c, v) as u8).collect()).collect();
        BinnedMatrix {
            columns,
            n_bins: (0..self.n_features()).map(|f| self.n_real_bins(f) + 1).collect(),
            n_rows: matrix.n_rows(),
        }
    }
}

fn feature_cuts(mut values: Vec<f64>, max_bins: usize) -> Vec<f64> {
    values.retain(|v| v.is_finite());
    values.sort_by(f64::total_cmp);
    let mut distinct = values.clone();
    distinct.dedup();
    if distinct.len() <= 1 {
        return Vec::new();
    }
    if distinct.len() <= max_bins {
        return distinct.windows(2).map(|w| midpoint(w[0], w[1])).collect();
    }
    let n = values.len();
    let mut cuts: Vec<f64> = Vec::with_capacity(max_bins - 1);
    for j in 1..max_bins {
        let q = values[j * n / max_bins];
        let idx = distinct.partition_point(|&d| d < q);
        if idx == 0 {
            continue;
        }
        let cut = midpoint(distinct[idx - 1], distinct[idx]);
        if cuts.last().is_none_or(|&last| cut > last) {
            cuts.push(cut);
        }
    }
    cuts
}

fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid >= hi {
        lo
    } else {
        mid
    }
}

/// Column-major bin indices of a training matrix.
#[derive(Debug, Clone)]
pub struct BinnedMatrix {
    columns: Vec<Vec<u8>>,
    /// Total bins per feature, including the missing bin.
    n_bins: Vec<usize>,
    n_rows: usize,
}

impl BinnedMatrix {
    pub fn column(&self, feature: usize) -> &[u8] {
        &self.columns[feature]
    }

    pub fn n_bins(&self, feature: usize) -> usize {
        self.n_bins[feature]
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }
}
