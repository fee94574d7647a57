use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use vistacast_gbdt::{train, GbdtParams};

use super::{accuracy, complement, group_kfold, roc_auc, EvalError};
use crate::fusion::{FusedDataset, Modality, SnapshotKind};
use crate::model::Horizon;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Variant {
    YoloOnly,
    WeatherOnly,
    Fusion,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Self::YoloOnly, Self::WeatherOnly, Self::Fusion];

    pub fn name(self) -> &'static str {
        match self {
            Self::YoloOnly => "YOLO_ONLY",
            Self::WeatherOnly => "WEATHER_ONLY",
            Self::Fusion => "FUSION",
        }
    }

    pub fn modalities(self, include_meta: bool) -> Vec<Modality> {
        let mut m = match self {
            Self::YoloOnly => vec![Modality::Vision],
            Self::WeatherOnly => vec![Modality::WeatherNow, Modality::Forecast],
            Self::Fusion => vec![Modality::Vision, Modality::WeatherNow, Modality::Forecast],
        };
        if include_meta {
            m.push(Modality::Meta);
        }
        m
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| EvalError::InvalidConfig(format!("unknown variant `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub variants: Vec<Variant>,
    pub horizons: Vec<Horizon>,
    pub k_folds: usize,
    pub seed: u64,
    pub include_meta: bool,
    /// Decision threshold for accuracy.
    pub threshold: f64,
    pub params: GbdtParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            variants: Variant::ALL.to_vec(),
            horizons: Horizon::ALL.to_vec(),
            k_folds: 5,
            seed: 0,
            include_meta: true,
            threshold: 0.5,
            params: GbdtParams::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.variants.is_empty() || self.horizons.is_empty() {
            return Err(EvalError::InvalidConfig("variants and horizons must be non-empty".into()));
        }
        if self.k_folds < 2 {
            return Err(EvalError::InvalidConfig(format!("k_folds {} < 2", self.k_folds)));
        }
        self.params.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub horizon: Horizon,
    pub variant: Variant,
    pub fold_index: usize,
    pub acc: f64,
    pub auc: f64,
    pub auc_degenerate: bool,
    pub n_train: usize,
    pub n_test: usize,
}

/// A fold that could not be scored, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedFold {
    pub horizon: Horizon,
    pub variant: Variant,
    pub fold_index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRow {
    pub feature: String,
    pub modality: Modality,
    pub total_gain: f64,
    pub split_count: usize,
    pub mean_gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub horizon: Horizon,
    pub variant: Variant,
    pub mean_acc: f64,
    pub mean_auc: f64,
    pub folds: Vec<FoldReport>,
    pub skipped: Vec<SkippedFold>,
    /// Gain summed over every fold's model, sorted by total gain.
    pub importance: Vec<ImportanceRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub snapshot_kind: SnapshotKind,
    pub cells: Vec<CellResult>,
    pub notes: Vec<String>,
}

impl ExperimentResult {
    pub fn cell(&self, h: Horizon, v: Variant) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.horizon == h && c.variant == v)
    }

    /// Variant with the highest mean AUC at `h`; ties go to the earlier variant.
    pub fn best_at(&self, h: Horizon) -> Option<Variant> {
        let mut best: Option<&CellResult> = None;
        for c in self.cells.iter().filter(|c| c.horizon == h) {
            if best.is_none_or(|b| c.mean_auc > b.mean_auc) {
                best = Some(c);
            }
        }
        best.map(|c| c.variant)
    }
}

/// Seed for one (horizon, variant, fold) cell, independent of run order.
pub fn cell_seed(master: u64, h: Horizon, v: Variant, fold: usize) -> u64 {
    let digest = Sha256::digest(format!("{master}/{h}/{v}/{fold}").as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

enum FoldOutcome {
    Scored(FoldReport, Vec<(usize, f64, usize)>),
    Skipped(SkippedFold),
}

/// Grouped k-fold evaluation of every (horizon, variant) cell. Rows without
/// a target at a horizon are dropped for that horizon; horizons that cannot
/// be split are omitted with a note.
pub fn run_experiment(dataset: &FusedDataset, config: &ExperimentConfig) -> Result<ExperimentResult, EvalError> {
    config.validate()?;
    let m = &dataset.matrix;
    let mut notes = Vec::new();
    let mut jobs = Vec::new();
    let mut horizon_rows = BTreeMap::new();
    for &h in &config.horizons {
        let (rows, labels) = dataset.rows_with_target(h);
        if rows.is_empty() {
            notes.push(format!("{h}: no rows with a target; omitted"));
            continue;
        }
        let groups: Vec<&str> = rows.iter().map(|&r| m.group_ids[r].as_str()).collect();
        let folds = match group_kfold(&groups, config.k_folds, config.seed) {
            Ok(f) => f,
            Err(e) => {
                notes.push(format!("{h}: {e}; omitted"));
                continue;
            }
        };
        for &v in &config.variants {
            for fold in 0..folds.len() {
                jobs.push((h, v, fold));
            }
        }
        horizon_rows.insert(h, (rows, labels, folds));
    }
    let columns: BTreeMap<Variant, Vec<usize>> =
        config.variants.iter().map(|&v| (v, m.columns_for(&v.modalities(config.include_meta)))).collect();

    let outcomes: Vec<Result<FoldOutcome, EvalError>> = jobs
        .par_iter()
        .map(|&(h, v, fold)| {
            let (rows, labels, folds) = &horizon_rows[&h];
            let cols = &columns[&v];
            let test_local = &folds[fold];
            let train_local = complement(rows.len(), test_local);
            let skip = |reason: String| {
                Ok(FoldOutcome::Skipped(SkippedFold { horizon: h, variant: v, fold_index: fold, reason }))
            };
            if cols.is_empty() {
                return skip("variant has no columns".into());
            }
            let y_train: Vec<bool> = train_local.iter().map(|&i| labels[i]).collect();
            if y_train.iter().all(|&y| y) || y_train.iter().all(|&y| !y) {
                return skip("single-class training labels".into());
            }
            let train_rows: Vec<usize> = train_local.iter().map(|&i| rows[i]).collect();
            let test_rows: Vec<usize> = test_local.iter().map(|&i| rows[i]).collect();
            let x_train = m.values.select_rows(&train_rows).select_cols(cols);
            let x_test = m.values.select_rows(&test_rows).select_cols(cols);
            let names: Vec<String> = cols.iter().map(|&c| m.schema[c].name.clone()).collect();
            let params = GbdtParams { seed: cell_seed(config.seed, h, v, fold), ..config.params.clone() };
            let model = train(&x_train, &names, &y_train, &params)?;
            let probs =
                (0..x_test.n_rows()).map(|i| model.predict_proba(x_test.row(i))).collect::<Result<Vec<f64>, _>>()?;
            let y_test: Vec<bool> = test_local.iter().map(|&i| labels[i]).collect();
            let auc = roc_auc(&probs, &y_test)?;
            let importance = model
                .feature_importance()
                .into_iter()
                .map(|fi| (cols[fi.feature], fi.total_gain, fi.split_count))
                .collect();
            Ok(FoldOutcome::Scored(
                FoldReport {
                    horizon: h,
                    variant: v,
                    fold_index: fold,
                    acc: accuracy(&probs, &y_test, config.threshold)?,
                    auc: auc.value,
                    auc_degenerate: auc.degenerate,
                    n_train: train_rows.len(),
                    n_test: test_rows.len(),
                },
                importance,
            ))
        })
        .collect();

    type CellParts = (Vec<FoldReport>, Vec<SkippedFold>, BTreeMap<usize, (f64, usize)>);
    let mut cells: BTreeMap<(Horizon, Variant), CellParts> = BTreeMap::new();
    for ((h, v, _), outcome) in jobs.iter().zip(outcomes) {
        let cell = cells.entry((*h, *v)).or_default();
        match outcome? {
            FoldOutcome::Scored(report, importance) => {
                for (col, gain, count) in importance {
                    let e = cell.2.entry(col).or_insert((0.0, 0));
                    e.0 += gain;
                    e.1 += count;
                }
                cell.0.push(report);
            }
            FoldOutcome::Skipped(s) => {
                warn!("{} {} fold {}: skipped ({})", s.horizon, s.variant, s.fold_index, s.reason);
                cell.1.push(s);
            }
        }
    }

    let mut results = Vec::new();
    for ((h, v), (folds, skipped, gains)) in cells {
        if folds.is_empty() {
            notes.push(format!("{h} {v}: every fold skipped; omitted"));
            continue;
        }
        let n = folds.len() as f64;
        let mut importance: Vec<ImportanceRow> = gains
            .into_iter()
            .map(|(col, (total, count))| ImportanceRow {
                feature: m.schema[col].name.clone(),
                modality: m.schema[col].modality,
                total_gain: total,
                split_count: count,
                mean_gain: if count == 0 { 0.0 } else { total / count as f64 },
            })
            .collect();
        importance.sort_by(|a, b| b.total_gain.total_cmp(&a.total_gain).then_with(|| a.feature.cmp(&b.feature)));
        results.push(CellResult {
            horizon: h,
            variant: v,
            mean_acc: folds.iter().map(|f| f.acc).sum::<f64>() / n,
            mean_auc: folds.iter().map(|f| f.auc).sum::<f64>() / n,
            folds,
            skipped,
            importance,
        });
    }
    info!("{} cells evaluated for {}", results.len(), m.snapshot_kind);
    Ok(ExperimentResult { snapshot_kind: m.snapshot_kind, cells: results, notes })
}
