//! Report files. Everything is rendered with fixed decimals and in a fixed
//! order, so the same results always produce the same bytes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{EvalError, ExperimentResult, Variant};
use crate::fusion::SnapshotKind;
use crate::model::Horizon;

/// Paths written by [`write_reports`], relative to the report directory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReportFiles {
    pub files: Vec<PathBuf>,
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn put(dir: &Path, rel: PathBuf, body: &str, out: &mut ReportFiles) -> Result<(), EvalError> {
    let path = dir.join(&rel);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| EvalError::io(parent, e))?;
    }
    std::fs::write(&path, body).map_err(|e| EvalError::io(&path, e))?;
    out.files.push(rel);
    Ok(())
}

fn horizons_of(r: &ExperimentResult) -> Vec<Horizon> {
    let mut hs: Vec<Horizon> = r.cells.iter().map(|c| c.horizon).collect();
    hs.dedup();
    hs
}

fn variants_of(r: &ExperimentResult) -> Vec<Variant> {
    let mut vs: Vec<Variant> = r.cells.iter().map(|c| c.variant).collect();
    vs.sort();
    vs.dedup();
    vs
}

pub fn table1_csv(r: &ExperimentResult) -> String {
    let mut s = String::from("snapshot_kind,horizon,variant,acc,auc,n_folds,n_skipped,best\n");
    for c in &r.cells {
        let best = r.best_at(c.horizon) == Some(c.variant);
        writeln!(
            s,
            "{},{},{},{:.4},{:.4},{},{},{}",
            r.snapshot_kind,
            c.horizon,
            c.variant,
            c.mean_acc,
            c.mean_auc,
            c.folds.len(),
            c.skipped.len(),
            u8::from(best)
        )
        .expect("string write");
    }
    s
}

/// Horizons down, variants across, `*` on the best AUC per horizon.
pub fn table1_text(r: &ExperimentResult) -> String {
    let variants = variants_of(r);
    let mut s = format!("Mean ACC / AUC over folds, {} snapshots\n\n", r.snapshot_kind);
    write!(s, "{:<8}", "horizon").expect("string write");
    for v in &variants {
        write!(s, "  {:>22}", v.name()).expect("string write");
    }
    s.push('\n');
    for h in horizons_of(r) {
        write!(s, "{:<8}", h.to_string()).expect("string write");
        let best = r.best_at(h);
        for &v in &variants {
            let cell = match r.cell(h, v) {
                Some(c) => {
                    format!("{:.4} / {:.4}{}", c.mean_acc, c.mean_auc, if best == Some(v) { " *" } else { "  " })
                }
                None => "n/a".to_string(),
            };
            write!(s, "  {cell:>22}").expect("string write");
        }
        s.push('\n');
    }
    s.push_str("\n* best AUC at that horizon\n");
    for note in &r.notes {
        writeln!(s, "note: {note}").expect("string write");
    }
    s
}

pub fn folds_csv(r: &ExperimentResult) -> String {
    let mut s = String::from("snapshot_kind,horizon,variant,fold,acc,auc,auc_degenerate,n_train,n_test,skipped\n");
    for c in &r.cells {
        for f in &c.folds {
            writeln!(
                s,
                "{},{},{},{},{:.4},{:.4},{},{},{},",
                r.snapshot_kind,
                c.horizon,
                c.variant,
                f.fold_index,
                f.acc,
                f.auc,
                u8::from(f.auc_degenerate),
                f.n_train,
                f.n_test
            )
            .expect("string write");
        }
        for k in &c.skipped {
            writeln!(
                s,
                "{},{},{},{},,,,,,{}",
                r.snapshot_kind,
                c.horizon,
                c.variant,
                k.fold_index,
                csv_field(&k.reason)
            )
            .expect("string write");
        }
    }
    s
}

pub fn importance_csv(r: &ExperimentResult, h: Horizon, v: Variant) -> Option<String> {
    let c = r.cell(h, v)?;
    let mut s = String::from("feature,modality,total_gain,split_count,mean_gain\n");
    for row in &c.importance {
        writeln!(
            s,
            "{},{},{:.6},{},{:.6}",
            csv_field(&row.feature),
            row.modality,
            row.total_gain,
            row.split_count,
            row.mean_gain
        )
        .expect("string write");
    }
    Some(s)
}

fn table2(first: &ExperimentResult, window: &ExperimentResult) -> (String, String) {
    let mut csv = String::from("horizon,variant,first_acc,first_auc,window_acc,window_auc,delta_acc,delta_auc\n");
    let mut txt = String::from("First frame vs morning window (window minus first)\n\n");
    writeln!(
        txt,
        "{:<8}  {:<12}  {:>15}  {:>15}  {:>17}",
        "horizon", "variant", "first ACC/AUC", "window ACC/AUC", "delta ACC/AUC"
    )
    .expect("string write");
    for c in &first.cells {
        let Some(w) = window.cell(c.horizon, c.variant) else { continue };
        let (da, du) = (w.mean_acc - c.mean_acc, w.mean_auc - c.mean_auc);
        writeln!(
            csv,
            "{},{},{:.4},{:.4},{:.4},{:.4},{:+.4},{:+.4}",
            c.horizon, c.variant, c.mean_acc, c.mean_auc, w.mean_acc, w.mean_auc, da, du
        )
        .expect("string write");
        writeln!(
            txt,
            "{:<8}  {:<12}  {:>6.4}/{:>6.4}  {:>6.4}/{:>6.4}  {:>+7.4}/{:>+7.4}",
            c.horizon.to_string(),
            c.variant.name(),
            c.mean_acc,
            c.mean_auc,
            w.mean_acc,
            w.mean_auc,
            da,
            du
        )
        .expect("string write");
    }
    (csv, txt)
}

/// Writes per-kind tables, fold details and per-cell importance, plus the
/// first-vs-window comparison when both snapshot kinds are present.
///
/// ```text
/// table1_<kind>.csv / .txt
/// folds_<kind>.csv
/// importance/<kind>/h<h>_<variant>.csv
/// table2.csv / .txt
/// ```
pub fn write_reports(results: &[ExperimentResult], dir: &Path) -> Result<ReportFiles, EvalError> {
    let mut out = ReportFiles::default();
    for r in results {
        let slug = r.snapshot_kind.slug();
        put(dir, format!("table1_{slug}.csv").into(), &table1_csv(r), &mut out)?;
        put(dir, format!("table1_{slug}.txt").into(), &table1_text(r), &mut out)?;
        put(dir, format!("folds_{slug}.csv").into(), &folds_csv(r), &mut out)?;
        for c in &r.cells {
            let body = importance_csv(r, c.horizon, c.variant).expect("cell exists");
            let rel =
                Path::new("importance").join(slug).join(format!("h{}_{}.csv", c.horizon.days(), c.variant.name()));
            put(dir, rel, &body, &mut out)?;
        }
    }
    let find = |k: SnapshotKind| results.iter().find(|r| r.snapshot_kind == k);
    if let (Some(first), Some(window)) = (find(SnapshotKind::FirstFrame), find(SnapshotKind::MorningWindow)) {
        let (csv, txt) = table2(first, window);
        put(dir, "table2.csv".into(), &csv, &mut out)?;
        put(dir, "table2.txt".into(), &txt, &mut out)?;
    }
    Ok(out)
}
