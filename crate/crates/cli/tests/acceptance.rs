//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! fails. Runs as `cargo test -p vistacast-cli --test acceptance`; extra
//! arguments select criteria by substring.

#[path = "../../gbdt/tests/support/mod.rs"]
mod split_oracle;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vistacast_core::eval::{
    group_kfold, roc_auc, run_experiment, synth_generate, EvalError, ExperimentConfig, SynthConfig, Variant,
};
use vistacast_core::fusion::{build_examples, day_label, FusedDataset, FusionConfig, FusionError};
use vistacast_core::model::{parse_ts, FrameRecord, Horizon, QcStatus, VisibilityClass};
use vistacast_core::predict::{train_bundle, ModelBundle};
use vistacast_core::quality::{flag_gray, grayness_fraction, DEFAULT_GRAY_THRESHOLD};
use vistacast_gbdt::{
    best_split, build_histogram, logistic_grad_hess, logistic_loss, train, BinMapper, GbdtParams, Matrix, NodeTotals,
};

type Check = Result<String, String>;
type Criterion = Box<dyn Fn() -> Check>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || format!("took {elapsed:.2?}, limit {limit:?}"))
}

fn gradient_check() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let s: f64 = rng.random_range(-8.0..8.0);
        let y = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
        let (g, h) = logistic_grad_hess(s, y);
        let g_fd = (logistic_loss(s + eps, y) - logistic_loss(s - eps, y)) / (2.0 * eps);
        let h_fd = (logistic_grad_hess(s + eps, y).0 - logistic_grad_hess(s - eps, y).0) / (2.0 * eps);
        worst = worst.max((g - g_fd).abs()).max((h - h_fd).abs());
    }
    let elapsed = start.elapsed();
    ensure(worst < 1e-6, || format!("max deviation {worst:e}"))?;
    within(elapsed, Duration::from_secs(1))?;
    Ok(format!("1000 draws, max deviation {worst:.1e}"))
}

fn split_optimality() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut splits = 0;
    for case in 0..200 {
        let n = rng.random_range(2..=64);
        let f = rng.random_range(1..=4);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                (0..f)
                    .map(|_| if rng.random_bool(0.1) { f64::NAN } else { f64::from(rng.random_range(0u8..12)) * 0.5 })
                    .collect()
            })
            .collect();
        let grads: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let hess: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..0.25)).collect();
        let params = GbdtParams {
            min_child_samples: rng.random_range(0..4),
            min_child_weight: if rng.random_bool(0.5) { 0.0 } else { 0.3 },
            lambda_l2: if rng.random_bool(0.5) { 0.0 } else { 1.0 },
            ..GbdtParams::default()
        };
        let x = Matrix::from_rows(&rows).map_err(|e| e.to_string())?;
        let binned = BinMapper::fit(&x, 255).transform(&x);
        let ids: Vec<u32> = (0..n as u32).collect();
        let hists = (0..f)
            .map(|j| build_histogram(binned.column(j), binned.n_bins(j), &grads, &hess, &ids))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        let totals = NodeTotals::new(grads.iter().sum(), hess.iter().sum(), n);
        let ours = best_split(&hists, totals, &params);
        let oracle = split_oracle::exhaustive_best_split(&rows, &grads, &hess, &params);
        match (ours, oracle) {
            (None, None) => {}
            (Some(a), Some(b)) => {
                ensure((a.gain - b.gain).abs() < 1e-9, || format!("case {case}: gain {} vs {}", a.gain, b.gain))?;
                if (a.feature, a.bin, a.missing_left) != (b.feature, b.threshold_rank, b.missing_left) {
                    ensure((a.gain - b.gain).abs() < 1e-12, || format!("case {case}: different split chosen"))?;
                }
                splits += 1;
            }
            (a, b) => return Err(format!("case {case}: ours {a:?}, oracle {b:?}")),
        }
    }
    within(start.elapsed(), Duration::from_secs(30))?;
    Ok(format!("200 datasets agree ({splits} with a valid split)"))
}

fn xor_capacity() -> Check {
    let x = Matrix::from_rows(&[vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]])
        .map_err(|e| e.to_string())?;
    let y = [false, true, true, false];
    let names = vec!["a".to_string(), "b".to_string()];
    for trees in 1..=50 {
        let params = GbdtParams {
            num_trees: trees,
            max_leaves: 4,
            min_child_samples: 1,
            min_child_weight: 0.0,
            ..Default::default()
        };
        let model = train(&x, &names, &y, &params).map_err(|e| e.to_string())?;
        let mut hits = 0;
        for (i, &label) in y.iter().enumerate() {
            if (model.predict_proba(x.row(i)).map_err(|e| e.to_string())? >= 0.5) == label {
                hits += 1;
            }
        }
        if hits == 4 {
            return Ok(format!("training accuracy 1.0 after {trees} trees"));
        }
    }
    Err("accuracy below 1.0 after 50 trees".into())
}

/// Pairwise definition: positives beating negatives, ties worth one half.
fn pairwise_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &yi) in labels.iter().enumerate() {
        for (j, &yj) in labels.iter().enumerate() {
            if yi && !yj {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

fn auc_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut compared = 0;
    let mut check = |scores: &[f64], labels: &[bool]| -> Result<(), String> {
        let got = roc_auc(scores, labels).map_err(|e| e.to_string())?;
        if labels.iter().all(|&y| y) || labels.iter().all(|&y| !y) {
            return ensure(got.degenerate, || format!("single-class {labels:?} not flagged"));
        }
        let want = pairwise_auc(scores, labels);
        compared += 1;
        ensure((got.value - want).abs() <= 1e-12, || format!("{scores:?}/{labels:?}: {} vs {want}", got.value))
    };
    for n in 1..=8usize {
        for pattern in 0u32..(1 << n) {
            let labels: Vec<bool> = (0..n).map(|i| pattern >> i & 1 == 1).collect();
            // coarse scores so ties are common
            for _ in 0..3 {
                let scores: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0u8..4)) / 4.0).collect();
                check(&scores, &labels)?;
            }
        }
    }
    for _ in 0..500 {
        let labels: Vec<bool> = (0..50).map(|_| rng.random_bool(0.4)).collect();
        let scores: Vec<f64> = (0..50)
            .map(
                |_| if rng.random_bool(0.2) { f64::from(rng.random_range(0u8..5)) } else { rng.random_range(0.0..5.0) },
            )
            .collect();
        check(&scores, &labels)?;
    }
    let example = roc_auc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).map_err(|e| e.to_string())?;
    ensure((example.value - 0.75).abs() <= 1e-12, || format!("worked example gave {}", example.value))?;
    Ok(format!("{compared} inputs match pairwise counting; worked example 0.75"))
}

fn aggregation_boundary() -> Check {
    use VisibilityClass::*;
    let half = day_label(&[Perfect, Obscured], 0.5).map_err(|e| e.to_string())?;
    ensure(half.visible, || "1 of 2 visible should label 1".into())?;
    let half4 = day_label(&[Clear, Cloudy, Bad, Cloudy, Perfect], 0.5).map_err(|e| e.to_string())?;
    ensure(half4.visible, || "2 of 4 visible (BAD ignored) should label 1".into())?;
    let under = day_label(&[Clear, Cloudy, Obscured], 0.5).map_err(|e| e.to_string())?;
    ensure(!under.visible, || "1 of 3 visible should label 0".into())?;

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let thetas = [(1u32, 4u32), (1, 2), (2, 3), (3, 4), (1, 1)];
    for day in 0..1000 {
        let n = rng.random_range(1..=24);
        let classes: Vec<VisibilityClass> =
            (0..n).map(|_| VisibilityClass::ALL[rng.random_range(0..VisibilityClass::ALL.len())]).collect();
        let (num, den) = thetas[day % thetas.len()];
        let theta = f64::from(num) / f64::from(den);
        let visible = classes.iter().filter(|c| matches!(c, Perfect | Clear)).count() as u32;
        let usable = classes.iter().filter(|c| **c != Bad).count() as u32;
        match day_label(&classes, theta) {
            Err(FusionError::NoUsableFrames) if usable == 0 => {}
            Ok(l) if usable > 0 => {
                let want = visible * den >= num * usable;
                ensure(l.visible == want, || format!("day {day}: {classes:?} at theta {theta}: got {}", l.visible))?;
            }
            other => return Err(format!("day {day}: {classes:?}: unexpected {other:?}")),
        }
    }
    Ok("half-visible day labels 1; 1000 random days match counting".into())
}

fn test_frame() -> FrameRecord {
    FrameRecord {
        camera_id: "cam".into(),
        captured_at: parse_ts("2025-01-01T00:00:00Z").expect("timestamp"),
        image_path: String::new(),
        qc_status: None,
        human_label: None,
        vision_probs: None,
        grayness: None,
        content_digest: Some("00".into()),
    }
}

fn raster_with_gray(gray_pixels: u32) -> RgbImage {
    RgbImage::from_fn(10, 10, |x, y| if y * 10 + x < gray_pixels { Rgb([128, 128, 128]) } else { Rgb([70, 130, 200]) })
}

fn grayness_gate() -> Check {
    let frame = test_frame();
    let verdict = |g: f64, t: f64| flag_gray(&frame, g, t).map(|r| r.verdict).map_err(|e| e.to_string());
    let g40 = grayness_fraction(&raster_with_gray(40)).map_err(|e| e.to_string())?;
    let g41 = grayness_fraction(&raster_with_gray(41)).map_err(|e| e.to_string())?;
    ensure(g40 == 0.40 && g41 == 0.41, || format!("raster fractions {g40}, {g41}"))?;
    ensure(verdict(g40, DEFAULT_GRAY_THRESHOLD)? == QcStatus::Ok, || "0.40 should pass".into())?;
    ensure(verdict(g41, DEFAULT_GRAY_THRESHOLD)? == QcStatus::BadGray, || "0.41 should flag".into())?;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let thresholds: Vec<f64> = (1..=20).map(|i| f64::from(i) / 20.0).collect();
    for r in 0..100 {
        let (w, h) = (rng.random_range(1..=16), rng.random_range(1..=16));
        let p_gray = rng.random_range(0.0..1.0);
        let raster = RgbImage::from_fn(w, h, |_, _| {
            if rng.random_bool(p_gray) {
                let v = rng.random_range(0..=255);
                Rgb([v, v, v])
            } else {
                Rgb([rng.random_range(60..=255), rng.random_range(0..=40), rng.random_range(100..=255)])
            }
        });
        let g = grayness_fraction(&raster).map_err(|e| e.to_string())?;
        let flags = thresholds.iter().map(|&t| verdict(g, t)).collect::<Result<Vec<_>, _>>()?;
        // once a threshold lets the frame pass, every higher one does too
        let first_pass = flags.iter().position(|v| *v == QcStatus::Ok).unwrap_or(flags.len());
        ensure(flags[first_pass..].iter().all(|v| *v == QcStatus::Ok), || format!("raster {r}: not monotone"))?;
    }
    Ok("0.40 passes, 0.41 flags; monotone on 100 rasters".into())
}

fn group_kfold_partition() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut split = 0;
    for layout in 0..1000 {
        let n = rng.random_range(1..=200);
        let n_groups = rng.random_range(1..=40);
        let groups: Vec<u32> = (0..n).map(|_| rng.random_range(0..n_groups)).collect();
        let k = rng.random_range(2..=10);
        let seed = rng.random();
        let distinct = groups.iter().collect::<std::collections::BTreeSet<_>>().len();
        let folds = match group_kfold(&groups, k, seed) {
            Err(EvalError::TooFewGroups { .. }) if distinct < k => continue,
            Ok(f) if distinct >= k => f,
            other => return Err(format!("layout {layout}: unexpected {other:?}")),
        };
        ensure(folds.len() == k, || format!("layout {layout}: {} folds", folds.len()))?;
        let mut fold_of = vec![usize::MAX; n];
        for (fi, fold) in folds.iter().enumerate() {
            for &row in fold {
                ensure(fold_of[row] == usize::MAX, || format!("layout {layout}: row {row} twice"))?;
                fold_of[row] = fi;
            }
        }
        ensure(fold_of.iter().all(|&f| f != usize::MAX), || format!("layout {layout}: row missing"))?;
        for i in 0..n {
            for j in 0..n {
                if groups[i] == groups[j] {
                    ensure(fold_of[i] == fold_of[j], || format!("layout {layout}: group {} straddles", groups[i]))?;
                }
            }
        }
        split += 1;
    }
    Ok(format!("{split} layouts partitioned without straddling (rest had too few groups and were rejected)"))
}

fn directional_replication() -> Check {
    let start = Instant::now();
    let data = synth_generate(&SynthConfig { n_cameras: 42, n_days: 120, seed: 7, ..SynthConfig::default() })
        .map_err(|e| e.to_string())?;
    let (examples, prov, _) = build_examples(&data.frames, &data.weather, &data.sites, &FusionConfig::default())
        .map_err(|e| e.to_string())?;
    let n_examples = examples.len();
    let ds = FusedDataset::from_examples(&examples, prov, None).map_err(|e| e.to_string())?;
    let config = ExperimentConfig {
        seed: 7,
        params: GbdtParams { num_trees: 100, max_leaves: 15, learning_rate: 0.05, ..GbdtParams::default() },
        ..ExperimentConfig::default()
    };
    let result = run_experiment(&ds, &config).map_err(|e| e.to_string())?;
    let auc =
        |h: Horizon, v: Variant| result.cell(h, v).map(|c| c.mean_auc).ok_or_else(|| format!("missing cell {h} {v}"));
    let h = Horizon::ALL;
    let mut table = String::new();
    for &hz in &h {
        table.push_str(&format!(
            " {hz}: Y {:.3} W {:.3} F {:.3};",
            auc(hz, Variant::YoloOnly)?,
            auc(hz, Variant::WeatherOnly)?,
            auc(hz, Variant::Fusion)?
        ));
    }
    let mut failures = Vec::new();
    let w0 = auc(h[0], Variant::WeatherOnly)?;
    for v in [Variant::YoloOnly, Variant::Fusion] {
        if auc(h[0], v)? < w0 + 0.05 {
            failures.push(format!("(a) {v} at +0d not 0.05 above WEATHER_ONLY"));
        }
    }
    for w in [h[1], h[2], h[3]].windows(2) {
        if auc(w[1], Variant::WeatherOnly)? > auc(w[0], Variant::WeatherOnly)? {
            failures.push(format!("(b) WEATHER_ONLY AUC rises from {} to {}", w[0], w[1]));
        }
    }
    for &hz in &h {
        let best_single = auc(hz, Variant::YoloOnly)?.max(auc(hz, Variant::WeatherOnly)?);
        if auc(hz, Variant::Fusion)? < best_single - 0.02 {
            failures.push(format!("(c) FUSION more than 0.02 below best single modality at {hz}"));
        }
    }
    let elapsed = start.elapsed();
    if elapsed >= Duration::from_secs(300) {
        failures.push(format!("took {elapsed:.0?}, limit 5 min"));
    }
    if failures.is_empty() {
        Ok(format!("{n_examples} day-examples in {elapsed:.0?};{table}"))
    } else {
        Err(format!("{};{table}", failures.join("; ")))
    }
}

fn vistacast(root: &Path, args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_vistacast"))
        .arg("--data-root")
        .arg(root)
        .args(args)
        .output()
        .map_err(|e| format!("spawning vistacast: {e}"))?;
    if !out.status.success() {
        return Err(format!(
            "vistacast {args:?} exited {:?}: {}",
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

const QUICK: [&str; 6] = ["--trees", "30", "--leaves", "7", "--min-child-samples", "5"];

fn pipeline(root: &Path) -> Result<(), String> {
    vistacast(root, &["synth", "--cameras", "8", "--days", "40", "--seed", "5", "--images"])?;
    vistacast(root, &["qc"])?;
    vistacast(root, &["fuse"])?;
    let mut eval = vec!["evaluate", "--seed", "7"];
    eval.extend(QUICK);
    vistacast(root, &eval)?;
    vistacast(root, &["report"])?;
    Ok(())
}

fn files_under(dir: &Path) -> Result<Vec<(PathBuf, Vec<u8>)>, String> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).map_err(|e| format!("{}: {e}", d.display()))? {
            let p = entry.map_err(|e| e.to_string())?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let bytes = std::fs::read(&p).map_err(|e| e.to_string())?;
                out.push((p.strip_prefix(dir).expect("under dir").to_path_buf(), bytes));
            }
        }
    }
    out.sort();
    Ok(out)
}

fn determinism(work: &Path) -> Check {
    let mut runs = Vec::new();
    for name in ["run_a", "run_b"] {
        let root = work.join(name);
        pipeline(&root)?;
        runs.push(files_under(&root.join("reports"))?);
    }
    ensure(runs[0].len() == runs[1].len(), || format!("{} vs {} report files", runs[0].len(), runs[1].len()))?;
    for (a, b) in runs[0].iter().zip(&runs[1]) {
        ensure(a == b, || format!("{} differs between runs", a.0.display()))?;
    }

    let data = synth_generate(&SynthConfig { n_cameras: 6, n_days: 40, seed: 9, ..SynthConfig::default() })
        .map_err(|e| e.to_string())?;
    let (ex, prov, _) = build_examples(&data.frames, &data.weather, &data.sites, &FusionConfig::default())
        .map_err(|e| e.to_string())?;
    let ds = FusedDataset::from_examples(&ex, prov, None).map_err(|e| e.to_string())?;
    let params = GbdtParams { num_trees: 40, max_leaves: 7, min_child_samples: 5, ..GbdtParams::default() };
    let bundle = train_bundle(&ds, Horizon::ALL[1], Variant::Fusion, true, &params).map_err(|e| e.to_string())?;
    let dir = work.join("bundle");
    bundle.save(&dir).map_err(|e| e.to_string())?;
    let loaded = ModelBundle::load(&dir).map_err(|e| e.to_string())?;
    ensure(loaded == bundle, || "loaded bundle differs".into())?;
    let x = ds.matrix.values.select_cols(&bundle.columns);
    for i in 0..x.n_rows() {
        let a = bundle.model.predict_proba(x.row(i)).map_err(|e| e.to_string())?;
        let b = loaded.model.predict_proba(x.row(i)).map_err(|e| e.to_string())?;
        ensure(a.to_bits() == b.to_bits(), || format!("row {i}: {a} vs {b}"))?;
    }
    Ok(format!(
        "{} report files byte-identical; {} rows predict identically after round trip",
        runs[0].len(),
        x.n_rows()
    ))
}

fn end_to_end_smoke(work: &Path) -> Check {
    let root = work.join("smoke");
    pipeline(&root)?;
    let reports = root.join("reports");
    let mut cells = 0;
    for kind in ["first_frame", "morning_window"] {
        let table = std::fs::read_to_string(reports.join(format!("table1_{kind}.csv"))).map_err(|e| e.to_string())?;
        let rows: Vec<&str> = table.lines().skip(1).collect();
        ensure(rows.len() == 12, || format!("{kind}: {} table rows, want 12", rows.len()))?;
        for row in rows {
            let cols: Vec<&str> = row.split(',').collect();
            ensure(cols.len() == 8 && cols[4].parse::<f64>().is_ok(), || format!("{kind}: bad row `{row}`"))?;
        }
        for d in 0..=3 {
            for v in ["YOLO_ONLY", "WEATHER_ONLY", "FUSION"] {
                let path = reports.join(format!("importance/{kind}/h{d}_{v}.csv"));
                let csv = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
                ensure(
                    csv.starts_with("feature,modality,total_gain,split_count,mean_gain\n") && csv.lines().count() > 1,
                    || format!("{}: malformed", path.display()),
                )?;
                cells += 1;
            }
        }
    }
    for f in ["table2.csv", "table2.txt", "class_distribution.csv"] {
        ensure(reports.join(f).exists(), || format!("missing {f}"))?;
    }
    Ok(format!("2 snapshot kinds x 4 horizons x 3 variants, {cells} importance files"))
}

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let work = tempfile::tempdir().expect("temp dir");
    let work_path = work.path().to_path_buf();
    let criteria: Vec<(&str, Criterion)> = vec![
        ("gradient check", Box::new(gradient_check)),
        ("split optimality", Box::new(split_optimality)),
        ("xor capacity", Box::new(xor_capacity)),
        ("auc oracle", Box::new(auc_oracle)),
        ("aggregation boundary", Box::new(aggregation_boundary)),
        ("grayness gate", Box::new(grayness_gate)),
        ("group kfold", Box::new(group_kfold_partition)),
        ("directional replication", Box::new(directional_replication)),
        (
            "determinism",
            Box::new({
                let w = work_path.clone();
                move || determinism(&w)
            }),
        ),
        ("end-to-end smoke", Box::new(move || end_to_end_smoke(&work_path))),
    ];
    let mut failed = 0;
    let mut ran = 0;
    for (name, check) in &criteria {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name} ({secs:.2}s): {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name} ({secs:.2}s): {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
