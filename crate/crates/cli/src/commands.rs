use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration as StdDuration;

use anyhow::{Context, Result};
use chrono::{DateTime, NaiveDate, Utc};
use log::info;
use serde::{Deserialize, Serialize};
use vistacast_core::collect::{run_collect, CollectRun};
use vistacast_core::eval::report::table1_text;
use vistacast_core::eval::{
    run_experiment, synth_generate, write_reports, write_synth_images, ExperimentConfig, ExperimentResult, SynthConfig,
};
use vistacast_core::fusion::{build_examples, FusedDataset, FusionConfig, SnapshotKind};
use vistacast_core::ingest::{FixtureWeatherSource, HttpWeatherSource, RetryPolicy, WeatherSource};
use vistacast_core::model::{
    class_distribution, format_ts, local_date, CameraRegistry, Horizon, QcStatus, Timestamp, VisibilityClass,
};
use vistacast_core::predict::{bundle_dir, latest_usable_date, train_bundle, ModelBundle};
use vistacast_core::quality::{duplicate_check, run_qc, validate_threshold, DigestIndex};
use vistacast_core::store::{active_labels, append_jsonl, DataRoot, LabelEvent};
use vistacast_service::{LabelingService, ServiceConfig, SystemClock};

use crate::args::{
    CollectArgs, Command, EvaluateArgs, FuseArgs, FusionArgs, GbdtArgs, KindArg, LabelExportArgs, PredictArgs, QcArgs,
    ServeArgs, SynthArgs, TrainArgs,
};
use crate::config::{Settings, SourceMode};
use crate::error::user;

/// Folds command-line overrides into the file settings.
pub fn effective_settings(mut s: Settings, command: &Command) -> Settings {
    fn fusion(s: &mut Settings, a: &FusionArgs) {
        if let Some(t) = a.theta {
            s.fusion.theta = t;
        }
        if let Some(l) = a.label_source {
            s.fusion.label_source = l.into();
        }
    }
    fn gbdt(s: &mut Settings, a: &GbdtArgs) {
        if let Some(v) = a.trees {
            s.gbdt.num_trees = v;
        }
        if let Some(v) = a.leaves {
            s.gbdt.max_leaves = v;
        }
        if let Some(v) = a.learning_rate {
            s.gbdt.learning_rate = v;
        }
        if let Some(v) = a.min_child_samples {
            s.gbdt.min_child_samples = v;
        }
    }
    match command {
        Command::Qc(a) => {
            if let Some(t) = a.threshold {
                s.qc.threshold = t;
            }
        }
        Command::Fuse(a) => fusion(&mut s, &a.fusion),
        Command::Train(a) => {
            fusion(&mut s, &a.fusion);
            gbdt(&mut s, &a.gbdt);
            s.eval.include_meta &= !a.no_meta;
        }
        Command::Evaluate(a) => {
            fusion(&mut s, &a.fusion);
            gbdt(&mut s, &a.gbdt);
            if let Some(v) = a.seed {
                s.eval.seed = v;
            }
            if let Some(v) = a.folds {
                s.eval.folds = v;
            }
            s.eval.include_meta &= !a.no_meta;
        }
        Command::Serve(a) => {
            if let Some(v) = &a.addr {
                s.service.addr = v.clone();
            }
            if let Some(v) = a.lease_secs {
                s.service.lease_secs = v;
            }
        }
        Command::Collect(a) => {
            if let Some(dir) = &a.fixtures {
                s.collect.source = SourceMode::Fixture;
                s.collect.fixtures = Some(dir.clone());
            } else if a.live {
                s.collect.source = SourceMode::Live;
            }
        }
        Command::Synth(_) | Command::LabelExport(_) | Command::Report | Command::Predict(_) => {}
    }
    s
}

/// Seed recorded in the run log, when the command has one.
pub fn run_seed(command: &Command, s: &Settings) -> Option<u64> {
    match command {
        Command::Synth(a) => Some(a.seed),
        Command::Evaluate(_) => Some(s.eval.seed),
        Command::Train(_) => Some(s.gbdt.seed),
        _ => None,
    }
}

pub fn execute(root: &DataRoot, command: &Command, s: &Settings) -> Result<()> {
    match command {
        Command::Synth(a) => synth(root, a),
        Command::Collect(a) => collect(root, a, s),
        Command::Qc(a) => qc(root, a, s),
        Command::LabelExport(a) => label_export(root, a),
        Command::Fuse(a) => fuse(root, a, s),
        Command::Train(a) => train(root, a, s),
        Command::Evaluate(a) => evaluate(root, a, s),
        Command::Report => report(root),
        Command::Predict(a) => predict(root, a),
        Command::Serve(a) => serve(root, a, s),
    }
}

fn synth(root: &DataRoot, a: &SynthArgs) -> Result<()> {
    let config = SynthConfig { n_cameras: a.cameras, n_days: a.days, seed: a.seed, ..SynthConfig::default() };
    config.validate()?;
    let mut data = synth_generate(&config)?;
    root.ensure_layout()?;
    if a.images {
        write_synth_images(&mut data, root.path())?;
    }
    let events: Vec<LabelEvent> = data
        .frames
        .iter_mut()
        .filter_map(|f| {
            let label = f.human_label.take()?;
            Some(LabelEvent {
                camera_id: f.camera_id.clone(),
                captured_at: f.captured_at,
                label: Some(label),
                annotator: "synth".into(),
                submitted_at: f.captured_at,
            })
        })
        .collect();
    CameraRegistry::new(data.sites.clone())?.save(&root.cameras_path())?;
    let frames = root.frames()?.append(&data.frames)?;
    let weather = root.weather()?.append(&data.weather)?;
    if a.with_labels {
        append_jsonl(&root.label_history_path(), &events)?;
    }
    println!(
        "synth: {} cameras, {} new frames, {} new weather records{} in {}",
        data.sites.len(),
        frames.appended,
        weather.appended,
        if a.with_labels { format!(", {} labels", events.len()) } else { String::new() },
        root.path().display()
    );
    Ok(())
}

fn parse_instant(s: &str) -> Result<Timestamp> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.with_timezone(&Utc));
    }
    s.parse::<NaiveDate>()
        .map(|d| d.and_hms_opt(0, 0, 0).expect("midnight").and_utc())
        .map_err(|_| user(format!("`{s}` is neither RFC 3339 nor YYYY-MM-DD")))
}

fn registry(root: &DataRoot) -> Result<CameraRegistry> {
    if !root.cameras_path().exists() {
        return Err(user(format!("no camera registry at {}", root.cameras_path().display())));
    }
    Ok(root.registry()?)
}

fn collect(root: &DataRoot, a: &CollectArgs, s: &Settings) -> Result<()> {
    let from = parse_instant(&a.from)?;
    let to = parse_instant(&a.to)?;
    if to < from {
        return Err(user("--to is before --from"));
    }
    let source: Box<dyn WeatherSource> = match (s.collect.source, &s.collect.fixtures) {
        (SourceMode::Live, _) => {
            Box::new(HttpWeatherSource::new(s.collect.endpoint.clone(), StdDuration::from_secs(s.collect.timeout_secs)))
        }
        (SourceMode::Fixture, Some(dir)) => Box::new(FixtureWeatherSource::new(dir)),
        (SourceMode::Fixture, None) => {
            return Err(user("no forecast source: pass --fixtures DIR or --live, or set [collect] in the config"))
        }
    };
    let sites = registry(root)?.sites().to_vec();
    let policy = RetryPolicy { max_attempts: s.collect.max_attempts.max(1), ..RetryPolicy::default() };
    let run = CollectRun {
        sites: &sites,
        from,
        to,
        drop_dir: a.drop.as_deref(),
        source: source.as_ref(),
        policy,
        now: Utc::now(),
    };
    let live = s.collect.source == SourceMode::Live;
    let summary = run_collect(root, &run, &mut |d| {
        if live {
            std::thread::sleep(d)
        }
    })?;
    println!(
        "collect: {} ticks, {} frames, {} weather records, {} duplicates, {} failed forecast jobs, {} missing frames",
        summary.ticks,
        summary.frames_appended,
        summary.weather_appended,
        summary.duplicates,
        summary.failed_jobs,
        summary.missing_frames
    );
    Ok(())
}

fn qc(root: &DataRoot, a: &QcArgs, s: &Settings) -> Result<()> {
    validate_threshold(s.qc.threshold)?;
    let month = a
        .month
        .as_deref()
        .map(|m| {
            NaiveDate::parse_from_str(&format!("{m}-01"), "%Y-%m-%d")
                .map(|_| m.to_string())
                .map_err(|_| user(format!("--month `{m}` is not YYYY-MM")))
        })
        .transpose()?;
    let mut frames = root.frames()?.read_all()?;
    frames.sort_by_key(|f| f.key());
    let in_scope = |f: &vistacast_core::model::FrameRecord| {
        a.camera.as_ref().is_none_or(|c| &f.camera_id == c)
            && month.as_ref().is_none_or(|m| f.captured_at.format("%Y-%m").to_string() == *m)
    };
    let existing = root.qc_reports()?;

    // Frames outside the scope that already own their content keep owning it.
    let mut index = DigestIndex::default();
    for f in frames.iter().filter(|f| !in_scope(f) && f.content_digest.is_some()) {
        let owner = existing.get(&f.key()).is_some_and(|r| matches!(r.verdict, QcStatus::Ok | QcStatus::BadGray));
        if owner {
            duplicate_check(f, &mut index)?;
        }
    }
    let (checkable, imageless): (Vec<_>, Vec<_>) =
        frames.into_iter().filter(|f| in_scope(f)).partition(|f| !f.image_path.is_empty());
    if checkable.is_empty() {
        println!("qc: no stored images in scope ({} frames without images)", imageless.len());
        return Ok(());
    }
    let reports = run_qc(&checkable, &mut index, s.qc.threshold, root.path())?;
    root.append_qc(&reports)?;
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &reports {
        *counts.entry(r.verdict.name()).or_default() += 1;
    }
    let review = reports.iter().filter(|r| r.needs_review).count();
    let parts: Vec<String> = counts.iter().map(|(k, v)| format!("{k} {v}")).collect();
    println!("qc: {} frames checked: {}; {review} need review", reports.len(), parts.join(", "));
    Ok(())
}

fn label_export(root: &DataRoot, a: &LabelExportArgs) -> Result<()> {
    let events = root.label_history()?;
    let mut csv = String::new();
    if a.history {
        csv.push_str("camera_id,captured_at,local_date,label,annotator,submitted_at\n");
        for e in &events {
            let label = e.label.map(|l| l.name()).unwrap_or("");
            csv.push_str(&format!(
                "{},{},{},{label},{},{}\n",
                e.camera_id,
                format_ts(e.captured_at),
                local_date(e.captured_at),
                e.annotator,
                format_ts(e.submitted_at)
            ));
        }
    } else {
        csv.push_str("camera_id,captured_at,local_date,label\n");
        for (key, label) in active_labels(&events) {
            csv.push_str(&format!(
                "{},{},{},{label}\n",
                key.camera_id,
                format_ts(key.captured_at),
                local_date(key.captured_at)
            ));
        }
    }
    let rows = csv.lines().count() - 1;
    match a.out.as_deref() {
        Some(p) if p == Path::new("-") => print!("{csv}"),
        out => {
            let path = out.map(Path::to_path_buf).unwrap_or_else(|| root.reports_dir().join("labels.csv"));
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            std::fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?;
            eprintln!("label-export: {rows} rows -> {}", path.display());
        }
    }
    Ok(())
}

/// Fusion settings a stored dataset was built with, to tell when it is stale.
#[derive(Debug, PartialEq, Serialize, Deserialize)]
struct FusedWith {
    theta: f64,
    label_source: vistacast_core::fusion::LabelSource,
}

fn fusion_config(s: &Settings, kind: SnapshotKind) -> FusionConfig {
    FusionConfig {
        theta: s.fusion.theta,
        snapshot_kind: kind,
        label_source: s.fusion.label_source,
        ..FusionConfig::default()
    }
}

fn build_and_save(root: &DataRoot, s: &Settings, kinds: &[SnapshotKind]) -> Result<Vec<FusedDataset>> {
    let sites = registry(root)?.sites().to_vec();
    let frames = root.assembled_frames()?;
    let weather = root.weather()?.read_all()?;
    let mut out = Vec::new();
    for &kind in kinds {
        let (examples, provenance, stats) = build_examples(&frames, &weather, &sites, &fusion_config(s, kind))
            .with_context(|| format!("fusing {kind}"))?;
        let ds = FusedDataset::from_examples(&examples, provenance, None)?;
        let dir = root.fused_dir(kind);
        ds.save(&dir)?;
        let with = FusedWith { theta: s.fusion.theta, label_source: s.fusion.label_source };
        write_json(&dir.join("fusion.json"), &with)?;
        println!(
            "fuse {kind}: {} days ({} usable frames, {} days without label, {} window fallbacks) -> {}",
            stats.days_labeled,
            stats.usable_frames,
            stats.days_without_label,
            stats.fallbacks,
            dir.display()
        );
        out.push(ds);
    }
    Ok(out)
}

fn fuse(root: &DataRoot, a: &FuseArgs, s: &Settings) -> Result<()> {
    build_and_save(root, s, &a.kind.kinds())?;
    Ok(())
}

/// The stored dataset for `kind`, rebuilt when missing or built with other
/// fusion settings.
fn load_or_fuse(root: &DataRoot, s: &Settings, kind: SnapshotKind) -> Result<FusedDataset> {
    let dir = root.fused_dir(kind);
    let want = FusedWith { theta: s.fusion.theta, label_source: s.fusion.label_source };
    let fresh = std::fs::read_to_string(dir.join("fusion.json"))
        .ok()
        .and_then(|t| serde_json::from_str::<FusedWith>(&t).ok())
        .is_some_and(|w| w == want);
    if fresh {
        if let Ok(ds) = FusedDataset::load(&dir) {
            return Ok(ds);
        }
    }
    info!("fused {kind} dataset missing or stale; rebuilding");
    Ok(build_and_save(root, s, &[kind])?.remove(0))
}

fn train(root: &DataRoot, a: &TrainArgs, s: &Settings) -> Result<()> {
    let h = Horizon::new(a.horizon)?;
    let kind = match a.kind {
        KindArg::Both => return Err(user("train takes a single --kind")),
        k => k.kinds()[0],
    };
    let ds = load_or_fuse(root, s, kind)?;
    let bundle = train_bundle(&ds, h, a.variant.into(), s.eval.include_meta, &s.gbdt)?;
    let dir = bundle_dir(&root.models_dir(), h);
    bundle.save(&dir)?;
    println!(
        "train {h} {} {kind}: {} rows, fingerprint {} -> {}",
        bundle.variant,
        bundle.n_train,
        bundle.model.fingerprint(),
        dir.display()
    );
    Ok(())
}

fn results_path(root: &DataRoot, kind: SnapshotKind) -> PathBuf {
    root.reports_dir().join(format!("results_{}.json", kind.slug()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn evaluate(root: &DataRoot, a: &EvaluateArgs, s: &Settings) -> Result<()> {
    let config = ExperimentConfig {
        k_folds: s.eval.folds,
        seed: s.eval.seed,
        include_meta: s.eval.include_meta,
        params: s.gbdt.clone(),
        ..ExperimentConfig::default()
    };
    config.validate()?;
    let mut results = Vec::new();
    for kind in a.kind.kinds() {
        let ds = load_or_fuse(root, s, kind)?;
        let result = run_experiment(&ds, &config).with_context(|| format!("evaluating {kind}"))?;
        write_json(&results_path(root, kind), &result)?;
        for note in &result.notes {
            eprintln!("note: {note}");
        }
        print!("{}", table1_text(&result));
        results.push(result);
    }
    let files = write_reports(&results, &root.reports_dir())?;
    println!("evaluate: {} report files in {}", files.files.len(), root.reports_dir().display());
    Ok(())
}

fn report(root: &DataRoot) -> Result<()> {
    let mut results = Vec::new();
    for kind in SnapshotKind::ALL {
        let path = results_path(root, kind);
        if let Ok(text) = std::fs::read_to_string(&path) {
            let r: ExperimentResult =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            results.push(r);
        }
    }
    if results.is_empty() {
        return Err(user(format!("no results in {}; run evaluate first", root.reports_dir().display())));
    }
    let mut files = write_reports(&results, &root.reports_dir())?.files;
    files.push(write_class_distribution(root)?);
    for r in &results {
        print!("{}", table1_text(r));
    }
    println!("report: {} files in {}", files.len(), root.reports_dir().display());
    Ok(())
}

/// Per-class frame counts. Human labels when any exist, otherwise the
/// vision argmax of usable frames.
fn write_class_distribution(root: &DataRoot) -> Result<PathBuf> {
    let labels = active_labels(&root.label_history()?);
    let (source, classes): (&str, Vec<VisibilityClass>) = if labels.is_empty() {
        let frames = root.assembled_frames()?;
        ("vision", frames.iter().filter(|f| f.is_usable()).filter_map(|f| f.vision_probs.map(|p| p.argmax())).collect())
    } else {
        ("human", labels.into_values().collect())
    };
    let counts = class_distribution(classes);
    let total: usize = counts.values().sum();
    let mut csv = String::from("source,class,count,fraction\n");
    for (class, n) in &counts {
        let frac = if total == 0 { 0.0 } else { *n as f64 / total as f64 };
        csv.push_str(&format!("{source},{class},{n},{frac:.4}\n"));
    }
    let path = root.reports_dir().join("class_distribution.csv");
    std::fs::create_dir_all(root.reports_dir())?;
    std::fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn predict(root: &DataRoot, a: &PredictArgs) -> Result<()> {
    let h = Horizon::new(a.horizon)?;
    let dir = bundle_dir(&root.models_dir(), h);
    if !dir.join("bundle.json").exists() {
        return Err(user(format!("no model for {h} in {}; run train --horizon {}", dir.display(), h.days())));
    }
    let bundle = ModelBundle::load(&dir)?;
    let reg = registry(root)?;
    let site = reg.get(&a.camera).ok_or_else(|| user(format!("unknown camera `{}`", a.camera)))?;
    let frames = root.assembled_frames()?;
    let date = match a.date {
        Some(d) => d,
        None => latest_usable_date(&site.camera_id, &frames)
            .ok_or_else(|| user(format!("camera `{}` has no usable frames", a.camera)))?,
    };
    let weather = root.weather()?.read_all()?;
    let Some(p) = bundle.predict(site, &frames, &weather, date)? else {
        return Err(user(format!("camera `{}` has no usable frame on {date}", a.camera)));
    };
    if a.json {
        println!("{}", serde_json::to_string_pretty(&p)?);
    } else {
        println!(
            "{} {} {} -> {}: p={:.4} {}",
            p.camera_id,
            p.date,
            p.horizon,
            p.target_date,
            p.probability,
            if p.visible { "VISIBLE" } else { "NOT_VISIBLE" }
        );
    }
    Ok(())
}

fn serve(root: &DataRoot, _a: &ServeArgs, s: &Settings) -> Result<()> {
    let addr: SocketAddr =
        s.service.addr.parse().map_err(|_| user(format!("--addr `{}` is not host:port", s.service.addr)))?;
    let lease = chrono::Duration::seconds(i64::try_from(s.service.lease_secs).unwrap_or(i64::MAX).max(1));
    let service = LabelingService::open(root.clone(), Arc::new(SystemClock), ServiceConfig { lease })?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(vistacast_service::serve(Arc::new(service), addr))?;
    Ok(())
}
