use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use log::{info, warn};

use camtrap_core::dataset::fetch::{fetch_package, FetchOptions, MANIFEST_FILE};
use camtrap_core::dataset::{build_catalog, dataset_stats, ClassCatalog, Manifest};
use camtrap_core::diagnostics::{read_training_log, DEFAULT_EPSILON, DEFAULT_WINDOW};
use camtrap_core::evaluator::io::{metrics_to_csv, parse_metrics_csv, read_predictions};
use camtrap_core::evaluator::{
    evaluate as run_evaluation, evaluate_per_fold_mean, ground_truths, pool_cv, EvalConfig, FoldPredictions,
    DEFAULT_CONF_THRESHOLD, DEFAULT_IOU_THRESHOLD,
};
use camtrap_core::report::{loss_series_csv, quality_series_csv, summary_markdown};
use camtrap_core::splitter::{export_split, stratified_kfold, verify_stratification, SplitPlan};
use camtrap_core::{Error, Result};

use crate::config::{check_unit, pick, FileConfig};
use crate::{EvaluateArgs, FetchArgs, PrepareArgs, ReportArgs, SplitArgs};

pub const DEFAULT_MIN_COUNT: usize = 40;
pub const DEFAULT_K: usize = 5;
pub const CLASSES_FILE: &str = "classes.txt";
pub const PLAN_FILE: &str = "plan.json";
pub const STRATIFICATION_FILE: &str = "stratification.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const PER_FOLD_METRICS_FILE: &str = "metrics_per_fold_mean.csv";
pub const CONFUSION_FILE: &str = "confusion.csv";
pub const CONFUSION_NORMALIZED_FILE: &str = "confusion_normalized.csv";

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write(dir: &Path, name: &str, body: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, body).map_err(|e| io_err(&path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn manifest_dir(manifest: &Path) -> PathBuf {
    match manifest.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn same_dir(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(a), Ok(b)) => a == b,
        _ => a == b,
    }
}

fn out_dir(flag: Option<PathBuf>, cfg: &FileConfig, fallback: impl FnOnce() -> Option<PathBuf>) -> Result<PathBuf> {
    flag.or_else(|| cfg.out.as_deref().map(|p| cfg.resolve(p)))
        .or_else(fallback)
        .ok_or_else(|| Error::InvalidInput("no output directory: pass --out".into()))
}

fn load_catalog(manifest: &Manifest) -> Result<ClassCatalog> {
    if manifest.classes.is_empty() {
        return Err(Error::InvalidInput(
            "manifest has no class list; run `prepare` on it first".into(),
        ));
    }
    ClassCatalog::from_names(&manifest.classes, &manifest.images)
}

pub fn fetch(args: FetchArgs, cfg: &FileConfig) -> Result<()> {
    let endpoint = args
        .endpoint
        .or_else(|| cfg.endpoint.clone())
        .ok_or_else(|| Error::InvalidInput("no endpoint: pass --endpoint".into()))?;
    let out = out_dir(args.out, cfg, || None)?;
    let mut opts = FetchOptions::new(endpoint, cfg.token()?, &out);
    opts.project = args.project.or_else(|| cfg.project.clone());
    opts.workers = pick(args.workers, cfg.workers, opts.workers).max(1);
    opts.retry.max_attempts = pick(args.max_attempts, cfg.max_attempts, opts.retry.max_attempts).max(1);
    if opts.retry.max_attempts == 1 {
        opts.retry.initial_backoff = Duration::ZERO;
    }
    let s = fetch_package(&opts)?;
    println!(
        "fetched {} images into {} ({} downloaded, {} reused, {} without annotations, {} malformed)",
        s.images,
        out.join(MANIFEST_FILE).display(),
        s.downloaded,
        s.reused,
        s.empty,
        s.malformed
    );
    Ok(())
}

pub fn prepare(args: PrepareArgs, cfg: &FileConfig) -> Result<()> {
    let src_dir = manifest_dir(&args.manifest);
    let out = out_dir(args.out, cfg, || Some(src_dir.join("prepared")))?;
    if same_dir(&out, &src_dir) {
        return Err(Error::InvalidInput(format!(
            "output directory {} would overwrite the input manifest",
            out.display()
        )));
    }
    let min_count = pick(args.min_count, cfg.min_count, DEFAULT_MIN_COUNT);
    let other: BTreeSet<String> = if args.other.is_empty() {
        cfg.other_names.clone().unwrap_or_default().into_iter().collect()
    } else {
        args.other.into_iter().collect()
    };
    let other: BTreeSet<String> = other.into_iter().filter(|n| !n.trim().is_empty()).collect();

    let input = Manifest::load(&args.manifest)?;
    let (catalog, records) = build_catalog(&input.images, min_count, &other);
    if records.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no images left after dropping species seen in fewer than {min_count} images"
        )));
    }
    let dropped: Vec<String> = input
        .images
        .iter()
        .flat_map(|r| r.species())
        .filter(|s| catalog.index_of(s).is_none() && !other.contains(*s))
        .map(str::to_string)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if !dropped.is_empty() {
        info!("dropped rare species: {}", dropped.join(", "));
    }
    let stats = dataset_stats(&records, &catalog)?;

    create_dir(&out)?;
    let mut manifest = Manifest::new(catalog.names(), records)?;
    manifest.relocate(&src_dir, &out);
    manifest.save(&out.join(MANIFEST_FILE))?;
    let mut classes = catalog.names().join("\n");
    classes.push('\n');
    write(&out, CLASSES_FILE, &classes)?;
    write(&out, "class_counts.csv", &stats.class_counts_csv())?;
    write(&out, "image_sizes.csv", &stats.megapixel_csv())?;
    write(&out, "image_dimensions.csv", &stats.dimensions_csv())?;
    println!(
        "{} classes, {} images, {} boxes -> {}",
        catalog.len(),
        stats.total_images,
        stats.total_annotations,
        out.display()
    );
    Ok(())
}

pub fn split(args: SplitArgs, cfg: &FileConfig) -> Result<()> {
    let out = out_dir(args.out, cfg, || None)?;
    let k = pick(args.k, cfg.k, DEFAULT_K);
    let seed = pick(args.seed, cfg.seed, 0);
    let manifest = Manifest::load(&args.manifest)?;
    let catalog = load_catalog(&manifest)?;
    let plan = stratified_kfold(&manifest.images, &catalog, k, seed)?;
    let report = verify_stratification(&plan, &manifest.images, &catalog)?;
    if !report.flagged.is_empty() {
        warn!(
            "per-fold counts stray by more than one image for: {}",
            report.flagged.join(", ")
        );
    }
    let media_root = manifest_dir(&args.manifest);
    create_dir(&out)?;
    for fold in 0..k {
        let dir = out.join(format!("fold_{fold}"));
        let s = export_split(&plan, fold, &manifest.images, &catalog, &media_root, &dir)?;
        info!("fold {fold}: {} train, {} val", s.train_images, s.val_images);
    }
    write(&out, PLAN_FILE, &plan.to_json_string())?;
    write(&out, STRATIFICATION_FILE, &report.to_csv())?;
    println!(
        "{k} folds of sizes {:?} -> {} (max per-class deviation {:.2} images)",
        plan.fold_sizes(),
        out.display(),
        report.max_count_deviation
    );
    Ok(())
}

fn load_folds(args: &EvaluateArgs, manifest: &Manifest, num_classes: usize) -> Result<Vec<FoldPredictions>> {
    let plan = match &args.plan {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| io_err(p, e))?;
            let plan = SplitPlan::from_json_str(&text)?;
            if plan.k() != args.preds.len() {
                return Err(Error::InvalidInput(format!(
                    "plan has {} folds but {} prediction files were given",
                    plan.k(),
                    args.preds.len()
                )));
            }
            Some(plan)
        }
        None => None,
    };
    let known: HashSet<&str> = manifest.images.iter().map(|r| r.image_id.as_str()).collect();
    let mut folds = Vec::new();
    for (i, path) in args.preds.iter().enumerate() {
        let dets = read_predictions(path, Some(num_classes))?;
        let name = path.display().to_string();
        let fold = match &plan {
            Some(plan) => FoldPredictions {
                name,
                images: plan.members(i).into_iter().map(str::to_string).collect(),
                detections: dets,
            },
            None => FoldPredictions::from_detections(name, dets),
        };
        let unknown: BTreeSet<&str> = fold
            .images
            .iter()
            .map(String::as_str)
            .chain(fold.detections.iter().map(|d| d.image_id.as_str()))
            .filter(|id| !known.contains(id))
            .collect();
        if !unknown.is_empty() {
            let shown: Vec<&str> = unknown.iter().take(10).copied().collect();
            return Err(Error::InvalidInput(format!(
                "{} references {} image(s) not in the manifest: {}{}",
                fold.name,
                unknown.len(),
                shown.join(", "),
                if unknown.len() > shown.len() { ", ..." } else { "" }
            )));
        }
        folds.push(fold);
    }
    Ok(folds)
}

pub fn evaluate(args: EvaluateArgs, cfg: &FileConfig) -> Result<()> {
    let out = out_dir(args.out.clone(), cfg, || None)?;
    let config = EvalConfig {
        iou_threshold: check_unit("IoU threshold", pick(args.iou, cfg.iou, DEFAULT_IOU_THRESHOLD))?,
        conf_threshold: check_unit(
            "confidence threshold",
            pick(args.conf, cfg.conf, DEFAULT_CONF_THRESHOLD),
        )?,
        ..EvalConfig::default()
    };
    let manifest = Manifest::load(&args.manifest)?;
    let catalog = load_catalog(&manifest)?;
    let names = catalog.names();
    let gts = ground_truths(&manifest.images, &catalog)?;
    let folds = load_folds(&args, &manifest, names.len())?;
    let pooled = pool_cv(&folds)?;
    if pooled.is_empty() {
        warn!("no detections in the prediction files; every metric is zero");
    }
    let eval = run_evaluation(&pooled, &gts, &names, &config)?;

    create_dir(&out)?;
    write(&out, METRICS_FILE, &metrics_to_csv(&eval.rows))?;
    write(&out, CONFUSION_FILE, &eval.confusion.to_csv(&names))?;
    write(
        &out,
        CONFUSION_NORMALIZED_FILE,
        &eval.confusion.to_normalized_csv(&names),
    )?;
    if args.per_fold_mean {
        let rows = evaluate_per_fold_mean(&folds, &gts, &names, &config)?;
        write(&out, PER_FOLD_METRICS_FILE, &metrics_to_csv(&rows))?;
    }
    let all = eval.overall();
    println!(
        "all: targets {} F1 {:.3} P {:.3} R {:.3} mAP@.5 {:.3} mAP@.5:.95 {:.3} (confidence threshold {:.3}) -> {}",
        all.targets,
        all.f1,
        all.precision,
        all.recall,
        all.ap50,
        all.ap50_95,
        eval.operating_point.threshold,
        out.display()
    );
    Ok(())
}

pub fn report(args: ReportArgs, cfg: &FileConfig) -> Result<()> {
    let out = out_dir(args.out, cfg, || None)?;
    let window = pick(args.window, cfg.window, DEFAULT_WINDOW);
    let epsilon = pick(args.epsilon, cfg.epsilon, DEFAULT_EPSILON);
    if window == 0 || epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::InvalidInput(
            "window must be at least 1 and epsilon positive".into(),
        ));
    }
    let logs = read_training_log(&args.epoch_log)?;
    let text = fs::read_to_string(&args.metrics).map_err(|e| io_err(&args.metrics, e))?;
    if text.trim().is_empty() {
        return Err(Error::InvalidInput(format!("{} is empty", args.metrics.display())));
    }
    let metrics = parse_metrics_csv(&text, &args.metrics)?;
    if metrics.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{} has no metric rows",
            args.metrics.display()
        )));
    }
    create_dir(&out)?;
    write(&out, "loss_series.csv", &loss_series_csv(&logs))?;
    write(&out, "quality_series.csv", &quality_series_csv(&logs))?;
    write(&out, "summary.md", &summary_markdown(&logs, &metrics, window, epsilon))?;
    println!(
        "{} epochs, {} metric rows -> {}",
        logs.len(),
        metrics.len(),
        out.display()
    );
    Ok(())
}
