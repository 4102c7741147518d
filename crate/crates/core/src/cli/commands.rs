use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::Serialize;

use super::report::{AggregateRow, EvalReport, ImageRecord, Warnings, REPORT_FORMAT, REPORT_VERSION};
use super::{MetricKind, RunConfig};
use crate::error::{Error, Result};
use crate::integrators::{attribute, AttributeOptions, Method};
use crate::io::{read_mask, read_png, render_heatmap, write_attribution};
use crate::metrics::{
    bokeh_records, information_curves, insertion_curve, localization, pixel_importance,
    AicSicOptions, BokehRecord, CurveReport, MsSsimOptions, DEFAULT_THRESHOLD_LEVELS,
};
use crate::models::{load_weights, train_toy, EpochLog, GradientOracle, SyntheticTask, ToyModel};
use crate::tensor::{BinaryMask, Tensor};

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start {jobs} worker(s): {e}")))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn load_model(cfg: &RunConfig) -> Result<(ToyModel<f64>, Option<SyntheticTask>)> {
    let path = cfg
        .model
        .as_ref()
        .ok_or_else(|| Error::invalid("no model given (use --model)"))?;
    let (model, weights) = load_weights::<f64>(path)?;
    Ok((model, weights.task))
}

/// File-name-safe tag such as `ig-idgi`.
fn combo_slug(method: Method, idgi: bool) -> String {
    if idgi {
        format!("{}-idgi", method.as_str())
    } else {
        method.as_str().to_string()
    }
}

fn explained_class(cfg: &RunConfig, model: &ToyModel<f64>, x: &Tensor<f64>) -> Result<usize> {
    match cfg.class {
        Some(c) => Ok(c),
        None => model.predict(x),
    }
}

/// Writes `<stem>.<method>.{bin,json,png}` for every input and method combination.
/// Returns the written tensor paths.
pub fn cmd_attribute(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let (model, _) = load_model(cfg)?;
    if cfg.inputs.is_empty() {
        return Err(Error::invalid("no input images (use --input)"));
    }
    let options = cfg.attribute_options()?;
    let mut images = Vec::with_capacity(cfg.inputs.len());
    for path in &cfg.inputs {
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .ok_or_else(|| Error::invalid(format!("{} has no file name", path.display())))?;
        if images.iter().any(|(s, _)| *s == stem) {
            return Err(Error::invalid(format!("two inputs share the file name {stem:?}")));
        }
        images.push((stem, read_png::<f64>(path)?));
    }
    create_dir(&cfg.out)?;
    let combos = cfg.combinations();
    let written = thread_pool(cfg.jobs)?.install(|| {
        images
            .par_iter()
            .map(|(stem, x)| {
                let class = explained_class(cfg, &model, x)?;
                let mut files = Vec::new();
                for &(method, idgi) in &combos {
                    let a = attribute(&model, class, x, method, idgi, &options)?;
                    let name = format!("{stem}.{}", combo_slug(method, idgi));
                    write_attribution(&a, &cfg.out, &name)?;
                    render_heatmap(&a, cfg.out.join(format!("{name}.png")))?;
                    files.push(cfg.out.join(format!("{name}.bin")));
                }
                Ok(files)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(written.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub weights: PathBuf,
    pub log: PathBuf,
    pub test_accuracy: f64,
    pub epochs: usize,
}

#[derive(Serialize)]
struct TrainLog<'a> {
    seed: u64,
    task: &'a SyntheticTask,
    config: &'a crate::models::TrainConfig,
    epochs: &'a [EpochLog],
    test_accuracy: f64,
}

/// Trains on the configured task and writes `model.json` and `train_log.json` into the
/// output directory. Falling short of `min_accuracy` is a training failure (the files
/// are still written).
pub fn cmd_train_toy(cfg: &RunConfig) -> Result<TrainSummary> {
    cfg.validate()?;
    let outcome = train_toy::<f64>(&cfg.task, &cfg.train, cfg.seed)?;
    create_dir(&cfg.out)?;
    let mut weights = outcome.model.to_weights();
    weights.task = Some(cfg.task.clone());
    let weights_path = cfg.out.join("model.json");
    crate::models::save_weights(&weights, &weights_path)?;
    let log = TrainLog {
        seed: cfg.seed,
        task: &cfg.task,
        config: &cfg.train,
        epochs: &outcome.log,
        test_accuracy: outcome.test_accuracy,
    };
    let log_path = cfg.out.join("train_log.json");
    let mut text = serde_json::to_string_pretty(&log).expect("training log serializes");
    text.push('\n');
    write_file(&log_path, text)?;
    if outcome.test_accuracy < cfg.min_accuracy {
        return Err(Error::TrainingFailure(format!(
            "held-out accuracy {:.4} below the required {:.4}",
            outcome.test_accuracy, cfg.min_accuracy
        )));
    }
    Ok(TrainSummary {
        weights: weights_path,
        log: log_path,
        test_accuracy: outcome.test_accuracy,
        epochs: outcome.log.len(),
    })
}

struct EvalItem {
    id: String,
    image: Tensor<f64>,
    mask: Option<BinaryMask>,
    label: Option<usize>,
}

fn eval_items(cfg: &RunConfig, model_task: Option<&SyntheticTask>) -> Result<Vec<EvalItem>> {
    let mut items = Vec::new();
    if let Some(count) = cfg.synthetic {
        let task = model_task.unwrap_or(&cfg.task);
        for (i, s) in task.generate::<f64>(count, cfg.seed)?.into_iter().enumerate() {
            items.push(EvalItem {
                id: format!("synthetic-{i:05}"),
                image: s.image,
                mask: Some(s.mask),
                label: Some(s.label),
            });
        }
    } else {
        for path in &cfg.inputs {
            let mask = match &cfg.masks {
                Some(dir) => {
                    let name = path
                        .file_name()
                        .ok_or_else(|| Error::invalid(format!("{} has no file name", path.display())))?;
                    Some(read_mask(dir.join(name))?)
                }
                None => None,
            };
            items.push(EvalItem {
                id: path.display().to_string(),
                image: read_png(path)?,
                mask,
                label: None,
            });
        }
    }
    if items.is_empty() {
        return Err(Error::invalid("no images to evaluate (use --input or --synthetic)"));
    }
    items.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(items)
}

/// Everything one image contributes, per method combination.
struct ImageOutcome {
    records: Vec<ImageRecord>,
    insertion: Vec<Option<CurveReport>>,
    bokeh: Vec<Vec<BokehRecord>>,
    warnings: Warnings,
}

struct EvalSetup<'a> {
    cfg: &'a RunConfig,
    model: &'a ToyModel<f64>,
    combos: Vec<(Method, bool)>,
    options: AttributeOptions<f64>,
    aic: AicSicOptions,
}

fn eval_image(s: &EvalSetup<'_>, item: &EvalItem) -> Result<ImageOutcome> {
    let x = &item.image;
    let class = explained_class(s.cfg, s.model, x)?;
    let mut out = ImageOutcome {
        records: Vec::new(),
        insertion: Vec::new(),
        bokeh: Vec::new(),
        warnings: Warnings::default(),
    };
    let mut reduced = false;
    for &(method, idgi) in &s.combos {
        let a = attribute(s.model, class, x, method, idgi, &s.options)?;
        out.warnings.degenerate_steps += a.degenerate_steps;
        let imp = pixel_importance(&a);
        let mut metrics = BTreeMap::new();
        let mut insertion = None;
        let mut bokeh = Vec::new();
        for metric in &s.cfg.metrics {
            match metric {
                MetricKind::Insertion => {
                    let rep = insertion_curve(s.model, class, x, &imp, s.cfg.insertion_step)?;
                    metrics.insert("insertion".to_string(), rep.probability.auc);
                    metrics.insert("insertion_ratio".to_string(), rep.ratio.auc);
                    insertion = Some(rep.probability);
                }
                MetricKind::AicSic => {
                    let set = bokeh_records(s.model, class, x, &imp, &s.aic)?;
                    let (aic, sic) = information_curves(&set.records, s.aic.bins)?;
                    metrics.insert("aic".to_string(), aic.auc);
                    metrics.insert("sic".to_string(), sic.auc);
                    out.warnings.clipped_entropy += set.clipped_entropy;
                    if let Some(l) = set.msssim_levels {
                        reduced = true;
                        out.warnings.msssim_levels_used = Some(l);
                    }
                    bokeh = set.records;
                }
                MetricKind::Loc => {
                    let mask = item.mask.as_ref().ok_or_else(|| {
                        Error::invalid(format!("no mask for {}", item.id))
                    })?;
                    let score = localization(&imp, mask, DEFAULT_THRESHOLD_LEVELS)?;
                    metrics.insert("loc_f1".to_string(), score.f1);
                    metrics.insert("loc_roc_auc".to_string(), score.roc_auc);
                    metrics.insert("loc_mae".to_string(), score.mae);
                }
            }
        }
        out.records.push(ImageRecord {
            image: item.id.clone(),
            label: item.label,
            class,
            method,
            idgi,
            name: method.label(idgi),
            metrics,
            degenerate_steps: a.degenerate_steps,
        });
        out.insertion.push(insertion);
        out.bokeh.push(bokeh);
    }
    out.warnings.msssim_reduced = usize::from(reduced);
    Ok(out)
}

fn mean_curve(curves: &[&CurveReport]) -> Result<Option<CurveReport>> {
    let Some(first) = curves.first() else {
        return Ok(None);
    };
    let n = curves.len() as f64;
    let ys = (0..first.ys.len())
        .map(|i| curves.iter().map(|c| c.ys[i]).sum::<f64>() / n)
        .collect();
    Ok(Some(CurveReport::new(first.xs.clone(), ys)?))
}

/// Settings echoed into the report; output location and worker count are left out
/// because they do not change the numbers.
fn config_echo(cfg: &RunConfig) -> serde_json::Value {
    let mut v = serde_json::to_value(cfg).expect("config serializes");
    if let Some(obj) = v.as_object_mut() {
        for key in ["out", "jobs", "train", "min_accuracy"] {
            obj.remove(key);
        }
    }
    v
}

/// Runs the selected metrics for every image and method and writes `report.json`,
/// `report.run.json` (wall-clock details), `aggregate.csv` and per-method curves.
pub fn cmd_eval(cfg: &RunConfig) -> Result<EvalReport> {
    cfg.validate()?;
    if cfg.metrics.is_empty() {
        return Err(Error::invalid("no metrics selected"));
    }
    let started = SystemTime::now();
    let clock = Instant::now();
    let (model, model_task) = load_model(cfg)?;
    let items = eval_items(cfg, model_task.as_ref())?;
    if cfg.metrics.contains(&MetricKind::Loc) && items.iter().any(|i| i.mask.is_none()) {
        return Err(Error::invalid("localization needs masks (use --masks)"));
    }
    let setup = EvalSetup {
        cfg,
        model: &model,
        combos: cfg.combinations(),
        options: cfg.attribute_options()?,
        aic: AicSicOptions {
            thresholds: cfg.thresholds,
            bins: cfg.bins,
            info: cfg.info_level,
            msssim: MsSsimOptions::default(),
            ..AicSicOptions::default()
        },
    };
    let outcomes = thread_pool(cfg.jobs)?.install(|| {
        items
            .par_iter()
            .map(|item| eval_image(&setup, item))
            .collect::<Result<Vec<_>>>()
    })?;

    let mut warnings = Warnings::default();
    for o in &outcomes {
        warnings.degenerate_steps += o.warnings.degenerate_steps;
        warnings.clipped_entropy += o.warnings.clipped_entropy;
        warnings.msssim_reduced += o.warnings.msssim_reduced;
        warnings.msssim_levels_used = warnings.msssim_levels_used.or(o.warnings.msssim_levels_used);
    }
    let mut aggregate = Vec::new();
    for (k, &(method, idgi)) in setup.combos.iter().enumerate() {
        let records: Vec<&ImageRecord> = outcomes.iter().map(|o| &o.records[k]).collect();
        let mut curves = BTreeMap::new();
        let ins: Vec<&CurveReport> = outcomes.iter().filter_map(|o| o.insertion[k].as_ref()).collect();
        if let Some(c) = mean_curve(&ins)? {
            curves.insert("insertion".to_string(), c);
        }
        let pooled: Vec<BokehRecord> = outcomes.iter().flat_map(|o| o.bokeh[k].iter().copied()).collect();
        if !pooled.is_empty() {
            let (aic, sic) = information_curves(&pooled, cfg.bins)?;
            curves.insert("aic".to_string(), aic);
            curves.insert("sic".to_string(), sic);
        }
        aggregate.push(AggregateRow::from_records(method, idgi, &records, curves));
    }
    let report = EvalReport {
        format: REPORT_FORMAT.into(),
        version: REPORT_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        config: config_echo(cfg),
        records: outcomes.into_iter().flat_map(|o| o.records).collect(),
        aggregate,
        warnings,
    };

    create_dir(&cfg.out)?;
    write_file(&cfg.out.join("report.json"), report.to_json())?;
    write_file(&cfg.out.join("aggregate.csv"), report.aggregate_csv())?;
    let curves_dir = cfg.out.join("curves");
    create_dir(&curves_dir)?;
    for row in &report.aggregate {
        for (name, curve) in &row.curves {
            let file = format!("{}_{name}.csv", combo_slug(row.method, row.idgi));
            write_file(&curves_dir.join(file), curve.to_csv())?;
        }
    }
    let run = serde_json::json!({
        "started_unix_seconds": started.duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        "elapsed_seconds": clock.elapsed().as_secs_f64(),
        "jobs": cfg.jobs,
    });
    write_file(
        &cfg.out.join("report.run.json"),
        serde_json::to_string_pretty(&run).expect("run info serializes") + "\n",
    )?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{save_weights, Activation, ToyModel};
    use crate::tensor::Shape;
    use rand::SeedableRng;

    fn small_task() -> SyntheticTask {
        SyntheticTask {
            shape: Shape::new(16, 16, 1),
            square: 4,
            ..SyntheticTask::default()
        }
    }

    fn setup(dir: &Path) -> RunConfig {
        let task = small_task();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let model =
            ToyModel::<f64>::random_tiny_cnn(task.shape, 2, 4, 4, Activation::Softplus, &mut rng).unwrap();
        let mut w = model.to_weights();
        w.task = Some(task);
        let path = dir.join("model.json");
        save_weights(&w, &path).unwrap();
        RunConfig {
            model: Some(path),
            synthetic: Some(3),
            steps: 8,
            seed: 1,
            out: dir.join("out"),
            ..RunConfig::default()
        }
    }

    #[test]
    fn eval_writes_consistent_report() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig {
            compare: true,
            metrics: vec![MetricKind::Insertion, MetricKind::Loc],
            ..setup(dir.path())
        };
        let report = cmd_eval(&cfg).unwrap();
        assert_eq!(report.records.len(), 6);
        assert_eq!(report.aggregate.len(), 2);
        report.check_consistency().unwrap();
        let reread = EvalReport::load(cfg.out.join("report.json")).unwrap();
        assert_eq!(reread, report);
        assert!(cfg.out.join("curves/ig-idgi_insertion.csv").exists());
        assert!(cfg.out.join("report.run.json").exists());
    }

    #[test]
    fn loc_without_masks_is_invalid() {
        let dir = tempfile::tempdir().unwrap();
        let x = Tensor::filled(small_task().shape, 0.5);
        let png = dir.path().join("x.png");
        crate::io::write_png(&x, &png).unwrap();
        let cfg = RunConfig {
            synthetic: None,
            inputs: vec![png],
            metrics: vec![MetricKind::Loc],
            ..setup(dir.path())
        };
        assert!(matches!(cmd_eval(&cfg), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn attribute_writes_files_and_rejects_vanilla_idgi() {
        let dir = tempfile::tempdir().unwrap();
        let x = Tensor::from_fn(small_task().shape, |r, c, _| ((r + c) % 3) as f64 / 2.0);
        let png = dir.path().join("img.png");
        crate::io::write_png(&x, &png).unwrap();
        let cfg = RunConfig {
            synthetic: None,
            inputs: vec![png],
            idgi: true,
            ..setup(dir.path())
        };
        let files = cmd_attribute(&cfg).unwrap();
        assert_eq!(files, vec![cfg.out.join("img.ig-idgi.bin")]);
        assert!(cfg.out.join("img.ig-idgi.png").exists());
        let a = crate::io::read_attribution::<f64>(&cfg.out, "img.ig-idgi").unwrap();
        assert_eq!(a.steps, 8);
        let first = fs::read(&files[0]).unwrap();
        cmd_attribute(&cfg).unwrap();
        assert_eq!(fs::read(&files[0]).unwrap(), first);

        let bad = RunConfig {
            methods: vec![Method::Vanilla],
            ..cfg
        };
        assert!(matches!(cmd_attribute(&bad), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn missing_image_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig {
            synthetic: None,
            inputs: vec![dir.path().join("absent.png")],
            ..setup(dir.path())
        };
        assert!(matches!(cmd_attribute(&cfg), Err(Error::Io { .. })));
    }
}
