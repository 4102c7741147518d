use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrators::Method;
use crate::metrics::CurveReport;

pub const REPORT_FORMAT: &str = "pathattr-eval-report";
pub const REPORT_VERSION: u32 = 1;

/// Metric values of one `(image, method, idgi)` combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageRecord {
    pub image: String,
    /// Ground-truth label, when known.
    pub label: Option<usize>,
    /// Class that was explained.
    pub class: usize,
    pub method: Method,
    pub idgi: bool,
    pub name: String,
    pub metrics: BTreeMap<String, f64>,
    pub degenerate_steps: usize,
}

/// Per-method summary over all images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AggregateRow {
    pub name: String,
    pub method: Method,
    pub idgi: bool,
    pub images: usize,
    pub mean: BTreeMap<String, f64>,
    pub median: BTreeMap<String, f64>,
    /// Mean insertion curve and dataset-level AIC/SIC curves.
    pub curves: BTreeMap<String, CurveReport>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Warnings {
    /// IDGI steps with a zero gradient but a nonzero value change.
    pub degenerate_steps: usize,
    /// Bokeh compression ratios above 1 that were clipped.
    pub clipped_entropy: usize,
    /// Images whose MS-SSIM ran with fewer scales than requested.
    pub msssim_reduced: usize,
    pub msssim_levels_used: Option<usize>,
}

impl Warnings {
    pub fn is_empty(&self) -> bool {
        self.degenerate_steps == 0 && self.clipped_entropy == 0 && self.msssim_reduced == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub format: String,
    pub version: u32,
    pub tool_version: String,
    /// Settings that affect the numbers.
    pub config: serde_json::Value,
    pub records: Vec<ImageRecord>,
    pub aggregate: Vec<AggregateRow>,
    pub warnings: Warnings,
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Per-metric lists of values across the given records.
fn columns<'a>(records: impl Iterator<Item = &'a ImageRecord>) -> BTreeMap<String, Vec<f64>> {
    let mut cols: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in records {
        for (k, &v) in &r.metrics {
            cols.entry(k.clone()).or_default().push(v);
        }
    }
    cols
}

impl AggregateRow {
    pub fn from_records(
        method: Method,
        idgi: bool,
        records: &[&ImageRecord],
        curves: BTreeMap<String, CurveReport>,
    ) -> Self {
        let cols = columns(records.iter().copied());
        Self {
            name: method.label(idgi),
            method,
            idgi,
            images: records.len(),
            mean: cols.iter().map(|(k, v)| (k.clone(), mean(v))).collect(),
            median: cols.iter().map(|(k, v)| (k.clone(), median(v))).collect(),
            curves,
        }
    }

    /// Table values: image means, except AIC/SIC which use the pooled curves.
    pub fn headline(&self) -> BTreeMap<String, f64> {
        let mut out = self.mean.clone();
        for key in ["aic", "sic"] {
            if let Some(c) = self.curves.get(key) {
                out.insert(key.to_string(), c.auc);
            }
        }
        out
    }
}

const COLUMNS: [&str; 7] = [
    "insertion",
    "insertion_ratio",
    "aic",
    "sic",
    "loc_f1",
    "loc_roc_auc",
    "loc_mae",
];

fn lower_is_better(metric: &str) -> bool {
    metric == "loc_mae"
}

fn render_table(rows: &[(String, usize, BTreeMap<String, f64>)]) -> String {
    let used: Vec<&str> = COLUMNS
        .iter()
        .copied()
        .filter(|c| rows.iter().any(|r| r.2.contains_key(*c)))
        .collect();
    let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max(6);
    let mut out = format!("{:<width$}  {:>6}", "method", "images");
    for c in &used {
        let _ = write!(out, "  {c:>15}");
    }
    out.push('\n');
    for (name, images, values) in rows {
        let _ = write!(out, "{name:<width$}  {images:>6}");
        for c in &used {
            match values.get(*c) {
                Some(v) => {
                    let _ = write!(out, "  {v:>15.6}");
                }
                None => {
                    let _ = write!(out, "  {:>15}", "-");
                }
            }
        }
        out.push('\n');
    }
    out
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("report: {e}")))?;
        let format = value.get("format").and_then(|v| v.as_str());
        if format != Some(REPORT_FORMAT) {
            return Err(Error::Format(format!(
                "not an evaluation report (format {format:?})"
            )));
        }
        let version = value.get("version").and_then(|v| v.as_u64());
        if version != Some(REPORT_VERSION as u64) {
            return Err(Error::Format(format!(
                "unsupported report version {version:?} (expected {REPORT_VERSION})"
            )));
        }
        let report: Self =
            serde_json::from_value(value).map_err(|e| Error::Format(format!("report: {e}")))?;
        report.check_consistency()?;
        Ok(report)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Aggregate means and medians must follow from the per-image records.
    pub fn check_consistency(&self) -> Result<()> {
        for row in &self.aggregate {
            let cols = columns(
                self.records
                    .iter()
                    .filter(|r| r.method == row.method && r.idgi == row.idgi),
            );
            let n = cols.values().map(Vec::len).max().unwrap_or(0);
            if n != row.images {
                return Err(Error::Format(format!(
                    "{}: aggregate counts {} images, records have {n}",
                    row.name, row.images
                )));
            }
            for (k, v) in &cols {
                let (m, md) = (mean(v), median(v));
                let ok = |stored: Option<&f64>, want: f64| {
                    stored.is_some_and(|s| (s - want).abs() <= 1e-12)
                };
                if !ok(row.mean.get(k), m) || !ok(row.median.get(k), md) {
                    return Err(Error::Format(format!(
                        "{}: aggregate {k} disagrees with per-image records",
                        row.name
                    )));
                }
            }
        }
        Ok(())
    }

    /// One row per method, in run order.
    pub fn table(&self) -> String {
        let rows: Vec<_> = self
            .aggregate
            .iter()
            .map(|r| (r.name.clone(), r.images, r.headline()))
            .collect();
        let mut out = render_table(&rows);
        let w = &self.warnings;
        if !w.is_empty() {
            let _ = writeln!(
                out,
                "warnings: {} degenerate IDGI step(s), {} clipped entropy ratio(s), {} image(s) with reduced MS-SSIM scales",
                w.degenerate_steps, w.clipped_entropy, w.msssim_reduced
            );
        }
        out
    }

    /// `method,images,metric,mean,median` rows.
    pub fn aggregate_csv(&self) -> String {
        let mut out = String::from("method,images,metric,mean,median\n");
        for r in &self.aggregate {
            for (k, m) in &r.mean {
                let _ = writeln!(out, "{},{},{k},{m},{}", r.name, r.images, r.median[k]);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedRow {
    pub name: String,
    pub method: Method,
    pub idgi: bool,
    pub source: String,
    pub images: usize,
    pub values: BTreeMap<String, f64>,
}

/// Plain vs IDGI comparison for one method and metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairComparison {
    pub method: Method,
    pub metric: String,
    pub plain: f64,
    pub idgi: f64,
    /// Name of the better row, or `tie`.
    pub better: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedReport {
    pub rows: Vec<MergedRow>,
    pub pairs: Vec<PairComparison>,
    pub warnings: Vec<String>,
}

impl MergedReport {
    pub fn table(&self) -> String {
        let rows: Vec<_> = self
            .rows
            .iter()
            .map(|r| (r.name.clone(), r.images, r.values.clone()))
            .collect();
        let mut out = render_table(&rows);
        if !self.pairs.is_empty() {
            out.push('\n');
            for p in &self.pairs {
                let _ = writeln!(
                    out,
                    "{:<7} {:<16} plain {:>10.6}  idgi {:>10.6}  better: {}",
                    p.method.label(false),
                    p.metric,
                    p.plain,
                    p.idgi,
                    p.better
                );
            }
        }
        out
    }

    pub fn rows_csv(&self) -> String {
        let mut out = String::from("method,source,images,metric,value\n");
        for r in &self.rows {
            for (k, v) in &r.values {
                let _ = writeln!(out, "{},{},{},{k},{v}", r.name, r.source, r.images);
            }
        }
        out
    }

    pub fn pairs_csv(&self) -> String {
        let mut out = String::from("method,metric,plain,idgi,better\n");
        for p in &self.pairs {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                p.method, p.metric, p.plain, p.idgi, p.better
            );
        }
        out
    }
}

fn settings(config: &serde_json::Value) -> serde_json::Value {
    let mut c = config.clone();
    if let Some(obj) = c.as_object_mut() {
        for key in ["methods", "idgi", "compare"] {
            obj.remove(key);
        }
    }
    c
}

/// Merges evaluation reports into one table. Rows are the union of method rows; a
/// method already seen in an earlier report is skipped with a warning.
pub fn cmd_report(inputs: &[PathBuf], out: Option<&Path>) -> Result<MergedReport> {
    if inputs.is_empty() {
        return Err(Error::invalid("report needs at least one input report"));
    }
    let mut rows: Vec<MergedRow> = Vec::new();
    let mut warnings = Vec::new();
    let mut reference: Option<(String, serde_json::Value)> = None;
    for path in inputs {
        let report = EvalReport::load(path)?;
        let source = path.display().to_string();
        let s = settings(&report.config);
        match &reference {
            None => reference = Some((source.clone(), s)),
            Some((first, r)) if *r != s => warnings.push(format!(
                "{source} was produced with different settings than {first}"
            )),
            Some(_) => {}
        }
        for row in &report.aggregate {
            if rows.iter().any(|r| r.method == row.method && r.idgi == row.idgi) {
                warnings.push(format!("{source}: duplicate row {} skipped", row.name));
                continue;
            }
            rows.push(MergedRow {
                name: row.name.clone(),
                method: row.method,
                idgi: row.idgi,
                source: source.clone(),
                images: row.images,
                values: row.headline(),
            });
        }
    }

    let mut pairs = Vec::new();
    for plain in rows.iter().filter(|r| !r.idgi) {
        let Some(with) = rows.iter().find(|r| r.idgi && r.method == plain.method) else {
            continue;
        };
        for (metric, &a) in &plain.values {
            let Some(&b) = with.values.get(metric) else {
                continue;
            };
            let idgi_wins = if lower_is_better(metric) { b < a } else { b > a };
            let better = if a == b {
                "tie".to_string()
            } else if idgi_wins {
                with.name.clone()
            } else {
                plain.name.clone()
            };
            pairs.push(PairComparison {
                method: plain.method,
                metric: metric.clone(),
                plain: a,
                idgi: b,
                better,
            });
        }
    }

    let merged = MergedReport {
        rows,
        pairs,
        warnings,
    };
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = [
            ("merged.csv", merged.rows_csv()),
            ("pairs.csv", merged.pairs_csv()),
            ("merged.txt", merged.table()),
        ];
        for (name, text) in files {
            let p = dir.join(name);
            fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        }
    }
    Ok(merged)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(image: &str, idgi: bool, v: f64) -> ImageRecord {
        ImageRecord {
            image: image.into(),
            label: None,
            class: 0,
            method: Method::Ig,
            idgi,
            name: Method::Ig.label(idgi),
            metrics: BTreeMap::from([("insertion".to_string(), v)]),
            degenerate_steps: 0,
        }
    }

    fn report(values: &[(bool, f64)]) -> EvalReport {
        let records: Vec<_> = values
            .iter()
            .enumerate()
            .map(|(i, &(idgi, v))| record(&format!("img{}", i / 2), idgi, v))
            .collect();
        let aggregate = [false, true]
            .iter()
            .map(|&idgi| {
                let rs: Vec<&ImageRecord> = records.iter().filter(|r| r.idgi == idgi).collect();
                AggregateRow::from_records(Method::Ig, idgi, &rs, BTreeMap::new())
            })
            .collect();
        EvalReport {
            format: REPORT_FORMAT.into(),
            version: REPORT_VERSION,
            tool_version: "test".into(),
            config: serde_json::json!({"steps": 50}),
            records,
            aggregate,
            warnings: Warnings::default(),
        }
    }

    #[test]
    fn aggregate_matches_records() {
        let r = report(&[(false, 0.2), (true, 0.5), (false, 0.4), (true, 0.1), (false, 0.9), (true, 0.3)]);
        assert!((r.aggregate[0].mean["insertion"] - 0.5).abs() < 1e-12);
        assert_eq!(r.aggregate[0].median["insertion"], 0.4);
        assert_eq!(r.aggregate[1].median["insertion"], 0.3);
        r.check_consistency().unwrap();
    }

    #[test]
    fn tampered_aggregate_rejected() {
        let mut r = report(&[(false, 0.2), (true, 0.5)]);
        r.aggregate[0].mean.insert("insertion".into(), 0.3);
        assert!(matches!(
            EvalReport::from_json(&r.to_json()),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn json_round_trip_is_byte_stable() {
        let r = report(&[(false, 0.1 + 0.2), (true, 1.0 / 3.0)]);
        let text = r.to_json();
        assert_eq!(EvalReport::from_json(&text).unwrap().to_json(), text);
    }

    #[test]
    fn schema_mismatch_is_format_error() {
        let mut v: serde_json::Value = serde_json::from_str(&report(&[(false, 0.1)]).to_json()).unwrap();
        v["version"] = serde_json::json!(9);
        let err = EvalReport::from_json(&v.to_string()).unwrap_err();
        assert!(matches!(err, Error::Format(ref m) if m.contains('9')));
    }

    #[test]
    fn merge_flags_better_method() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.json");
        fs::write(&p, report(&[(false, 0.2), (true, 0.5)]).to_json()).unwrap();
        let merged = cmd_report(&[p], Some(dir.path())).unwrap();
        assert_eq!(merged.rows.len(), 2);
        assert_eq!(merged.pairs[0].better, "IG+IDGI");
        assert!(dir.path().join("merged.csv").exists());
        assert!(merged.table().contains("IG+IDGI"));
    }

    #[test]
    fn conflicting_settings_warn_and_duplicates_skip() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.json");
        let b = dir.path().join("b.json");
        fs::write(&a, report(&[(false, 0.2), (true, 0.5)]).to_json()).unwrap();
        let mut other = report(&[(false, 0.3), (true, 0.1)]);
        other.config = serde_json::json!({"steps": 200});
        fs::write(&b, other.to_json()).unwrap();
        let merged = cmd_report(&[a, b], None).unwrap();
        assert_eq!(merged.rows.len(), 2);
        assert_eq!(merged.warnings.len(), 3);
    }

    #[test]
    fn empty_input_rejected() {
        assert!(matches!(cmd_report(&[], None), Err(Error::InvalidParameter(_))));
    }
}
