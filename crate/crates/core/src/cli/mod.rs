//! The `pathattr` command line: `attribute`, `eval`, `train-toy` and `report`.
//!
//! Every subcommand works from a [`RunConfig`], read from an optional JSON file and
//! then overridden by flags. `PATHATTR_SEED` overrides the file's seed; an explicit
//! `--seed` wins over both.

mod commands;
mod report;

pub use commands::{cmd_attribute, cmd_eval, cmd_train_toy, TrainSummary};
pub use report::{
    cmd_report, AggregateRow, EvalReport, ImageRecord, MergedReport, MergedRow, Warnings,
    REPORT_FORMAT, REPORT_VERSION,
};

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrators::{AttributeOptions, Baseline, Method};
use crate::metrics::{InfoLevel, DEFAULT_INSERTION_STEP};
use crate::models::{Architecture, SyntheticTask, TaskKind, TrainConfig};
use crate::paths::{DEFAULT_MAX_SIGMA, DEFAULT_STEPS};

pub const SEED_ENV: &str = "PATHATTR_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricKind {
    Insertion,
    AicSic,
    Loc,
}

impl MetricKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Insertion => "insertion",
            MetricKind::AicSic => "aic-sic",
            MetricKind::Loc => "loc",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "insertion" => Ok(MetricKind::Insertion),
            "aic-sic" | "aic" | "sic" => Ok(MetricKind::AicSic),
            "loc" | "localization" => Ok(MetricKind::Loc),
            other => Err(Error::invalid(format!(
                "unknown metric '{other}' (expected insertion, aic-sic or loc)"
            ))),
        }
    }
}

/// Everything a run needs. Serialized as the JSON config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: Option<PathBuf>,
    pub inputs: Vec<PathBuf>,
    /// Directory of masks named like their images.
    pub masks: Option<PathBuf>,
    /// Evaluate on this many generated task samples instead of image files.
    pub synthetic: Option<usize>,
    pub methods: Vec<Method>,
    pub idgi: bool,
    /// Run every path method both plain and with IDGI.
    pub compare: bool,
    pub steps: usize,
    /// `black`, `white` or a PNG path.
    pub baseline: String,
    pub max_sigma: f64,
    /// Explain this class instead of the predicted one.
    pub class: Option<usize>,
    pub metrics: Vec<MetricKind>,
    pub info_level: InfoLevel,
    pub insertion_step: f64,
    pub thresholds: usize,
    pub bins: usize,
    pub seed: u64,
    pub jobs: usize,
    pub out: PathBuf,
    pub task: SyntheticTask,
    pub train: TrainConfig,
    pub min_accuracy: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: None,
            inputs: Vec::new(),
            masks: None,
            synthetic: None,
            methods: vec![Method::Ig],
            idgi: false,
            compare: false,
            steps: DEFAULT_STEPS,
            baseline: "black".into(),
            max_sigma: DEFAULT_MAX_SIGMA,
            class: None,
            metrics: vec![MetricKind::Insertion],
            info_level: InfoLevel::Msssim,
            insertion_step: DEFAULT_INSERTION_STEP,
            thresholds: 25,
            bins: 100,
            seed: 0,
            jobs: 1,
            out: PathBuf::from("pathattr-out"),
            task: SyntheticTask::default(),
            train: TrainConfig::default(),
            min_accuracy: 0.9,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::invalid(format!("config: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::invalid("steps must be at least 1"));
        }
        if !(self.max_sigma > 0.0 && self.max_sigma.is_finite()) {
            return Err(Error::invalid("max-sigma must be positive and finite"));
        }
        if self.methods.is_empty() {
            return Err(Error::invalid("no attribution method selected"));
        }
        if self.idgi && !self.compare && self.methods.contains(&Method::Vanilla) {
            return Err(Error::invalid("IDGI does not apply to the vanilla gradient"));
        }
        if !(self.insertion_step > 0.0 && self.insertion_step <= 1.0) {
            return Err(Error::invalid("insertion step must be in (0, 1]"));
        }
        if self.thresholds < 2 || self.bins < 2 {
            return Err(Error::invalid("thresholds and bins must be at least 2"));
        }
        if self.jobs == 0 {
            return Err(Error::invalid("jobs must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.min_accuracy) {
            return Err(Error::invalid("min-accuracy must lie in [0, 1]"));
        }
        Ok(())
    }

    /// `(method, idgi)` pairs in run order.
    pub fn combinations(&self) -> Vec<(Method, bool)> {
        let mut out = Vec::new();
        for &m in &self.methods {
            if m == Method::Vanilla {
                out.push((m, false));
            } else if self.compare {
                out.push((m, false));
                out.push((m, true));
            } else {
                out.push((m, self.idgi));
            }
        }
        out.dedup();
        out
    }

    pub fn attribute_options(&self) -> Result<AttributeOptions<f64>> {
        let baseline = match self.baseline.as_str() {
            "black" => Baseline::Black,
            "white" => Baseline::White,
            path => Baseline::Image(crate::io::read_png(path)?),
        };
        Ok(AttributeOptions {
            steps: self.steps,
            baseline,
            max_sigma: self.max_sigma,
            ..AttributeOptions::default()
        })
    }

    fn apply_seed_env(&mut self, value: Option<String>) -> Result<()> {
        if let Some(v) = value {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?;
        }
        Ok(())
    }
}

#[derive(Debug, Parser)]
#[command(name = "pathattr", version, about = "Path-integrated gradient attributions and their evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write attribution tensors, sidecars and heatmaps for each image and method.
    Attribute(RunArgs),
    /// Score attributions with insertion, AIC/SIC and localization metrics.
    Eval(RunArgs),
    /// Train a toy classifier on a synthetic task.
    TrainToy(RunArgs),
    /// Merge evaluation reports into one comparison table.
    Report(ReportArgs),
}

#[derive(Debug, Default, Args)]
pub struct RunArgs {
    /// JSON config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Input PNG (repeatable).
    #[arg(long = "input")]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub masks: Option<PathBuf>,
    /// Use N generated task samples as the image set.
    #[arg(long)]
    pub synthetic: Option<usize>,
    /// vanilla, ig, gig, blurig (comma separated or repeated).
    #[arg(long = "method", value_delimiter = ',')]
    pub methods: Vec<Method>,
    #[arg(long)]
    pub idgi: bool,
    /// Run both plain and IDGI variants.
    #[arg(long)]
    pub compare: bool,
    #[arg(long)]
    pub steps: Option<usize>,
    /// black, white or a PNG path.
    #[arg(long)]
    pub baseline: Option<String>,
    #[arg(long)]
    pub max_sigma: Option<f64>,
    #[arg(long)]
    pub class: Option<usize>,
    /// insertion, aic-sic, loc (comma separated or repeated).
    #[arg(long = "metric", value_delimiter = ',')]
    pub metrics: Vec<MetricKind>,
    /// entropy or msssim.
    #[arg(long)]
    pub info_level: Option<InfoLevel>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Synthetic task name.
    #[arg(long)]
    pub task: Option<String>,
    #[arg(long)]
    pub architecture: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub min_accuracy: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// report.json files to merge.
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl RunArgs {
    /// Config file (or defaults), then `PATHATTR_SEED`, then flags.
    pub fn resolve(&self, seed_env: Option<String>) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        cfg.apply_seed_env(seed_env)?;
        if let Some(v) = &self.model {
            cfg.model = Some(v.clone());
        }
        if !self.inputs.is_empty() {
            cfg.inputs = self.inputs.clone();
        }
        if let Some(v) = &self.masks {
            cfg.masks = Some(v.clone());
        }
        if let Some(v) = self.synthetic {
            cfg.synthetic = Some(v);
        }
        if !self.methods.is_empty() {
            cfg.methods = self.methods.clone();
        }
        cfg.idgi |= self.idgi;
        cfg.compare |= self.compare;
        if let Some(v) = self.steps {
            cfg.steps = v;
        }
        if let Some(v) = &self.baseline {
            cfg.baseline = v.clone();
        }
        if let Some(v) = self.max_sigma {
            cfg.max_sigma = v;
        }
        if let Some(v) = self.class {
            cfg.class = Some(v);
        }
        if !self.metrics.is_empty() {
            cfg.metrics = self.metrics.clone();
        }
        if let Some(v) = self.info_level {
            cfg.info_level = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.jobs {
            cfg.jobs = v;
        }
        if let Some(v) = &self.out {
            cfg.out = v.clone();
        }
        if let Some(v) = &self.task {
            cfg.task.kind = TaskKind::from_str(v)?;
        }
        if let Some(v) = &self.architecture {
            cfg.train.architecture = Architecture::from_str(v)?;
        }
        if let Some(v) = self.epochs {
            cfg.train.epochs = v;
        }
        if let Some(v) = self.learning_rate {
            cfg.train.learning_rate = v;
        }
        if let Some(v) = self.min_accuracy {
            cfg.min_accuracy = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let seed_env = std::env::var(SEED_ENV).ok();
    match cli.command {
        Command::Attribute(args) => {
            let written = cmd_attribute(&args.resolve(seed_env)?)?;
            println!("wrote {} attribution(s)", written.len());
        }
        Command::Eval(args) => {
            let report = cmd_eval(&args.resolve(seed_env)?)?;
            print!("{}", report.table());
        }
        Command::TrainToy(args) => {
            let s = cmd_train_toy(&args.resolve(seed_env)?)?;
            println!(
                "held-out accuracy {:.4} after {} epochs; weights in {}",
                s.test_accuracy,
                s.epochs,
                s.weights.display()
            );
        }
        Command::Report(args) => {
            let merged = cmd_report(&args.inputs, args.out.as_deref())?;
            for w in &merged.warnings {
                eprintln!("warning: {w}");
            }
            print!("{}", merged.table());
        }
    }
    Ok(())
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
