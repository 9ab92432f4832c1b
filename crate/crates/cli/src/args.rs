use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use manifold_probe::concept::Metric;
use manifold_probe::reduction::Contrast;

#[derive(Debug, Parser)]
#[command(
    name = "manifold-probe",
    version,
    about = "Few-shot probing of frozen backbone embeddings"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Validate a manifest and its layer files, optionally writing token-pooled copies.
    Ingest(IngestArgs),
    /// Many-way accuracy per layer with a logistic fit over the layer curve.
    Characterize(CharacterizeArgs),
    /// Episodic few-shot evaluation on one layer.
    Fewshot(FewshotArgs),
    /// Fit a logistic curve to (layer, accuracy) points.
    FitLogistic(FitLogisticArgs),
    /// Few-shot accuracy across PCA dimensions, with a raw baseline.
    DimSweep(DimSweepArgs),
    /// Comparison tables from evaluation summaries.
    Report(ReportArgs),
    /// Write a synthetic layered Gaussian dataset.
    Synth(SynthArgs),
    /// Re-run the command recorded in a run.json.
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::Characterize(_) => "characterize",
            Command::Fewshot(_) => "fewshot",
            Command::FitLogistic(_) => "fit-logistic",
            Command::DimSweep(_) => "dim-sweep",
            Command::Report(_) => "report",
            Command::Synth(_) => "synth",
            Command::Replay(_) => "replay",
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Command::Characterize(a) => Some(a.seed),
            Command::Fewshot(a) => Some(a.pipeline.seed),
            Command::DimSweep(a) => Some(a.pipeline.seed),
            Command::Synth(a) => Some(a.seed),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct IngestArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Mean-pool token matrices and write single-vector layer files plus a manifest.
    #[arg(long)]
    pub pool: bool,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct CharacterizeArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub seed: u64,
    /// Support items per class.
    #[arg(long, default_value_t = 64)]
    pub support: usize,
    /// Query items in total, spread over classes.
    #[arg(long, default_value_t = 300, conflicts_with = "queries_per_class")]
    pub queries: usize,
    #[arg(long)]
    pub queries_per_class: Option<usize>,
    #[arg(long, default_value_t = 15)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = MetricArg::Mahalanobis)]
    pub metric: MetricArg,
    /// Layer ids such as `1..24` or `3,7,12`; all manifest layers when absent.
    #[arg(long)]
    pub layers: Option<IdList<u16>>,
    /// Use a random subset of this many classes.
    #[arg(long)]
    pub class_subsample: Option<usize>,
    #[arg(long, default_value_t = 0.5)]
    pub lambda: f64,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

/// Options shared by `fewshot` and `dim-sweep`.
#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct PipelineArgs {
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 5)]
    pub way: usize,
    #[arg(long, default_value_t = 5)]
    pub shot: usize,
    /// Query items per class and episode.
    #[arg(long, default_value_t = 15)]
    pub queries: usize,
    #[arg(long, default_value_t = 600)]
    pub episodes: usize,
    #[arg(long, value_enum, default_value_t = MetricArg::Mahalanobis)]
    pub metric: MetricArg,
    #[arg(long, value_enum, default_value_t = ClassifierArg::Knn)]
    pub classifier: ClassifierArg,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Add the augmented variants of each support item.
    #[arg(long)]
    pub variants: bool,
    /// Keep variants out of the covariance estimate.
    #[arg(long, requires = "variants")]
    pub variants_exemplars_only: bool,
    #[arg(long, default_value_t = 0.5)]
    pub lambda: f64,
    #[arg(long, value_enum, default_value_t = ContrastArg::Logcosh)]
    pub ica_contrast: ContrastArg,
    #[arg(long, default_value_t = 400)]
    pub ica_iterations: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub ica_tolerance: f64,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct FewshotArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Split the projector is fitted on; defaults to `--manifest`.
    #[arg(long)]
    pub fit_manifest: Option<PathBuf>,
    /// Required when the manifest lists more than one layer.
    #[arg(long)]
    pub layer: Option<u16>,
    #[arg(long, value_enum, default_value_t = ReduceArg::Raw)]
    pub reduce: ReduceArg,
    /// Output dimension for `pca` and `ica`.
    #[arg(long)]
    pub dims: Option<usize>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Also write the sampled episodes as text.
    #[arg(long)]
    pub dump_episodes: bool,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct DimSweepArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub fit_manifest: Option<PathBuf>,
    #[arg(long)]
    pub layers: IdList<u16>,
    #[arg(long, default_value = "512,256,128,64")]
    pub dims: IdList<usize>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct FitLogisticArgs {
    /// CSV with a header naming `layer` (or `x`) and `accuracy` (or `y`) columns,
    /// or a characterization JSON.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ReportArgs {
    /// Summary or characterization JSON files, or directories holding them.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, default_value = "comparison")]
    pub name: String,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SynthArgs {
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value = "synthetic")]
    pub name: String,
    #[arg(long, default_value = "train")]
    pub split: String,
    #[arg(long, default_value_t = 20)]
    pub classes: u32,
    #[arg(long, default_value_t = 100)]
    pub per_class: u64,
    #[arg(long, default_value_t = 16)]
    pub dim: u32,
    #[arg(long, default_value_t = 24)]
    pub layers: u16,
    /// Class-mean separation reached by the last layers.
    #[arg(long, default_value_t = 6.0)]
    pub max_separation: f64,
    #[arg(long, default_value_t = 0.5)]
    pub growth: f64,
    #[arg(long, default_value_t = 12.0)]
    pub midpoint: f64,
    /// Augmented copies per item.
    #[arg(long, default_value_t = 0)]
    pub variants: u16,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    pub run_json: PathBuf,
    /// Write to this directory instead of the recorded one.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReduceArg {
    Raw,
    Pca,
    Ica,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricArg {
    Mahalanobis,
    Euclidean,
    Cosine,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Mahalanobis => Metric::Mahalanobis,
            MetricArg::Euclidean => Metric::Euclidean,
            MetricArg::Cosine => Metric::Cosine,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierArg {
    Knn,
    Centroid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContrastArg {
    Logcosh,
    Cube,
}

impl From<ContrastArg> for Contrast {
    fn from(c: ContrastArg) -> Self {
        match c {
            ContrastArg::Logcosh => Contrast::Logcosh,
            ContrastArg::Cube => Contrast::Cube,
        }
    }
}

/// Comma-separated ids and inclusive `a..b` ranges, e.g. `1..4,9`.
/// Duplicates are dropped; order is ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IdList<T>(pub Vec<T>);

impl<T: Ord + Copy + TryFrom<u64>> FromStr for IdList<T> {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let num = |t: &str| {
            t.trim()
                .parse::<u64>()
                .map_err(|_| format!("not a valid number: {t:?}"))
        };
        let narrow = |v: u64| T::try_from(v).map_err(|_| format!("{v} is out of range"));
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim) {
            if part.is_empty() {
                return Err(format!("empty entry in {s:?}"));
            }
            match part.split_once("..") {
                Some((a, b)) => {
                    let (a, b) = (num(a)?, num(b.trim_start_matches('='))?);
                    if a > b {
                        return Err(format!("empty range {part:?}"));
                    }
                    if b - a >= 1 << 20 {
                        return Err(format!("range {part:?} is too long"));
                    }
                    for v in a..=b {
                        out.push(narrow(v)?);
                    }
                }
                None => out.push(narrow(num(part)?)?),
            }
        }
        out.sort_unstable();
        out.dedup();
        Ok(IdList(out))
    }
}

impl<T: fmt::Display> fmt::Display for IdList<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(ToString::to_string).collect();
        f.write_str(&parts.join(","))
    }
}
