//! Subcommand execution.
//!
//! Each command first resolves and checks its flags without touching the
//! filesystem beyond reads. Only then is the output directory created; from
//! that point on a `run.json` is always written, recording the resolved
//! command (absolute paths, every default filled in) and the outcome.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use manifold_probe::concept::{ShrinkageConfig, VariantUse};
use manifold_probe::curvefit::{fit_logistic, LogisticFit};
use manifold_probe::embedding::{
    validate_manifest, write_embedding_file, DatasetManifest, EmbeddingFileHeader, EmbeddingRecord,
};
use manifold_probe::episodes::{dump_episodes, sample_episode, QueryBudget, SamplerConfig};
use manifold_probe::harness::{
    fit_projector, run_characterization, run_dim_sweep, run_fewshot_eval, run_stem, with_threads,
    write_characterization, write_eval_outputs, CharacterizationConfig, CharacterizationTable, Classifier, EvalSummary,
    PipelineConfig, ProjectorCache, Reduction,
};
use manifold_probe::reduction::FitConfig;
use manifold_probe::report::{generate_report, layer_curve_csv};
use manifold_probe::synth::{sigmoid_separations, write_layered_dataset, GaussianSpec};
use manifold_probe::Error;

use crate::args::*;

pub const RUN_FILE: &str = "run.json";

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Data(_) => "data",
            CliError::Numerical(_) => "numerical",
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numerical(m) => m,
        }
    }

    /// One JSON object on one line.
    pub fn to_line(&self) -> String {
        json!({"error": self.kind(), "exit_code": self.exit_code(), "message": self.message()}).to_string()
    }

    fn to_json(&self) -> Value {
        json!({"kind": self.kind(), "exit_code": self.exit_code(), "message": self.message()})
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_) => CliError::Usage(e.to_string()),
            Error::Numerical(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

/// Errors caused by file contents rather than flags.
fn data(e: Error) -> CliError {
    match e {
        Error::Numerical(_) => CliError::Numerical(e.to_string()),
        _ => CliError::Data(e.to_string()),
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

type CliResult<T> = Result<T, CliError>;

pub fn execute(command: Command) -> CliResult<()> {
    match command {
        Command::Replay(r) => {
            let text = fs::read_to_string(&r.run_json)
                .map_err(|e| usage(format!("cannot read {}: {e}", r.run_json.display())))?;
            let record: Value =
                serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", r.run_json.display())))?;
            let mut inner: Command = serde_json::from_value(record["command"].clone())
                .map_err(|e| usage(format!("{}: no replayable command: {e}", r.run_json.display())))?;
            if let Some(out) = r.out {
                set_out(&mut inner, absolute(&out)?)?;
            }
            execute(inner)
        }
        other => run(other),
    }
}

fn set_out(command: &mut Command, out: PathBuf) -> CliResult<()> {
    let slot = match command {
        Command::Ingest(a) => &mut a.out,
        Command::Characterize(a) => &mut a.out,
        Command::Fewshot(a) => &mut a.out,
        Command::FitLogistic(a) => &mut a.out,
        Command::DimSweep(a) => &mut a.out,
        Command::Report(a) => &mut a.out,
        Command::Synth(a) => &mut a.out,
        Command::Replay(_) => return Err(usage("a run.json cannot record a replay")),
    };
    *slot = out;
    Ok(())
}

/// Work left after flags are resolved; writes into the output directory.
type Job = Box<dyn FnOnce(&Path) -> CliResult<Outcome>>;

struct Outcome {
    artifacts: Vec<PathBuf>,
    /// Fully resolved library configuration, echoed into `run.json`.
    resolved: Value,
    /// One line for stdout.
    summary: String,
}

fn run(command: Command) -> CliResult<()> {
    let (command, out, job) = prepare(command)?;
    fs::create_dir_all(&out).map_err(|e| usage(format!("cannot create output directory {}: {e}", out.display())))?;
    let result = job(&out);
    let mut record = json!({
        "tool": "manifold-probe",
        "version": env!("CARGO_PKG_VERSION"),
        "subcommand": command.name(),
        "seed": command.seed(),
        "command": command,
    });
    match &result {
        Ok(o) => {
            record["status"] = json!("ok");
            record["resolved"] = o.resolved.clone();
            record["artifacts"] = json!(o.artifacts);
        }
        Err(e) => {
            record["status"] = json!("error");
            record["error"] = e.to_json();
        }
    }
    let path = out.join(RUN_FILE);
    let text = serde_json::to_string_pretty(&record).expect("record serializes") + "\n";
    fs::write(&path, text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let outcome = result?;
    println!("{}", outcome.summary);
    Ok(())
}

fn absolute(path: &Path) -> CliResult<PathBuf> {
    std::path::absolute(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn existing(path: &Path, what: &str) -> CliResult<PathBuf> {
    if !path.exists() {
        return Err(usage(format!("{what} not found: {}", path.display())));
    }
    absolute(path)
}

fn load_manifest(path: &Path) -> CliResult<(PathBuf, DatasetManifest)> {
    let path = existing(path, "manifest")?;
    let manifest = DatasetManifest::load(&path).map_err(data)?;
    Ok((path, manifest))
}

fn check_threads(threads: Option<usize>) -> CliResult<()> {
    if threads == Some(0) {
        return Err(usage("--threads must be at least 1"));
    }
    Ok(())
}

fn check_layers(manifest: &DatasetManifest, layers: &[u16]) -> CliResult<()> {
    match layers.iter().find(|l| !manifest.layer_files.contains_key(l)) {
        Some(l) => Err(usage(format!(
            "layer {l} is not listed in manifest for {}",
            manifest.dataset_name
        ))),
        None => Ok(()),
    }
}

fn to_value(v: &impl Serialize) -> Value {
    serde_json::to_value(v).expect("serializable")
}

fn pipeline_config(p: &PipelineArgs, layer: u16, reduction: Reduction) -> CliResult<PipelineConfig> {
    let sampler = SamplerConfig {
        way: p.way,
        shot: p.shot,
        query_per_class: p.queries,
        include_variants: p.variants,
        master_seed: p.seed,
        episode_count: p.episodes,
    };
    let config = PipelineConfig {
        reduction,
        metric: p.metric.into(),
        classifier: match p.classifier {
            ClassifierArg::Knn => Classifier::Knn { k: p.k },
            ClassifierArg::Centroid => Classifier::Centroid,
        },
        shrinkage: ShrinkageConfig {
            lambda: p.lambda,
            ..ShrinkageConfig::default()
        },
        variants: VariantUse {
            as_exemplars: true,
            in_covariance: !p.variants_exemplars_only,
        },
        ica: FitConfig {
            max_iterations: p.ica_iterations,
            tolerance: p.ica_tolerance,
            ica_contrast: p.ica_contrast.into(),
            seed: p.seed,
        },
        ..PipelineConfig::new(layer, sampler)
    };
    config.validate()?;
    check_threads(p.threads)?;
    Ok(config)
}

fn prepare(command: Command) -> CliResult<(Command, PathBuf, Job)> {
    match command {
        Command::Ingest(mut a) => {
            let (path, manifest) = load_manifest(&a.manifest)?;
            a.manifest = path;
            a.out = absolute(&a.out)?;
            let pool = a.pool;
            Ok((
                Command::Ingest(a.clone()),
                a.out,
                Box::new(move |out| ingest(&manifest, pool, out)),
            ))
        }
        Command::Characterize(mut a) => {
            let (path, manifest) = load_manifest(&a.manifest)?;
            a.manifest = path;
            a.out = absolute(&a.out)?;
            if let Some(layers) = &a.layers {
                check_layers(&manifest, &layers.0)?;
            }
            check_threads(a.threads)?;
            let config = CharacterizationConfig {
                layers: a.layers.as_ref().map(|l| l.0.clone()),
                support_per_class: a.support,
                queries: match a.queries_per_class {
                    Some(q) => QueryBudget::PerClass(q),
                    None => QueryBudget::Total(a.queries),
                },
                class_subsample: a.class_subsample,
                k: a.k,
                metric: a.metric.into(),
                shrinkage: ShrinkageConfig {
                    lambda: a.lambda,
                    ..ShrinkageConfig::default()
                },
                seed: a.seed,
            };
            config.shrinkage.validate()?;
            if a.k == 0 || a.support == 0 {
                return Err(usage("--k and --support must be at least 1"));
            }
            let threads = a.threads;
            Ok((
                Command::Characterize(a.clone()),
                a.out,
                Box::new(move |out| characterize(&manifest, &config, threads, out)),
            ))
        }
        Command::Fewshot(mut a) => {
            let (path, manifest) = load_manifest(&a.manifest)?;
            a.manifest = path;
            let fit_path = existing(a.fit_manifest.as_deref().unwrap_or(&a.manifest), "fit manifest")?;
            let fit_manifest = DatasetManifest::load(&fit_path).map_err(data)?;
            a.fit_manifest = Some(fit_path);
            a.out = absolute(&a.out)?;
            let layer = match (a.layer, manifest.layer_ids().as_slice()) {
                (Some(l), _) => l,
                (None, [only]) => *only,
                (None, _) => return Err(usage("--layer is required when the manifest lists several layers")),
            };
            a.layer = Some(layer);
            check_layers(&manifest, &[layer])?;
            check_layers(&fit_manifest, &[layer])?;
            let reduction = reduction_of(a.reduce, a.dims)?;
            let config = pipeline_config(&a.pipeline, layer, reduction)?;
            let (threads, dump) = (a.pipeline.threads, a.dump_episodes);
            Ok((
                Command::Fewshot(a.clone()),
                a.out,
                Box::new(move |out| fewshot(&manifest, &fit_manifest, &config, threads, dump, out)),
            ))
        }
        Command::DimSweep(mut a) => {
            let (path, manifest) = load_manifest(&a.manifest)?;
            a.manifest = path;
            let fit_path = existing(a.fit_manifest.as_deref().unwrap_or(&a.manifest), "fit manifest")?;
            let fit_manifest = DatasetManifest::load(&fit_path).map_err(data)?;
            a.fit_manifest = Some(fit_path);
            a.out = absolute(&a.out)?;
            if a.layers.0.is_empty() || a.dims.0.is_empty() {
                return Err(usage("--layers and --dims must not be empty"));
            }
            if a.dims.0.contains(&0) {
                return Err(usage("--dims entries must be at least 1"));
            }
            check_layers(&manifest, &a.layers.0)?;
            check_layers(&fit_manifest, &a.layers.0)?;
            let base = pipeline_config(&a.pipeline, a.layers.0[0], Reduction::Raw)?;
            let (layers, dims, threads) = (a.layers.0.clone(), a.dims.0.clone(), a.pipeline.threads);
            Ok((
                Command::DimSweep(a.clone()),
                a.out,
                Box::new(move |out| dim_sweep(&manifest, &fit_manifest, &layers, &dims, &base, threads, out)),
            ))
        }
        Command::FitLogistic(mut a) => {
            a.input = existing(&a.input, "input")?;
            a.out = absolute(&a.out)?;
            let input = a.input.clone();
            Ok((
                Command::FitLogistic(a.clone()),
                a.out,
                Box::new(move |out| fit_curve(&input, out)),
            ))
        }
        Command::Report(mut a) => {
            a.inputs = a
                .inputs
                .iter()
                .map(|p| existing(p, "input"))
                .collect::<CliResult<_>>()?;
            a.out = absolute(&a.out)?;
            if a.name.is_empty() || a.name.contains(['/', '\\']) {
                return Err(usage("--name must be a plain file stem"));
            }
            let (inputs, name) = (a.inputs.clone(), a.name.clone());
            Ok((
                Command::Report(a.clone()),
                a.out,
                Box::new(move |out| report(&inputs, &name, out)),
            ))
        }
        Command::Synth(mut a) => {
            a.out = absolute(&a.out)?;
            if a.classes < 2 || a.per_class == 0 || a.dim == 0 || a.layers == 0 {
                return Err(usage(
                    "synth needs at least 2 classes, 1 item per class, 1 dimension and 1 layer",
                ));
            }
            if !(a.max_separation.is_finite() && a.growth.is_finite() && a.midpoint.is_finite()) {
                return Err(usage("separation parameters must be finite"));
            }
            if a.name.is_empty() || a.name.contains(['/', '\\']) {
                return Err(usage("--name must be a plain identifier"));
            }
            let args = a.clone();
            Ok((Command::Synth(a.clone()), a.out, Box::new(move |out| synth(&args, out))))
        }
        Command::Replay(_) => Err(usage("replay cannot be nested")),
    }
}

fn reduction_of(reduce: ReduceArg, dims: Option<usize>) -> CliResult<Reduction> {
    match (reduce, dims) {
        (ReduceArg::Raw, None) => Ok(Reduction::Raw),
        (ReduceArg::Raw, Some(_)) => Err(usage("--dims only applies to --reduce pca or ica")),
        (_, None) => Err(usage("--reduce pca and ica need --dims")),
        (_, Some(0)) => Err(usage("--dims must be at least 1")),
        (ReduceArg::Pca, Some(d)) => Ok(Reduction::Pca(d)),
        (ReduceArg::Ica, Some(d)) => Ok(Reduction::Ica(d)),
    }
}

fn ingest(manifest: &DatasetManifest, pool: bool, out: &Path) -> CliResult<Outcome> {
    let report = validate_manifest(manifest);
    let report_path = out.join("ingest_report.json");
    let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    fs::write(&report_path, text).map_err(|e| CliError::Data(format!("{}: {e}", report_path.display())))?;
    let mut artifacts = vec![report_path];
    if !report.is_ok() {
        let issues = report.all_issues();
        return Err(CliError::Data(format!(
            "{} issue(s), first: {}",
            issues.len(),
            issues[0]
        )));
    }
    if pool {
        let dir = out.join("pooled");
        fs::create_dir_all(&dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
        let mut pooled_manifest = manifest.clone();
        pooled_manifest.base_dir = dir.clone();
        pooled_manifest.layer_files.clear();
        for layer in manifest.layer_ids() {
            let set = manifest.load_layer(layer).map_err(data)?;
            let pooled = set.pooled();
            let records: Vec<EmbeddingRecord> = (0..pooled.len())
                .map(|i| EmbeddingRecord {
                    item_id: pooled.item_ids[i],
                    class_label: pooled.labels[i],
                    variant_id: pooled.variant_ids[i],
                    tokens: pooled.vectors.row(i).iter().map(|&v| v as f32).collect(),
                })
                .collect();
            let header = EmbeddingFileHeader::new(
                pooled.dim() as u32,
                records.len() as u64,
                set.header.class_count,
                layer,
                1,
                set.header.augmented(),
            );
            let name = format!("layer_{layer:02}.feb");
            write_embedding_file(&header, &records, dir.join(&name)).map_err(data)?;
            pooled_manifest.layer_files.insert(layer, name.into());
            artifacts.push(dir.join(format!("layer_{layer:02}.feb")));
        }
        let path = dir.join("manifest.toml");
        pooled_manifest.save(&path).map_err(data)?;
        artifacts.push(path);
    }
    let summary = format!(
        "{} ({}): {} layer file(s) valid",
        report.dataset_name,
        report.split,
        report.layers.len()
    );
    Ok(Outcome {
        artifacts,
        resolved: json!({"dataset": manifest.dataset_name, "layers": manifest.layer_ids(), "pool": pool}),
        summary,
    })
}

fn characterize(
    manifest: &DatasetManifest,
    config: &CharacterizationConfig,
    threads: Option<usize>,
    out: &Path,
) -> CliResult<Outcome> {
    let table = with_threads(threads, || run_characterization(manifest, config))?.map_err(data)?;
    let (json_path, csv_path) = write_characterization(&table, out).map_err(data)?;
    let curve = out.join(format!("{}_layer_curve.csv", table.dataset));
    write_file(&curve, &layer_curve_csv(&table))?;
    let best = table.best_layer().expect("at least one layer");
    let best_acc = table.layers.iter().find(|l| l.layer_id == best).unwrap().accuracy;
    let mut summary = format!(
        "{}: {} layers, best layer {best} at {:.2}%",
        table.dataset,
        table.layers.len(),
        best_acc * 100.0
    );
    if let Some(fit) = &table.fit {
        write!(
            summary,
            ", logistic L {:.4} ({:.2}%) x0 {:.2} R² {:.4}",
            fit.params.asymptote,
            fit.params.asymptote * 100.0,
            fit.params.x0,
            fit.r_squared
        )
        .unwrap();
    }
    Ok(Outcome {
        artifacts: vec![json_path, csv_path, curve],
        resolved: to_value(config),
        summary,
    })
}

fn fewshot(
    manifest: &DatasetManifest,
    fit_manifest: &DatasetManifest,
    config: &PipelineConfig,
    threads: Option<usize>,
    dump: bool,
    out: &Path,
) -> CliResult<Outcome> {
    let set = manifest.load_layer(config.layer_id).map_err(data)?.pooled();
    let projector = if config.reduction == Reduction::Raw {
        fit_projector(&set, Reduction::Raw, &config.ica).map_err(data)?
    } else {
        let train = fit_manifest.load_layer(config.layer_id).map_err(data)?.pooled();
        match ProjectorCache::from_env() {
            Some(cache) => cache.get_or_fit(&train, config.reduction, &config.ica),
            None => fit_projector(&train, config.reduction, &config.ica),
        }
        .map_err(data)?
    };
    let summary = with_threads(threads, || run_fewshot_eval(&set, &projector, config))?
        .map_err(data)?
        .with_dataset(&manifest.dataset_name);
    let (csv, json_path) = write_eval_outputs(&summary, out).map_err(data)?;
    let mut artifacts = vec![csv, json_path];
    if dump {
        let episodes = (0..config.sampler.episode_count as u64)
            .map(|i| sample_episode(&set, &config.sampler, i))
            .collect::<Result<Vec<_>, _>>()
            .map_err(data)?;
        let path = out.join(format!("{}_episodes.txt", run_stem(&summary.dataset, config)));
        write_file(&path, &dump_episodes(&episodes))?;
        artifacts.push(path);
    }
    Ok(Outcome {
        artifacts,
        resolved: to_value(config),
        summary: summary_line(&summary),
    })
}

fn summary_line(s: &EvalSummary) -> String {
    format!(
        "{} {}w{}s L{} {}: {} ({} episodes)",
        s.dataset,
        s.config.sampler.way,
        s.config.sampler.shot,
        s.config.layer_id,
        s.config.reduction.tag(),
        manifold_probe::report::format_cell(s.mean_accuracy, s.ci_halfwidth_95),
        s.episode_count
    )
}

fn dim_sweep(
    manifest: &DatasetManifest,
    fit_manifest: &DatasetManifest,
    layers: &[u16],
    dims: &[usize],
    base: &PipelineConfig,
    threads: Option<usize>,
    out: &Path,
) -> CliResult<Outcome> {
    let cache = ProjectorCache::from_env();
    let cells = with_threads(threads, || {
        run_dim_sweep(manifest, fit_manifest, layers, dims, base, cache.as_ref())
    })?
    .map_err(data)?;
    let mut artifacts = Vec::new();
    let mut csv = String::from("layer,reduction,dim,mean_accuracy,ci_halfwidth_95\n");
    for c in &cells {
        let (a, b) = write_eval_outputs(&c.summary, out).map_err(data)?;
        artifacts.extend([a, b]);
        let dim = c.dim.map(|d| d.to_string()).unwrap_or_default();
        writeln!(
            csv,
            "{},{},{},{},{}",
            c.layer_id,
            c.summary.config.reduction.tag(),
            dim,
            c.summary.mean_accuracy,
            c.summary.ci_halfwidth_95
        )
        .unwrap();
    }
    let sweep = out.join(format!("{}_dim_sweep.csv", manifest.dataset_name));
    write_file(&sweep, &csv)?;
    artifacts.push(sweep);
    let summaries: Vec<EvalSummary> = cells.iter().map(|c| c.summary.clone()).collect();
    let table = generate_report(&summaries).map_err(data)?;
    let (t_csv, t_txt) = table
        .write(out, &format!("{}_dim_sweep_table", manifest.dataset_name))
        .map_err(data)?;
    artifacts.extend([t_csv, t_txt]);
    let configs: Vec<Value> = cells.iter().map(|c| to_value(&c.summary.config)).collect();
    Ok(Outcome {
        artifacts,
        resolved: json!({"base": to_value(base), "layers": layers, "dims": dims, "cells": configs}),
        summary: format!("{}: {} sweep cells", manifest.dataset_name, cells.len()),
    })
}

/// Reads `(x, y)` points from a characterization JSON or a headed CSV.
fn read_points(path: &Path) -> CliResult<Vec<(f64, f64)>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "json") {
        let table: CharacterizationTable = serde_json::from_str(&text)
            .map_err(|e| CliError::Data(format!("{}: not a characterization table: {e}", path.display())))?;
        return Ok(table
            .layers
            .iter()
            .map(|l| (f64::from(l.layer_id), l.accuracy))
            .collect());
    }
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| CliError::Data(format!("{}: empty file", path.display())))?
        .split(',')
        .map(str::trim)
        .collect();
    let column = |names: &[&str]| {
        header
            .iter()
            .position(|h| names.contains(h))
            .ok_or_else(|| CliError::Data(format!("{}: no column named {}", path.display(), names.join(" or "))))
    };
    let (xi, yi) = (column(&["layer", "x"])?, column(&["accuracy", "y"])?);
    lines
        .enumerate()
        .map(|(n, line)| {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let get = |i: usize| {
                fields
                    .get(i)
                    .and_then(|f| f.parse::<f64>().ok())
                    .ok_or_else(|| CliError::Data(format!("{}: bad number on data row {}", path.display(), n + 1)))
            };
            Ok((get(xi)?, get(yi)?))
        })
        .collect()
}

#[derive(Serialize)]
struct FitRecord<'a> {
    input: &'a Path,
    points: Vec<[f64; 2]>,
    fit: LogisticFit,
    /// `L` times 100, for accuracies given as fractions.
    asymptote_percent: f64,
}

fn fit_curve(input: &Path, out: &Path) -> CliResult<Outcome> {
    let points = read_points(input)?;
    let (xs, ys): (Vec<f64>, Vec<f64>) = points.iter().copied().unzip();
    let fit = fit_logistic(&xs, &ys).map_err(data)?;
    let json_path = out.join("logistic_fit.json");
    let record = FitRecord {
        input,
        points: points.iter().map(|&(x, y)| [x, y]).collect(),
        fit,
        asymptote_percent: fit.params.asymptote * 100.0,
    };
    write_file(&json_path, &(serde_json::to_string_pretty(&record).unwrap() + "\n"))?;
    let mut csv = String::from("x,y,fit_value\n");
    for &(x, y) in &points {
        writeln!(csv, "{x},{y},{}", fit.eval(x)).unwrap();
    }
    let csv_path = out.join("logistic_curve.csv");
    write_file(&csv_path, &csv)?;
    Ok(Outcome {
        artifacts: vec![json_path, csv_path],
        resolved: json!({"points": points.len()}),
        summary: format!(
            "L={} ({:.2}%) k={} x0={} R²={:.4}{}",
            fit.params.asymptote,
            fit.params.asymptote * 100.0,
            fit.params.growth,
            fit.params.x0,
            fit.r_squared,
            if fit.converged { "" } else { " (not converged)" }
        ),
    })
}

enum Loaded {
    Summary(Box<EvalSummary>),
    Table(Box<CharacterizationTable>),
}

fn load_json(path: &Path) -> CliResult<Option<Loaded>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    if let Ok(s) = serde_json::from_str::<EvalSummary>(&text) {
        return Ok(Some(Loaded::Summary(Box::new(s))));
    }
    if let Ok(t) = serde_json::from_str::<CharacterizationTable>(&text) {
        return Ok(Some(Loaded::Table(Box::new(t))));
    }
    Ok(None)
}

fn report(inputs: &[PathBuf], name: &str, out: &Path) -> CliResult<Outcome> {
    let mut summaries = Vec::new();
    let mut tables = Vec::new();
    for input in inputs {
        let mut files = Vec::new();
        if input.is_dir() {
            let entries = fs::read_dir(input).map_err(|e| CliError::Data(format!("{}: {e}", input.display())))?;
            for entry in entries {
                let p = entry.map_err(|e| CliError::Data(e.to_string()))?.path();
                if p.extension().is_some_and(|e| e == "json") {
                    files.push((p, false));
                }
            }
            files.sort();
        } else {
            files.push((input.clone(), true));
        }
        for (file, explicit) in files {
            match load_json(&file)? {
                Some(Loaded::Summary(s)) => summaries.push(*s),
                Some(Loaded::Table(t)) => tables.push(*t),
                None if explicit => {
                    return Err(CliError::Data(format!(
                        "{}: neither an evaluation summary nor a characterization table",
                        file.display()
                    )))
                }
                None => {}
            }
        }
    }
    if summaries.is_empty() && tables.is_empty() {
        return Err(CliError::Data("no summaries or characterization tables found".into()));
    }
    let mut artifacts = Vec::new();
    let mut lines = Vec::new();
    if !summaries.is_empty() {
        let table = generate_report(&summaries).map_err(data)?;
        let (csv, txt) = table.write(out, name).map_err(data)?;
        artifacts.extend([csv, txt]);
        lines.push(format!("{} rows x {} columns", table.rows.len(), table.columns.len()));
    }
    for t in &tables {
        let path = out.join(format!("{}_layer_curve.csv", t.dataset));
        write_file(&path, &layer_curve_csv(t))?;
        artifacts.push(path);
    }
    if !tables.is_empty() {
        lines.push(format!("{} layer curve(s)", tables.len()));
    }
    Ok(Outcome {
        artifacts,
        resolved: json!({"summaries": summaries.len(), "characterizations": tables.len()}),
        summary: lines.join(", "),
    })
}

fn synth(a: &SynthArgs, out: &Path) -> CliResult<Outcome> {
    let mut spec = GaussianSpec::new(a.classes, a.per_class, a.dim, a.max_separation);
    spec.variants = a.variants;
    let separations = sigmoid_separations(a.layers, a.max_separation, a.growth, a.midpoint);
    let mut manifest = write_layered_dataset(out, &a.name, &spec, &separations, a.seed)?;
    if manifest.split != a.split {
        manifest.split = a.split.clone();
        manifest.save(out.join("manifest.toml")).map_err(data)?;
    }
    let mut artifacts: Vec<PathBuf> = manifest
        .layer_ids()
        .iter()
        .filter_map(|&l| manifest.layer_path(l))
        .collect();
    artifacts.push(out.join("manifest.toml"));
    Ok(Outcome {
        artifacts,
        resolved: json!({"spec": to_value(&spec), "separations": separations}),
        summary: format!("{}: {} layers written to {}", a.name, a.layers, out.display()),
    })
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_lines_are_single_line_json() {
        let e = CliError::Data("bad\nthing".into());
        let line = e.to_line();
        assert!(!line.contains('\n'));
        let v: Value = serde_json::from_str(&line).unwrap();
        assert_eq!(v["exit_code"], 3);
        assert_eq!(v["error"], "data");
    }

    #[test]
    fn core_errors_map_to_exit_codes() {
        assert_eq!(CliError::from(Error::InvalidArgument("x".into())).exit_code(), 2);
        assert_eq!(CliError::from(Error::InsufficientData("x".into())).exit_code(), 3);
        assert_eq!(CliError::from(Error::Numerical("x".into())).exit_code(), 4);
        assert_eq!(data(Error::InvalidArgument("x".into())).exit_code(), 3);
    }

    #[test]
    fn reductions_need_matching_dims() {
        assert_eq!(reduction_of(ReduceArg::Raw, None).unwrap(), Reduction::Raw);
        assert_eq!(reduction_of(ReduceArg::Pca, Some(64)).unwrap(), Reduction::Pca(64));
        assert!(reduction_of(ReduceArg::Raw, Some(64)).is_err());
        assert!(reduction_of(ReduceArg::Ica, None).is_err());
        assert!(reduction_of(ReduceArg::Pca, Some(0)).is_err());
    }

    #[test]
    fn csv_points_by_column_name() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        fs::write(&p, "correct,accuracy,layer\n3,0.5,1\n4,0.75,2\n").unwrap();
        assert_eq!(read_points(&p).unwrap(), vec![(1.0, 0.5), (2.0, 0.75)]);
        fs::write(&p, "a,b\n1,2\n").unwrap();
        assert_eq!(read_points(&p).unwrap_err().exit_code(), 3);
    }
}
