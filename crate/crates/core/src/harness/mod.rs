//! End-to-end evaluation: episodic few-shot runs, the layer-wise
//! characterization protocol and PCA dimension sweeps.

mod cache;
mod output;

pub use cache::{ProjectorCache, CACHE_ENV};
pub use output::{read_summary, run_stem, write_characterization, write_eval_outputs};

use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::concept::{
    build_dictionary_with, classify_centroid, classify_knn, pairwise_distances, ConceptDictionary, LabeledVectors,
    Metric, ScoreMode, ShrinkageConfig, VariantUse,
};
use crate::curvefit::{fit_logistic, LogisticFit};
use crate::embedding::{DatasetManifest, PooledEmbeddings};
use crate::episodes::{sample_characterization_split, sample_episode, Episode, QueryBudget, SamplerConfig};
use crate::error::{Error, Result};
use crate::reduction::{fit_ica, fit_pca, FitConfig, LinearProjector, ProjectorKind};

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959964;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "dim", rename_all = "lowercase")]
pub enum Reduction {
    Raw,
    Pca(usize),
    Ica(usize),
}

impl Reduction {
    /// `raw`, `pca512`, `ica64`
    pub fn tag(&self) -> String {
        match self {
            Reduction::Raw => "raw".into(),
            Reduction::Pca(d) => format!("pca{d}"),
            Reduction::Ica(d) => format!("ica{d}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Classifier {
    Knn { k: usize },
    Centroid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub layer_id: u16,
    pub reduction: Reduction,
    pub metric: Metric,
    pub classifier: Classifier,
    pub shrinkage: ShrinkageConfig,
    pub variants: VariantUse,
    /// ICA fitting parameters; unused for raw and PCA.
    pub ica: FitConfig,
    pub sampler: SamplerConfig,
}

impl PipelineConfig {
    /// Mahalanobis 5-NN on raw features.
    pub fn new(layer_id: u16, sampler: SamplerConfig) -> Self {
        Self {
            layer_id,
            reduction: Reduction::Raw,
            metric: Metric::Mahalanobis,
            classifier: Classifier::Knn { k: 5 },
            shrinkage: ShrinkageConfig::default(),
            variants: VariantUse::default(),
            ica: FitConfig {
                seed: sampler.master_seed,
                ..FitConfig::default()
            },
            sampler,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sampler.validate()?;
        self.shrinkage.validate()?;
        self.ica.validate()?;
        match self.reduction {
            Reduction::Pca(0) | Reduction::Ica(0) => {
                return Err(Error::invalid("reduction dimension must be at least 1"))
            }
            _ => {}
        }
        if let Classifier::Knn { k: 0 } = self.classifier {
            return Err(Error::invalid("k must be at least 1"));
        }
        Ok(())
    }

    /// Canonical JSON of the full configuration.
    pub fn fingerprint(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub episode_index: u64,
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

impl EpisodeResult {
    fn new(episode_index: u64, correct: usize, total: usize) -> Self {
        Self {
            episode_index,
            correct,
            total,
            accuracy: correct as f64 / total as f64,
        }
    }
}

/// Accuracies are fractions in `[0, 1]`; reports convert to percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub dataset: String,
    pub mean_accuracy: f64,
    pub ci_halfwidth_95: f64,
    pub episode_count: usize,
    pub config: PipelineConfig,
    pub config_fingerprint: String,
    pub wall_time_secs: f64,
    pub per_episode: Vec<EpisodeResult>,
}

impl EvalSummary {
    pub fn from_results(config: &PipelineConfig, per_episode: Vec<EpisodeResult>, wall_time_secs: f64) -> Result<Self> {
        let accuracies: Vec<f64> = per_episode.iter().map(|r| r.accuracy).collect();
        let (mean, halfwidth) = confidence_interval(&accuracies)?;
        Ok(Self {
            dataset: String::new(),
            mean_accuracy: mean,
            ci_halfwidth_95: halfwidth,
            episode_count: per_episode.len(),
            config: *config,
            config_fingerprint: config.fingerprint(),
            wall_time_secs,
            per_episode,
        })
    }

    pub fn with_dataset(mut self, dataset: impl Into<String>) -> Self {
        self.dataset = dataset.into();
        self
    }

    /// Copy with the timing zeroed, for reproducibility comparisons.
    pub fn without_timing(&self) -> Self {
        Self {
            wall_time_secs: 0.0,
            ..self.clone()
        }
    }
}

/// Mean and normal-approximation 95% halfwidth `z s / sqrt(n)`, `s` the sample standard deviation.
pub fn confidence_interval(values: &[f64]) -> Result<(f64, f64)> {
    if values.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "a confidence interval needs at least 2 values, got {}",
            values.len()
        )));
    }
    if values.iter().all(|&v| v == values[0]) {
        return Ok((values[0], 0.0));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, Z_95 * var.sqrt() / n.sqrt()))
}

/// Fits the configured projector on the original (non-augmented) rows of `train`.
///
/// The result is rounded to on-disk precision so cached and fresh projectors agree.
pub fn fit_projector(train: &PooledEmbeddings, reduction: Reduction, ica: &FitConfig) -> Result<LinearProjector> {
    let data = train.select_rows(&train.original_rows());
    let p = match reduction {
        Reduction::Raw => LinearProjector::identity(train.dim()),
        Reduction::Pca(d) => fit_pca(&data, d)?,
        Reduction::Ica(d) => fit_ica(&data, d, ica)?,
    };
    Ok(p.quantized())
}

fn check_projector(set: &PooledEmbeddings, projector: &LinearProjector, reduction: Reduction) -> Result<()> {
    if projector.input_dim() != set.dim() {
        return Err(Error::DimensionMismatch {
            expected: set.dim(),
            actual: projector.input_dim(),
        });
    }
    let expected_kind = match reduction {
        Reduction::Raw => ProjectorKind::Identity,
        Reduction::Pca(_) => ProjectorKind::Pca,
        Reduction::Ica(_) => ProjectorKind::Ica,
    };
    if projector.kind != expected_kind {
        return Err(Error::invalid(format!(
            "projector kind {:?} does not match reduction {}",
            projector.kind,
            reduction.tag()
        )));
    }
    if let Reduction::Pca(d) | Reduction::Ica(d) = reduction {
        if projector.output_dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: projector.output_dim(),
            });
        }
    }
    Ok(())
}

/// Projects an episode's support into a dictionary and returns it with the projected queries.
pub fn episode_dictionary(
    episode: &Episode,
    set: &PooledEmbeddings,
    projector: &LinearProjector,
    config: &PipelineConfig,
) -> Result<(ConceptDictionary, DMatrix<f64>)> {
    let rows: Vec<usize> = episode.support.iter().map(|r| r.row).collect();
    let support = LabeledVectors {
        class_count: episode.way,
        labels: episode.support.iter().map(|r| r.label).collect(),
        is_variant: episode.support.iter().map(|r| r.variant_id != 0).collect(),
        vectors: projector.project_rows(&set.select_rows(&rows))?,
    };
    let dictionary = build_dictionary_with(&support, &config.shrinkage, config.variants)?;
    let query_rows: Vec<usize> = episode.query.iter().map(|r| r.row).collect();
    let queries = projector.project_rows(&set.select_rows(&query_rows))?;
    Ok((dictionary, queries))
}

/// Classifies every query of one episode and counts the correct labels.
pub fn run_episode(
    episode: &Episode,
    set: &PooledEmbeddings,
    projector: &LinearProjector,
    config: &PipelineConfig,
) -> Result<EpisodeResult> {
    let (dictionary, queries) = episode_dictionary(episode, set, projector, config)?;
    let mode = match config.classifier {
        Classifier::Knn { .. } => ScoreMode::Exemplar,
        Classifier::Centroid => ScoreMode::Centroid,
    };
    let table = pairwise_distances(&queries, &dictionary, config.metric, mode)?;
    let mut correct = 0;
    for (i, q) in episode.query.iter().enumerate() {
        let row = table.row(i);
        let predicted = match config.classifier {
            Classifier::Knn { k } => classify_knn(&row, &table.labels, k)?,
            Classifier::Centroid => classify_centroid(&row, &table.labels)?,
        };
        if predicted == q.label {
            correct += 1;
        }
    }
    Ok(EpisodeResult::new(episode.index, correct, episode.query.len()))
}

/// Runs `episode_count` episodes on the current rayon pool.
///
/// Each episode draws from its own derived seed and results are kept in
/// episode order, so the summary does not depend on the thread count.
pub fn run_fewshot_eval(
    set: &PooledEmbeddings,
    projector: &LinearProjector,
    config: &PipelineConfig,
) -> Result<EvalSummary> {
    config.validate()?;
    check_projector(set, projector, config.reduction)?;
    if set.layer_id != config.layer_id {
        return Err(Error::invalid(format!(
            "embeddings are from layer {}, config asks for layer {}",
            set.layer_id, config.layer_id
        )));
    }
    let start = Instant::now();
    let per_episode = (0..config.sampler.episode_count as u64)
        .into_par_iter()
        .map(|i| {
            let episode = sample_episode(set, &config.sampler, i)?;
            run_episode(&episode, set, projector, config)
        })
        .collect::<Result<Vec<_>>>()?;
    EvalSummary::from_results(config, per_episode, start.elapsed().as_secs_f64())
}

/// Runs `f` on a dedicated pool of `threads` workers, or on the global pool for `None`.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(Error::invalid("thread count must be at least 1")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacterizationConfig {
    /// `None` means every layer in the manifest.
    pub layers: Option<Vec<u16>>,
    pub support_per_class: usize,
    pub queries: QueryBudget,
    pub class_subsample: Option<usize>,
    pub k: usize,
    pub metric: Metric,
    pub shrinkage: ShrinkageConfig,
    pub seed: u64,
}

impl CharacterizationConfig {
    /// 64 support images per class, 300 queries in total, Mahalanobis 15-NN.
    pub fn new(seed: u64) -> Self {
        Self {
            layers: None,
            support_per_class: 64,
            queries: QueryBudget::Total(300),
            class_subsample: None,
            k: 15,
            metric: Metric::Mahalanobis,
            shrinkage: ShrinkageConfig::default(),
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerAccuracy {
    pub layer_id: u16,
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacterizationTable {
    pub dataset: String,
    pub config: CharacterizationConfig,
    /// Ascending layer id.
    pub layers: Vec<LayerAccuracy>,
    /// Logistic fit of accuracy against layer id, when one is possible.
    pub fit: Option<LogisticFit>,
}

impl CharacterizationTable {
    pub fn best_layer(&self) -> Option<u16> {
        self.layers
            .iter()
            .max_by(|a, b| a.accuracy.total_cmp(&b.accuracy).then(b.layer_id.cmp(&a.layer_id)))
            .map(|l| l.layer_id)
    }
}

/// Accuracy of one characterization split on one layer's raw features.
pub fn characterize_layer(set: &PooledEmbeddings, config: &CharacterizationConfig) -> Result<LayerAccuracy> {
    let episode = sample_characterization_split(
        set,
        config.support_per_class,
        config.queries,
        config.class_subsample,
        false,
        config.seed,
    )?;
    let mut sampler = SamplerConfig::new(episode.way, config.support_per_class, config.seed);
    sampler.episode_count = 1;
    let pipeline = PipelineConfig {
        metric: config.metric,
        classifier: Classifier::Knn { k: config.k },
        shrinkage: config.shrinkage,
        ..PipelineConfig::new(set.layer_id, sampler)
    };
    let r = run_episode(&episode, set, &LinearProjector::identity(set.dim()), &pipeline)?;
    Ok(LayerAccuracy {
        layer_id: set.layer_id,
        correct: r.correct,
        total: r.total,
        accuracy: r.accuracy,
    })
}

/// Characterization accuracy per layer, then a logistic fit over the layer curve.
///
/// Every layer uses the same seed and thus the same split of item ids.
pub fn run_characterization(
    manifest: &DatasetManifest,
    config: &CharacterizationConfig,
) -> Result<CharacterizationTable> {
    config.shrinkage.validate()?;
    if config.k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let mut layers = config.layers.clone().unwrap_or_else(|| manifest.layer_ids());
    layers.sort_unstable();
    layers.dedup();
    if layers.is_empty() {
        return Err(Error::InsufficientData("no layers to characterize".into()));
    }
    let mut rows = Vec::with_capacity(layers.len());
    for &layer in &layers {
        let set = manifest.load_layer(layer)?.pooled();
        rows.push(characterize_layer(&set, config)?);
    }
    let fit = if rows.len() >= 4 {
        let xs: Vec<f64> = rows.iter().map(|r| f64::from(r.layer_id)).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.accuracy).collect();
        Some(fit_logistic(&xs, &ys)?)
    } else {
        None
    };
    Ok(CharacterizationTable {
        dataset: manifest.dataset_name.clone(),
        config: config.clone(),
        layers: rows,
        fit,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub layer_id: u16,
    /// `None` for the raw baseline.
    pub dim: Option<usize>,
    pub summary: EvalSummary,
}

/// Few-shot accuracy for every `(layer, dim)` pair plus a raw baseline per layer.
///
/// PCA projectors are fitted per layer on `fit_manifest` and reused through
/// `cache` when one is given. `base` supplies everything but layer and reduction.
pub fn run_dim_sweep(
    eval_manifest: &DatasetManifest,
    fit_manifest: &DatasetManifest,
    layers: &[u16],
    dims: &[usize],
    base: &PipelineConfig,
    cache: Option<&ProjectorCache>,
) -> Result<Vec<SweepCell>> {
    if layers.is_empty() || dims.is_empty() {
        return Err(Error::invalid(
            "dimension sweep needs at least one layer and one dimension",
        ));
    }
    let mut cells = Vec::new();
    for &layer in layers {
        let set = eval_manifest.load_layer(layer)?.pooled();
        let train = fit_manifest.load_layer(layer)?.pooled();
        let mut reductions = vec![Reduction::Raw];
        reductions.extend(dims.iter().map(|&d| Reduction::Pca(d)));
        for reduction in reductions {
            let config = PipelineConfig {
                layer_id: layer,
                reduction,
                ..*base
            };
            let projector = match cache {
                Some(c) => c.get_or_fit(&train, reduction, &config.ica)?,
                None => fit_projector(&train, reduction, &config.ica)?,
            };
            let summary = run_fewshot_eval(&set, &projector, &config)?.with_dataset(&eval_manifest.dataset_name);
            cells.push(SweepCell {
                layer_id: layer,
                dim: match reduction {
                    Reduction::Pca(d) => Some(d),
                    _ => None,
                },
                summary,
            });
        }
    }
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{gaussian_classes, GaussianSpec};

    #[test]
    fn interval_of_constant_values() {
        let (m, h) = confidence_interval(&[0.7; 10]).unwrap();
        assert!((m - 0.7).abs() < 1e-15);
        assert_eq!(h, 0.0);
        assert!(confidence_interval(&[1.0]).is_err());
    }

    #[test]
    fn interval_of_balanced_binary_values() {
        let values: Vec<f64> = (0..600).map(|i| (i % 2) as f64).collect();
        let (m, h) = confidence_interval(&values).unwrap();
        // s^2 = 600 * 0.25 / 599
        let s = (150.0f64 / 599.0).sqrt();
        assert_eq!(m, 0.5);
        assert!((h - Z_95 * s / 600f64.sqrt()).abs() < 1e-15);
        assert!((h - 0.0400).abs() < 5e-5);
    }

    #[test]
    fn fingerprint_is_stable_json() {
        let c = PipelineConfig::new(3, SamplerConfig::new(5, 1, 9));
        let f = c.fingerprint();
        assert_eq!(f, c.fingerprint());
        let back: PipelineConfig = serde_json::from_str(&f).unwrap();
        assert_eq!(back, c);
        assert!(f.contains("\"reduction\":{\"kind\":\"raw\"}"), "{f}");
    }

    #[test]
    fn one_shot_five_way_counts_75_queries() {
        let set = gaussian_classes(&GaussianSpec::new(6, 20, 3, 4.0), 1).pooled();
        let config = PipelineConfig::new(1, SamplerConfig::new(5, 1, 2));
        let episode = sample_episode(&set, &config.sampler, 0).unwrap();
        let r = run_episode(&episode, &set, &LinearProjector::identity(3), &config).unwrap();
        assert_eq!(r.total, 75);
        assert!(r.correct <= r.total);
    }

    #[test]
    fn duplicated_points_are_recognized() {
        // one distinct point per class: every query coincides with its class's support
        let mut spec = GaussianSpec::new(5, 20, 4, 3.0);
        spec.noise_sd = 0.0;
        let set = gaussian_classes(&spec, 3).pooled();
        let mut sampler = SamplerConfig::new(5, 2, 4);
        sampler.episode_count = 20;
        let config = PipelineConfig {
            classifier: Classifier::Knn { k: 1 },
            ..PipelineConfig::new(1, sampler)
        };
        let s = run_fewshot_eval(&set, &LinearProjector::identity(4), &config).unwrap();
        assert_eq!(s.mean_accuracy, 1.0);
        assert_eq!(s.ci_halfwidth_95, 0.0);
    }

    #[test]
    fn merged_runs_average_by_weight() {
        let set = gaussian_classes(&GaussianSpec::new(5, 30, 3, 1.0), 5).pooled();
        let mut sampler = SamplerConfig::new(5, 2, 11);
        sampler.episode_count = 30;
        let config = PipelineConfig::new(1, sampler);
        let all = run_fewshot_eval(&set, &LinearProjector::identity(3), &config).unwrap();
        let (a, b) = all.per_episode.split_at(12);
        let sa = EvalSummary::from_results(&config, a.to_vec(), 0.0).unwrap();
        let sb = EvalSummary::from_results(&config, b.to_vec(), 0.0).unwrap();
        let merged = (sa.mean_accuracy * 12.0 + sb.mean_accuracy * 18.0) / 30.0;
        assert!((merged - all.mean_accuracy).abs() < 1e-12);
    }

    #[test]
    fn projector_must_match_config() {
        let set = gaussian_classes(&GaussianSpec::new(5, 30, 3, 1.0), 5).pooled();
        let mut config = PipelineConfig::new(1, SamplerConfig::new(5, 1, 0));
        config.reduction = Reduction::Pca(2);
        assert!(run_fewshot_eval(&set, &LinearProjector::identity(3), &config).is_err());
        let p = fit_projector(&set, Reduction::Pca(2), &config.ica).unwrap();
        config.sampler.episode_count = 5;
        assert!(run_fewshot_eval(&set, &p, &config).is_ok());
        config.layer_id = 2;
        assert!(run_fewshot_eval(&set, &p, &config).is_err());
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let set = gaussian_classes(&GaussianSpec::new(8, 25, 4, 1.5), 8).pooled();
        let mut sampler = SamplerConfig::new(5, 3, 21);
        sampler.episode_count = 40;
        let config = PipelineConfig::new(1, sampler);
        let p = LinearProjector::identity(4);
        let one = with_threads(Some(1), || run_fewshot_eval(&set, &p, &config))
            .unwrap()
            .unwrap();
        let three = with_threads(Some(3), || run_fewshot_eval(&set, &p, &config))
            .unwrap()
            .unwrap();
        assert_eq!(one.without_timing(), three.without_timing());
    }
}
