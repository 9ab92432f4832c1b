//! Concept dictionaries and query classification.
//!
//! A dictionary holds, per support class, the projected exemplars, their
//! centroid and a shrunk covariance with its inverse. Queries are scored
//! against every exemplar (or every centroid) and labeled by k-NN vote or
//! by nearest centroid; a Gaussian-mixture posterior is also available.

use std::cmp::Ordering;
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reduction::{write_projector, Convergence, FitConfig, LinearProjector, ProjectorKind};

/// Which rung of the covariance ladder produced a class covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovSource {
    PerClass,
    Pooled,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShrinkageConfig {
    /// Weight of the scaled-identity target, in `[0, 1]`.
    pub lambda: f64,
    /// Minimum per-class sample count for a per-class covariance.
    pub pooled_fallback_threshold: usize,
    /// Minimum total sample count for a pooled within-class covariance.
    pub identity_fallback_threshold: usize,
}

impl Default for ShrinkageConfig {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            pooled_fallback_threshold: 2,
            identity_fallback_threshold: 2,
        }
    }
}

impl ShrinkageConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::invalid(format!(
                "shrinkage lambda {} outside [0, 1]",
                self.lambda
            )));
        }
        if self.pooled_fallback_threshold == 0 || self.identity_fallback_threshold == 0 {
            return Err(Error::invalid("shrinkage thresholds must be at least 1"));
        }
        Ok(())
    }
}

/// Whether augmented variants act as k-NN exemplars and/or covariance samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariantUse {
    pub as_exemplars: bool,
    pub in_covariance: bool,
}

impl Default for VariantUse {
    fn default() -> Self {
        Self {
            as_exemplars: true,
            in_covariance: true,
        }
    }
}

/// Labeled support vectors, one row each. Labels run over `0..class_count`.
#[derive(Debug, Clone)]
pub struct LabeledVectors {
    pub class_count: usize,
    pub labels: Vec<u32>,
    /// `true` for augmented rows.
    pub is_variant: Vec<bool>,
    pub vectors: DMatrix<f64>,
}

impl LabeledVectors {
    pub fn new(class_count: usize, labels: Vec<u32>, vectors: DMatrix<f64>) -> Self {
        let is_variant = vec![false; labels.len()];
        Self {
            class_count,
            labels,
            is_variant,
            vectors,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ClassModel {
    pub class_label: u32,
    /// `n_c x d'`
    pub exemplars: DMatrix<f64>,
    pub centroid: DVector<f64>,
    /// Regularized covariance.
    pub covariance: DMatrix<f64>,
    pub precision: DMatrix<f64>,
    pub prior: f64,
    pub cov_source: CovSource,
    pub log_det: f64,
    /// Lower Cholesky factor of `covariance`.
    chol_lower: DMatrix<f64>,
}

impl ClassModel {
    /// `L^{-1} x` for every row of `rows`, returned as columns (`d' x m`).
    fn whiten_rows(&self, rows: &DMatrix<f64>) -> DMatrix<f64> {
        let rhs = rows.transpose();
        self.chol_lower
            .solve_lower_triangular(&rhs)
            .expect("Cholesky factor has a positive diagonal")
    }

    /// Squared Mahalanobis distance from `q` to the centroid.
    fn centroid_mahalanobis_sq(&self, q: &DVector<f64>) -> f64 {
        let diff = q - &self.centroid;
        let y = self
            .chol_lower
            .solve_lower_triangular(&diff)
            .expect("Cholesky factor has a positive diagonal");
        y.norm_squared()
    }

    /// Affine map whose output norm is the Mahalanobis distance to the centroid.
    pub fn whitening_projector(&self) -> LinearProjector {
        let d = self.centroid.len();
        let inv_l = self
            .chol_lower
            .solve_lower_triangular(&DMatrix::identity(d, d))
            .expect("Cholesky factor has a positive diagonal");
        LinearProjector {
            kind: ProjectorKind::Whitening,
            mean: self.centroid.clone(),
            weights: inv_l,
            explained_variance_ratio: Vec::new(),
            fit_config: FitConfig::default(),
            convergence: Convergence {
                iterations: 0,
                converged: true,
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConceptDictionary {
    /// Sorted by class label.
    pub models: Vec<ClassModel>,
    pub dim: usize,
    pub shrinkage: ShrinkageConfig,
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Rows in a canonical order so that sums do not depend on input order.
fn canonical_rows(rows: Vec<Vec<f64>>, dim: usize) -> DMatrix<f64> {
    let mut rows = rows;
    rows.sort_by(|a, b| lexicographic(a, b));
    DMatrix::from_row_iterator(rows.len(), dim, rows.into_iter().flatten())
}

fn mean_of(rows: &DMatrix<f64>) -> DVector<f64> {
    rows.row_sum().transpose() / rows.nrows() as f64
}

/// Sum of outer products of centered rows.
fn scatter(rows: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut centered = rows.clone();
    for mut r in centered.row_iter_mut() {
        r -= mean.transpose();
    }
    centered.transpose() * centered
}

fn shrink(raw: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    let d = raw.nrows();
    let target = raw.trace() / d as f64;
    let mut out = raw * (1.0 - lambda);
    for i in 0..d {
        out[(i, i)] += lambda * target;
    }
    // exact symmetry
    (&out + out.transpose()) * 0.5
}

pub fn build_dictionary(support: &LabeledVectors, shrinkage: &ShrinkageConfig) -> Result<ConceptDictionary> {
    build_dictionary_with(support, shrinkage, VariantUse::default())
}

/// Builds one model per class.
///
/// Covariance ladder: the class's own sample covariance (`1/(n_c - 1)`) when it
/// has at least `pooled_fallback_threshold` samples, else the pooled
/// within-class covariance when the support holds at least
/// `identity_fallback_threshold` samples and more samples than classes, else
/// the identity. A rung whose covariance has zero trace falls through to the
/// next one. The chosen matrix `S` is shrunk to
/// `(1 - lambda) S + lambda tr(S)/d' I`. Priors are uniform.
pub fn build_dictionary_with(
    support: &LabeledVectors,
    shrinkage: &ShrinkageConfig,
    variants: VariantUse,
) -> Result<ConceptDictionary> {
    shrinkage.validate()?;
    let dim = support.vectors.ncols();
    let n = support.vectors.nrows();
    if support.labels.len() != n || support.is_variant.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: support.labels.len(),
        });
    }
    if support.vectors.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite support vector"));
    }
    if support.class_count == 0 {
        return Err(Error::invalid("support has no classes"));
    }

    let mut exemplar_rows: Vec<Vec<Vec<f64>>> = vec![Vec::new(); support.class_count];
    let mut cov_rows: Vec<Vec<Vec<f64>>> = vec![Vec::new(); support.class_count];
    for (i, &label) in support.labels.iter().enumerate() {
        let c = label as usize;
        if c >= support.class_count {
            return Err(Error::invalid(format!(
                "label {label} outside 0..{}",
                support.class_count
            )));
        }
        let row: Vec<f64> = support.vectors.row(i).iter().copied().collect();
        let variant = support.is_variant[i];
        if !variant || variants.in_covariance {
            cov_rows[c].push(row.clone());
        }
        if !variant || variants.as_exemplars {
            exemplar_rows[c].push(row);
        }
    }
    if let Some(empty) = exemplar_rows.iter().position(|r| r.is_empty()) {
        return Err(Error::InsufficientData(format!("class {empty} has no support vectors")));
    }

    let exemplars: Vec<DMatrix<f64>> = exemplar_rows.into_iter().map(|r| canonical_rows(r, dim)).collect();
    let cov_samples: Vec<DMatrix<f64>> = cov_rows.into_iter().map(|r| canonical_rows(r, dim)).collect();

    let total: usize = cov_samples.iter().map(|m| m.nrows()).sum();
    let pooled = if total >= shrinkage.identity_fallback_threshold && total > support.class_count {
        let mut acc = DMatrix::zeros(dim, dim);
        for m in cov_samples.iter().filter(|m| m.nrows() > 0) {
            acc += scatter(m, &mean_of(m));
        }
        acc /= (total - support.class_count) as f64;
        (acc.trace() > 0.0).then_some(acc)
    } else {
        None
    };

    let prior = 1.0 / support.class_count as f64;
    let mut models = Vec::with_capacity(support.class_count);
    for (c, (ex, samples)) in exemplars.into_iter().zip(cov_samples).enumerate() {
        let n_c = samples.nrows();
        let own = if n_c >= shrinkage.pooled_fallback_threshold && n_c >= 2 {
            let s = scatter(&samples, &mean_of(&samples)) / (n_c - 1) as f64;
            (s.trace() > 0.0).then_some(s)
        } else {
            None
        };
        let (raw, cov_source) = match (own, &pooled) {
            (Some(s), _) => (s, CovSource::PerClass),
            (None, Some(p)) => (p.clone(), CovSource::Pooled),
            (None, None) => (DMatrix::identity(dim, dim), CovSource::Identity),
        };
        let covariance = shrink(&raw, shrinkage.lambda);
        let chol = Cholesky::<f64, Dyn>::new(covariance.clone()).ok_or_else(|| {
            Error::Numerical(format!(
                "class {c} covariance is not positive definite (lambda = {})",
                shrinkage.lambda
            ))
        })?;
        let chol_lower = chol.l();
        let log_det = 2.0 * chol_lower.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let precision = chol.inverse();
        models.push(ClassModel {
            class_label: c as u32,
            centroid: mean_of(&ex),
            exemplars: ex,
            covariance,
            precision,
            prior,
            cov_source,
            log_det,
            chol_lower,
        });
    }
    Ok(ConceptDictionary {
        models,
        dim,
        shrinkage: *shrinkage,
    })
}

impl ConceptDictionary {
    pub fn class_count(&self) -> usize {
        self.models.len()
    }

    pub fn exemplar_count(&self) -> usize {
        self.models.iter().map(|m| m.exemplars.nrows()).sum()
    }

    /// Writes each class's whitening map as `class_<label>.fpj` under `dir`.
    pub fn dump_debug(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for m in &self.models {
            write_projector(
                &m.whitening_projector(),
                dir.join(format!("class_{}.fpj", m.class_label)),
            )?;
        }
        Ok(())
    }
}

/// `sqrt((q - e)^T P (q - e))`
pub fn mahalanobis(query: &DVector<f64>, exemplar: &DVector<f64>, precision: &DMatrix<f64>) -> Result<f64> {
    if query.len() != exemplar.len() {
        return Err(Error::DimensionMismatch {
            expected: query.len(),
            actual: exemplar.len(),
        });
    }
    if precision.nrows() != query.len() || precision.ncols() != query.len() {
        return Err(Error::DimensionMismatch {
            expected: query.len(),
            actual: precision.nrows(),
        });
    }
    let diff = query - exemplar;
    Ok((precision * &diff).dot(&diff).max(0.0).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Mahalanobis,
    Euclidean,
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreMode {
    Exemplar,
    Centroid,
}

/// Query-by-reference distances; column `j` belongs to class `labels[j]`.
#[derive(Debug, Clone)]
pub struct DistanceTable {
    /// `queries x references`
    pub distances: DMatrix<f64>,
    pub labels: Vec<u32>,
}

impl DistanceTable {
    pub fn row(&self, i: usize) -> Vec<f64> {
        self.distances.row(i).iter().copied().collect()
    }
}

fn euclidean_block(queries: &DMatrix<f64>, refs: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(queries.nrows(), refs.nrows(), |i, j| {
        (queries.row(i) - refs.row(j)).norm()
    })
}

/// Same as `euclidean_block` for column-stacked inputs (`d x m`, `d x r`).
fn euclidean_columns(q: &DMatrix<f64>, r: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(q.ncols(), r.ncols(), |i, j| (q.column(i) - r.column(j)).norm())
}

fn cosine_block(queries: &DMatrix<f64>, refs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let qn: Vec<f64> = queries.row_iter().map(|r| r.norm()).collect();
    let rn: Vec<f64> = refs.row_iter().map(|r| r.norm()).collect();
    if qn.iter().chain(&rn).any(|&v| v == 0.0) {
        return Err(Error::invalid("cosine distance of a zero-norm vector"));
    }
    Ok(DMatrix::from_fn(queries.nrows(), refs.nrows(), |i, j| {
        let cos = queries.row(i).dot(&refs.row(j)) / (qn[i] * rn[j]);
        1.0 - cos.clamp(-1.0, 1.0)
    }))
}

/// Scores every query row against the dictionary; smaller is always closer.
///
/// Exemplar mode has one column per exemplar (classes in label order) and
/// Mahalanobis columns use the precision of the exemplar's class. Centroid mode
/// has one column per class.
pub fn pairwise_distances(
    queries: &DMatrix<f64>,
    dictionary: &ConceptDictionary,
    metric: Metric,
    mode: ScoreMode,
) -> Result<DistanceTable> {
    if queries.ncols() != dictionary.dim {
        return Err(Error::DimensionMismatch {
            expected: dictionary.dim,
            actual: queries.ncols(),
        });
    }
    let mut blocks = Vec::with_capacity(dictionary.models.len());
    let mut labels = Vec::new();
    let whitened_queries: Vec<DMatrix<f64>> = if metric == Metric::Mahalanobis {
        dictionary.models.iter().map(|m| m.whiten_rows(queries)).collect()
    } else {
        Vec::new()
    };
    for (c, model) in dictionary.models.iter().enumerate() {
        let refs = match mode {
            ScoreMode::Exemplar => model.exemplars.clone(),
            ScoreMode::Centroid => DMatrix::from_row_slice(1, dictionary.dim, model.centroid.as_slice()),
        };
        labels.extend(std::iter::repeat_n(model.class_label, refs.nrows()));
        let block = match metric {
            Metric::Euclidean => euclidean_block(queries, &refs),
            Metric::Cosine => cosine_block(queries, &refs)?,
            Metric::Mahalanobis => euclidean_columns(&whitened_queries[c], &model.whiten_rows(&refs)),
        };
        blocks.push(block);
    }
    let total: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut distances = DMatrix::zeros(queries.nrows(), total);
    let mut col = 0;
    for b in blocks {
        distances.columns_mut(col, b.ncols()).copy_from(&b);
        col += b.ncols();
    }
    Ok(DistanceTable { distances, labels })
}

/// Majority vote among the `k` closest references.
///
/// Ties on the k-th distance keep the smaller label. Classes tied on vote
/// count are separated by smaller mean neighbour distance, then by smaller id.
pub fn classify_knn(distances: &[f64], labels: &[u32], k: usize) -> Result<u32> {
    if distances.is_empty() {
        return Err(Error::invalid("empty distance row"));
    }
    if distances.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: distances.len(),
            actual: labels.len(),
        });
    }
    if k == 0 || k > distances.len() {
        return Err(Error::invalid(format!("k = {k} with {} references", distances.len())));
    }
    let mut order: Vec<usize> = (0..distances.len()).collect();
    order.sort_by(|&a, &b| distances[a].total_cmp(&distances[b]).then(labels[a].cmp(&labels[b])));
    // (label, votes, distance sum)
    let mut tally: Vec<(u32, usize, f64)> = Vec::new();
    for &i in &order[..k] {
        match tally.iter_mut().find(|t| t.0 == labels[i]) {
            Some(t) => {
                t.1 += 1;
                t.2 += distances[i];
            }
            None => tally.push((labels[i], 1, distances[i])),
        }
    }
    let best = tally
        .into_iter()
        .min_by(|a, b| {
            b.1.cmp(&a.1)
                .then((a.2 / a.1 as f64).total_cmp(&(b.2 / b.1 as f64)))
                .then(a.0.cmp(&b.0))
        })
        .expect("k >= 1");
    Ok(best.0)
}

/// Nearest centroid; equal distances go to the smaller class id.
pub fn classify_centroid(distances: &[f64], labels: &[u32]) -> Result<u32> {
    if distances.is_empty() {
        return Err(Error::invalid("empty distance row"));
    }
    if distances.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: distances.len(),
            actual: labels.len(),
        });
    }
    let best = (0..distances.len())
        .min_by(|&a, &b| distances[a].total_cmp(&distances[b]).then(labels[a].cmp(&labels[b])))
        .expect("non-empty");
    Ok(labels[best])
}

#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    /// Indexed like `ConceptDictionary::models`.
    pub probabilities: Vec<f64>,
    /// Set when every component density was zero or non-finite; probabilities are uniform.
    pub underflow: bool,
}

/// Class posterior of the Gaussian mixture with per-class centroid and covariance.
pub fn gmm_posterior(query: &DVector<f64>, dictionary: &ConceptDictionary) -> Result<Posterior> {
    if query.len() != dictionary.dim {
        return Err(Error::DimensionMismatch {
            expected: dictionary.dim,
            actual: query.len(),
        });
    }
    let c = dictionary.models.len();
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();
    let log_joint: Vec<f64> = dictionary
        .models
        .iter()
        .map(|m| m.prior.ln() - 0.5 * (dictionary.dim as f64 * ln_2pi + m.log_det + m.centroid_mahalanobis_sq(query)))
        .collect();
    let max = log_joint.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Ok(Posterior {
            probabilities: vec![1.0 / c as f64; c],
            underflow: true,
        });
    }
    let weights: Vec<f64> = log_joint.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    Ok(Posterior {
        probabilities: weights.iter().map(|w| w / total).collect(),
        underflow: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn support(rows: &[(u32, &[f64])], classes: usize) -> LabeledVectors {
        let dim = rows[0].1.len();
        let vectors = DMatrix::from_row_iterator(rows.len(), dim, rows.iter().flat_map(|r| r.1.iter().copied()));
        LabeledVectors::new(classes, rows.iter().map(|r| r.0).collect(), vectors)
    }

    #[test]
    fn one_shot_falls_back_to_identity() {
        let s = support(&[(0, &[0.0, 1.0]), (1, &[2.0, 0.0]), (2, &[1.0, 1.0])], 3);
        let d = build_dictionary(&s, &ShrinkageConfig::default()).unwrap();
        for m in &d.models {
            assert_eq!(m.cov_source, CovSource::Identity);
            assert_eq!(m.covariance, DMatrix::identity(2, 2));
        }
    }

    #[test]
    fn full_shrinkage_is_scaled_identity() {
        let s = support(
            &[
                (0, &[0.0, 1.0]),
                (0, &[2.0, 5.0]),
                (0, &[1.0, -1.0]),
                (1, &[3.0, 3.0]),
                (1, &[4.0, 2.0]),
            ],
            2,
        );
        let cfg = ShrinkageConfig {
            lambda: 1.0,
            ..ShrinkageConfig::default()
        };
        let d = build_dictionary(&s, &cfg).unwrap();
        let m = &d.models[0];
        assert_eq!(m.cov_source, CovSource::PerClass);
        // raw covariance of class 0: var x = 1, var y = 28/3 -> tr/2 = 31/6
        let expected = DMatrix::identity(2, 2) * (31.0 / 6.0);
        assert!((&m.covariance - expected).abs().max() < 1e-12, "{}", m.covariance);
    }

    #[test]
    fn pooled_rung_when_class_is_small() {
        let s = support(&[(0, &[0.0, 0.0]), (0, &[2.0, 0.0]), (1, &[5.0, 5.0])], 2);
        let cfg = ShrinkageConfig {
            lambda: 0.0,
            pooled_fallback_threshold: 2,
            identity_fallback_threshold: 2,
        };
        // pooled scatter is rank one, so lambda 0 is singular
        assert!(matches!(build_dictionary(&s, &cfg), Err(Error::Numerical(_))));
        let cfg = ShrinkageConfig { lambda: 0.5, ..cfg };
        let d = build_dictionary(&s, &cfg).unwrap();
        assert_eq!(d.models[0].cov_source, CovSource::PerClass);
        assert_eq!(d.models[1].cov_source, CovSource::Pooled);
    }

    #[test]
    fn precision_inverts_covariance() {
        let s = support(
            &[
                (0, &[0.0, 1.0, 2.0]),
                (0, &[2.0, 5.0, 1.0]),
                (0, &[1.0, -1.0, 0.0]),
                (1, &[3.0, 3.0, 3.0]),
                (1, &[4.0, 2.0, 1.0]),
            ],
            2,
        );
        let d = build_dictionary(&s, &ShrinkageConfig::default()).unwrap();
        for m in &d.models {
            let prod = &m.precision * &m.covariance;
            assert!((prod - DMatrix::identity(3, 3)).abs().max() < 1e-5);
        }
        let priors: f64 = d.models.iter().map(|m| m.prior).sum();
        assert!((priors - 1.0).abs() < 1e-9);
    }

    #[test]
    fn empty_class_rejected() {
        let s = support(&[(0, &[0.0]), (2, &[1.0])], 3);
        assert!(matches!(
            build_dictionary(&s, &ShrinkageConfig::default()),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn mahalanobis_examples() {
        let q = DVector::from_vec(vec![2.0, 0.0]);
        let e = DVector::zeros(2);
        let precision = DMatrix::from_diagonal(&DVector::from_vec(vec![0.25, 1.0]));
        assert!((mahalanobis(&q, &e, &precision).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(mahalanobis(&q, &q, &precision).unwrap(), 0.0);
        let eye = DMatrix::identity(2, 2);
        let r = DVector::from_vec(vec![3.0, 4.0]);
        assert!((mahalanobis(&r, &e, &eye).unwrap() - 5.0).abs() < 1e-15);
        assert!(mahalanobis(&r, &DVector::zeros(3), &eye).is_err());
    }

    #[test]
    fn cosine_orthogonal_is_one() {
        let s = support(&[(0, &[0.0, 1.0])], 1);
        let d = build_dictionary(&s, &ShrinkageConfig::default()).unwrap();
        let q = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let t = pairwise_distances(&q, &d, Metric::Cosine, ScoreMode::Exemplar).unwrap();
        assert!((t.distances[(0, 0)] - 1.0).abs() < 1e-15);
        let zero = DMatrix::zeros(1, 2);
        assert!(pairwise_distances(&zero, &d, Metric::Cosine, ScoreMode::Exemplar).is_err());
    }

    #[test]
    fn self_distances_vanish() {
        let s = support(
            &[(0, &[0.0, 1.0]), (0, &[2.0, 5.0]), (1, &[3.0, 3.0]), (1, &[4.0, 2.0])],
            2,
        );
        let d = build_dictionary(&s, &ShrinkageConfig::default()).unwrap();
        // canonical order: rows sorted lexicographically within each class
        let q = DMatrix::from_row_slice(4, 2, &[0.0, 1.0, 2.0, 5.0, 3.0, 3.0, 4.0, 2.0]);
        for metric in [Metric::Mahalanobis, Metric::Euclidean, Metric::Cosine] {
            let t = pairwise_distances(&q, &d, metric, ScoreMode::Exemplar).unwrap();
            for i in 0..4 {
                assert!(t.distances[(i, i)].abs() < 1e-12, "{metric:?}");
            }
        }
    }

    #[test]
    fn knn_votes() {
        let labels = [0, 0, 1, 1, 1, 2];
        let d = [0.1, 0.2, 0.3, 0.4, 0.5, 0.05];
        assert_eq!(classify_knn(&d, &labels, 1).unwrap(), 2);
        assert_eq!(classify_knn(&d[..5], &labels[..5], 5).unwrap(), 1);
        assert!(classify_knn(&[], &[], 1).is_err());
        assert!(classify_knn(&d, &labels, 7).is_err());
    }

    #[test]
    fn knn_vote_tie_uses_mean_distance() {
        // two votes each; class 1 is closer on average
        let labels = [0, 1, 1, 0];
        let d = [0.1, 0.2, 0.3, 0.9];
        assert_eq!(classify_knn(&d, &labels, 4).unwrap(), 1);
        // exact tie everywhere -> smaller id
        assert_eq!(classify_knn(&[1.0, 1.0], &[3, 2], 2).unwrap(), 2);
    }

    #[test]
    fn centroid_rule() {
        assert_eq!(classify_centroid(&[0.1, 0.5], &[0, 1]).unwrap(), 0);
        assert_eq!(classify_centroid(&[0.5, 0.5], &[0, 1]).unwrap(), 0);
        assert_eq!(
            classify_centroid(&[0.9, 0.4, 0.5, 0.2, 0.3], &[0, 1, 2, 3, 4]).unwrap(),
            3
        );
        assert!(classify_centroid(&[], &[]).is_err());
    }

    #[test]
    fn one_dimensional_posterior() {
        // unit covariances via identity fallback with lambda irrelevant
        let s = support(&[(0, &[0.0]), (1, &[2.0])], 2);
        let d = build_dictionary(&s, &ShrinkageConfig::default()).unwrap();
        let p = gmm_posterior(&DVector::from_vec(vec![0.5]), &d).unwrap();
        let sigma1 = 1.0 / (1.0 + (-1.0f64).exp());
        assert!((p.probabilities[0] - sigma1).abs() < 1e-12, "{:?}", p.probabilities);
        assert!((p.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let mid = gmm_posterior(&DVector::from_vec(vec![1.0]), &d).unwrap();
        assert!((mid.probabilities[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn whitening_dump_reproduces_mahalanobis() {
        let s = support(&[(0, &[0.0, 1.0]), (0, &[2.0, 5.0]), (0, &[1.0, -1.0])], 1);
        let d = build_dictionary(&s, &ShrinkageConfig::default()).unwrap();
        let m = &d.models[0];
        let q = DVector::from_vec(vec![3.0, -2.0]);
        let via_proj = m.whitening_projector().project(&q).unwrap().norm();
        let direct = mahalanobis(&q, &m.centroid, &m.precision).unwrap();
        assert!((via_proj - direct).abs() < 1e-10);
        let dir = tempfile::tempdir().unwrap();
        d.dump_debug(dir.path()).unwrap();
        assert!(dir.path().join("class_0.fpj").exists());
    }
}
