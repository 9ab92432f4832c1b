//! Linear manifold refinement: `s = W (z - mu)` with `W` from PCA or FastICA.

mod container;
mod ica;
mod pca;

pub use container::{decode_projector, encode_projector, read_projector, write_projector, PROJECTOR_MAGIC};
pub use ica::fit_ica;
pub use pca::{component_variances, fit_pca, orient_component};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectorKind {
    Identity,
    Pca,
    Ica,
    /// Per-class Mahalanobis whitening `L^{-1}(z - centroid)`, written by dictionary debug dumps.
    Whitening,
}

/// FastICA nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Contrast {
    /// `G(u) = log cosh u`, `g(u) = tanh u`
    Logcosh,
    /// `G(u) = u^4 / 4`, `g(u) = u^3`
    Cube,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub max_iterations: usize,
    pub tolerance: f64,
    pub ica_contrast: Contrast,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_iterations: 400,
            tolerance: 1e-4,
            ica_contrast: Contrast::Logcosh,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be at least 1"));
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(Error::invalid("tolerance must be positive"));
        }
        Ok(())
    }
}

/// How an ICA fit terminated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Convergence {
    pub iterations: usize,
    pub converged: bool,
}

/// Fitted affine map from `d`-dimensional embeddings to `d'` components.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProjector {
    pub kind: ProjectorKind,
    /// Length `d`.
    pub mean: DVector<f64>,
    /// `d' x d`; empty for the identity projector.
    pub weights: DMatrix<f64>,
    /// Per-component explained-variance ratio (PCA only).
    pub explained_variance_ratio: Vec<f64>,
    pub fit_config: FitConfig,
    /// ICA termination status; PCA and identity report a single converged step.
    pub convergence: Convergence,
}

impl LinearProjector {
    pub fn identity(dim: usize) -> Self {
        Self {
            kind: ProjectorKind::Identity,
            mean: DVector::zeros(dim),
            weights: DMatrix::zeros(0, dim),
            explained_variance_ratio: Vec::new(),
            fit_config: FitConfig::default(),
            convergence: Convergence {
                iterations: 0,
                converged: true,
            },
        }
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dim(&self) -> usize {
        match self.kind {
            ProjectorKind::Identity => self.input_dim(),
            _ => self.weights.nrows(),
        }
    }

    pub fn project(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        if z.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: z.len(),
            });
        }
        Ok(match self.kind {
            ProjectorKind::Identity => z.clone(),
            _ => &self.weights * (z - &self.mean),
        })
    }

    /// Projects every row of an `n x d` matrix.
    pub fn project_rows(&self, rows: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if rows.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: rows.ncols(),
            });
        }
        if self.kind == ProjectorKind::Identity {
            return Ok(rows.clone());
        }
        let mut centered = rows.clone();
        for mut row in centered.row_iter_mut() {
            row -= self.mean.transpose();
        }
        Ok(centered * self.weights.transpose())
    }

    /// Rounds every stored value through `f32`, the on-disk precision.
    ///
    /// A projector used straight after fitting and one reloaded from the cache
    /// give identical results once both are quantized.
    pub fn quantized(&self) -> Self {
        let q = |v: f64| v as f32 as f64;
        Self {
            mean: self.mean.map(q),
            weights: self.weights.map(q),
            explained_variance_ratio: self.explained_variance_ratio.iter().map(|&v| q(v)).collect(),
            ..self.clone()
        }
    }
}

/// Explained-variance ratios of a PCA projector, non-increasing.
pub fn explained_variance(projector: &LinearProjector) -> Result<&[f64]> {
    match projector.kind {
        ProjectorKind::Pca => Ok(&projector.explained_variance_ratio),
        other => Err(Error::invalid(format!(
            "explained variance is defined for PCA projectors, not {other:?}"
        ))),
    }
}

/// Column means and centered copy of an `n x d` data matrix.
pub(crate) fn center(data: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = data.nrows() as f64;
    let mean: DVector<f64> = data.row_sum().transpose() / n;
    let mut centered = data.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    (mean, centered)
}
