use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{center, Convergence, FitConfig, LinearProjector, ProjectorKind};
use crate::error::{Error, Result};

/// Flips `v` so its largest-magnitude entry is positive (first such entry on ties).
pub fn orient_component(v: &mut DVector<f64>) {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if !v.is_empty() && v[best] < 0.0 {
        v.neg_mut();
    }
}

/// Eigenpairs of the sample covariance, sorted by descending eigenvalue.
pub(crate) struct Spectrum {
    pub mean: DVector<f64>,
    pub eigenvalues: Vec<f64>,
    /// Oriented eigenvectors, one per entry of `eigenvalues`.
    pub vectors: Vec<DVector<f64>>,
    pub total_variance: f64,
}

pub(crate) fn covariance_spectrum(data: &DMatrix<f64>) -> Result<Spectrum> {
    let n = data.nrows();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "PCA needs at least 2 samples, got {n}"
        )));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite value in fit data"));
    }
    let (mean, centered) = center(data);
    let mut cov = centered.transpose() * &centered;
    cov /= (n - 1) as f64;
    // exact symmetry for the eigensolver
    cov = (&cov + cov.transpose()) * 0.5;
    let total_variance = cov.trace();
    if total_variance.is_nan() || total_variance <= 0.0 {
        return Err(Error::Numerical("degenerate data: zero total variance".into()));
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("finite eigenvalues")
            .then(a.cmp(&b))
    });
    let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = order
        .iter()
        .map(|&i| {
            let mut v = eig.eigenvectors.column(i).into_owned();
            orient_component(&mut v);
            v
        })
        .collect();
    Ok(Spectrum {
        mean,
        eigenvalues,
        vectors,
        total_variance,
    })
}

/// Fits a PCA projector onto the top `output_dim` covariance eigenvectors.
///
/// Covariance is normalized by `n - 1`. Rows of the weight matrix are unit
/// eigenvectors in descending eigenvalue order, each oriented so that its
/// largest-magnitude entry is positive.
pub fn fit_pca(data: &DMatrix<f64>, output_dim: usize) -> Result<LinearProjector> {
    let (n, d) = data.shape();
    let max_dim = n.saturating_sub(1).min(d);
    if output_dim == 0 || output_dim > max_dim {
        return Err(Error::invalid(format!(
            "output_dim {output_dim} outside 1..={max_dim} for {n} samples of dimension {d}"
        )));
    }
    let spectrum = covariance_spectrum(data)?;
    let mut weights = DMatrix::zeros(output_dim, d);
    for (r, v) in spectrum.vectors.iter().take(output_dim).enumerate() {
        weights.row_mut(r).copy_from(&v.transpose());
    }
    let explained_variance_ratio = spectrum
        .eigenvalues
        .iter()
        .take(output_dim)
        .map(|&l| l.max(0.0) / spectrum.total_variance)
        .collect();
    Ok(LinearProjector {
        kind: ProjectorKind::Pca,
        mean: spectrum.mean,
        weights,
        explained_variance_ratio,
        fit_config: FitConfig::default(),
        convergence: Convergence {
            iterations: 1,
            converged: true,
        },
    })
}

/// Eigenvalues of the covariance in descending order (component variances).
pub fn component_variances(data: &DMatrix<f64>) -> Result<Vec<f64>> {
    Ok(covariance_spectrum(data)?.eigenvalues)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reduction::explained_variance;

    #[test]
    fn rank_one_line_explains_everything() {
        let dir = [1.0, -2.0, 0.5];
        let data = DMatrix::from_fn(20, 3, |i, j| (i as f64 - 7.0) * dir[j] + 3.0);
        let p = fit_pca(&data, 1).unwrap();
        let ratios = explained_variance(&p).unwrap();
        assert!((ratios[0] - 1.0).abs() < 1e-9);
        // orientation: largest-magnitude entry (-2 direction) is positive
        assert!(p.weights[(0, 1)] > 0.0);
    }

    #[test]
    fn exact_two_by_two_covariance() {
        // 4 points with sample covariance exactly diag(2, 1):
        // x = +-sqrt(3), y = +-sqrt(1.5) on the axes gives sum x^2 = 6 = 2 * (n - 1)
        let a = 3f64.sqrt();
        let b = 1.5f64.sqrt();
        let data = DMatrix::from_row_slice(4, 2, &[a, 0.0, -a, 0.0, 0.0, b, 0.0, -b]);
        let vars = component_variances(&data).unwrap();
        assert!((vars[0] - 2.0).abs() < 1e-12, "{vars:?}");
        assert!((vars[1] - 1.0).abs() < 1e-12);
        let p = fit_pca(&data, 2).unwrap();
        let r = explained_variance(&p).unwrap();
        assert!((r[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((r[1] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn diag_three_one_ratios() {
        let a = 3f64.sqrt() * 1.5f64.sqrt(); // x^2 = 4.5, two points -> var 3 with n-1 = 3
        let b = 1.5f64.sqrt();
        let data = DMatrix::from_row_slice(4, 2, &[a, 0.0, -a, 0.0, 0.0, b, 0.0, -b]);
        let p = fit_pca(&data, 2).unwrap();
        let r = explained_variance(&p).unwrap();
        assert!((r[0] - 0.75).abs() < 1e-12, "{r:?}");
        assert!((r[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn output_dim_bounds() {
        let data = DMatrix::from_fn(5, 8, |i, j| ((i * 7 + j * 3) % 5) as f64);
        assert!(fit_pca(&data, 0).is_err());
        assert!(fit_pca(&data, 5).is_err());
        assert!(fit_pca(&data, 4).is_ok());
    }

    #[test]
    fn constant_data_is_degenerate() {
        let data = DMatrix::from_element(6, 3, 1.5);
        assert!(matches!(fit_pca(&data, 1), Err(Error::Numerical(_))));
    }

    #[test]
    fn orientation_rule() {
        let mut v = DVector::from_vec(vec![0.1, -0.9, 0.3]);
        orient_component(&mut v);
        assert_eq!(v.as_slice(), &[-0.1, 0.9, -0.3]);
    }
}
