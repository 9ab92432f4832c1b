use nalgebra::{DMatrix, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};

use super::pca::covariance_spectrum;
use super::{Contrast, Convergence, FitConfig, LinearProjector, ProjectorKind};
use crate::error::{Error, Result};
use crate::rng;

/// `W <- (W W^T)^{-1/2} W`
fn symmetric_decorrelation(w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let gram = w * w.transpose();
    let eig = SymmetricEigen::new(gram);
    if eig.eigenvalues.iter().any(|&l| l.is_nan() || l <= 0.0) {
        return Err(Error::Numerical("singular unmixing matrix during decorrelation".into()));
    }
    let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    Ok(&eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose() * w)
}

/// Applies the contrast elementwise, returning `g(u)` and the row means of `g'(u)`.
fn contrast_terms(contrast: Contrast, u: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let n = u.ncols() as f64;
    match contrast {
        Contrast::Logcosh => {
            let g = u.map(f64::tanh);
            let dg = g
                .row_iter()
                .map(|r| r.iter().map(|t| 1.0 - t * t).sum::<f64>() / n)
                .collect();
            (g, dg)
        }
        Contrast::Cube => {
            let g = u.map(|v| v * v * v);
            let dg = u
                .row_iter()
                .map(|r| r.iter().map(|v| 3.0 * v * v).sum::<f64>() / n)
                .collect();
            (g, dg)
        }
    }
}

/// Fits FastICA: center, PCA-whiten to `output_dim`, then run the symmetric
/// fixed-point iteration.
///
/// The stored weights compose whitening and rotation, so projected outputs
/// have unit sample variance. Non-convergence is not an error; it is recorded
/// in `convergence` and the last iterate is returned.
pub fn fit_ica(data: &DMatrix<f64>, output_dim: usize, config: &FitConfig) -> Result<LinearProjector> {
    config.validate()?;
    let (n, d) = data.shape();
    if output_dim == 0 || output_dim > d {
        return Err(Error::invalid(format!("output_dim {output_dim} outside 1..={d}")));
    }
    if n <= output_dim {
        return Err(Error::InsufficientData(format!(
            "ICA to {output_dim} components needs more than {output_dim} samples, got {n}"
        )));
    }
    let spectrum = covariance_spectrum(data)?;
    let floor = spectrum.eigenvalues[0] * 1e-12;
    if spectrum.eigenvalues[output_dim - 1] <= floor {
        return Err(Error::Numerical(format!(
            "data has fewer than {output_dim} non-degenerate directions; cannot whiten"
        )));
    }

    // K: d' x d whitening matrix
    let mut whitening = DMatrix::zeros(output_dim, d);
    for r in 0..output_dim {
        let scale = 1.0 / spectrum.eigenvalues[r].sqrt();
        whitening
            .row_mut(r)
            .copy_from(&(spectrum.vectors[r].transpose() * scale));
    }
    let mut centered_t = data.transpose();
    for mut col in centered_t.column_iter_mut() {
        col -= &spectrum.mean;
    }
    let whitened = &whitening * centered_t; // d' x n
    let whitened_t = whitened.transpose();

    let mut rng = rng::stream(config.seed);
    let init = DMatrix::from_fn(output_dim, output_dim, |_, _| StandardNormal.sample(&mut rng));
    let mut w = symmetric_decorrelation(&init)?;

    let mut convergence = Convergence {
        iterations: 0,
        converged: false,
    };
    for iteration in 1..=config.max_iterations {
        let projected = &w * &whitened;
        let (g, dg_mean) = contrast_terms(config.ica_contrast, &projected);
        let mut update = (g * &whitened_t) / n as f64;
        for (mut row, (w_row, m)) in update.row_iter_mut().zip(w.row_iter().zip(&dg_mean)) {
            row -= w_row * *m;
        }
        let next = symmetric_decorrelation(&update)?;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("ICA diverged at iteration {iteration}")));
        }
        let overlap = &next * w.transpose();
        let change = overlap
            .iter()
            .enumerate()
            .map(|(idx, v)| {
                let (i, j) = (idx % output_dim, idx / output_dim);
                let target = if i == j { 1.0 } else { 0.0 };
                (v.abs() - target).abs()
            })
            .fold(0.0f64, f64::max);
        w = next;
        convergence.iterations = iteration;
        if change < config.tolerance {
            convergence.converged = true;
            break;
        }
    }

    Ok(LinearProjector {
        kind: ProjectorKind::Ica,
        mean: spectrum.mean,
        weights: w * whitening,
        explained_variance_ratio: Vec::new(),
        fit_config: *config,
        convergence,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn correlation(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let mut sab = 0.0;
        let mut saa = 0.0;
        let mut sbb = 0.0;
        for (x, y) in a.iter().zip(b) {
            sab += (x - ma) * (y - mb);
            saa += (x - ma) * (x - ma);
            sbb += (y - mb) * (y - mb);
        }
        sab / (saa * sbb).sqrt()
    }

    #[test]
    fn unmixes_two_uniform_sources() {
        let mut r = rng::stream(11);
        let n = 2000;
        let sources: Vec<[f64; 2]> = (0..n)
            .map(|_| [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)])
            .collect();
        let data = DMatrix::from_fn(n, 2, |i, j| {
            let s = sources[i];
            match j {
                0 => s[0] + s[1],
                _ => 0.5 * s[0] + 2.0 * s[1],
            }
        });
        let p = fit_ica(&data, 2, &FitConfig::default()).unwrap();
        assert!(p.convergence.converged);
        let out = p.project_rows(&data).unwrap();
        for s in 0..2 {
            let truth: Vec<f64> = sources.iter().map(|v| v[s]).collect();
            let best = (0..2)
                .map(|c| correlation(out.column(c).as_slice(), &truth).abs())
                .fold(0.0, f64::max);
            assert!(best > 0.95, "source {s}: {best}");
        }
    }

    #[test]
    fn gaussian_data_still_yields_a_projector() {
        let mut r = rng::stream(5);
        let data = DMatrix::from_fn(300, 3, |_, _| StandardNormal.sample(&mut r));
        let cfg = FitConfig {
            max_iterations: 20,
            ..FitConfig::default()
        };
        let p = fit_ica(&data, 3, &cfg).unwrap();
        assert_eq!(p.output_dim(), 3);
        assert!(p.convergence.iterations <= 20);
        assert!(p.weights.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn fixed_seed_is_bit_reproducible() {
        let mut r = rng::stream(3);
        let data = DMatrix::from_fn(400, 4, |_, _| r.random_range(-1.0..1.0));
        let cfg = FitConfig {
            seed: 42,
            ..FitConfig::default()
        };
        let a = fit_ica(&data, 3, &cfg).unwrap();
        let b = fit_ica(&data, 3, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn outputs_are_white() {
        let mut r = rng::stream(8);
        let data = DMatrix::from_fn(500, 3, |i, j| {
            r.random_range(-1.0..1.0) * (1.0 + j as f64) + (i % 3) as f64
        });
        let p = fit_ica(&data, 2, &FitConfig::default()).unwrap();
        let out = p.project_rows(&data).unwrap();
        let cov = out.transpose() * &out / (out.nrows() - 1) as f64;
        for i in 0..2 {
            for j in 0..2 {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((cov[(i, j)] - target).abs() < 1e-8, "{cov}");
            }
        }
    }

    #[test]
    fn output_dim_checks() {
        let data = DMatrix::from_fn(3, 4, |i, j| (i * j) as f64);
        assert!(fit_ica(&data, 5, &FitConfig::default()).is_err());
        assert!(fit_ica(&data, 3, &FitConfig::default()).is_err());
    }
}
