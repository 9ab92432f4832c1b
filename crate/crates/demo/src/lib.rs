//! Browser bindings for three small interactive views: a logistic curve fit,
//! blind unmixing of two 2-D sources, and a few-shot decision map.
//!
//! The logic lives in plain functions so it can be tested natively; the
//! `#[wasm_bindgen]` wrappers only convert errors.

use nalgebra::DMatrix;
use rand::RngCore;
use wasm_bindgen::prelude::*;

use manifold_probe::concept::{
    build_dictionary, classify_centroid, classify_knn, gmm_posterior, pairwise_distances, LabeledVectors, Metric,
    ScoreMode, ShrinkageConfig,
};
use manifold_probe::curvefit::{fit_logistic, LogisticFit};
use manifold_probe::reduction::{fit_ica, fit_pca, FitConfig};
use manifold_probe::rng::stream;

fn js(e: impl ToString) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct Curve {
    fit: LogisticFit,
}

#[wasm_bindgen]
impl Curve {
    #[wasm_bindgen(getter)]
    pub fn asymptote(&self) -> f64 {
        self.fit.params.asymptote
    }

    #[wasm_bindgen(getter)]
    pub fn growth(&self) -> f64 {
        self.fit.params.growth
    }

    #[wasm_bindgen(getter)]
    pub fn midpoint(&self) -> f64 {
        self.fit.params.x0
    }

    #[wasm_bindgen(getter)]
    pub fn r_squared(&self) -> f64 {
        self.fit.r_squared
    }

    #[wasm_bindgen(getter)]
    pub fn converged(&self) -> bool {
        self.fit.converged
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.fit.eval(x)
    }
}

pub fn curve(xs: &[f64], ys: &[f64]) -> Result<Curve, String> {
    fit_logistic(xs, ys).map(|fit| Curve { fit }).map_err(|e| e.to_string())
}

/// Fits `L / (1 + exp(-k (x - x0)))` to the points.
#[wasm_bindgen]
pub fn fit_curve(xs: Vec<f64>, ys: Vec<f64>) -> Result<Curve, JsError> {
    curve(&xs, &ys).map_err(js)
}

/// Row-major `n x 2` point sets from one unmixing run.
#[wasm_bindgen]
pub struct Unmixing {
    sources: Vec<f64>,
    mixed: Vec<f64>,
    recovered: Vec<f64>,
    correlation: Vec<f64>,
}

#[wasm_bindgen]
impl Unmixing {
    #[wasm_bindgen(getter)]
    pub fn sources(&self) -> Vec<f64> {
        self.sources.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn mixed(&self) -> Vec<f64> {
        self.mixed.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn recovered(&self) -> Vec<f64> {
        self.recovered.clone()
    }

    /// `|corr(recovered_i, source_j)|`, row-major 2 x 2.
    #[wasm_bindgen(getter)]
    pub fn correlation(&self) -> Vec<f64> {
        self.correlation.clone()
    }
}

fn unit(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

/// Unit-variance uniform and Laplace sources, mixed by the columns
/// `(1, 0)` and `(cos angle, sin angle)`, then unmixed by `method`.
pub fn unmix(angle: f64, n: usize, seed: u32, method: &str) -> Result<Unmixing, String> {
    if n < 10 {
        return Err("need at least 10 samples".into());
    }
    if angle.sin().abs() < 1e-3 {
        return Err("mixing directions are parallel".into());
    }
    let mut rng = stream(u64::from(seed));
    let mut sources = DMatrix::zeros(n, 2);
    for i in 0..n {
        sources[(i, 0)] = (2.0 * unit(&mut rng) - 1.0) * 3f64.sqrt();
        let u = unit(&mut rng) - 0.5;
        sources[(i, 1)] = -u.signum() * (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE).ln() / 2f64.sqrt();
    }
    let mixing = DMatrix::from_row_slice(2, 2, &[1.0, angle.cos(), 0.0, angle.sin()]);
    let mixed = &sources * mixing.transpose();
    let projector = match method {
        "pca" => fit_pca(&mixed, 2),
        "ica" => fit_ica(
            &mixed,
            2,
            &FitConfig {
                seed: u64::from(seed),
                ..FitConfig::default()
            },
        ),
        other => return Err(format!("unknown method {other:?}")),
    }
    .map_err(|e| e.to_string())?;
    let recovered = projector.project_rows(&mixed).map_err(|e| e.to_string())?;
    let mut correlation = Vec::with_capacity(4);
    for i in 0..2 {
        for j in 0..2 {
            correlation.push(abs_correlation(
                recovered.column(i).as_slice(),
                sources.column(j).as_slice(),
            ));
        }
    }
    let rows = |m: &DMatrix<f64>| m.transpose().as_slice().to_vec();
    Ok(Unmixing {
        sources: rows(&sources),
        mixed: rows(&mixed),
        recovered: rows(&recovered),
        correlation,
    })
}

fn abs_correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        ab += (x - ma) * (y - mb);
        aa += (x - ma).powi(2);
        bb += (y - mb).powi(2);
    }
    (ab / (aa * bb).sqrt()).abs()
}

#[wasm_bindgen]
pub fn unmix_sources(angle: f64, n: usize, seed: u32, method: &str) -> Result<Unmixing, JsError> {
    unmix(angle, n, seed, method).map_err(js)
}

/// Class and confidence per grid cell, row-major from the top-left corner.
#[wasm_bindgen]
pub struct DecisionMap {
    labels: Vec<u32>,
    confidence: Vec<f64>,
}

#[wasm_bindgen]
impl DecisionMap {
    #[wasm_bindgen(getter)]
    pub fn labels(&self) -> Vec<u32> {
        self.labels.clone()
    }

    /// Largest class posterior of the per-class Gaussian mixture.
    #[wasm_bindgen(getter)]
    pub fn confidence(&self) -> Vec<f64> {
        self.confidence.clone()
    }
}

/// Options for [`decision_map`]; `bounds` is `[xmin, xmax, ymin, ymax]`.
pub struct MapSpec<'a> {
    pub bounds: [f64; 4],
    pub width: usize,
    pub height: usize,
    pub metric: &'a str,
    /// `knn`, `centroid` or `posterior`.
    pub classifier: &'a str,
    pub k: usize,
    pub lambda: f64,
}

/// Classifies every cell centre of a grid against labelled 2-D support points
/// given as `x, y, label` triples. `k` is capped at the number of points.
pub fn decision_map(points: &[f64], spec: &MapSpec) -> Result<DecisionMap, String> {
    if points.is_empty() || !points.len().is_multiple_of(3) {
        return Err("points must be non-empty x, y, label triples".into());
    }
    if spec.width == 0 || spec.height == 0 || spec.width * spec.height > 1 << 20 {
        return Err("grid must have between 1 and 2^20 cells".into());
    }
    let metric = match spec.metric {
        "mahalanobis" => Metric::Mahalanobis,
        "euclidean" => Metric::Euclidean,
        "cosine" => Metric::Cosine,
        other => return Err(format!("unknown metric {other:?}")),
    };
    // dictionary classes must be dense 0..c
    let mut classes: Vec<u32> = points.chunks(3).map(|p| p[2] as u32).collect();
    classes.sort_unstable();
    classes.dedup();
    let dense: Vec<u32> = points
        .chunks(3)
        .map(|p| classes.binary_search(&(p[2] as u32)).unwrap() as u32)
        .collect();
    let coords: Vec<f64> = points.chunks(3).flat_map(|p| [p[0], p[1]]).collect();
    let support = LabeledVectors::new(
        classes.len(),
        dense,
        DMatrix::from_row_slice(coords.len() / 2, 2, &coords),
    );
    let shrinkage = ShrinkageConfig {
        lambda: spec.lambda,
        ..ShrinkageConfig::default()
    };
    let dict = build_dictionary(&support, &shrinkage).map_err(|e| e.to_string())?;

    let [x0, x1, y0, y1] = spec.bounds;
    let cells = spec.width * spec.height;
    let mut grid = DMatrix::zeros(cells, 2);
    for r in 0..spec.height {
        for c in 0..spec.width {
            let i = r * spec.width + c;
            grid[(i, 0)] = x0 + (c as f64 + 0.5) / spec.width as f64 * (x1 - x0);
            grid[(i, 1)] = y1 - (r as f64 + 0.5) / spec.height as f64 * (y1 - y0);
        }
    }
    let mode = if spec.classifier == "knn" {
        ScoreMode::Exemplar
    } else {
        ScoreMode::Centroid
    };
    let table = pairwise_distances(&grid, &dict, metric, mode).map_err(|e| e.to_string())?;
    let k = spec.k.clamp(1, dict.exemplar_count());
    let mut labels = Vec::with_capacity(cells);
    let mut confidence = Vec::with_capacity(cells);
    for i in 0..cells {
        let posterior = gmm_posterior(&grid.row(i).transpose(), &dict).map_err(|e| e.to_string())?;
        let best = posterior.probabilities.iter().copied().fold(0.0, f64::max);
        let label = match spec.classifier {
            "knn" => classify_knn(&table.row(i), &table.labels, k),
            "centroid" => classify_centroid(&table.row(i), &table.labels),
            "posterior" => Ok(posterior
                .probabilities
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
                .map(|(c, _)| dict.models[c].class_label)
                .unwrap()),
            other => return Err(format!("unknown classifier {other:?}")),
        }
        .map_err(|e| e.to_string())?;
        labels.push(classes[label as usize]);
        confidence.push(best);
    }
    Ok(DecisionMap { labels, confidence })
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn classify_grid(
    points: Vec<f64>,
    xmin: f64,
    xmax: f64,
    ymin: f64,
    ymax: f64,
    width: usize,
    height: usize,
    metric: &str,
    classifier: &str,
    k: usize,
    lambda: f64,
) -> Result<DecisionMap, JsError> {
    let spec = MapSpec {
        bounds: [xmin, xmax, ymin, ymax],
        width,
        height,
        metric,
        classifier,
        k,
        lambda,
    };
    decision_map(&points, &spec).map_err(js)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ica_separates_what_pca_mixes() {
        let ica = unmix(1.0, 2000, 3, "ica").unwrap();
        let best = |c: &[f64]| (c[0] * c[3]).max(c[1] * c[2]);
        assert!(best(&ica.correlation) > 0.95, "{:?}", ica.correlation);
        let pca = unmix(1.0, 2000, 3, "pca").unwrap();
        assert!(best(&pca.correlation) < best(&ica.correlation));
        assert_eq!(ica.sources.len(), 4000);
        assert!(unmix(0.0, 100, 1, "ica").is_err());
        assert!(unmix(1.0, 100, 1, "nmf").is_err());
    }

    #[test]
    fn curve_recovers_parameters() {
        let xs: Vec<f64> = (1..=20).map(f64::from).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 0.8 / (1.0 + (-0.6 * (x - 9.0)).exp())).collect();
        let c = curve(&xs, &ys).unwrap();
        assert!((c.asymptote() - 0.8).abs() < 1e-6);
        assert!((c.midpoint() - 9.0).abs() < 1e-6);
        assert!((c.eval(9.0) - 0.4).abs() < 1e-6);
        assert!(curve(&xs[..2], &ys[..2]).is_err());
    }
}
