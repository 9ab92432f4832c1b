//! Synthetic embedding sets: isotropic Gaussian classes, optionally written as
//! a multi-layer dataset whose class separation varies with depth.

use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::embedding::{write_embedding_file, DatasetManifest, EmbeddingFileHeader, EmbeddingRecord, EmbeddingSet};
use crate::error::{Error, Result};
use crate::rng::stream;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussianSpec {
    pub classes: u32,
    pub per_class: u64,
    pub dim: u32,
    /// Distance between class means, in units of `noise_sd` when that is 1.
    pub separation: f64,
    pub noise_sd: f64,
    /// Augmented variants per item; each is its original plus `variant_sd` noise.
    pub variants: u16,
    pub variant_sd: f64,
    pub layer_id: u16,
    /// Place means on a regular simplex (every pair exactly `separation` apart)
    /// instead of at random. Needs `dim >= classes - 1`.
    pub simplex: bool,
}

impl GaussianSpec {
    pub fn new(classes: u32, per_class: u64, dim: u32, separation: f64) -> Self {
        Self {
            classes,
            per_class,
            dim,
            separation,
            noise_sd: 1.0,
            variants: 0,
            variant_sd: 0.1,
            layer_id: 1,
            simplex: false,
        }
    }
}

/// Vertices of a regular simplex with pairwise distance `separation`, embedded in `dim` coordinates.
pub fn simplex_means(classes: usize, dim: usize, separation: f64) -> Result<Vec<Vec<f64>>> {
    if classes < 2 || dim + 1 < classes {
        return Err(Error::invalid(format!(
            "a {classes}-vertex simplex needs at least {} dimensions",
            classes.saturating_sub(1)
        )));
    }
    // Helmert basis of the sum-zero subspace; e_c - 1/C projects onto it with pairwise distance sqrt(2).
    let scale = separation / std::f64::consts::SQRT_2;
    Ok((0..classes)
        .map(|c| {
            let mut v = vec![0.0; dim];
            for k in 1..classes {
                let norm = ((k * (k + 1)) as f64).sqrt();
                let h = if c < k {
                    1.0 / norm
                } else if c == k {
                    -(k as f64) / norm
                } else {
                    0.0
                };
                v[k - 1] = scale * h;
            }
            v
        })
        .collect())
}

/// Class means at unit separation plus per-record noise, shared across layers.
struct Latent {
    means: Vec<Vec<f64>>,
    /// (class, item_id, variant, noise)
    rows: Vec<(u32, u64, u16, Vec<f64>)>,
}

fn latent(spec: &GaussianSpec, seed: u64) -> Result<Latent> {
    if spec.classes == 0 || spec.per_class == 0 || spec.dim == 0 {
        return Err(Error::invalid("synthetic set needs classes, items and dimensions"));
    }
    if !(spec.noise_sd >= 0.0 && spec.variant_sd >= 0.0 && spec.separation.is_finite()) {
        return Err(Error::invalid("synthetic noise levels must be non-negative"));
    }
    let dim = spec.dim as usize;
    let mut rng = stream(seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let means = if spec.simplex {
        simplex_means(spec.classes as usize, dim, 1.0)?
    } else {
        let s = 1.0 / (2.0 * dim as f64).sqrt();
        (0..spec.classes)
            .map(|_| (0..dim).map(|_| s * normal()).collect())
            .collect()
    };
    let mut rows = Vec::new();
    for c in 0..spec.classes {
        for i in 0..spec.per_class {
            let item_id = c as u64 * spec.per_class + i + 1;
            let base: Vec<f64> = (0..dim).map(|_| spec.noise_sd * normal()).collect();
            for v in 1..=spec.variants {
                let jitter: Vec<f64> = base.iter().map(|b| b + spec.variant_sd * normal()).collect();
                rows.push((c, item_id, v, jitter));
            }
            rows.push((c, item_id, 0, base));
        }
    }
    Ok(Latent { means, rows })
}

fn render(spec: &GaussianSpec, latent: &Latent, layer_id: u16, separation: f64) -> Result<EmbeddingSet> {
    let records: Vec<EmbeddingRecord> = latent
        .rows
        .iter()
        .map(|(c, item_id, variant_id, noise)| EmbeddingRecord {
            item_id: *item_id,
            class_label: *c,
            variant_id: *variant_id,
            tokens: latent.means[*c as usize]
                .iter()
                .zip(noise)
                .map(|(m, z)| (separation * m + z) as f32)
                .collect(),
        })
        .collect();
    let header = EmbeddingFileHeader::new(
        spec.dim,
        records.len() as u64,
        spec.classes,
        layer_id,
        1,
        spec.variants > 0,
    );
    Ok(EmbeddingSet::new(header, records)?)
}

/// Samples a pre-pooled embedding set; panics only on an invalid spec.
pub fn gaussian_classes(spec: &GaussianSpec, seed: u64) -> EmbeddingSet {
    try_gaussian_classes(spec, seed).expect("valid synthetic spec")
}

pub fn try_gaussian_classes(spec: &GaussianSpec, seed: u64) -> Result<EmbeddingSet> {
    let l = latent(spec, seed)?;
    render(spec, &l, spec.layer_id, spec.separation)
}

/// `max / (1 + exp(-growth (l - midpoint)))` for layers `1..=layers`.
pub fn sigmoid_separations(layers: u16, max: f64, growth: f64, midpoint: f64) -> Vec<f64> {
    (1..=layers)
        .map(|l| max / (1.0 + (-growth * (f64::from(l) - midpoint)).exp()))
        .collect()
}

/// Writes one embedding file per layer plus `manifest.toml` into `dir`.
///
/// Layer `l` (1-based) uses `separations[l - 1]`; means and noise are shared by
/// all layers so that only the separation changes with depth.
pub fn write_layered_dataset(
    dir: impl AsRef<Path>,
    dataset_name: &str,
    spec: &GaussianSpec,
    separations: &[f64],
    seed: u64,
) -> Result<DatasetManifest> {
    let dir = dir.as_ref();
    if separations.is_empty() || separations.len() > u16::MAX as usize {
        return Err(Error::invalid("need between 1 and 65535 layers"));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let l = latent(spec, seed)?;
    let mut manifest = DatasetManifest::new(dataset_name, "train", "synthetic-gaussian");
    manifest.base_dir = dir.to_path_buf();
    manifest.class_names = (0..spec.classes).map(|c| format!("class_{c:03}")).collect();
    for (i, &sep) in separations.iter().enumerate() {
        let layer = (i + 1) as u16;
        let set = render(spec, &l, layer, sep)?;
        let file = format!("layer_{layer:02}.feb");
        write_embedding_file(&set.header, &set.records, dir.join(&file))?;
        manifest.layer_files.insert(layer, file.into());
    }
    manifest.save(dir.join("manifest.toml"))?;
    Ok(manifest)
}
