use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::{fit_projector, Reduction};
use crate::embedding::PooledEmbeddings;
use crate::error::{Error, Result};
use crate::reduction::{read_projector, write_projector, FitConfig, LinearProjector};

/// Environment variable naming the projector cache directory.
pub const CACHE_ENV: &str = "MANIFOLD_PROBE_CACHE";

/// Fitted projectors on disk, one `<sha256>.fpj` file per (training data, reduction, fit config).
#[derive(Debug, Clone)]
pub struct ProjectorCache {
    dir: PathBuf,
}

impl ProjectorCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn from_env() -> Option<Self> {
        std::env::var_os(CACHE_ENV)
            .filter(|v| !v.is_empty())
            .map(|v| Self::new(PathBuf::from(v)))
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Content hash over the fitting inputs.
    pub fn key(train: &PooledEmbeddings, reduction: Reduction, ica: &FitConfig) -> String {
        let mut h = Sha256::new();
        h.update(b"projector-v1");
        let (kind, dim) = match reduction {
            Reduction::Raw => (0u8, 0usize),
            Reduction::Pca(d) => (1, d),
            Reduction::Ica(d) => (2, d),
        };
        h.update([kind]);
        h.update((dim as u64).to_le_bytes());
        if let Reduction::Ica(_) = reduction {
            h.update((ica.max_iterations as u64).to_le_bytes());
            h.update(ica.tolerance.to_le_bytes());
            h.update([ica.ica_contrast as u8]);
            h.update(ica.seed.to_le_bytes());
        }
        let rows = train.original_rows();
        h.update((rows.len() as u64).to_le_bytes());
        h.update((train.dim() as u64).to_le_bytes());
        for &r in &rows {
            for v in train.vectors.row(r).iter() {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    pub fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.fpj"))
    }

    /// Loads the cached projector or fits and stores a new one.
    pub fn get_or_fit(
        &self,
        train: &PooledEmbeddings,
        reduction: Reduction,
        ica: &FitConfig,
    ) -> Result<LinearProjector> {
        if reduction == Reduction::Raw {
            return Ok(LinearProjector::identity(train.dim()));
        }
        let path = self.path_for(&Self::key(train, reduction, ica));
        if path.exists() {
            return read_projector(&path);
        }
        let projector = fit_projector(train, reduction, ica)?;
        fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        // write then rename so concurrent readers never see a partial file
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        write_projector(&projector, &tmp)?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        Ok(projector)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{gaussian_classes, GaussianSpec};

    #[test]
    fn cached_projector_equals_fresh_fit() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ProjectorCache::new(dir.path());
        let train = gaussian_classes(&GaussianSpec::new(4, 20, 6, 2.0), 1).pooled();
        let cfg = FitConfig::default();
        let first = cache.get_or_fit(&train, Reduction::Pca(3), &cfg).unwrap();
        let key = ProjectorCache::key(&train, Reduction::Pca(3), &cfg);
        assert!(cache.path_for(&key).exists());
        let second = cache.get_or_fit(&train, Reduction::Pca(3), &cfg).unwrap();
        assert_eq!(first, second);
        assert_eq!(first, fit_projector(&train, Reduction::Pca(3), &cfg).unwrap());
    }

    #[test]
    fn key_depends_on_inputs() {
        let a = gaussian_classes(&GaussianSpec::new(4, 20, 6, 2.0), 1).pooled();
        let b = gaussian_classes(&GaussianSpec::new(4, 20, 6, 2.0), 2).pooled();
        let cfg = FitConfig::default();
        let ka = ProjectorCache::key(&a, Reduction::Pca(3), &cfg);
        assert_ne!(ka, ProjectorCache::key(&b, Reduction::Pca(3), &cfg));
        assert_ne!(ka, ProjectorCache::key(&a, Reduction::Pca(2), &cfg));
        assert_ne!(ka, ProjectorCache::key(&a, Reduction::Ica(3), &cfg));
        assert_eq!(ka, ProjectorCache::key(&a, Reduction::Pca(3), &cfg));
    }
}
