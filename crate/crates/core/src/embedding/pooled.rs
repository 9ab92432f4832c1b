use nalgebra::{DMatrix, DVector};

use super::EmbeddingSet;
use crate::error::{Error, Result};

/// Mean over the `tokens.len() / dim` rows of a row-major token matrix.
///
/// The CLS token is averaged with equal weight alongside the patch tokens.
pub fn pool_tokens(tokens: &[f32], dim: usize) -> Result<DVector<f64>> {
    if dim == 0 || tokens.is_empty() {
        return Err(Error::invalid("empty token matrix"));
    }
    if !tokens.len().is_multiple_of(dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: tokens.len() % dim,
        });
    }
    if tokens.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite token value"));
    }
    let n = tokens.len() / dim;
    let mut acc = DVector::<f64>::zeros(dim);
    for row in tokens.chunks_exact(dim) {
        for (a, v) in acc.iter_mut().zip(row) {
            *a += *v as f64;
        }
    }
    acc /= n as f64;
    Ok(acc)
}

/// Original image rows for one class plus the rows of their augmented variants.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassItems {
    pub class_label: u32,
    /// Sorted by item id.
    pub items: Vec<ItemRows>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ItemRows {
    pub item_id: u64,
    pub original: usize,
    pub variants: Vec<usize>,
}

/// One vector per record, in file order, with a per-class index of items.
#[derive(Debug, Clone)]
pub struct PooledEmbeddings {
    pub layer_id: u16,
    pub class_count: usize,
    pub item_ids: Vec<u64>,
    pub labels: Vec<u32>,
    pub variant_ids: Vec<u16>,
    /// n x d
    pub vectors: DMatrix<f64>,
    classes: Vec<ClassItems>,
}

impl PooledEmbeddings {
    pub fn from_set(set: &EmbeddingSet) -> Self {
        let dim = set.feature_dim();
        let n = set.records.len();
        let mut vectors = DMatrix::<f64>::zeros(n, dim);
        for (i, rec) in set.records.iter().enumerate() {
            // validated on load, so pooling cannot fail
            let pooled = pool_tokens(&rec.tokens, dim).expect("validated record");
            vectors.row_mut(i).copy_from(&pooled.transpose());
        }
        Self::from_parts(
            set.layer_id(),
            set.class_count(),
            set.records.iter().map(|r| r.item_id).collect(),
            set.records.iter().map(|r| r.class_label).collect(),
            set.records.iter().map(|r| r.variant_id).collect(),
            vectors,
        )
    }

    /// Rows must already be in `(class_label, item_id, variant_id)` order.
    pub fn from_parts(
        layer_id: u16,
        class_count: usize,
        item_ids: Vec<u64>,
        labels: Vec<u32>,
        variant_ids: Vec<u16>,
        vectors: DMatrix<f64>,
    ) -> Self {
        let mut classes: Vec<ClassItems> = (0..class_count as u32)
            .map(|c| ClassItems {
                class_label: c,
                items: Vec::new(),
            })
            .collect();
        let mut pending: Option<(u32, ItemRows)> = None;
        for row in 0..item_ids.len() {
            let (id, label, variant) = (item_ids[row], labels[row], variant_ids[row]);
            match &mut pending {
                Some((_, item)) if item.item_id == id => {
                    item.variants.push(row);
                    continue;
                }
                _ => {}
            }
            if let Some((c, item)) = pending.take() {
                classes[c as usize].items.push(item);
            }
            // variants without an original are never sampled
            if variant == 0 {
                pending = Some((
                    label,
                    ItemRows {
                        item_id: id,
                        original: row,
                        variants: Vec::new(),
                    },
                ));
            }
        }
        if let Some((c, item)) = pending.take() {
            classes[c as usize].items.push(item);
        }
        Self {
            layer_id,
            class_count,
            item_ids,
            labels,
            variant_ids,
            vectors,
            classes,
        }
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn len(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn class_items(&self, class_label: u32) -> &ClassItems {
        &self.classes[class_label as usize]
    }

    pub fn classes(&self) -> &[ClassItems] {
        &self.classes
    }

    /// Rows holding variant 0, i.e. one per original image.
    pub fn original_rows(&self) -> Vec<usize> {
        (0..self.len()).filter(|&r| self.variant_ids[r] == 0).collect()
    }

    /// Copies the given rows into a new `rows.len() x d` matrix.
    pub fn select_rows(&self, rows: &[usize]) -> DMatrix<f64> {
        self.vectors.select_rows(rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{EmbeddingFileHeader, EmbeddingRecord};

    #[test]
    fn constant_rows_pool_to_themselves() {
        let v = [0.5f32, -2.0, 3.25];
        let tokens: Vec<f32> = v.iter().copied().cycle().take(3 * 7).collect();
        let pooled = pool_tokens(&tokens, 3).unwrap();
        for (a, b) in pooled.iter().zip(v) {
            assert_eq!(*a, b as f64);
        }
    }

    #[test]
    fn two_rows_average() {
        let pooled = pool_tokens(&[0.0, 0.0, 2.0, 4.0], 2).unwrap();
        assert_eq!(pooled.as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn full_size_token_matrix() {
        let tokens = vec![0.25f32; 257 * 1024];
        let pooled = pool_tokens(&tokens, 1024).unwrap();
        assert_eq!(pooled.len(), 1024);
        assert!(pooled.iter().all(|v| (*v - 0.25).abs() < 1e-12));
    }

    #[test]
    fn empty_matrix_is_error() {
        assert!(pool_tokens(&[], 4).is_err());
    }

    #[test]
    fn item_index_groups_variants() {
        let header = EmbeddingFileHeader::new(1, 5, 2, 3, 1, true);
        let rec = |item_id, class_label, variant_id| EmbeddingRecord {
            item_id,
            class_label,
            variant_id,
            tokens: vec![item_id as f32],
        };
        let set = EmbeddingSet::new(
            header,
            vec![rec(1, 0, 0), rec(1, 0, 1), rec(1, 0, 2), rec(2, 0, 0), rec(5, 1, 0)],
        )
        .unwrap();
        let pooled = set.pooled();
        let c0 = pooled.class_items(0);
        assert_eq!(c0.items.len(), 2);
        assert_eq!(c0.items[0].original, 0);
        assert_eq!(c0.items[0].variants, vec![1, 2]);
        assert_eq!(pooled.class_items(1).items[0].item_id, 5);
        assert_eq!(pooled.original_rows(), vec![0, 3, 4]);
    }
}
