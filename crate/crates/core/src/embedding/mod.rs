//! Embedding files: the binary container, the manifest sidecar and token pooling.
//!
//! One file holds one (dataset, split, layer) triple. The layout is a packed
//! little-endian header followed by records sorted by
//! `(class_label, item_id, variant_id)`:
//!
//! ```text
//! offset  size  field
//!      0     4  magic "FEB1"
//!      4     4  format_version (u32)
//!      8     4  feature_dim (u32)
//!     12     8  item_count (u64)
//!     20     4  class_count (u32)
//!     24     2  layer_id (u16)
//!     26     4  tokens_per_item (u32)
//!     30     4  flags (u32, bit 0 = augmented variants present)
//!     34        records
//!
//! record: item_id u64 | class_label u32 | variant_id u16 | 2 zero bytes |
//!         tokens_per_item * feature_dim f32, row-major
//! ```

mod format;
mod manifest;
mod pooled;

use std::collections::HashSet;

pub use format::{decode, encode, read_embedding_file, write_embedding_file};
pub use manifest::{validate_manifest, DatasetManifest, LayerReport, ValidationReport};
pub use pooled::{pool_tokens, ClassItems, ItemRows, PooledEmbeddings};

use crate::error::FormatError;

pub const MAGIC: [u8; 4] = *b"FEB1";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 34;
pub const RECORD_PREFIX_LEN: usize = 16;
/// Flag bit 0: the file contains augmented variants (variant_id > 0).
pub const FLAG_AUGMENTED: u32 = 1;
const KNOWN_FLAGS: u32 = FLAG_AUGMENTED;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmbeddingFileHeader {
    pub magic: [u8; 4],
    pub format_version: u32,
    pub feature_dim: u32,
    pub item_count: u64,
    pub class_count: u32,
    /// Backbone block index, 1-based. For a 24-block backbone, 24 is the normed output.
    pub layer_id: u16,
    /// 1 for pre-pooled vectors, N > 1 for raw token matrices.
    pub tokens_per_item: u32,
    pub flags: u32,
}

impl EmbeddingFileHeader {
    pub fn new(
        feature_dim: u32,
        item_count: u64,
        class_count: u32,
        layer_id: u16,
        tokens_per_item: u32,
        augmented: bool,
    ) -> Self {
        Self {
            magic: MAGIC,
            format_version: FORMAT_VERSION,
            feature_dim,
            item_count,
            class_count,
            layer_id,
            tokens_per_item,
            flags: if augmented { FLAG_AUGMENTED } else { 0 },
        }
    }

    pub fn augmented(&self) -> bool {
        self.flags & FLAG_AUGMENTED != 0
    }

    /// Floats per record.
    pub fn record_values(&self) -> usize {
        self.tokens_per_item as usize * self.feature_dim as usize
    }

    pub fn record_len(&self) -> u64 {
        RECORD_PREFIX_LEN as u64 + 4 * self.tokens_per_item as u64 * self.feature_dim as u64
    }

    /// Total file length implied by the header, `None` on overflow.
    pub fn file_len(&self) -> Option<u64> {
        let per = (self.tokens_per_item as u64)
            .checked_mul(self.feature_dim as u64)?
            .checked_mul(4)?
            .checked_add(RECORD_PREFIX_LEN as u64)?;
        per.checked_mul(self.item_count)?.checked_add(HEADER_LEN as u64)
    }

    pub fn validate(&self) -> Result<(), FormatError> {
        if self.magic != MAGIC {
            return Err(FormatError::BadMagic {
                expected: MAGIC,
                found: self.magic,
            });
        }
        if self.format_version != FORMAT_VERSION {
            return Err(FormatError::UnsupportedVersion(self.format_version));
        }
        let bad = |msg: &str| Err(FormatError::InvalidHeader(msg.to_string()));
        if self.feature_dim == 0 {
            return bad("feature_dim must be positive");
        }
        if self.item_count == 0 {
            return bad("item_count must be positive");
        }
        if self.class_count == 0 {
            return bad("class_count must be positive");
        }
        if self.layer_id == 0 {
            return bad("layer_id is 1-based");
        }
        if self.tokens_per_item == 0 {
            return bad("tokens_per_item must be at least 1");
        }
        if self.flags & !KNOWN_FLAGS != 0 {
            return Err(FormatError::InvalidHeader(format!(
                "unknown flag bits {:#x}",
                self.flags & !KNOWN_FLAGS
            )));
        }
        if self.file_len().is_none() {
            return bad("declared payload size overflows");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub item_id: u64,
    /// 0-based class index.
    pub class_label: u32,
    /// 0 for the original image, >= 1 for augmented variants.
    pub variant_id: u16,
    /// `tokens_per_item x feature_dim`, row-major.
    pub tokens: Vec<f32>,
}

impl EmbeddingRecord {
    pub fn sort_key(&self) -> (u32, u64, u16) {
        (self.class_label, self.item_id, self.variant_id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub header: EmbeddingFileHeader,
    pub records: Vec<EmbeddingRecord>,
    pub class_names: Option<Vec<String>>,
}

impl EmbeddingSet {
    /// Builds a validated set, sorting records into canonical order.
    pub fn new(header: EmbeddingFileHeader, mut records: Vec<EmbeddingRecord>) -> Result<Self, FormatError> {
        records.sort_by_key(EmbeddingRecord::sort_key);
        check_records(&header, &records)?;
        Ok(Self {
            header,
            records,
            class_names: None,
        })
    }

    pub fn with_class_names(mut self, names: Vec<String>) -> Self {
        self.class_names = Some(names);
        self
    }

    pub fn class_count(&self) -> usize {
        self.header.class_count as usize
    }

    pub fn feature_dim(&self) -> usize {
        self.header.feature_dim as usize
    }

    pub fn layer_id(&self) -> u16 {
        self.header.layer_id
    }

    pub fn pooled(&self) -> PooledEmbeddings {
        PooledEmbeddings::from_set(self)
    }
}

/// Checks every record-level invariant of an already-sorted record list.
pub(crate) fn check_records(header: &EmbeddingFileHeader, records: &[EmbeddingRecord]) -> Result<(), FormatError> {
    header.validate()?;
    if records.len() as u64 != header.item_count {
        return Err(FormatError::InvalidHeader(format!(
            "item_count {} but {} records",
            header.item_count,
            records.len()
        )));
    }
    let values = header.record_values();
    let mut seen_classes = vec![false; header.class_count as usize];
    let mut item_class = std::collections::HashMap::new();
    let mut prev: Option<(u32, u64, u16)> = None;
    for (index, rec) in records.iter().enumerate() {
        let invalid = |reason: String| FormatError::InvalidRecord { index, reason };
        if rec.tokens.len() != values {
            return Err(invalid(format!(
                "{} values, header implies {}",
                rec.tokens.len(),
                values
            )));
        }
        if rec.class_label >= header.class_count {
            return Err(invalid(format!(
                "class_label {} >= class_count {}",
                rec.class_label, header.class_count
            )));
        }
        if rec.variant_id != 0 && !header.augmented() {
            return Err(invalid(format!(
                "variant_id {} but augmented flag is clear",
                rec.variant_id
            )));
        }
        if let Some(offset) = rec.tokens.iter().position(|v| !v.is_finite()) {
            return Err(FormatError::NonFinite { record: index, offset });
        }
        let key = rec.sort_key();
        if let Some(p) = prev {
            if key <= p {
                return Err(invalid(
                    "records not in strictly increasing (class, item, variant) order".into(),
                ));
            }
        }
        prev = Some(key);
        if let Some(&label) = item_class.get(&rec.item_id) {
            if label != rec.class_label {
                return Err(invalid(format!("item {} appears under two classes", rec.item_id)));
            }
        } else {
            item_class.insert(rec.item_id, rec.class_label);
        }
        seen_classes[rec.class_label as usize] = true;
    }
    if let Some(missing) = seen_classes.iter().position(|s| !s) {
        return Err(FormatError::InvalidHeader(format!("class {missing} has no records")));
    }
    Ok(())
}

/// Distinct (item_id, variant_id, class_label) triples, used to compare layer files.
pub(crate) fn identity_keys(set: &EmbeddingSet) -> Vec<(u64, u16, u32)> {
    let mut keys: Vec<_> = set
        .records
        .iter()
        .map(|r| (r.item_id, r.variant_id, r.class_label))
        .collect();
    keys.sort_unstable();
    debug_assert_eq!(keys.iter().collect::<HashSet<_>>().len(), keys.len());
    keys
}
