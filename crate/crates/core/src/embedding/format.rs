use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{check_records, EmbeddingFileHeader, EmbeddingRecord, EmbeddingSet, HEADER_LEN, RECORD_PREFIX_LEN};
use crate::error::{Error, FormatError, Result};

fn encode_header(header: &EmbeddingFileHeader, out: &mut Vec<u8>) {
    out.extend_from_slice(&header.magic);
    out.extend_from_slice(&header.format_version.to_le_bytes());
    out.extend_from_slice(&header.feature_dim.to_le_bytes());
    out.extend_from_slice(&header.item_count.to_le_bytes());
    out.extend_from_slice(&header.class_count.to_le_bytes());
    out.extend_from_slice(&header.layer_id.to_le_bytes());
    out.extend_from_slice(&header.tokens_per_item.to_le_bytes());
    out.extend_from_slice(&header.flags.to_le_bytes());
}

fn encode_record(rec: &EmbeddingRecord, out: &mut Vec<u8>) {
    out.extend_from_slice(&rec.item_id.to_le_bytes());
    out.extend_from_slice(&rec.class_label.to_le_bytes());
    out.extend_from_slice(&rec.variant_id.to_le_bytes());
    out.extend_from_slice(&[0, 0]);
    for v in &rec.tokens {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Serializes records in canonical order after validating them against the header.
pub fn encode(header: &EmbeddingFileHeader, records: &[EmbeddingRecord]) -> Result<Vec<u8>, FormatError> {
    let mut sorted: Vec<&EmbeddingRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.sort_key());
    let owned: Vec<EmbeddingRecord> = sorted.iter().map(|r| (*r).clone()).collect();
    check_records(header, &owned)?;

    let len = header.file_len().expect("validated") as usize;
    let mut out = Vec::with_capacity(len);
    encode_header(header, &mut out);
    for rec in &owned {
        encode_record(rec, &mut out);
    }
    debug_assert_eq!(out.len(), len);
    Ok(out)
}

pub fn write_embedding_file(
    header: &EmbeddingFileHeader,
    records: &[EmbeddingRecord],
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let expected = header.record_values();
    if let Some(bad) = records.iter().find(|r| r.tokens.len() != expected) {
        return Err(Error::DimensionMismatch {
            expected,
            actual: bad.tokens.len(),
        });
    }
    let bytes = encode(header, records)?;
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take<const N: usize>(&mut self) -> [u8; N] {
        let out: [u8; N] = self.bytes[self.pos..self.pos + N].try_into().unwrap();
        self.pos += N;
        out
    }
    fn u16(&mut self) -> u16 {
        u16::from_le_bytes(self.take())
    }
    fn u32(&mut self) -> u32 {
        u32::from_le_bytes(self.take())
    }
    fn u64(&mut self) -> u64 {
        u64::from_le_bytes(self.take())
    }
}

pub fn decode(bytes: &[u8]) -> Result<EmbeddingSet, FormatError> {
    if bytes.len() < 4 {
        return Err(FormatError::Truncated {
            expected: HEADER_LEN as u64,
            actual: bytes.len() as u64,
        });
    }
    let mut cur = Cursor { bytes, pos: 0 };
    let magic: [u8; 4] = cur.take();
    if magic != super::MAGIC {
        return Err(FormatError::BadMagic {
            expected: super::MAGIC,
            found: magic,
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(FormatError::Truncated {
            expected: HEADER_LEN as u64,
            actual: bytes.len() as u64,
        });
    }
    let header = EmbeddingFileHeader {
        magic,
        format_version: cur.u32(),
        feature_dim: cur.u32(),
        item_count: cur.u64(),
        class_count: cur.u32(),
        layer_id: cur.u16(),
        tokens_per_item: cur.u32(),
        flags: cur.u32(),
    };
    header.validate()?;

    let expected = header.file_len().expect("validated");
    let actual = bytes.len() as u64;
    if actual < expected {
        return Err(FormatError::Truncated { expected, actual });
    }
    if actual > expected {
        return Err(FormatError::TrailingBytes(actual - expected));
    }

    let values = header.record_values();
    let mut records = Vec::with_capacity(header.item_count as usize);
    for index in 0..header.item_count as usize {
        let item_id = cur.u64();
        let class_label = cur.u32();
        let variant_id = cur.u16();
        let pad: [u8; 2] = cur.take();
        if pad != [0, 0] {
            return Err(FormatError::InvalidRecord {
                index,
                reason: "non-zero padding".into(),
            });
        }
        let payload = &bytes[cur.pos..cur.pos + 4 * values];
        cur.pos += 4 * values;
        let tokens: Vec<f32> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        records.push(EmbeddingRecord {
            item_id,
            class_label,
            variant_id,
            tokens,
        });
    }
    debug_assert_eq!(cur.pos, bytes.len());
    debug_assert_eq!(RECORD_PREFIX_LEN, 16);
    check_records(&header, &records)?;
    Ok(EmbeddingSet {
        header,
        records,
        class_names: None,
    })
}

pub fn read_embedding_file(path: impl AsRef<Path>) -> Result<EmbeddingSet> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|source| Error::Format {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::MAGIC;

    fn two_records() -> (EmbeddingFileHeader, Vec<EmbeddingRecord>) {
        let header = EmbeddingFileHeader::new(4, 2, 2, 22, 1, false);
        let records = vec![
            EmbeddingRecord {
                item_id: 9,
                class_label: 1,
                variant_id: 0,
                tokens: vec![1.0, 2.0, 3.0, 4.0],
            },
            EmbeddingRecord {
                item_id: 3,
                class_label: 0,
                variant_id: 0,
                tokens: vec![-1.0, 0.5, 0.25, 8.0],
            },
        ];
        (header, records)
    }

    #[test]
    fn layout_matches_format_arithmetic() {
        let (header, records) = two_records();
        let bytes = encode(&header, &records).unwrap();
        assert_eq!(bytes.len(), HEADER_LEN + 2 * (16 + 16));
        assert_eq!(&bytes[..4], b"FEB1");
        // records come out sorted by class: item 3 first
        let first = &bytes[HEADER_LEN..HEADER_LEN + 32];
        assert_eq!(u64::from_le_bytes(first[..8].try_into().unwrap()), 3);
        assert_eq!(&first[14..16], &[0, 0]);
        assert_eq!(f32::from_le_bytes(first[16..20].try_into().unwrap()), -1.0);
        assert_eq!(f32::from_le_bytes(first[28..32].try_into().unwrap()), 8.0);
    }

    #[test]
    fn round_trip_is_structural_identity() {
        let (header, records) = two_records();
        let bytes = encode(&header, &records).unwrap();
        let set = decode(&bytes).unwrap();
        let mut sorted = records.clone();
        sorted.sort_by_key(EmbeddingRecord::sort_key);
        assert_eq!(set.header, header);
        assert_eq!(set.records, sorted);
        assert_eq!(encode(&set.header, &set.records).unwrap(), bytes);
    }

    #[test]
    fn token_level_header_sizes() {
        let header = EmbeddingFileHeader::new(1024, 1, 1, 24, 257, false);
        header.validate().unwrap();
        assert_eq!(header.record_len(), 16 + 257 * 1024 * 4);
    }

    #[test]
    fn bad_magic_rejected() {
        let (header, records) = two_records();
        let mut bytes = encode(&header, &records).unwrap();
        bytes[..4].copy_from_slice(b"XXXX");
        match decode(&bytes) {
            Err(FormatError::BadMagic { found, expected }) => {
                assert_eq!(&found, b"XXXX");
                assert_eq!(expected, MAGIC);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn truncation_names_byte_counts() {
        let (header, records) = two_records();
        let bytes = encode(&header, &records).unwrap();
        let cut = &bytes[..bytes.len() - 3];
        match decode(cut) {
            Err(FormatError::Truncated { expected, actual }) => {
                assert_eq!(expected, bytes.len() as u64);
                assert_eq!(actual, bytes.len() as u64 - 3);
                let msg = FormatError::Truncated { expected, actual }.to_string();
                assert!(msg.contains(&expected.to_string()) && msg.contains(&actual.to_string()));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unsupported_version_rejected() {
        let (header, records) = two_records();
        let mut bytes = encode(&header, &records).unwrap();
        bytes[4..8].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(decode(&bytes), Err(FormatError::UnsupportedVersion(2))));
    }

    #[test]
    fn non_finite_rejected() {
        let (header, records) = two_records();
        let mut bytes = encode(&header, &records).unwrap();
        let at = HEADER_LEN + 16 + 4;
        bytes[at..at + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(
            decode(&bytes),
            Err(FormatError::NonFinite { record: 0, offset: 1 })
        ));
    }

    #[test]
    fn variant_without_flag_rejected() {
        let (header, mut records) = two_records();
        records[0].variant_id = 1;
        assert!(encode(&header, &records).is_err());
    }

    #[test]
    fn dimension_mismatch_on_write() {
        let (header, mut records) = two_records();
        records[1].tokens.pop();
        let dir = tempfile::tempdir().unwrap();
        let err = write_embedding_file(&header, &records, dir.path().join("x.feb")).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }), "{err}");
    }

    #[test]
    fn missing_class_rejected() {
        let (mut header, records) = two_records();
        header.class_count = 3;
        assert!(encode(&header, &records).is_err());
    }
}
