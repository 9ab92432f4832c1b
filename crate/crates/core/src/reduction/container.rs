//! Projector container: a small little-endian binary file.
//!
//! ```text
//! magic "FPJ1" | version u32 | kind u8 (identity, pca, ica, whitening) | contrast u8 | converged u8 | pad u8 |
//! input_dim u32 | output_dim u32 | max_iterations u32 | iterations u32 |
//! tolerance f64 | seed u64 | ratio_count u32 |
//! mean[input_dim] f32 | weights[output_dim x input_dim] f32 (row-major, absent for identity) |
//! ratios[ratio_count] f32
//! ```

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::{Contrast, Convergence, FitConfig, LinearProjector, ProjectorKind};
use crate::error::{Error, FormatError, Result};

pub const PROJECTOR_MAGIC: [u8; 4] = *b"FPJ1";
const VERSION: u32 = 1;
const FIXED_LEN: usize = 4 + 4 + 4 + 4 * 4 + 8 + 8 + 4;

pub fn encode_projector(p: &LinearProjector) -> Vec<u8> {
    let input_dim = p.input_dim();
    let output_dim = p.output_dim();
    let mut out = Vec::new();
    out.extend_from_slice(&PROJECTOR_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(match p.kind {
        ProjectorKind::Identity => 0,
        ProjectorKind::Pca => 1,
        ProjectorKind::Ica => 2,
        ProjectorKind::Whitening => 3,
    });
    out.push(match p.fit_config.ica_contrast {
        Contrast::Logcosh => 0,
        Contrast::Cube => 1,
    });
    out.push(p.convergence.converged as u8);
    out.push(0);
    out.extend_from_slice(&(input_dim as u32).to_le_bytes());
    out.extend_from_slice(&(output_dim as u32).to_le_bytes());
    out.extend_from_slice(&(p.fit_config.max_iterations as u32).to_le_bytes());
    out.extend_from_slice(&(p.convergence.iterations as u32).to_le_bytes());
    out.extend_from_slice(&p.fit_config.tolerance.to_le_bytes());
    out.extend_from_slice(&p.fit_config.seed.to_le_bytes());
    out.extend_from_slice(&(p.explained_variance_ratio.len() as u32).to_le_bytes());
    for v in p.mean.iter() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    if p.kind != ProjectorKind::Identity {
        for r in 0..output_dim {
            for c in 0..input_dim {
                out.extend_from_slice(&(p.weights[(r, c)] as f32).to_le_bytes());
            }
        }
    }
    for v in &p.explained_variance_ratio {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

pub fn decode_projector(bytes: &[u8]) -> Result<LinearProjector, FormatError> {
    if bytes.len() < FIXED_LEN {
        return Err(FormatError::Truncated {
            expected: FIXED_LEN as u64,
            actual: bytes.len() as u64,
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != PROJECTOR_MAGIC {
        return Err(FormatError::BadMagic {
            expected: PROJECTOR_MAGIC,
            found: magic,
        });
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let kind = match bytes[8] {
        0 => ProjectorKind::Identity,
        1 => ProjectorKind::Pca,
        2 => ProjectorKind::Ica,
        3 => ProjectorKind::Whitening,
        k => return Err(FormatError::InvalidHeader(format!("unknown projector kind {k}"))),
    };
    let ica_contrast = match bytes[9] {
        0 => Contrast::Logcosh,
        1 => Contrast::Cube,
        c => return Err(FormatError::InvalidHeader(format!("unknown contrast {c}"))),
    };
    let converged = bytes[10] != 0;
    let input_dim = u32_at(12) as usize;
    let output_dim = u32_at(16) as usize;
    let max_iterations = u32_at(20) as usize;
    let iterations = u32_at(24) as usize;
    let tolerance = f64::from_le_bytes(bytes[28..36].try_into().unwrap());
    let seed = u64::from_le_bytes(bytes[36..44].try_into().unwrap());
    let ratio_count = u32_at(44) as usize;
    if input_dim == 0 || output_dim == 0 || output_dim > input_dim {
        return Err(FormatError::InvalidHeader(format!(
            "dims {output_dim} x {input_dim} are not a valid projection"
        )));
    }
    if kind == ProjectorKind::Identity && output_dim != input_dim {
        return Err(FormatError::InvalidHeader(
            "identity projector must keep its dimension".into(),
        ));
    }
    let weight_count = if kind == ProjectorKind::Identity {
        0
    } else {
        output_dim * input_dim
    };
    let expected = (FIXED_LEN + 4 * (input_dim + weight_count + ratio_count)) as u64;
    if (bytes.len() as u64) < expected {
        return Err(FormatError::Truncated {
            expected,
            actual: bytes.len() as u64,
        });
    }
    if (bytes.len() as u64) > expected {
        return Err(FormatError::TrailingBytes(bytes.len() as u64 - expected));
    }
    let floats: Vec<f64> = bytes[FIXED_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    if let Some(offset) = floats.iter().position(|v| !v.is_finite()) {
        return Err(FormatError::NonFinite { record: 0, offset });
    }
    let mean = DVector::from_column_slice(&floats[..input_dim]);
    let weights = if kind == ProjectorKind::Identity {
        DMatrix::zeros(0, input_dim)
    } else {
        DMatrix::from_row_slice(output_dim, input_dim, &floats[input_dim..input_dim + weight_count])
    };
    let explained_variance_ratio = floats[input_dim + weight_count..].to_vec();
    Ok(LinearProjector {
        kind,
        mean,
        weights,
        explained_variance_ratio,
        fit_config: FitConfig {
            max_iterations,
            tolerance,
            ica_contrast,
            seed,
        },
        convergence: Convergence { iterations, converged },
    })
}

pub fn write_projector(p: &LinearProjector, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_projector(p)).map_err(|e| Error::io(path, e))
}

pub fn read_projector(path: impl AsRef<Path>) -> Result<LinearProjector> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_projector(&bytes).map_err(|source| Error::Format {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reduction::fit_pca;

    #[test]
    fn quantized_projector_round_trips_exactly() {
        let data = DMatrix::from_fn(30, 5, |i, j| ((i * 13 + j * 7) % 11) as f64 * 0.37 - j as f64);
        let p = fit_pca(&data, 3).unwrap().quantized();
        let back = decode_projector(&encode_projector(&p)).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn identity_has_no_weights() {
        let p = LinearProjector::identity(4);
        let bytes = encode_projector(&p);
        assert_eq!(bytes.len(), FIXED_LEN + 16);
        assert_eq!(decode_projector(&bytes).unwrap(), p);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let mut bytes = encode_projector(&LinearProjector::identity(2));
        let short = &bytes[..bytes.len() - 1];
        assert!(matches!(decode_projector(short), Err(FormatError::Truncated { .. })));
        bytes[0] = b'X';
        assert!(matches!(decode_projector(&bytes), Err(FormatError::BadMagic { .. })));
    }
}
