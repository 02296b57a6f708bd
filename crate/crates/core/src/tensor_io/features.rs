use std::fs;
use std::path::Path;

use super::TensorIoError;

pub const FCFT_MAGIC: &[u8; 4] = b"FCFT";
pub const FCFT_VERSION: u32 = 1;
const HEADER_LEN: usize = 20;

/// Patch-grid feature map: `rows × cols` patches, each a `dim`-vector.
///
/// Values are held as `f64` for the numerical stages and stored as
/// little-endian `f32` on disk, so a map read from disk writes back
/// byte-identical.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    rows: usize,
    cols: usize,
    dim: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    /// `data` is row-major: row, then column, then channel.
    pub fn new(rows: usize, cols: usize, dim: usize, data: Vec<f64>) -> Result<Self, TensorIoError> {
        if rows == 0 || cols == 0 || dim == 0 {
            return Err(TensorIoError::Validation(format!(
                "feature map dims must be >= 1, got rows={rows} cols={cols} dim={dim}"
            )));
        }
        let expected = rows * cols * dim;
        if data.len() != expected {
            return Err(TensorIoError::Validation(format!(
                "feature map data has {} values, expected {expected}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(TensorIoError::Validation(format!(
                "non-finite feature value at index {i}"
            )));
        }
        Ok(Self { rows, cols, dim, data })
    }

    pub fn zeros(rows: usize, cols: usize, dim: usize) -> Result<Self, TensorIoError> {
        Self::new(rows, cols, dim, vec![0.0; rows * cols * dim])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of patches, `rows * cols`.
    pub fn n_patches(&self) -> usize {
        self.rows * self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Feature vector of patch `i` (row-major patch index).
    pub fn patch(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub(crate) fn patch_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn same_grid(&self, other: &FeatureMap) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, TensorIoError> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.data.len());
        out.extend_from_slice(FCFT_MAGIC);
        out.extend_from_slice(&FCFT_VERSION.to_le_bytes());
        for d in [self.rows, self.cols, self.dim] {
            let d = u32::try_from(d).map_err(|_| TensorIoError::Validation(format!("dimension {d} exceeds u32")))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        for (i, &v) in self.data.iter().enumerate() {
            let f = v as f32;
            if !f.is_finite() {
                return Err(TensorIoError::Validation(format!(
                    "value at index {i} is not representable as f32"
                )));
            }
            out.extend_from_slice(&f.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self, TensorIoError> {
        if bytes.len() < HEADER_LEN {
            return Err(TensorIoError::Format {
                path: path.into(),
                reason: format!("file is {} bytes, shorter than the header", bytes.len()),
            });
        }
        if &bytes[0..4] != FCFT_MAGIC {
            return Err(TensorIoError::Format {
                path: path.into(),
                reason: "missing FCFT magic".into(),
            });
        }
        let word = |k: usize| u32::from_le_bytes(bytes[4 * k..4 * k + 4].try_into().unwrap());
        let version = word(1);
        if version != FCFT_VERSION {
            return Err(TensorIoError::Format {
                path: path.into(),
                reason: format!("unsupported version {version}"),
            });
        }
        let (rows, cols, dim) = (word(2) as usize, word(3) as usize, word(4) as usize);
        if rows == 0 || cols == 0 || dim == 0 {
            return Err(TensorIoError::Validation(format!(
                "{}: header dims must be >= 1, got rows={rows} cols={cols} dim={dim}",
                path.display()
            )));
        }
        let expected = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(dim))
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| TensorIoError::Format {
                path: path.into(),
                reason: "header dims overflow".into(),
            })?;
        let payload = &bytes[HEADER_LEN..];
        if payload.len() != expected {
            return Err(TensorIoError::Corrupt {
                path: path.into(),
                expected,
                found: payload.len(),
            });
        }
        let data: Vec<f64> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        Self::new(rows, cols, dim, data).map_err(|e| match e {
            TensorIoError::Validation(msg) => TensorIoError::Validation(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}

pub fn read_feature_map(path: impl AsRef<Path>) -> Result<FeatureMap, TensorIoError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| TensorIoError::io(path, e))?;
    FeatureMap::from_bytes(&bytes, path)
}

pub fn write_feature_map(fm: &FeatureMap, path: impl AsRef<Path>) -> Result<(), TensorIoError> {
    let path = path.as_ref();
    let bytes = fm.to_bytes()?;
    fs::write(path, bytes).map_err(|e| TensorIoError::io(path, e))
}
