use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::TensorIoError;
use crate::mask::BinaryMask;

/// Uncompressed run-length mask.
///
/// Runs are counted in column-major order and alternate zero/one, starting
/// with a (possibly empty) zero run. Serialized as `{"size": [h, w],
/// "counts": [...]}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PixelMask {
    height: usize,
    width: usize,
    runs: Vec<u64>,
}

impl PixelMask {
    /// Validates that the runs cover exactly `height * width` pixels and that
    /// only the leading run may be zero.
    pub fn new(height: usize, width: usize, runs: Vec<u64>) -> Result<Self, TensorIoError> {
        if height == 0 || width == 0 {
            return Err(TensorIoError::Validation(format!(
                "mask dims must be >= 1, got {height}x{width}"
            )));
        }
        if runs.is_empty() {
            return Err(TensorIoError::Validation("mask has no runs".into()));
        }
        if let Some(k) = runs.iter().skip(1).position(|&r| r == 0) {
            return Err(TensorIoError::Validation(format!(
                "run {} is zero; only the leading run may be empty",
                k + 1
            )));
        }
        let total: u64 = runs.iter().sum();
        let expected = (height * width) as u64;
        if total != expected {
            return Err(TensorIoError::Validation(format!(
                "runs sum to {total}, expected {height}x{width} = {expected}"
            )));
        }
        Ok(Self { height, width, runs })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn runs(&self) -> &[u64] {
        &self.runs
    }

    /// Foreground pixel count (sum of the odd-indexed runs).
    pub fn area(&self) -> u64 {
        self.runs.iter().skip(1).step_by(2).sum()
    }
}

pub fn rle_encode(mask: &BinaryMask) -> PixelMask {
    let (h, w) = (mask.height(), mask.width());
    let mut runs = Vec::new();
    let mut current = false;
    let mut count = 0u64;
    for c in 0..w {
        for r in 0..h {
            let v = mask.get(r, c);
            if v != current {
                runs.push(count);
                count = 0;
                current = v;
            }
            count += 1;
        }
    }
    runs.push(count);
    PixelMask {
        height: h,
        width: w,
        runs,
    }
}

pub fn rle_decode(pm: &PixelMask) -> Result<BinaryMask, TensorIoError> {
    let (h, w) = (pm.height, pm.width);
    let total: u64 = pm.runs.iter().sum();
    if total != (h * w) as u64 {
        return Err(TensorIoError::Validation(format!(
            "runs sum to {total}, expected {}",
            h * w
        )));
    }
    let mut mask = BinaryMask::new(h, w).map_err(|e| TensorIoError::Validation(e.to_string()))?;
    let mut idx = 0usize;
    let mut value = false;
    for &run in &pm.runs {
        if value {
            for k in idx..idx + run as usize {
                mask.set(k % h, k / h, true);
            }
        }
        idx += run as usize;
        value = !value;
    }
    Ok(mask)
}

#[derive(Serialize, Deserialize)]
struct RleJson {
    size: [usize; 2],
    counts: Vec<u64>,
}

impl Serialize for PixelMask {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        RleJson {
            size: [self.height, self.width],
            counts: self.runs.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for PixelMask {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = RleJson::deserialize(d)?;
        PixelMask::new(raw.size[0], raw.size[1], raw.counts).map_err(serde::de::Error::custom)
    }
}
