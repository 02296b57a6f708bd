//! Iterated normalized cuts: up to `max_masks` disjoint instance masks per
//! frame.
//!
//! Each round re-weights the original affinity by the indicator of patches
//! not yet claimed, drops the now-isolated rows and columns, and cuts the
//! surviving graph again.

use crate::affinity::{build_affinity, normalize_features, AffinityConfig, AffinityError};
use crate::mask::{BinaryMask, PatchMask};
use crate::spectral::{ncut_value, solve_fiedler, split_at_mean, ForegroundRule, SpectralError};
use crate::tensor_io::FeatureMap;

pub const DEFAULT_MAX_MASKS: usize = 3;
pub const DEFAULT_MIN_AREA_FRAC: f64 = 0.005;
pub const DEFAULT_MAX_AREA_FRAC: f64 = 0.8;
pub const DEFAULT_MAX_NCUT: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MaskCutError {
    #[error(transparent)]
    Affinity(#[from] AffinityError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("invalid mask-cut config: {0}")]
    Config(String),
    #[error("cannot upsample a {rows}x{cols} patch mask to {out_h}x{out_w} pixels")]
    Upsample {
        rows: usize,
        cols: usize,
        out_h: usize,
        out_w: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskCutConfig {
    pub max_masks: usize,
    /// Smallest accepted foreground, as a fraction of the patch grid.
    pub min_area_frac: f64,
    /// Largest accepted foreground; bigger cuts are treated as grabbing the
    /// background and end the extraction.
    pub max_area_frac: f64,
    /// Largest normalized-cut value still treated as a cut. A graph with no
    /// cluster structure (e.g. the leftover background) has an arbitrary
    /// Fiedler vector and its splits score near 1.
    pub max_ncut: f64,
    pub foreground_rule: ForegroundRule,
}

impl Default for MaskCutConfig {
    fn default() -> Self {
        Self {
            max_masks: DEFAULT_MAX_MASKS,
            min_area_frac: DEFAULT_MIN_AREA_FRAC,
            max_area_frac: DEFAULT_MAX_AREA_FRAC,
            max_ncut: DEFAULT_MAX_NCUT,
            foreground_rule: ForegroundRule::default(),
        }
    }
}

impl MaskCutConfig {
    pub fn validate(&self) -> Result<(), MaskCutError> {
        if self.max_masks < 1 {
            return Err(MaskCutError::Config("max_masks must be >= 1".into()));
        }
        let ok = self.min_area_frac >= 0.0 && self.min_area_frac < self.max_area_frac && self.max_area_frac <= 1.0;
        if !ok {
            return Err(MaskCutError::Config(format!(
                "need 0 <= min_area_frac < max_area_frac <= 1, got {} and {}",
                self.min_area_frac, self.max_area_frac
            )));
        }
        if self.max_ncut.is_nan() || self.max_ncut <= 0.0 {
            return Err(MaskCutError::Config(format!(
                "max_ncut must be > 0, got {}",
                self.max_ncut
            )));
        }
        Ok(())
    }
}

/// Why extraction ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// `max_masks` masks were accepted.
    Cap,
    /// Fewer than two patches survive.
    Exhausted,
    /// The cut left one side empty.
    Degenerate,
    /// The split's normalized-cut value exceeded `max_ncut`.
    WeakCut,
    TooSmall,
    TooLarge,
    ZeroDegree,
}

/// Masks in extraction order and the reason the loop stopped.
pub fn extract_masks_traced(
    rgb: &FeatureMap,
    flow: Option<&FeatureMap>,
    acfg: &AffinityConfig,
    mcfg: &MaskCutConfig,
) -> Result<(Vec<PatchMask>, StopReason), MaskCutError> {
    acfg.validate()?;
    mcfg.validate()?;
    let rgb = normalize_features(rgb)?;
    let flow = match flow {
        Some(f) if !acfg.is_flow_free() => Some(normalize_features(f)?),
        Some(f) => {
            if !f.same_grid(&rgb) {
                return Err(AffinityError::ShapeMismatch {
                    rows: rgb.rows(),
                    cols: rgb.cols(),
                    flow_rows: f.rows(),
                    flow_cols: f.cols(),
                }
                .into());
            }
            None
        }
        None => None,
    };
    let original = build_affinity(&rgb, flow.as_ref(), acfg)?;
    let (rows, cols) = (rgb.rows(), rgb.cols());
    let n = rows * cols;

    let mut removed = vec![false; n];
    let mut masks = Vec::new();
    while masks.len() < mcfg.max_masks {
        let current = original.masked(&removed);
        let alive: Vec<usize> = (0..n).filter(|&i| !removed[i]).collect();
        if alive.len() < 2 {
            return Ok((masks, StopReason::Exhausted));
        }
        let sub = current.restrict(&alive);
        if sub.degree().iter().any(|&d| d <= 0.0) {
            return Ok((masks, StopReason::ZeroDegree));
        }
        let sol = solve_fiedler(&sub)?;
        let (fg, degenerate) = split_at_mean(&sol.fiedler, mcfg.foreground_rule);
        if degenerate {
            return Ok((masks, StopReason::Degenerate));
        }
        if ncut_value(&sub, &fg) > mcfg.max_ncut {
            return Ok((masks, StopReason::WeakCut));
        }
        let area = fg.iter().filter(|&&b| b).count();
        let frac = area as f64 / n as f64;
        if frac < mcfg.min_area_frac {
            return Ok((masks, StopReason::TooSmall));
        }
        if frac > mcfg.max_area_frac {
            return Ok((masks, StopReason::TooLarge));
        }
        let mut mask = PatchMask::new(rows, cols).expect("grid dims are >= 1");
        for (k, &i) in alive.iter().enumerate() {
            if fg[k] {
                mask.bits_mut()[i] = true;
                removed[i] = true;
            }
        }
        masks.push(mask);
    }
    Ok((masks, StopReason::Cap))
}

/// Up to `max_masks` pairwise-disjoint masks on the patch grid.
pub fn extract_masks(
    rgb: &FeatureMap,
    flow: Option<&FeatureMap>,
    acfg: &AffinityConfig,
    mcfg: &MaskCutConfig,
) -> Result<Vec<PatchMask>, MaskCutError> {
    extract_masks_traced(rgb, flow, acfg, mcfg).map(|(m, _)| m)
}

/// Nearest-neighbour upsampling: pixel `(r, c)` copies patch
/// `(r * rows / out_h, c * cols / out_w)`.
pub fn upsample_mask(pm: &PatchMask, out_h: usize, out_w: usize) -> Result<BinaryMask, MaskCutError> {
    let (rows, cols) = (pm.height(), pm.width());
    if out_h < rows || out_w < cols {
        return Err(MaskCutError::Upsample {
            rows,
            cols,
            out_h,
            out_w,
        });
    }
    Ok(
        BinaryMask::from_fn(out_h, out_w, |r, c| pm.get(r * rows / out_h, c * cols / out_w))
            .expect("output dims are >= grid dims >= 1"),
    )
}
