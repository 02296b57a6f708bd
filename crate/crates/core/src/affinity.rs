//! Thresholded patch affinities fusing appearance and motion features.
//!
//! `w_ij = 1` when `alpha * <rgb_i, rgb_j> + (1 - alpha) * <flow_i, flow_j>`
//! exceeds `tau`, otherwise `epsilon`. With `alpha = 1` the flow stream is
//! not read and the result is the appearance-only affinity.

use nalgebra::DMatrix;

use crate::tensor_io::FeatureMap;

pub const DEFAULT_ALPHA: f64 = 0.5;
pub const DEFAULT_TAU: f64 = 0.15;
pub const DEFAULT_EPSILON: f64 = 1e-5;

const UNIT_NORM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AffinityError {
    #[error("patch {patch} has a zero-norm feature vector")]
    DegenerateFeature { patch: usize },
    #[error("patch {patch} is not unit-normalized (norm {norm})")]
    NotNormalized { patch: usize, norm: f64 },
    #[error("flow grid {flow_rows}x{flow_cols} does not match rgb grid {rows}x{cols}")]
    ShapeMismatch {
        rows: usize,
        cols: usize,
        flow_rows: usize,
        flow_cols: usize,
    },
    #[error("invalid affinity config: {0}")]
    Config(String),
    #[error("invalid affinity weights: {0}")]
    InvalidWeights(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffinityConfig {
    /// Weight of the appearance similarity; `1 - alpha` goes to flow.
    pub alpha: f64,
    /// Strict threshold on the fused similarity.
    pub tau: f64,
    /// Weight given to sub-threshold pairs so the graph stays connected.
    pub epsilon: f64,
}

impl Default for AffinityConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            tau: DEFAULT_TAU,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

impl AffinityConfig {
    pub fn validate(&self) -> Result<(), AffinityError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(AffinityError::Config(format!(
                "alpha must be in [0, 1], got {}",
                self.alpha
            )));
        }
        if !(self.tau > -1.0 && self.tau < 1.0) {
            return Err(AffinityError::Config(format!(
                "tau must be in (-1, 1), got {}",
                self.tau
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(AffinityError::Config(format!(
                "epsilon must be in (0, 1), got {}",
                self.epsilon
            )));
        }
        Ok(())
    }

    /// Appearance-only mode: the flow stream is ignored.
    pub fn is_flow_free(&self) -> bool {
        self.alpha == 1.0
    }
}

/// Symmetric patch affinity with its degree vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    w: DMatrix<f64>,
    degree: Vec<f64>,
}

impl AffinityMatrix {
    /// Wraps an explicit weight matrix. Weights must be finite, non-negative
    /// and exactly symmetric.
    pub fn from_weights(w: DMatrix<f64>) -> Result<Self, AffinityError> {
        if w.nrows() != w.ncols() {
            return Err(AffinityError::InvalidWeights(format!(
                "matrix is {}x{}",
                w.nrows(),
                w.ncols()
            )));
        }
        let n = w.nrows();
        for i in 0..n {
            for j in 0..n {
                let v = w[(i, j)];
                if !v.is_finite() || v < 0.0 {
                    return Err(AffinityError::InvalidWeights(format!("entry ({i}, {j}) = {v}")));
                }
                if v != w[(j, i)] {
                    return Err(AffinityError::InvalidWeights(format!("asymmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self::from_symmetric(w))
    }

    fn from_symmetric(w: DMatrix<f64>) -> Self {
        let degree = (0..w.nrows()).map(|i| w.row(i).sum()).collect();
        Self { w, degree }
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.w[(i, j)]
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.w
    }

    /// `d_i = sum_j w_ij`.
    pub fn degree(&self) -> &[f64] {
        &self.degree
    }

    /// `w_ij * m_i * m_j` where `m` is 0 on removed nodes and 1 elsewhere.
    ///
    /// This is the iterative update applied to the original affinity: the
    /// product over all previously removed masks collapses to one indicator.
    pub fn masked(&self, removed: &[bool]) -> Self {
        assert_eq!(removed.len(), self.n());
        let mut w = self.w.clone();
        for i in 0..self.n() {
            for j in 0..self.n() {
                if removed[i] || removed[j] {
                    w[(i, j)] = 0.0;
                }
            }
        }
        Self::from_symmetric(w)
    }

    /// Sub-affinity on `keep` (indices into this matrix, in order).
    pub fn restrict(&self, keep: &[usize]) -> Self {
        let w = DMatrix::from_fn(keep.len(), keep.len(), |a, b| self.w[(keep[a], keep[b])]);
        Self::from_symmetric(w)
    }
}

/// Scales every patch vector to unit Euclidean norm.
pub fn normalize_features(fm: &FeatureMap) -> Result<FeatureMap, AffinityError> {
    let mut out = fm.clone();
    for i in 0..out.n_patches() {
        let v = out.patch_mut(i);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(AffinityError::DegenerateFeature { patch: i });
        }
        v.iter_mut().for_each(|x| *x /= norm);
    }
    Ok(out)
}

fn check_unit(fm: &FeatureMap) -> Result<(), AffinityError> {
    for i in 0..fm.n_patches() {
        let norm = fm.patch(i).iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > UNIT_NORM_TOL {
            return Err(AffinityError::NotNormalized { patch: i, norm });
        }
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Builds the thresholded affinity from unit-normalized features.
pub fn build_affinity(
    rgb: &FeatureMap,
    flow: Option<&FeatureMap>,
    cfg: &AffinityConfig,
) -> Result<AffinityMatrix, AffinityError> {
    cfg.validate()?;
    if let Some(flow) = flow {
        if !flow.same_grid(rgb) {
            return Err(AffinityError::ShapeMismatch {
                rows: rgb.rows(),
                cols: rgb.cols(),
                flow_rows: flow.rows(),
                flow_cols: flow.cols(),
            });
        }
    }
    let flow = if cfg.is_flow_free() {
        None
    } else {
        match flow {
            Some(f) => Some(f),
            None => {
                return Err(AffinityError::Config(format!(
                    "alpha = {} needs flow features",
                    cfg.alpha
                )))
            }
        }
    };
    check_unit(rgb)?;
    if let Some(f) = flow {
        check_unit(f)?;
    }

    let n = rgb.n_patches();
    let mut w = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let mut s = dot(rgb.patch(i), rgb.patch(j));
            if let Some(f) = flow {
                s = cfg.alpha * s + (1.0 - cfg.alpha) * dot(f.patch(i), f.patch(j));
            }
            // self-similarity is 1 up to rounding, and 1 > tau
            let v = if i == j || s > cfg.tau { 1.0 } else { cfg.epsilon };
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
    }
    Ok(AffinityMatrix::from_symmetric(w))
}
