//! Class-agnostic video instance metrics.
//!
//! * AP/AR follow the COCO protocol with spatio-temporal IoU between whole
//!   tracks as the matching criterion (the YouTube-VIS convention).
//! * J/F follow the DAVIS unsupervised protocol: per video, ground-truth and
//!   predicted tracks are paired by minimum-cost assignment, then region
//!   IoU (J) and boundary F-measure (F) are averaged over frames.

mod ap;
mod hungarian;
mod jf;

pub use ap::{compute_ap_ar, ApReport, AREA_LARGE_MIN, AREA_SMALL_MAX};
pub use hungarian::{hungarian, Assignment};
pub use jf::{boundary_map, compute_jf, f_measure, JfReport, VideoJf, BOUNDARY_TOLERANCE};

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::mask::BinaryMask;
use crate::tensor_io::{rle_decode, Annotation, DatasetFile, PixelMask, TensorIoError};

/// Default detection score threshold for AP/AR.
pub const DEFAULT_AP_SCORE_THRESH: f64 = 0.8;
/// Default detection score threshold for J/F.
pub const DEFAULT_JF_SCORE_THRESH: f64 = 0.3;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Io(#[from] TensorIoError),
    #[error("prediction {index}: {reason}")]
    Prediction { index: usize, reason: String },
    #[error("frame lists differ in length: {a} vs {b}")]
    VideoMismatch { a: usize, b: usize },
    #[error("invalid cost matrix: {0}")]
    Cost(String),
}

/// A predicted track over one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub video_id: u64,
    pub score: f64,
    pub segmentations: Vec<Option<PixelMask>>,
}

/// A track decoded to dense frames; `None` means absent.
#[derive(Debug, Clone)]
pub(crate) struct DenseTrack {
    pub frames: Vec<Option<BinaryMask>>,
    pub mean_area: f64,
}

impl DenseTrack {
    fn decode(segs: &[Option<PixelMask>]) -> Result<Self, TensorIoError> {
        let frames = segs
            .iter()
            .map(|s| s.as_ref().map(rle_decode).transpose())
            .collect::<Result<Vec<_>, _>>()?;
        let areas: Vec<f64> = segs.iter().flatten().map(|s| s.area() as f64).collect();
        let mean_area = if areas.is_empty() {
            0.0
        } else {
            areas.iter().sum::<f64>() / areas.len() as f64
        };
        Ok(Self { frames, mean_area })
    }

    pub(crate) fn from_annotation(a: &Annotation) -> Result<Self, TensorIoError> {
        let mut t = Self::decode(&a.segmentations)?;
        t.mean_area = a.mean_area();
        Ok(t)
    }

    pub(crate) fn from_prediction(p: &Prediction) -> Result<Self, TensorIoError> {
        Self::decode(&p.segmentations)
    }
}

/// Spatio-temporal IoU: `Σ_t |g_t ∩ p_t| / Σ_t |g_t ∪ p_t|`, absent frames
/// counting as empty, 0 when the union is empty.
pub fn st_iou(gt: &[Option<BinaryMask>], pred: &[Option<BinaryMask>]) -> Result<f64, EvalError> {
    if gt.len() != pred.len() {
        return Err(EvalError::VideoMismatch {
            a: gt.len(),
            b: pred.len(),
        });
    }
    let mut inter = 0usize;
    let mut union = 0usize;
    for (g, p) in gt.iter().zip(pred) {
        match (g, p) {
            (Some(g), Some(p)) => {
                let (i, u) = g.overlap(p).map_err(|e| EvalError::Cost(e.to_string()))?;
                inter += i;
                union += u;
            }
            (Some(m), None) | (None, Some(m)) => union += m.area(),
            (None, None) => {}
        }
    }
    Ok(if union == 0 { 0.0 } else { inter as f64 / union as f64 })
}

/// Checks predictions against the ground-truth videos.
pub fn validate_predictions(gt: &DatasetFile, preds: &[Prediction]) -> Result<(), EvalError> {
    for (index, p) in preds.iter().enumerate() {
        let err = |reason: String| EvalError::Prediction { index, reason };
        if !(0.0..=1.0).contains(&p.score) {
            return Err(err(format!("score {} outside [0, 1]", p.score)));
        }
        let video = gt
            .video(p.video_id)
            .ok_or_else(|| err(format!("unknown video_id {}", p.video_id)))?;
        if p.segmentations.len() != video.n_frames() {
            return Err(err(format!(
                "{} segmentations for a {}-frame video",
                p.segmentations.len(),
                video.n_frames()
            )));
        }
        for seg in p.segmentations.iter().flatten() {
            if seg.height() != video.height || seg.width() != video.width {
                return Err(err(format!(
                    "mask is {}x{}, video is {}x{}",
                    seg.height(),
                    seg.width(),
                    video.height,
                    video.width
                )));
            }
        }
    }
    Ok(())
}

/// Ground-truth tracks as score-1 predictions.
pub fn predictions_from_dataset(ds: &DatasetFile) -> Vec<Prediction> {
    ds.annotations
        .iter()
        .map(|a| Prediction {
            video_id: a.video_id,
            score: 1.0,
            segmentations: a.segmentations.clone(),
        })
        .collect()
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<Prediction>, EvalError> {
    let path = path.as_ref();
    let s = fs::read_to_string(path).map_err(|e| TensorIoError::io(path, e))?;
    let mut de = serde_json::Deserializer::from_str(&s);
    let preds: Vec<Prediction> = serde_path_to_error::deserialize(&mut de).map_err(|e| TensorIoError::Schema {
        path: e.path().to_string(),
        reason: e.inner().to_string(),
    })?;
    Ok(preds)
}

pub fn write_predictions(preds: &[Prediction], path: impl AsRef<Path>) -> Result<(), EvalError> {
    let path = path.as_ref();
    let mut s =
        serde_json::to_string(preds).map_err(|e| TensorIoError::Validation(format!("serializing predictions: {e}")))?;
    s.push('\n');
    fs::write(path, s).map_err(|e| TensorIoError::io(path, e).into())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    #[serde(flatten)]
    pub ap: ApReport,
    #[serde(flatten)]
    pub jf: JfReport,
}

/// AP/AR at `ap_score_thresh` and J/F at `jf_score_thresh`.
pub fn evaluate(
    gt: &DatasetFile,
    preds: &[Prediction],
    ap_score_thresh: f64,
    jf_score_thresh: f64,
) -> Result<EvalReport, EvalError> {
    Ok(EvalReport {
        ap: compute_ap_ar(gt, preds, ap_score_thresh)?,
        jf: compute_jf(gt, preds, jf_score_thresh)?,
    })
}

impl EvalReport {
    /// Aligned text table; J/F shown ×100.
    pub fn to_table(&self) -> String {
        let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{:.1}", 100.0 * x));
        let mut out = String::new();
        let head = ["AP50", "AP75", "AP", "AP_S", "AP_M", "AP_L", "AR10", "J&F", "J", "F"];
        let vals = [
            cell(self.ap.ap50),
            cell(self.ap.ap75),
            cell(self.ap.ap),
            cell(self.ap.ap_s),
            cell(self.ap.ap_m),
            cell(self.ap.ap_l),
            cell(self.ap.ar10),
            cell(Some(self.jf.jf_mean)),
            cell(Some(self.jf.j_mean)),
            cell(Some(self.jf.f_mean)),
        ];
        for h in head {
            let _ = write!(out, "{h:>7}");
        }
        out.push('\n');
        for v in &vals {
            let _ = write!(out, "{v:>7}");
        }
        out.push('\n');
        if !self.jf.per_video.is_empty() {
            let _ = writeln!(
                out,
                "\n{:>10} {:>5} {:>5} {:>7} {:>7} {:>7}",
                "video", "gt", "pred", "J", "F", "J&F"
            );
            for v in &self.jf.per_video {
                let _ = writeln!(
                    out,
                    "{:>10} {:>5} {:>5} {:>7.1} {:>7.1} {:>7.1}",
                    v.video_id,
                    v.n_gt,
                    v.n_pred,
                    100.0 * v.j,
                    100.0 * v.f,
                    100.0 * v.jf
                );
            }
        }
        out
    }
}
