use serde::Serialize;

use super::{hungarian, validate_predictions, DenseTrack, EvalError, Prediction};
use crate::mask::BinaryMask;
use crate::tensor_io::DatasetFile;

/// Boundary match tolerance as a fraction of the image diagonal.
pub const BOUNDARY_TOLERANCE: f64 = 0.008;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VideoJf {
    pub video_id: u64,
    pub n_gt: usize,
    pub n_pred: usize,
    pub j: f64,
    pub f: f64,
    pub jf: f64,
}

/// Means over all ground-truth tracks; videos without ground truth are not
/// listed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JfReport {
    pub jf_mean: f64,
    pub j_mean: f64,
    pub f_mean: f64,
    pub per_video: Vec<VideoJf>,
}

/// One-pixel-wide boundary: a pixel is on the boundary when it differs from
/// its right, lower or lower-right neighbour (edges compare along the edge
/// only; the bottom-right corner is never set).
pub fn boundary_map(m: &BinaryMask) -> BinaryMask {
    let (h, w) = (m.height(), m.width());
    let at = |r: usize, c: usize| r < h && c < w && m.get(r, c);
    BinaryMask::from_fn(h, w, |r, c| {
        let v = m.get(r, c);
        if r == h - 1 && c == w - 1 {
            false
        } else if r == h - 1 {
            v ^ at(r, c + 1)
        } else if c == w - 1 {
            v ^ at(r + 1, c)
        } else {
            (v ^ at(r, c + 1)) || (v ^ at(r + 1, c)) || (v ^ at(r + 1, c + 1))
        }
    })
    .expect("dims come from an existing mask")
}

fn dilate(m: &BinaryMask, radius: usize) -> BinaryMask {
    let (h, w) = (m.height() as isize, m.width() as isize);
    let r = radius as isize;
    let offsets: Vec<(isize, isize)> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dy, dx)))
        .filter(|&(dy, dx)| dy * dy + dx * dx <= r * r)
        .collect();
    let mut out = BinaryMask::new(m.height(), m.width()).expect("non-empty dims");
    for y in 0..h {
        for x in 0..w {
            if !m.get(y as usize, x as usize) {
                continue;
            }
            for &(dy, dx) in &offsets {
                let (yy, xx) = (y + dy, x + dx);
                if (0..h).contains(&yy) && (0..w).contains(&xx) {
                    out.set(yy as usize, xx as usize, true);
                }
            }
        }
    }
    out
}

/// Boundary F-measure. `bound_th >= 1` is a pixel radius, otherwise a
/// fraction of the diagonal (rounded up).
pub fn f_measure(pred: &BinaryMask, gt: &BinaryMask, bound_th: f64) -> Result<f64, EvalError> {
    if pred.same_dims(gt).is_err() {
        return Err(EvalError::Cost(format!(
            "mask dims {}x{} vs {}x{}",
            pred.height(),
            pred.width(),
            gt.height(),
            gt.width()
        )));
    }
    let radius = if bound_th >= 1.0 {
        bound_th
    } else {
        let (h, w) = (pred.height() as f64, pred.width() as f64);
        (bound_th * (h * h + w * w).sqrt()).ceil()
    } as usize;
    let pb = boundary_map(pred);
    let gb = boundary_map(gt);
    let n_p = pb.area();
    let n_g = gb.area();
    let (precision, recall) = match (n_p, n_g) {
        (0, 0) => (1.0, 1.0),
        (0, _) => (1.0, 0.0),
        (_, 0) => (0.0, 1.0),
        _ => {
            let p_hit = pb.overlap(&dilate(&gb, radius)).expect("same dims").0;
            let g_hit = gb.overlap(&dilate(&pb, radius)).expect("same dims").0;
            (p_hit as f64 / n_p as f64, g_hit as f64 / n_g as f64)
        }
    };
    Ok(if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    })
}

fn region_j(pred: &BinaryMask, gt: &BinaryMask) -> f64 {
    let (i, u) = pred.overlap(gt).expect("same dims");
    if u == 0 {
        1.0
    } else {
        i as f64 / u as f64
    }
}

/// Frame-averaged (J, F) of one prediction against one ground-truth track.
fn pair_scores(gt: &DenseTrack, pred: &DenseTrack, empty: &BinaryMask) -> Result<(f64, f64), EvalError> {
    if gt.frames.len() != pred.frames.len() {
        return Err(EvalError::VideoMismatch {
            a: gt.frames.len(),
            b: pred.frames.len(),
        });
    }
    let n = gt.frames.len().max(1) as f64;
    let mut j = 0.0;
    let mut f = 0.0;
    for (g, p) in gt.frames.iter().zip(&pred.frames) {
        let g = g.as_ref().unwrap_or(empty);
        let p = p.as_ref().unwrap_or(empty);
        j += region_j(p, g);
        f += f_measure(p, g, BOUNDARY_TOLERANCE)?;
    }
    Ok((j / n, f / n))
}

/// Region similarity J and boundary accuracy F. Predictions below
/// `score_thresh` are discarded; each video's tracks are paired by minimum
/// total `1 - J`, and unpaired ground truth scores 0.
pub fn compute_jf(gt: &DatasetFile, preds: &[Prediction], score_thresh: f64) -> Result<JfReport, EvalError> {
    gt.validate()?;
    validate_predictions(gt, preds)?;
    let by_video = gt.annotations_by_video();
    let mut per_video = Vec::new();
    let (mut j_sum, mut f_sum, mut n_tracks) = (0.0, 0.0, 0usize);
    for video in &gt.videos {
        let Some(anns) = by_video.get(&video.video_id) else {
            continue;
        };
        let gts = anns
            .iter()
            .map(|a| DenseTrack::from_annotation(a))
            .collect::<Result<Vec<_>, _>>()?;
        let dts = preds
            .iter()
            .filter(|p| p.video_id == video.video_id && p.score >= score_thresh)
            .map(DenseTrack::from_prediction)
            .collect::<Result<Vec<_>, _>>()?;
        let empty = BinaryMask::new(video.height, video.width).map_err(|e| EvalError::Cost(e.to_string()))?;
        let mut scores = vec![vec![(0.0, 0.0); dts.len()]; gts.len()];
        for (g, row) in gts.iter().zip(scores.iter_mut()) {
            for (d, cell) in dts.iter().zip(row.iter_mut()) {
                *cell = pair_scores(g, d, &empty)?;
            }
        }
        let cost: Vec<Vec<f64>> = scores
            .iter()
            .map(|row| row.iter().map(|&(j, _)| 1.0 - j).collect())
            .collect();
        let assignment = hungarian(&cost)?;
        let (mut vj, mut vf) = (0.0, 0.0);
        for &(g, d) in &assignment.pairs {
            vj += scores[g][d].0;
            vf += scores[g][d].1;
        }
        j_sum += vj;
        f_sum += vf;
        n_tracks += gts.len();
        let (j, f) = (vj / gts.len() as f64, vf / gts.len() as f64);
        per_video.push(VideoJf {
            video_id: video.video_id,
            n_gt: gts.len(),
            n_pred: dts.len(),
            j,
            f,
            jf: (j + f) / 2.0,
        });
    }
    let (j_mean, f_mean) = if n_tracks == 0 {
        (0.0, 0.0)
    } else {
        (j_sum / n_tracks as f64, f_sum / n_tracks as f64)
    };
    Ok(JfReport {
        jf_mean: (j_mean + f_mean) / 2.0,
        j_mean,
        f_mean,
        per_video,
    })
}
