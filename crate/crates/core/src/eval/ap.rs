use serde::Serialize;

use super::{st_iou, validate_predictions, DenseTrack, EvalError, Prediction};
use crate::tensor_io::DatasetFile;

/// Upper bound (inclusive) of the small area range, in pixels.
pub const AREA_SMALL_MAX: f64 = 32.0 * 32.0;
/// Lower bound of the large area range, in pixels.
pub const AREA_LARGE_MIN: f64 = 96.0 * 96.0;
const AREA_MAX: f64 = 1e10;

const N_IOU: usize = 10;
const N_REC: usize = 101;

/// Summary AP/AR values; `None` when undefined (no ground truth in range).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ApReport {
    pub ap: Option<f64>,
    pub ap50: Option<f64>,
    pub ap75: Option<f64>,
    pub ap_s: Option<f64>,
    pub ap_m: Option<f64>,
    pub ap_l: Option<f64>,
    pub ar10: Option<f64>,
}

// numpy.linspace(start, stop, num)
fn linspace<const N: usize>(start: f64, stop: f64) -> [f64; N] {
    let step = (stop - start) / (N - 1) as f64;
    let mut out = [0.0; N];
    for (i, v) in out.iter_mut().enumerate() {
        *v = i as f64 * step + start;
    }
    out[N - 1] = stop;
    out
}

struct VideoInput {
    gts: Vec<DenseTrack>,
    /// Sorted by descending score (stable).
    dts: Vec<(f64, DenseTrack)>,
    /// `ious[d][g]`.
    ious: Vec<Vec<f64>>,
}

struct VideoEval {
    scores: Vec<f64>,
    /// `matched[t][d]`.
    matched: Vec<Vec<bool>>,
    ignored: Vec<Vec<bool>>,
    n_gt: usize,
}

fn evaluate_video(v: &VideoInput, iou_thrs: &[f64; N_IOU], area: (f64, f64), max_det: usize) -> Option<VideoEval> {
    let n_dt = v.dts.len().min(max_det);
    if v.gts.is_empty() && n_dt == 0 {
        return None;
    }
    let out_of_range = |a: f64| a < area.0 || a > area.1;
    let gt_ignore: Vec<bool> = v.gts.iter().map(|g| out_of_range(g.mean_area)).collect();
    let mut gt_order: Vec<usize> = (0..v.gts.len()).collect();
    gt_order.sort_by_key(|&g| gt_ignore[g]);

    let mut matched = vec![vec![false; n_dt]; N_IOU];
    let mut ignored = vec![vec![false; n_dt]; N_IOU];
    for (t, &thr) in iou_thrs.iter().enumerate() {
        let mut gt_taken = vec![false; v.gts.len()];
        for d in 0..n_dt {
            let mut best_iou = thr.min(1.0 - 1e-10);
            let mut m: Option<usize> = None;
            for &g in &gt_order {
                if gt_taken[g] {
                    continue;
                }
                if let Some(mm) = m {
                    if !gt_ignore[mm] && gt_ignore[g] {
                        break;
                    }
                }
                if v.ious[d][g] < best_iou {
                    continue;
                }
                best_iou = v.ious[d][g];
                m = Some(g);
            }
            match m {
                Some(g) => {
                    ignored[t][d] = gt_ignore[g];
                    matched[t][d] = true;
                    gt_taken[g] = true;
                }
                None => ignored[t][d] = out_of_range(v.dts[d].1.mean_area),
            }
        }
    }
    Some(VideoEval {
        scores: v.dts[..n_dt].iter().map(|(s, _)| *s).collect(),
        matched,
        ignored,
        n_gt: gt_ignore.iter().filter(|&&i| !i).count(),
    })
}

/// Per-threshold precision curves and final recalls, or `None` without
/// ground truth.
fn accumulate(evals: &[VideoEval], rec_thrs: &[f64; N_REC]) -> Option<(Vec<[f64; N_REC]>, Vec<f64>)> {
    let n_gt: usize = evals.iter().map(|e| e.n_gt).sum();
    if n_gt == 0 {
        return None;
    }
    // (score, video, det) in concatenation order, then stable sort by score
    let mut all: Vec<(f64, usize, usize)> = evals
        .iter()
        .enumerate()
        .flat_map(|(v, e)| e.scores.iter().enumerate().map(move |(d, &s)| (s, v, d)))
        .collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut precision = Vec::with_capacity(N_IOU);
    let mut recall = Vec::with_capacity(N_IOU);
    for t in 0..N_IOU {
        let mut tp = 0usize;
        let mut fp = 0usize;
        let mut rc = Vec::with_capacity(all.len());
        let mut pr = Vec::with_capacity(all.len());
        for &(_, v, d) in &all {
            let e = &evals[v];
            if !e.ignored[t][d] {
                if e.matched[t][d] {
                    tp += 1;
                } else {
                    fp += 1;
                }
            }
            rc.push(tp as f64 / n_gt as f64);
            pr.push(if tp + fp == 0 {
                0.0
            } else {
                tp as f64 / (tp + fp) as f64
            });
        }
        recall.push(rc.last().copied().unwrap_or(0.0));
        for i in (1..pr.len()).rev() {
            if pr[i] > pr[i - 1] {
                pr[i - 1] = pr[i];
            }
        }
        let mut q = [0.0; N_REC];
        for (r, &thr) in rec_thrs.iter().enumerate() {
            let pi = rc.partition_point(|&x| x < thr);
            if pi < pr.len() {
                q[r] = pr[pi];
            }
        }
        precision.push(q);
    }
    Some((precision, recall))
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// COCO-style AP/AR with spatio-temporal IoU; predictions scoring below
/// `score_thresh` are discarded.
pub fn compute_ap_ar(gt: &DatasetFile, preds: &[Prediction], score_thresh: f64) -> Result<ApReport, EvalError> {
    gt.validate()?;
    validate_predictions(gt, preds)?;
    let iou_thrs = linspace::<N_IOU>(0.5, 0.95);
    let rec_thrs = linspace::<N_REC>(0.0, 1.0);

    let by_video = gt.annotations_by_video();
    let mut inputs = Vec::with_capacity(gt.videos.len());
    for video in &gt.videos {
        let gts: Vec<DenseTrack> = by_video
            .get(&video.video_id)
            .map(|anns| anns.iter().map(|a| DenseTrack::from_annotation(a)).collect())
            .transpose()?
            .unwrap_or_default();
        let mut dts = Vec::new();
        for p in preds
            .iter()
            .filter(|p| p.video_id == video.video_id && p.score >= score_thresh)
        {
            dts.push((p.score, DenseTrack::from_prediction(p)?));
        }
        dts.sort_by(|a, b| b.0.total_cmp(&a.0));
        let ious = dts
            .iter()
            .map(|(_, d)| {
                gts.iter()
                    .map(|g: &DenseTrack| st_iou(&g.frames, &d.frames))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        inputs.push(VideoInput { gts, dts, ious });
    }

    let summarize = |area: (f64, f64), max_det: usize| {
        let evals: Vec<VideoEval> = inputs
            .iter()
            .filter_map(|v| evaluate_video(v, &iou_thrs, area, max_det))
            .collect();
        accumulate(&evals, &rec_thrs)
    };

    let all = (0.0, AREA_MAX);
    let ap_over = |curves: &Option<(Vec<[f64; N_REC]>, Vec<f64>)>, t: Option<usize>| {
        curves.as_ref().map(|(prec, _)| match t {
            Some(t) => mean(prec[t].iter().copied()),
            None => mean(prec.iter().flat_map(|q| q.iter().copied())),
        })
    };
    let main = summarize(all, 100);
    let small = summarize((0.0, AREA_SMALL_MAX), 100);
    let medium = summarize((AREA_SMALL_MAX, AREA_LARGE_MIN), 100);
    let large = summarize((AREA_LARGE_MIN, AREA_MAX), 100);
    let ten = summarize(all, 10);

    Ok(ApReport {
        ap: ap_over(&main, None),
        ap50: ap_over(&main, Some(0)),
        ap75: ap_over(&main, Some(5)),
        ap_s: ap_over(&small, None),
        ap_m: ap_over(&medium, None),
        ap_l: ap_over(&large, None),
        ar10: ten.as_ref().map(|(_, rec)| mean(rec.iter().copied())),
    })
}
