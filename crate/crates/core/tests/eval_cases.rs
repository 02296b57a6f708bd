mod common;

use flowcut::eval::{compute_ap_ar, compute_jf, evaluate, f_measure, hungarian, st_iou, Prediction};
use flowcut::tensor_io::{rle_encode, Annotation, DatasetFile, VideoEntry};
use flowcut::BinaryMask;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::brute_force_assignment;

fn rect(h: usize, w: usize, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> BinaryMask {
    BinaryMask::from_fn(h, w, |r, c| rows.contains(&r) && cols.contains(&c)).unwrap()
}

/// One video, one frame per entry of `frames`, one track per mask.
fn dataset(h: usize, w: usize, tracks: &[Vec<Option<BinaryMask>>]) -> DatasetFile {
    let n = tracks.first().map_or(1, Vec::len);
    let names = (0..n).map(|t| format!("v/{t:05}.jpg")).collect();
    DatasetFile {
        videos: vec![VideoEntry::new(1, w, h, names)],
        annotations: tracks
            .iter()
            .enumerate()
            .map(|(k, t)| Annotation::new(k as u64 + 1, 1, t.iter().map(|m| m.as_ref().map(rle_encode)).collect()))
            .collect(),
        ..Default::default()
    }
}

fn pred(score: f64, frames: &[Option<BinaryMask>]) -> Prediction {
    Prediction {
        video_id: 1,
        score,
        segmentations: frames.iter().map(|m| m.as_ref().map(rle_encode)).collect(),
    }
}

#[test]
fn st_iou_over_two_frames() {
    let a = rect(4, 4, 0..2, 0..2);
    let b = rect(4, 4, 2..4, 2..4);
    // frame 1 identical (4 / 4), frame 2 disjoint (0 / 8)
    let v = st_iou(&[Some(a.clone()), Some(a.clone())], &[Some(a.clone()), Some(b)]).unwrap();
    assert!((v - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(st_iou(&[Some(a.clone())], &[None]).unwrap(), 0.0);
    assert_eq!(st_iou(&[Some(a.clone())], &[Some(a)]).unwrap(), 1.0);
}

#[test]
fn hungarian_small_cases() {
    let r = hungarian(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
    assert_eq!(r.pairs, vec![(0, 1), (1, 0)]);
    assert_eq!(r.cost, 4.0);
    let diag = vec![vec![0.1, 5.0, 5.0], vec![5.0, 0.2, 5.0], vec![5.0, 5.0, 0.3]];
    assert_eq!(hungarian(&diag).unwrap().pairs, vec![(0, 0), (1, 1), (2, 2)]);
    assert!(hungarian(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    assert!(hungarian(&[]).unwrap().pairs.is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn hungarian_matches_exhaustive(seed in any::<u64>(), n in 1usize..=6, m in 1usize..=6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cost: Vec<Vec<f64>> = (0..n).map(|_| (0..m).map(|_| rng.random_range(0.0..10.0)).collect()).collect();
        let r = hungarian(&cost).unwrap();
        prop_assert_eq!(r.pairs.len(), n.min(m));
        let sum: f64 = r.pairs.iter().map(|&(i, j)| cost[i][j]).sum();
        prop_assert!((sum - r.cost).abs() < 1e-9);
        prop_assert!((r.cost - brute_force_assignment(&cost)).abs() < 1e-9);
    }
}

#[test]
fn ap_single_partial_match() {
    let g = rect(10, 10, 0..2, 0..5);
    let p = rect(10, 10, 0..2, 0..3); // IoU 6/10
    let gt = dataset(10, 10, &[vec![Some(g)]]);
    let r = compute_ap_ar(&gt, &[pred(0.9, &[Some(p)])], 0.8).unwrap();
    assert_eq!(r.ap50, Some(1.0));
    assert_eq!(r.ap75, Some(0.0));
    // hits at 0.5, 0.55 and 0.6 (the third threshold is exactly 0.6)
    assert!((r.ap.unwrap() - 0.3).abs() < 1e-15);
    assert!((r.ar10.unwrap() - 0.3).abs() < 1e-15);
}

#[test]
fn ap_score_threshold_drops_detection() {
    let g = rect(10, 10, 0..4, 0..4);
    let gt = dataset(10, 10, &[vec![Some(g.clone())]]);
    let r = compute_ap_ar(&gt, &[pred(0.7, &[Some(g.clone())])], 0.8).unwrap();
    assert_eq!(r.ap, Some(0.0));
    assert_eq!(r.ar10, Some(0.0));
    let kept = compute_ap_ar(&gt, &[pred(0.8, &[Some(g)])], 0.8).unwrap();
    assert_eq!(kept.ap, Some(1.0));
}

#[test]
fn ap_false_positive_ranked_first() {
    let a = rect(10, 10, 0..3, 0..3);
    let b = rect(10, 10, 6..9, 6..9);
    let stray = rect(10, 10, 0..3, 6..9);
    let gt = dataset(10, 10, &[vec![Some(a.clone())], vec![Some(b)]]);
    let r = compute_ap_ar(&gt, &[pred(0.95, &[Some(stray)]), pred(0.9, &[Some(a)])], 0.0).unwrap();
    // precision 1/2 up to recall 1/2: 51 of the 101 recall samples
    let expected = 51.0 * 0.5 / 101.0;
    assert!((r.ap.unwrap() - expected).abs() < 1e-12);
    assert_eq!(r.ar10, Some(0.5));
}

#[test]
fn ap_area_ranges() {
    // 20x20 = 400 px is small, 40x40 = 1600 medium
    let small = rect(100, 100, 0..20, 0..20);
    let medium = rect(100, 100, 50..90, 50..90);
    let gt = dataset(100, 100, &[vec![Some(small.clone())], vec![Some(medium)]]);
    let r = compute_ap_ar(&gt, &[pred(1.0, &[Some(small)])], 0.8).unwrap();
    assert_eq!(r.ap_s, Some(1.0));
    assert_eq!(r.ap_m, Some(0.0));
    assert_eq!(r.ap_l, None);
}

#[test]
fn jf_dilated_square() {
    // 4x4 square; the prediction grows it by one pixel on every side
    let g = rect(8, 8, 2..6, 2..6);
    let p = rect(8, 8, 1..7, 1..7);
    let gt = dataset(8, 8, &[vec![Some(g.clone())]]);
    let r = compute_jf(&gt, &[pred(1.0, &[Some(p.clone())])], 0.3).unwrap();
    assert!((r.j_mean - (4.0f64 / 6.0).powi(2)).abs() < 1e-15);
    // 24 predicted and 16 true boundary pixels; 20 and 16 land within one
    // pixel of the other contour: P = 5/6, R = 1
    assert!((r.f_mean - 10.0 / 11.0).abs() < 1e-15);
    assert!((r.jf_mean - (r.j_mean + r.f_mean) / 2.0).abs() < 1e-12);
}

#[test]
fn f_shifted_square() {
    let g = rect(8, 8, 2..6, 2..6);
    let p = rect(8, 8, 2..6, 4..8);
    // 13 and 16 boundary pixels, 10 matched each way: P = 10/13, R = 10/16
    assert!((f_measure(&p, &g, 0.008).unwrap() - 20.0 / 29.0).abs() < 1e-15);
    assert_eq!(f_measure(&p, &g, 3.0).unwrap(), 1.0);
}

#[test]
fn jf_without_predictions_is_zero() {
    let gt = dataset(8, 8, &[vec![Some(rect(8, 8, 2..6, 2..6)), None]]);
    let r = compute_jf(&gt, &[], 0.3).unwrap();
    assert_eq!((r.j_mean, r.f_mean, r.jf_mean), (0.0, 0.0, 0.0));
    assert_eq!(r.per_video.len(), 1);
}

#[test]
fn jf_absent_frames_count_as_empty() {
    let g = rect(8, 8, 2..6, 2..6);
    let gt = dataset(8, 8, &[vec![Some(g.clone()), None]]);
    let exact = compute_jf(&gt, &[pred(1.0, &[Some(g.clone()), None])], 0.3).unwrap();
    assert_eq!((exact.j_mean, exact.f_mean), (1.0, 1.0));
    // a mask where the object is absent costs that frame entirely
    let extra = compute_jf(&gt, &[pred(1.0, &[Some(g.clone()), Some(g)])], 0.3).unwrap();
    assert_eq!((extra.j_mean, extra.f_mean), (0.5, 0.5));
}

#[test]
fn jf_pairs_swapped_tracks() {
    let a = rect(10, 10, 0..4, 0..4);
    let b = rect(10, 10, 5..9, 5..9);
    let gt = dataset(10, 10, &[vec![Some(a.clone())], vec![Some(b.clone())]]);
    let r = compute_jf(&gt, &[pred(0.5, &[Some(b)]), pred(0.9, &[Some(a)])], 0.3).unwrap();
    assert_eq!((r.j_mean, r.f_mean), (1.0, 1.0));
}

fn random_track(rng: &mut ChaCha8Rng, frames: usize) -> Vec<Option<BinaryMask>> {
    (0..frames)
        .map(|_| {
            rng.random_bool(0.8).then(|| {
                let (r0, c0) = (rng.random_range(0..12), rng.random_range(0..12));
                let (h, w) = (rng.random_range(1..5), rng.random_range(1..5));
                rect(16, 16, r0..r0 + h, c0..c0 + w)
            })
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn report_values_in_unit_range(seed in any::<u64>(), n_gt in 1usize..4, n_pred in 0usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tracks: Vec<_> = (0..n_gt).map(|_| random_track(&mut rng, 3)).collect();
        let gt = dataset(16, 16, &tracks);
        let preds: Vec<Prediction> = (0..n_pred)
            .map(|_| { let s = rng.random_range(0.0..=1.0); pred(s, &random_track(&mut rng, 3)) })
            .collect();
        let r = evaluate(&gt, &preds, 0.0, 0.0).unwrap();
        let ap = &r.ap;
        for v in [ap.ap, ap.ap50, ap.ap75, ap.ap_s, ap.ap_m, ap.ap_l, ap.ar10].into_iter().flatten() {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        for v in [r.jf.j_mean, r.jf.f_mean, r.jf.jf_mean] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!((r.jf.jf_mean - (r.jf.j_mean + r.jf.f_mean) / 2.0).abs() < 1e-12);
        prop_assert!(ap.ap50.unwrap() >= ap.ap75.unwrap());
    }

    #[test]
    fn ap_depends_only_on_score_order(seed in any::<u64>(), n_pred in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tracks: Vec<_> = (0..2).map(|_| random_track(&mut rng, 2)).collect();
        let gt = dataset(16, 16, &tracks);
        let preds: Vec<Prediction> = (0..n_pred)
            .map(|k| {
                let mut t = random_track(&mut rng, 2);
                if k < 2 && rng.random_bool(0.5) {
                    t = tracks[k].clone();
                }
                pred(0.1 + 0.1 * k as f64, &t)
            })
            .collect();
        let squashed: Vec<Prediction> = preds
            .iter()
            .map(|p| Prediction { score: 0.5 + p.score / 4.0, ..p.clone() })
            .collect();
        prop_assert_eq!(compute_ap_ar(&gt, &preds, 0.0).unwrap(), compute_ap_ar(&gt, &squashed, 0.0).unwrap());
    }
}
