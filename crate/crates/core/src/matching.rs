//! IoU-based instance matching between frame pairs and assembly of the
//! two-frame clip dataset.
//!
//! For every first-frame instance the second-frame instance with the highest
//! IoU is selected and the pair kept when that IoU is strictly above the
//! threshold. A pair of frames yields a clip only if at least one pair
//! survives.

use serde::Serialize;

use crate::mask::{BinaryMask, MaskError};
use crate::tensor_io::{rle_encode, Annotation, DatasetFile, PixelMask, VideoEntry};

pub const DEFAULT_IOU_THRESH: f64 = 0.5;
pub const DEFAULT_GAPS: [usize; 4] = [1, 2, 3, 4];
pub const MAX_GAP: usize = 4;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MatchError {
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error("frame gap {0} outside 1..={MAX_GAP}")]
    Gap(usize),
    #[error("source video {0:?} has no metadata")]
    MissingMeta(String),
}

/// `|a ∩ b| / |a ∪ b|`, or 0 when both masks are empty.
pub fn mask_iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64, MaskError> {
    let (inter, union) = a.overlap(b)?;
    Ok(if union == 0 { 0.0 } else { inter as f64 / union as f64 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IouMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl IouMatrix {
    pub fn compute(first: &[BinaryMask], second: &[BinaryMask]) -> Result<Self, MaskError> {
        let mut values = Vec::with_capacity(first.len() * second.len());
        for a in first {
            for b in second {
                values.push(mask_iou(a, b)?);
            }
        }
        Ok(Self {
            rows: first.len(),
            cols: second.len(),
            values,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MatchMode {
    /// Independent argmax per first-frame instance; a second-frame instance
    /// may be picked more than once.
    #[default]
    Greedy,
    /// Row-order greedy that removes matched second-frame instances.
    OneToOne,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchResult {
    /// `(first-frame index, second-frame index)` in first-frame order.
    pub pairs: Vec<(usize, usize)>,
    /// At least one pair was accepted.
    pub flag: bool,
}

pub fn match_instances(
    first: &[BinaryMask],
    second: &[BinaryMask],
    thresh: f64,
    mode: MatchMode,
) -> Result<MatchResult, MaskError> {
    let ious = IouMatrix::compute(first, second)?;
    let mut taken = vec![false; second.len()];
    let mut pairs = Vec::new();
    for i in 0..first.len() {
        let mut best: Option<usize> = None;
        for j in 0..second.len() {
            if mode == MatchMode::OneToOne && taken[j] {
                continue;
            }
            if best.is_none_or(|b| ious.get(i, j) > ious.get(i, b)) {
                best = Some(j);
            }
        }
        if let Some(j) = best {
            if ious.get(i, j) > thresh {
                pairs.push((i, j));
                taken[j] = true;
            }
        }
    }
    let flag = !pairs.is_empty();
    Ok(MatchResult { pairs, flag })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClipTrack {
    /// Local to the clip, starting at 1.
    pub track_id: u64,
    pub mask_a: PixelMask,
    pub mask_b: PixelMask,
}

/// A matched frame pair from one source video.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceClip {
    /// Name of the source video.
    pub video_id: String,
    pub frame_a: usize,
    pub frame_b: usize,
    pub tracks: Vec<ClipTrack>,
}

impl InstanceClip {
    pub fn gap(&self) -> usize {
        self.frame_b - self.frame_a
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurateConfig<'a> {
    pub gaps: &'a [usize],
    pub iou_thresh: f64,
    pub mode: MatchMode,
}

impl Default for CurateConfig<'_> {
    fn default() -> Self {
        Self {
            gaps: &DEFAULT_GAPS,
            iou_thresh: DEFAULT_IOU_THRESH,
            mode: MatchMode::Greedy,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct VideoCuration {
    pub video: String,
    pub candidate_pairs: usize,
    pub emitted_clips: usize,
    /// Masks, summed over candidate pairs, that ended up in no accepted pair.
    pub dropped_masks: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CurationReport {
    pub videos: Vec<VideoCuration>,
    pub total_candidate_pairs: usize,
    pub total_emitted_clips: usize,
    pub total_dropped_masks: usize,
    /// Videos that produced no clip at all.
    pub videos_without_clips: Vec<String>,
}

impl CurationReport {
    pub fn from_videos(videos: Vec<VideoCuration>) -> Self {
        Self {
            total_candidate_pairs: videos.iter().map(|v| v.candidate_pairs).sum(),
            total_emitted_clips: videos.iter().map(|v| v.emitted_clips).sum(),
            total_dropped_masks: videos.iter().map(|v| v.dropped_masks).sum(),
            videos_without_clips: videos
                .iter()
                .filter(|v| v.emitted_clips == 0)
                .map(|v| v.video.clone())
                .collect(),
            videos,
        }
    }
}

/// Matches every frame pair `(t, t + g)` of one video.
///
/// `frames[t]` holds the pixel masks of frame `t`.
pub fn curate(
    video_id: &str,
    frames: &[Vec<BinaryMask>],
    cfg: &CurateConfig<'_>,
) -> Result<(Vec<InstanceClip>, VideoCuration), MatchError> {
    if let Some(&g) = cfg.gaps.iter().find(|&&g| g == 0 || g > MAX_GAP) {
        return Err(MatchError::Gap(g));
    }
    let mut gaps = cfg.gaps.to_vec();
    gaps.sort_unstable();
    gaps.dedup();

    let mut stats = VideoCuration {
        video: video_id.to_string(),
        ..Default::default()
    };
    let mut clips = Vec::new();
    for a in 0..frames.len() {
        for &g in &gaps {
            let b = a + g;
            if b >= frames.len() {
                continue;
            }
            stats.candidate_pairs += 1;
            let res = match_instances(&frames[a], &frames[b], cfg.iou_thresh, cfg.mode)?;
            let mut used_a = vec![false; frames[a].len()];
            let mut used_b = vec![false; frames[b].len()];
            for &(i, j) in &res.pairs {
                used_a[i] = true;
                used_b[j] = true;
            }
            stats.dropped_masks += used_a.iter().chain(&used_b).filter(|&&u| !u).count();
            if !res.flag {
                continue;
            }
            let tracks = res
                .pairs
                .iter()
                .enumerate()
                .map(|(k, &(i, j))| ClipTrack {
                    track_id: k as u64 + 1,
                    mask_a: rle_encode(&frames[a][i]),
                    mask_b: rle_encode(&frames[b][j]),
                })
                .collect();
            clips.push(InstanceClip {
                video_id: video_id.to_string(),
                frame_a: a,
                frame_b: b,
                tracks,
            });
            stats.emitted_clips += 1;
        }
    }
    Ok((clips, stats))
}

/// Frame names and raster size of a source video.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceVideo {
    pub name: String,
    pub width: usize,
    pub height: usize,
    pub file_names: Vec<String>,
}

/// One dataset video per clip, ordered by (source video, first frame, gap),
/// with ids and track ids assigned sequentially from 1.
pub fn build_dataset(clips: &[InstanceClip], meta: &[SourceVideo]) -> Result<DatasetFile, MatchError> {
    let mut order: Vec<&InstanceClip> = clips.iter().collect();
    order.sort_by(|x, y| (x.video_id.as_str(), x.frame_a, x.gap()).cmp(&(y.video_id.as_str(), y.frame_a, y.gap())));
    let mut ds = DatasetFile::default();
    let mut next_track = 1u64;
    for (k, clip) in order.into_iter().enumerate() {
        let src = meta
            .iter()
            .find(|m| m.name == clip.video_id)
            .ok_or_else(|| MatchError::MissingMeta(clip.video_id.clone()))?;
        let name = |t: usize| {
            src.file_names
                .get(t)
                .cloned()
                .unwrap_or_else(|| format!("{}/{t:05}.jpg", src.name))
        };
        let video_id = k as u64 + 1;
        ds.videos.push(VideoEntry::new(
            video_id,
            src.width,
            src.height,
            vec![name(clip.frame_a), name(clip.frame_b)],
        ));
        for track in &clip.tracks {
            ds.annotations.push(Annotation::new(
                next_track,
                video_id,
                vec![Some(track.mask_a.clone()), Some(track.mask_b.clone())],
            ));
            next_track += 1;
        }
    }
    Ok(ds)
}
