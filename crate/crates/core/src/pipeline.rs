//! Directory-level drivers behind the command-line tool.
//!
//! Layouts:
//! * features: `<dir>/<video>/<frame>.fcft`, frames sorted by file name; the
//!   flow directory mirrors the rgb one.
//! * masks: `<dir>/<video>/<frame>.json` holding `{height, width, masks}`
//!   with one RLE per extracted instance.
//!
//! Work runs on a dedicated pool of `workers` threads and results come back
//! in input order, so outputs do not depend on the worker count.

use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::affinity::AffinityConfig;
use crate::mask::BinaryMask;
use crate::maskcut::{extract_masks, upsample_mask, MaskCutConfig, MaskCutError};
use crate::matching::{build_dataset, curate, CurateConfig, CurationReport, MatchError, SourceVideo};
use crate::tensor_io::{read_feature_map, rle_decode, rle_encode, DatasetFile, PixelMask, TensorIoError};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Input(#[from] TensorIoError),
    #[error("{path}: {source}")]
    Frame {
        path: PathBuf,
        #[source]
        source: MaskCutError,
    },
    #[error("{0}")]
    Empty(String),
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error("{0}")]
    Internal(String),
}

type Result<T> = std::result::Result<T, PipelineError>;

/// Instance masks of one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameMasks {
    pub height: usize,
    pub width: usize,
    pub masks: Vec<PixelMask>,
}

#[derive(Debug, Clone)]
pub struct VideoFrames {
    pub name: String,
    /// Frame stems in order, e.g. `00003`.
    pub frames: Vec<String>,
}

fn read_dir_sorted(dir: &Path) -> Result<Vec<PathBuf>> {
    let rd = fs::read_dir(dir).map_err(|e| TensorIoError::io(dir, e))?;
    let mut out = Vec::new();
    for entry in rd {
        out.push(entry.map_err(|e| TensorIoError::io(dir, e))?.path());
    }
    out.sort();
    Ok(out)
}

/// Videos under `dir` and their frames with extension `ext`; videos without
/// frames are skipped.
pub fn list_videos(dir: &Path, ext: &str) -> Result<Vec<VideoFrames>> {
    let mut videos = Vec::new();
    for path in read_dir_sorted(dir)? {
        if !path.is_dir() {
            continue;
        }
        let frames: Vec<String> = read_dir_sorted(&path)?
            .iter()
            .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == ext))
            .filter_map(|p| p.file_stem().and_then(|s| s.to_str()).map(str::to_string))
            .collect();
        if frames.is_empty() {
            log::warn!("{}: no .{ext} files, skipping", path.display());
            continue;
        }
        let name = path
            .file_name()
            .and_then(|s| s.to_str())
            .ok_or_else(|| PipelineError::Config(format!("{}: non-UTF-8 video name", path.display())))?
            .to_string();
        videos.push(VideoFrames { name, frames });
    }
    Ok(videos)
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    if workers == 0 {
        return Err(PipelineError::Config("--workers must be >= 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| PipelineError::Internal(format!("thread pool: {e}")))
}

/// Pixel size of the written masks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputSize {
    /// Each patch covers `n × n` pixels.
    PatchPx(usize),
    Fixed {
        height: usize,
        width: usize,
    },
}

#[derive(Debug, Clone, Copy)]
pub struct ExtractConfig {
    pub affinity: AffinityConfig,
    pub maskcut: MaskCutConfig,
    pub size: OutputSize,
}

impl ExtractConfig {
    pub fn validate(&self) -> Result<()> {
        self.affinity
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        self.maskcut
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        match self.size {
            OutputSize::PatchPx(0) => Err(PipelineError::Config("patch size must be >= 1".into())),
            OutputSize::Fixed { height, width } if height == 0 || width == 0 => {
                Err(PipelineError::Config("output size must be >= 1x1".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ExtractSummary {
    pub videos: usize,
    pub frames: usize,
    pub masks: usize,
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| TensorIoError::io(dir, e).into())
}

fn extract_frame(
    features_dir: &Path,
    flow_dir: Option<&Path>,
    video: &str,
    frame: &str,
    cfg: &ExtractConfig,
) -> Result<FrameMasks> {
    let rgb_path = features_dir.join(video).join(format!("{frame}.fcft"));
    let rgb = read_feature_map(&rgb_path)?;
    let flow = match flow_dir {
        Some(d) if !cfg.affinity.is_flow_free() => Some(read_feature_map(d.join(video).join(format!("{frame}.fcft")))?),
        _ => None,
    };
    let masks =
        extract_masks(&rgb, flow.as_ref(), &cfg.affinity, &cfg.maskcut).map_err(|source| PipelineError::Frame {
            path: rgb_path.clone(),
            source,
        })?;
    let (height, width) = match cfg.size {
        OutputSize::PatchPx(n) => (rgb.rows() * n, rgb.cols() * n),
        OutputSize::Fixed { height, width } => (height, width),
    };
    let masks = masks
        .iter()
        .map(|m| upsample_mask(m, height, width).map(|px| rle_encode(&px)))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|source| PipelineError::Frame { path: rgb_path, source })?;
    Ok(FrameMasks { height, width, masks })
}

/// Extracts masks for every frame under `features_dir` into `out`.
pub fn extract_corpus(
    features_dir: &Path,
    flow_dir: Option<&Path>,
    cfg: &ExtractConfig,
    out: &Path,
    workers: usize,
) -> Result<ExtractSummary> {
    cfg.validate()?;
    if !cfg.affinity.is_flow_free() && flow_dir.is_none() {
        return Err(PipelineError::Config(format!(
            "alpha = {} needs flow features (--flow-features-dir)",
            cfg.affinity.alpha
        )));
    }
    for d in std::iter::once(features_dir).chain(flow_dir) {
        if !d.is_dir() {
            return Err(PipelineError::Config(format!("{}: not a directory", d.display())));
        }
    }
    let pool = pool(workers)?;
    let videos = list_videos(features_dir, "fcft")?;
    if videos.is_empty() {
        return Err(PipelineError::Empty(format!(
            "{}: no feature files",
            features_dir.display()
        )));
    }
    let jobs: Vec<(&str, &str)> = videos
        .iter()
        .flat_map(|v| v.frames.iter().map(move |f| (v.name.as_str(), f.as_str())))
        .collect();
    let results: Vec<FrameMasks> = pool.install(|| {
        jobs.par_iter()
            .map(|&(v, f)| extract_frame(features_dir, flow_dir, v, f, cfg))
            .collect::<Result<_>>()
    })?;
    let mut summary = ExtractSummary {
        videos: videos.len(),
        ..Default::default()
    };
    for (&(v, f), fm) in jobs.iter().zip(&results) {
        let dir = out.join(v);
        ensure_dir(&dir)?;
        write_frame_masks(fm, &dir.join(format!("{f}.json")))?;
        log::debug!("{v}/{f}: {} masks", fm.masks.len());
        summary.frames += 1;
        summary.masks += fm.masks.len();
    }
    Ok(summary)
}

pub fn write_frame_masks(fm: &FrameMasks, path: &Path) -> Result<()> {
    let mut s = serde_json::to_string(fm).map_err(|e| PipelineError::Internal(e.to_string()))?;
    s.push('\n');
    fs::write(path, s).map_err(|e| TensorIoError::io(path, e).into())
}

pub fn read_frame_masks(path: &Path) -> Result<FrameMasks> {
    let s = fs::read_to_string(path).map_err(|e| TensorIoError::io(path, e))?;
    let mut de = serde_json::Deserializer::from_str(&s);
    let fm: FrameMasks = serde_path_to_error::deserialize(&mut de).map_err(|e| TensorIoError::Schema {
        path: format!("{}: {}", path.display(), e.path()),
        reason: e.inner().to_string(),
    })?;
    if let Some(m) = fm
        .masks
        .iter()
        .find(|m| m.height() != fm.height || m.width() != fm.width)
    {
        return Err(TensorIoError::Format {
            path: path.to_path_buf(),
            reason: format!(
                "mask is {}x{}, frame is {}x{}",
                m.height(),
                m.width(),
                fm.height,
                fm.width
            ),
        }
        .into());
    }
    Ok(fm)
}

struct LoadedVideo {
    meta: SourceVideo,
    frames: Vec<Vec<BinaryMask>>,
}

fn load_video(masks_dir: &Path, v: &VideoFrames) -> Result<LoadedVideo> {
    let mut frames = Vec::with_capacity(v.frames.len());
    let mut dims: Option<(usize, usize)> = None;
    for f in &v.frames {
        let path = masks_dir.join(&v.name).join(format!("{f}.json"));
        let fm = read_frame_masks(&path)?;
        match dims {
            None => dims = Some((fm.height, fm.width)),
            Some(d) if d != (fm.height, fm.width) => {
                return Err(TensorIoError::Format {
                    path,
                    reason: format!(
                        "frame is {}x{}, earlier frames are {}x{}",
                        fm.height, fm.width, d.0, d.1
                    ),
                }
                .into())
            }
            _ => {}
        }
        frames.push(
            fm.masks
                .iter()
                .map(rle_decode)
                .collect::<std::result::Result<Vec<_>, _>>()?,
        );
    }
    let (height, width) = dims.expect("listed videos have frames");
    Ok(LoadedVideo {
        meta: SourceVideo {
            name: v.name.clone(),
            width,
            height,
            file_names: v.frames.iter().map(|f| format!("{}/{f}.jpg", v.name)).collect(),
        },
        frames,
    })
}

/// Curates the masks under `masks_dir` into a clip dataset.
pub fn curate_corpus(
    masks_dir: &Path,
    cfg: &CurateConfig<'_>,
    workers: usize,
) -> Result<(DatasetFile, CurationReport)> {
    if !masks_dir.is_dir() {
        return Err(PipelineError::Config(format!(
            "{}: not a directory",
            masks_dir.display()
        )));
    }
    let pool = pool(workers)?;
    let videos = list_videos(masks_dir, "json")?;
    if videos.is_empty() {
        return Err(PipelineError::Empty(format!("{}: no mask files", masks_dir.display())));
    }
    let per_video = pool.install(|| {
        videos
            .par_iter()
            .map(|v| {
                let loaded = load_video(masks_dir, v)?;
                let (clips, stats) = curate(&v.name, &loaded.frames, cfg)?;
                Ok((loaded.meta, clips, stats))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut metas = Vec::new();
    let mut clips = Vec::new();
    let mut stats = Vec::new();
    for (m, c, s) in per_video {
        metas.push(m);
        clips.extend(c);
        stats.push(s);
    }
    let ds = build_dataset(&clips, &metas)?;
    Ok((ds, CurationReport::from_videos(stats)))
}

/// Deterministic, well-spread track colors (golden-ratio hue steps).
pub fn track_color(track: u64) -> [u8; 3] {
    const PHI: f64 = 0.618_033_988_749_895;
    let h = ((track as f64) * PHI).fract() * 6.0;
    let (s, v) = (0.85, 0.95);
    let c = v * s;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    let q = |u: f64| ((u + m) * 255.0).round() as u8;
    [q(r), q(g), q(b)]
}

/// Black canvas with the inner boundary of each mask drawn in its track
/// color; later masks paint over earlier ones.
pub fn render_overlay(height: usize, width: usize, masks: &[(u64, &BinaryMask)]) -> Result<RgbImage> {
    let (h32, w32) = (
        u32::try_from(height).map_err(|_| PipelineError::Config("canvas too tall".into()))?,
        u32::try_from(width).map_err(|_| PipelineError::Config("canvas too wide".into()))?,
    );
    let mut img = RgbImage::new(w32, h32);
    for &(track, m) in masks {
        if m.height() != height || m.width() != width {
            return Err(PipelineError::Config(format!(
                "track {track}: mask is {}x{}, canvas is {height}x{width}",
                m.height(),
                m.width()
            )));
        }
        let color = Rgb(track_color(track));
        for r in 0..height {
            for c in 0..width {
                if !m.get(r, c) {
                    continue;
                }
                let edge = r == 0
                    || c == 0
                    || r + 1 == height
                    || c + 1 == width
                    || !m.get(r - 1, c)
                    || !m.get(r + 1, c)
                    || !m.get(r, c - 1)
                    || !m.get(r, c + 1);
                if edge {
                    img.put_pixel(c as u32, r as u32, color);
                }
            }
        }
    }
    Ok(img)
}

fn save_png(img: &RgbImage, path: &Path) -> Result<()> {
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| PipelineError::Internal(format!("{}: {e}", path.display())))
}

/// One PNG per dataset frame at `<out>/<video_id>/<frame:05>.png`.
pub fn overlay_dataset(ds: &DatasetFile, out: &Path) -> Result<usize> {
    ds.validate()?;
    let by_video = ds.annotations_by_video();
    let mut written = 0;
    for v in &ds.videos {
        let dir = out.join(format!("{:05}", v.video_id));
        ensure_dir(&dir)?;
        let anns = by_video.get(&v.video_id).cloned().unwrap_or_default();
        for t in 0..v.n_frames() {
            let decoded: Vec<(u64, BinaryMask)> = anns
                .iter()
                .filter_map(|a| {
                    a.segmentations[t]
                        .as_ref()
                        .map(|s| rle_decode(s).map(|m| (a.track_id, m)))
                })
                .collect::<std::result::Result<_, _>>()?;
            let refs: Vec<(u64, &BinaryMask)> = decoded.iter().map(|(k, m)| (*k, m)).collect();
            save_png(
                &render_overlay(v.height, v.width, &refs)?,
                &dir.join(format!("{t:05}.png")),
            )?;
            written += 1;
        }
    }
    Ok(written)
}

/// One PNG per mask file at `<out>/<video>/<frame>.png`, colored by mask
/// index (1-based).
pub fn overlay_masks(masks_dir: &Path, out: &Path) -> Result<usize> {
    let videos = list_videos(masks_dir, "json")?;
    if videos.is_empty() {
        return Err(PipelineError::Empty(format!("{}: no mask files", masks_dir.display())));
    }
    let mut written = 0;
    for v in &videos {
        let dir = out.join(&v.name);
        ensure_dir(&dir)?;
        for f in &v.frames {
            let fm = read_frame_masks(&masks_dir.join(&v.name).join(format!("{f}.json")))?;
            let decoded = fm
                .masks
                .iter()
                .map(rle_decode)
                .collect::<std::result::Result<Vec<_>, _>>()?;
            let refs: Vec<(u64, &BinaryMask)> = decoded.iter().enumerate().map(|(k, m)| (k as u64 + 1, m)).collect();
            save_png(
                &render_overlay(fm.height, fm.width, &refs)?,
                &dir.join(format!("{f}.png")),
            )?;
            written += 1;
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn palette_is_stable_and_distinct() {
        assert_eq!(track_color(1), track_color(1));
        let colors: Vec<[u8; 3]> = (1..=8).map(track_color).collect();
        for i in 0..colors.len() {
            for j in i + 1..colors.len() {
                assert_ne!(colors[i], colors[j]);
            }
        }
    }

    #[test]
    fn overlay_draws_each_track() {
        let empty = render_overlay(4, 6, &[]).unwrap();
        assert_eq!(empty.dimensions(), (6, 4));
        assert!(empty.pixels().all(|p| p.0 == [0, 0, 0]));

        let a = BinaryMask::from_fn(6, 6, |r, c| r < 3 && c < 3).unwrap();
        let b = BinaryMask::from_fn(6, 6, |r, c| r >= 3 && c >= 3).unwrap();
        let img = render_overlay(6, 6, &[(1, &a), (2, &b)]).unwrap();
        assert_eq!(img.get_pixel(0, 0).0, track_color(1));
        assert_eq!(img.get_pixel(5, 5).0, track_color(2));
        // outside both masks
        assert_eq!(img.get_pixel(4, 1).0, [0, 0, 0]);

        let wrong = BinaryMask::new(5, 6).unwrap();
        assert!(render_overlay(6, 6, &[(1, &wrong)]).is_err());
    }

    #[test]
    fn frame_masks_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = BinaryMask::from_fn(3, 4, |r, c| r == c).unwrap();
        let fm = FrameMasks {
            height: 3,
            width: 4,
            masks: vec![rle_encode(&m)],
        };
        let p = dir.path().join("f.json");
        write_frame_masks(&fm, &p).unwrap();
        assert_eq!(read_frame_masks(&p).unwrap(), fm);
        fs::write(&p, r#"{"height":2,"width":4,"masks":[{"size":[3,4],"counts":[12]}]}"#).unwrap();
        assert!(read_frame_masks(&p).is_err());
    }
}
