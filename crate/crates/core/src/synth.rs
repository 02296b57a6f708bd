//! Moving-shape videos with known ground truth and synthetic patch features.
//!
//! Every video draws its own near-orthogonal feature directions: one for the
//! background, one per object and one for the optional static distractor.
//! Object and distractor directions lean towards the background direction by
//! `object_bg_cosine`; with purely orthogonal clusters every cross-cluster
//! weight is the same ε and a single cut tends to grab two objects at once.
//!
//! Flow features encode the quantized displacement of each patch over
//! `flow_gap` frames. Static patches (background, distractor, objects that
//! do not move over the gap) share one direction.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::mask::PatchMask;
use crate::maskcut::upsample_mask;
use crate::tensor_io::{
    rle_encode, write_dataset, write_feature_map, Annotation, DatasetFile, FeatureMap, TensorIoError, VideoEntry,
};

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid synth spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Io(#[from] TensorIoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeKind {
    Disc,
    Rectangle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub seed: u64,
    pub n_videos: usize,
    pub frames_per_video: usize,
    pub rows: usize,
    pub cols: usize,
    pub dim: usize,
    /// Pixels per patch side in the ground-truth rasters.
    pub patch_px: usize,
    pub n_objects: usize,
    pub shape: ShapeKind,
    /// Object speed range, in patches per frame.
    pub speed: (f64, f64),
    /// Object radius (half side for rectangles) range, in patches.
    pub size: (f64, f64),
    pub noise_sigma: f64,
    pub distractor: bool,
    pub object_bg_cosine: f64,
    pub flow_gap: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            n_videos: 20,
            frames_per_video: 8,
            rows: 16,
            cols: 16,
            dim: 256,
            patch_px: 8,
            n_objects: 2,
            shape: ShapeKind::Disc,
            speed: (0.3, 0.6),
            size: (2.2, 2.6),
            noise_sigma: 0.04,
            distractor: false,
            object_bg_cosine: 0.1,
            flow_gap: 4,
        }
    }
}

const MAX_PLACEMENT_TRIES: usize = 200;
/// Half side of the square distractor, in patches.
const DISTRACTOR_HALF: f64 = 1.5;

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Spec(m));
        for (name, v) in [
            ("n_videos", self.n_videos),
            ("frames_per_video", self.frames_per_video),
            ("rows", self.rows),
            ("cols", self.cols),
            ("patch_px", self.patch_px),
            ("n_objects", self.n_objects),
            ("flow_gap", self.flow_gap),
        ] {
            if v < 1 {
                return bad(format!("{name} must be >= 1"));
            }
        }
        let needed = self.n_objects + 2;
        if self.dim < needed.max(3) {
            return bad(format!("dim {} too small for {} directions", self.dim, needed));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma must be >= 0, got {}", self.noise_sigma));
        }
        if !(0.0..1.0).contains(&self.object_bg_cosine) {
            return bad(format!(
                "object_bg_cosine must be in [0, 1), got {}",
                self.object_bg_cosine
            ));
        }
        let (s0, s1) = self.speed;
        if !(0.0 <= s0 && s0 <= s1 && s1.is_finite()) {
            return bad(format!("speed range ({s0}, {s1}) is invalid"));
        }
        let (r0, r1) = self.size;
        if !(0.0 < r0 && r0 <= r1 && r1.is_finite()) {
            return bad(format!("size range ({r0}, {r1}) is invalid"));
        }
        let short = self.rows.min(self.cols) as f64;
        if 2.0 * r0 >= short {
            return bad(format!(
                "objects of radius {r0} do not fit a {}x{} grid",
                self.rows, self.cols
            ));
        }
        Ok(())
    }

    pub fn pixel_height(&self) -> usize {
        self.rows * self.patch_px
    }

    pub fn pixel_width(&self) -> usize {
        self.cols * self.patch_px
    }
}

/// Patch features of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthFrame {
    pub rgb: FeatureMap,
    pub flow: FeatureMap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthVideo {
    pub name: String,
    pub frames: Vec<SynthFrame>,
    /// `gt_patch[t][k]`: object `k` on the patch grid at frame `t`.
    pub gt_patch: Vec<Vec<PatchMask>>,
    pub distractor: Option<PatchMask>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub spec: SynthSpec,
    /// Pixel-level ground truth; video `i` of `videos` has id `i + 1` and
    /// object `k` of it is annotation `i * n_objects + k`.
    pub dataset: DatasetFile,
    pub videos: Vec<SynthVideo>,
}

#[derive(Debug, Clone, Copy)]
struct Shape {
    cy: f64,
    cx: f64,
    vy: f64,
    vx: f64,
    hy: f64,
    hx: f64,
}

impl Shape {
    fn center(&self, t: f64) -> (f64, f64) {
        (self.cy + self.vy * t, self.cx + self.vx * t)
    }

    fn contains(&self, kind: ShapeKind, t: f64, y: f64, x: f64) -> bool {
        let (cy, cx) = self.center(t);
        match kind {
            ShapeKind::Disc => (y - cy).powi(2) + (x - cx).powi(2) <= self.hy * self.hy,
            ShapeKind::Rectangle => (y - cy).abs() <= self.hy && (x - cx).abs() <= self.hx,
        }
    }

    fn in_bounds(&self, t_last: f64, rows: f64, cols: f64) -> bool {
        [0.0, t_last].iter().all(|&t| {
            let (cy, cx) = self.center(t);
            cy - self.hy >= 0.0 && cy + self.hy <= rows && cx - self.hx >= 0.0 && cx + self.hx <= cols
        })
    }

    /// Conservative: bounding circles stay apart for every frame.
    fn clear_of(&self, other: &Shape, n_frames: usize) -> bool {
        let reach = self.hy.max(self.hx) + other.hy.max(other.hx) + 0.5;
        (0..n_frames).all(|t| {
            let (a, b) = (self.center(t as f64), other.center(t as f64));
            (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2) > reach * reach
        })
    }
}

/// Unit vectors via Gram-Schmidt on Gaussian draws.
fn orthonormal(rng: &mut ChaCha8Rng, k: usize, dim: usize) -> Vec<Vec<f64>> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(k);
    while out.len() < k {
        let mut v: Vec<f64> = (0..dim).map(|_| normal.sample(rng)).collect();
        for u in &out {
            let d: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= d * b);
        }
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n > 1e-6 {
            v.iter_mut().for_each(|a| *a /= n);
            out.push(v);
        }
    }
    out
}

fn blend(a: f64, base: &[f64], b: f64, other: &[f64]) -> Vec<f64> {
    base.iter().zip(other).map(|(x, y)| a * x + b * y).collect()
}

/// Frame paired with `t` for flow: `t + gap`, or `t - gap` past the end.
pub fn flow_target(t: usize, gap: usize, n_frames: usize) -> usize {
    if t + gap < n_frames {
        t + gap
    } else if t >= gap {
        t - gap
    } else {
        n_frames - 1
    }
}

fn place(spec: &SynthSpec, rng: &mut ChaCha8Rng, video: usize) -> Result<(Vec<Shape>, Option<Shape>), SynthError> {
    let (rows, cols) = (spec.rows as f64, spec.cols as f64);
    let t_last = (spec.frames_per_video - 1) as f64;
    let base_heading = rng.random_range(0.0..2.0 * PI);
    let mut placed: Vec<Shape> = Vec::new();
    let mut distractor = None;
    if spec.distractor {
        for _ in 0..MAX_PLACEMENT_TRIES {
            let cy = rng.random_range(DISTRACTOR_HALF..rows - DISTRACTOR_HALF);
            let cx = rng.random_range(DISTRACTOR_HALF..cols - DISTRACTOR_HALF);
            let d = Shape {
                cy: cy.floor() + 0.5,
                cx: cx.floor() + 0.5,
                vy: 0.0,
                vx: 0.0,
                hy: DISTRACTOR_HALF,
                hx: DISTRACTOR_HALF,
            };
            if d.in_bounds(0.0, rows, cols) {
                distractor = Some(d);
                break;
            }
        }
    }
    for k in 0..spec.n_objects {
        let mut fallback = None;
        let mut chosen = None;
        for _ in 0..MAX_PLACEMENT_TRIES {
            let r = rng.random_range(spec.size.0..=spec.size.1);
            let (hy, hx) = match spec.shape {
                ShapeKind::Disc => (r, r),
                ShapeKind::Rectangle => (r, r * rng.random_range(0.7..=1.3)),
            };
            let speed = rng.random_range(spec.speed.0..=spec.speed.1);
            let heading = base_heading + 2.0 * PI * k as f64 / spec.n_objects as f64 + rng.random_range(-0.3..0.3);
            let (vy, vx) = (speed * heading.sin(), speed * heading.cos());
            let end_y = vy * t_last;
            let end_x = vx * t_last;
            let y_lo = hy - end_y.min(0.0);
            let y_hi = rows - hy - end_y.max(0.0);
            let x_lo = hx - end_x.min(0.0);
            let x_hi = cols - hx - end_x.max(0.0);
            if y_lo >= y_hi || x_lo >= x_hi {
                continue;
            }
            let s = Shape {
                cy: rng.random_range(y_lo..y_hi),
                cx: rng.random_range(x_lo..x_hi),
                vy,
                vx,
                hy,
                hx,
            };
            if !s.in_bounds(t_last, rows, cols) {
                continue;
            }
            let clear = placed
                .iter()
                .chain(distractor.iter())
                .all(|o| s.clear_of(o, spec.frames_per_video));
            if clear {
                chosen = Some(s);
                break;
            }
            fallback.get_or_insert(s);
        }
        match chosen.or(fallback) {
            Some(s) => {
                if chosen.is_none() {
                    log::warn!("video {video}: object {k} overlaps others; later objects occlude earlier ones");
                }
                placed.push(s);
            }
            None => {
                return Err(SynthError::Spec(format!(
                    "video {video}: no in-bounds trajectory for object {k} after {MAX_PLACEMENT_TRIES} tries"
                )))
            }
        }
    }
    Ok((placed, distractor))
}

fn generate_video(spec: &SynthSpec, v: usize) -> Result<SynthVideo, SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(v as u64);
    let (shapes, distractor_shape) = place(spec, &mut rng, v)?;

    let rgb_dirs = orthonormal(&mut rng, spec.n_objects + 2, spec.dim);
    let flow_dirs = orthonormal(&mut rng, 3, spec.dim);
    let a = spec.object_bg_cosine;
    let b = (1.0 - a * a).sqrt();
    let bg = &rgb_dirs[0];
    let obj_dirs: Vec<Vec<f64>> = (0..spec.n_objects).map(|k| blend(a, bg, b, &rgb_dirs[k + 1])).collect();
    let dist_dir = blend(a, bg, b, &rgb_dirs[spec.n_objects + 1]);
    let (f_static, f_x, f_y) = (&flow_dirs[0], &flow_dirs[1], &flow_dirs[2]);
    let noise = Normal::new(0.0, spec.noise_sigma.max(f64::MIN_POSITIVE)).expect("finite sigma");

    let (rows, cols, n) = (spec.rows, spec.cols, spec.frames_per_video);
    let center = |i: usize| ((i / cols) as f64 + 0.5, (i % cols) as f64 + 0.5);
    let distractor = distractor_shape.map(|d| {
        PatchMask::from_fn(rows, cols, |r, c| {
            d.contains(ShapeKind::Rectangle, 0.0, r as f64 + 0.5, c as f64 + 0.5)
        })
        .expect("grid dims >= 1")
    });

    let mut frames = Vec::with_capacity(n);
    let mut gt_patch = Vec::with_capacity(n);
    for t in 0..n {
        // 0 = background, 1..=n_objects objects, n_objects + 1 distractor
        let mut label = vec![0usize; rows * cols];
        if let Some(d) = &distractor {
            for (i, l) in label.iter_mut().enumerate() {
                if d.bits()[i] {
                    *l = spec.n_objects + 1;
                }
            }
        }
        for (k, s) in shapes.iter().enumerate() {
            for (i, l) in label.iter_mut().enumerate() {
                let (y, x) = center(i);
                if s.contains(spec.shape, t as f64, y, x) {
                    *l = k + 1;
                }
            }
        }
        let target = flow_target(t, spec.flow_gap, n) as f64;
        let obj_flow: Vec<Vec<f64>> = shapes
            .iter()
            .map(|s| {
                let dt = target - t as f64;
                let (dy, dx) = ((s.vy * dt).round(), (s.vx * dt).round());
                if dy == 0.0 && dx == 0.0 {
                    f_static.clone()
                } else {
                    let th = dy.atan2(dx);
                    let dir: Vec<f64> = f_x.iter().zip(f_y).map(|(x, y)| th.cos() * x + th.sin() * y).collect();
                    blend(a, f_static, b, &dir)
                }
            })
            .collect();

        let mut rgb = FeatureMap::zeros(rows, cols, spec.dim).expect("validated dims");
        let mut flow = FeatureMap::zeros(rows, cols, spec.dim).expect("validated dims");
        for (i, &l) in label.iter().enumerate() {
            let (rd, fd) = match l {
                0 => (bg, f_static),
                l if l <= spec.n_objects => (&obj_dirs[l - 1], &obj_flow[l - 1]),
                _ => (&dist_dir, f_static),
            };
            for (dst, &src) in rgb.patch_mut(i).iter_mut().zip(rd) {
                *dst = src
                    + if spec.noise_sigma > 0.0 {
                        noise.sample(&mut rng)
                    } else {
                        0.0
                    };
            }
            for (dst, &src) in flow.patch_mut(i).iter_mut().zip(fd) {
                *dst = src
                    + if spec.noise_sigma > 0.0 {
                        noise.sample(&mut rng)
                    } else {
                        0.0
                    };
            }
        }
        frames.push(SynthFrame { rgb, flow });
        gt_patch.push(
            (1..=spec.n_objects)
                .map(|k| PatchMask::from_bits(rows, cols, label.iter().map(|&l| l == k).collect()).expect("grid"))
                .collect(),
        );
    }
    Ok(SynthVideo {
        name: format!("video_{v:04}"),
        frames,
        gt_patch,
        distractor,
    })
}

/// Deterministic given `spec`; videos are generated in parallel from
/// per-video streams of the seed.
pub fn generate(spec: &SynthSpec) -> Result<SynthCorpus, SynthError> {
    spec.validate()?;
    let videos: Vec<SynthVideo> = (0..spec.n_videos)
        .into_par_iter()
        .map(|v| generate_video(spec, v))
        .collect::<Result<_, _>>()?;
    let (h, w) = (spec.pixel_height(), spec.pixel_width());
    let mut dataset = DatasetFile::default();
    let mut next_track = 1;
    for (i, video) in videos.iter().enumerate() {
        let video_id = i as u64 + 1;
        dataset.videos.push(VideoEntry::new(
            video_id,
            w,
            h,
            (0..spec.frames_per_video)
                .map(|t| format!("{}/{t:05}.png", video.name))
                .collect(),
        ));
        for k in 0..spec.n_objects {
            let segs = video
                .gt_patch
                .iter()
                .map(|masks| {
                    let m = &masks[k];
                    (m.area() > 0).then(|| rle_encode(&upsample_mask(m, h, w).expect("pixel dims exceed grid")))
                })
                .collect();
            dataset.annotations.push(Annotation::new(next_track, video_id, segs));
            next_track += 1;
        }
    }
    Ok(SynthCorpus {
        spec: spec.clone(),
        dataset,
        videos,
    })
}

/// Writes `<out>/rgb/<video>/<frame>.fcft`, the same under `flow/`, and
/// `<out>/gt.json`.
pub fn write_corpus(corpus: &SynthCorpus, out: &Path) -> Result<(), SynthError> {
    for video in &corpus.videos {
        for stream in ["rgb", "flow"] {
            let dir = out.join(stream).join(&video.name);
            fs::create_dir_all(&dir).map_err(|e| TensorIoError::Io {
                path: dir.clone(),
                source: e,
            })?;
            for (t, f) in video.frames.iter().enumerate() {
                let fm = if stream == "rgb" { &f.rgb } else { &f.flow };
                write_feature_map(fm, dir.join(format!("{t:05}.fcft")))?;
            }
        }
    }
    write_dataset(&corpus.dataset, out.join("gt.json"))?;
    Ok(())
}
