//! Curated dataset JSON, laid out like YouTube-VIS annotation files with a
//! single class.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{PixelMask, TensorIoError};

/// The only category id in a class-agnostic dataset.
pub const CATEGORY_ID: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetFile {
    pub videos: Vec<VideoEntry>,
    pub annotations: Vec<Annotation>,
    /// Keys present in the input but not part of the schema.
    #[serde(skip)]
    pub extra: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoEntry {
    pub video_id: u64,
    pub width: usize,
    pub height: usize,
    pub file_names: Vec<String>,
    #[serde(skip)]
    pub extra: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub track_id: u64,
    pub video_id: u64,
    /// One entry per frame; `None` where the track is absent.
    pub segmentations: Vec<Option<PixelMask>>,
    pub areas: Vec<Option<u64>>,
    pub category_id: u32,
    pub iscrowd: u8,
    #[serde(skip)]
    pub extra: BTreeMap<String, Value>,
}

impl VideoEntry {
    pub fn new(video_id: u64, width: usize, height: usize, file_names: Vec<String>) -> Self {
        Self {
            video_id,
            width,
            height,
            file_names,
            extra: BTreeMap::new(),
        }
    }

    pub fn n_frames(&self) -> usize {
        self.file_names.len()
    }
}

impl Annotation {
    /// Builds an annotation with areas derived from the masks.
    pub fn new(track_id: u64, video_id: u64, segmentations: Vec<Option<PixelMask>>) -> Self {
        let areas = segmentations.iter().map(|s| s.as_ref().map(PixelMask::area)).collect();
        Self {
            track_id,
            video_id,
            segmentations,
            areas,
            category_id: CATEGORY_ID,
            iscrowd: 0,
            extra: BTreeMap::new(),
        }
    }

    /// Mean area over the frames where the track is present.
    pub fn mean_area(&self) -> f64 {
        let present: Vec<u64> = self.areas.iter().flatten().copied().collect();
        if present.is_empty() {
            0.0
        } else {
            present.iter().sum::<u64>() as f64 / present.len() as f64
        }
    }
}

impl DatasetFile {
    pub fn video(&self, video_id: u64) -> Option<&VideoEntry> {
        self.videos.iter().find(|v| v.video_id == video_id)
    }

    /// Annotations grouped by video id, in file order.
    pub fn annotations_by_video(&self) -> HashMap<u64, Vec<&Annotation>> {
        let mut out: HashMap<u64, Vec<&Annotation>> = HashMap::new();
        for a in &self.annotations {
            out.entry(a.video_id).or_default().push(a);
        }
        out
    }

    /// Checks the cross-record invariants.
    pub fn validate(&self) -> Result<(), TensorIoError> {
        let schema = |path: String, reason: String| TensorIoError::Schema { path, reason };
        let mut videos: HashMap<u64, &VideoEntry> = HashMap::new();
        for (i, v) in self.videos.iter().enumerate() {
            if v.width == 0 || v.height == 0 {
                return Err(schema(format!("videos[{i}]"), "width and height must be >= 1".into()));
            }
            if videos.insert(v.video_id, v).is_some() {
                return Err(schema(
                    format!("videos[{i}].video_id"),
                    format!("duplicate video_id {}", v.video_id),
                ));
            }
        }
        for (i, a) in self.annotations.iter().enumerate() {
            let Some(video) = videos.get(&a.video_id) else {
                return Err(schema(
                    format!("annotations[{i}].video_id"),
                    format!("no video with id {}", a.video_id),
                ));
            };
            if a.category_id != CATEGORY_ID {
                return Err(schema(
                    format!("annotations[{i}].category_id"),
                    format!("expected {CATEGORY_ID}, found {}", a.category_id),
                ));
            }
            if a.iscrowd != 0 {
                return Err(schema(format!("annotations[{i}].iscrowd"), "expected 0".into()));
            }
            let n = video.n_frames();
            if a.segmentations.len() != n {
                return Err(schema(
                    format!("annotations[{i}].segmentations"),
                    format!("{} entries for a {n}-frame video", a.segmentations.len()),
                ));
            }
            if a.areas.len() != n {
                return Err(schema(
                    format!("annotations[{i}].areas"),
                    format!("{} entries for a {n}-frame video", a.areas.len()),
                ));
            }
            for (t, seg) in a.segmentations.iter().enumerate() {
                if let Some(seg) = seg {
                    if seg.height() != video.height || seg.width() != video.width {
                        return Err(schema(
                            format!("annotations[{i}].segmentations[{t}].size"),
                            format!(
                                "mask is {}x{}, video is {}x{}",
                                seg.height(),
                                seg.width(),
                                video.height,
                                video.width
                            ),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn from_json_str(s: &str) -> Result<Self, TensorIoError> {
        let mut value: Value = serde_json::from_str(s).map_err(|e| TensorIoError::Schema {
            path: "$".into(),
            reason: e.to_string(),
        })?;
        let top_extra = strip_unknown(&mut value, &["videos", "annotations"], "$")?;
        let mut video_extras = Vec::new();
        if let Some(Value::Array(vs)) = value.get_mut("videos") {
            for (i, v) in vs.iter_mut().enumerate() {
                video_extras.push(strip_unknown(
                    v,
                    &["video_id", "width", "height", "file_names"],
                    &format!("videos[{i}]"),
                )?);
            }
        }
        let mut ann_extras = Vec::new();
        if let Some(Value::Array(anns)) = value.get_mut("annotations") {
            for (i, a) in anns.iter_mut().enumerate() {
                ann_extras.push(strip_unknown(
                    a,
                    &[
                        "track_id",
                        "video_id",
                        "segmentations",
                        "areas",
                        "category_id",
                        "iscrowd",
                    ],
                    &format!("annotations[{i}]"),
                )?);
            }
        }
        let mut ds: DatasetFile = serde_path_to_error::deserialize(value).map_err(|e| TensorIoError::Schema {
            path: e.path().to_string(),
            reason: e.inner().to_string(),
        })?;
        ds.extra = top_extra;
        for (v, extra) in ds.videos.iter_mut().zip(video_extras) {
            v.extra = extra;
        }
        for (a, extra) in ds.annotations.iter_mut().zip(ann_extras) {
            a.extra = extra;
        }
        ds.validate()?;
        Ok(ds)
    }

    /// Serializes the schema fields. Extra keys are not written.
    pub fn to_json_string(&self) -> Result<String, TensorIoError> {
        self.validate()?;
        let extras = self.extra.len()
            + self.videos.iter().map(|v| v.extra.len()).sum::<usize>()
            + self.annotations.iter().map(|a| a.extra.len()).sum::<usize>();
        if extras > 0 {
            log::warn!("dropping {extras} unknown key(s) while writing dataset");
        }
        let mut s =
            serde_json::to_string(self).map_err(|e| TensorIoError::Validation(format!("serializing dataset: {e}")))?;
        s.push('\n');
        Ok(s)
    }
}

fn strip_unknown(value: &mut Value, known: &[&str], path: &str) -> Result<BTreeMap<String, Value>, TensorIoError> {
    let Value::Object(obj) = value else {
        return Err(TensorIoError::Schema {
            path: path.into(),
            reason: "expected an object".into(),
        });
    };
    let unknown: Vec<String> = obj.keys().filter(|k| !known.contains(&k.as_str())).cloned().collect();
    let mut extra = BTreeMap::new();
    for k in unknown {
        if let Some(v) = obj.remove(&k) {
            extra.insert(k, v);
        }
    }
    Ok(extra)
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<DatasetFile, TensorIoError> {
    let path = path.as_ref();
    let s = fs::read_to_string(path).map_err(|e| TensorIoError::io(path, e))?;
    DatasetFile::from_json_str(&s)
}

pub fn write_dataset(ds: &DatasetFile, path: impl AsRef<Path>) -> Result<(), TensorIoError> {
    let path = path.as_ref();
    let s = ds.to_json_string()?;
    fs::write(path, s).map_err(|e| TensorIoError::io(path, e))
}
