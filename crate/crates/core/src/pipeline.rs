//! Glue between the stages: frames to crops, crops to backbone maps, maps to
//! fused sequences.

use std::fs;
use std::path::Path;

use log::{debug, info};

use crate::detect::{crop_resize, nms, select_region, BoundingBox, DetectorAdapter, RegionCrop, RegionKind};
use crate::error::{Error, Result};
use crate::ingest::{read_frame_dir, resample_indices, PainClass, RecordingPeriod, SubjectId, VideoClip};
use crate::fsutil::write_atomic;
use crate::model::{Backbone, FeatureMap, FusionHead, MapSample, FEATURE_GRID};
use crate::temporal::VideoSequence;

/// Face and body crops for every frame of a clip.
#[derive(Debug, Clone)]
pub struct ClipCrops {
    pub face: Vec<RegionCrop>,
    pub body: Vec<RegionCrop>,
    /// Frames whose face region fell back to a previous box or the whole frame.
    pub degraded_face: Vec<usize>,
    pub degraded_body: Vec<usize>,
}

impl ClipCrops {
    pub fn len(&self) -> usize {
        self.face.len()
    }

    pub fn is_empty(&self) -> bool {
        self.face.is_empty()
    }

    pub fn degraded_frames(&self) -> usize {
        let mut all: Vec<usize> = self.degraded_face.iter().chain(&self.degraded_body).copied().collect();
        all.sort_unstable();
        all.dedup();
        all.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionThresholds {
    pub confidence: f64,
    pub iou: f64,
}

impl Default for DetectionThresholds {
    fn default() -> Self {
        DetectionThresholds {
            confidence: crate::detect::DEFAULT_CONF_THRESH,
            iou: crate::detect::DEFAULT_IOU_THRESH,
        }
    }
}

fn region_boxes(
    clip: &VideoClip,
    clip_dir: Option<&Path>,
    detector: &mut dyn DetectorAdapter,
    kind: RegionKind,
    thresholds: DetectionThresholds,
) -> Result<(Vec<BoundingBox>, Vec<usize>)> {
    let results = detector.detect_clip(clip_dir, &clip.frames)?;
    if results.len() != clip.len() {
        return Err(Error::Detector(format!(
            "{kind} detector returned {} results for {} frames",
            results.len(),
            clip.len()
        )));
    }
    let size = clip.dimensions();
    let mut prev = None;
    let mut boxes = Vec::with_capacity(clip.len());
    let mut degraded = Vec::new();
    for (i, mut r) in results.into_iter().enumerate() {
        r.boxes = nms(&r.boxes, thresholds.confidence, thresholds.iou);
        let sel = select_region(&r, kind, prev, size);
        if sel.degraded {
            degraded.push(i);
        }
        prev = Some(sel.bbox);
        boxes.push(sel.bbox);
    }
    Ok((boxes, degraded))
}

/// Detects, selects and crops both regions for each frame of `clip`.
pub fn crop_clip(
    clip: &VideoClip,
    clip_dir: Option<&Path>,
    face_detector: &mut dyn DetectorAdapter,
    body_detector: &mut dyn DetectorAdapter,
    thresholds: DetectionThresholds,
) -> Result<ClipCrops> {
    let (face_boxes, degraded_face) = region_boxes(clip, clip_dir, face_detector, RegionKind::Face, thresholds)?;
    let (body_boxes, degraded_body) = region_boxes(clip, clip_dir, body_detector, RegionKind::Body, thresholds)?;
    let mut face = Vec::with_capacity(clip.len());
    let mut body = Vec::with_capacity(clip.len());
    for (frame, (fb, bb)) in clip.frames.iter().zip(face_boxes.iter().zip(&body_boxes)) {
        face.push(crop_resize(frame, fb, RegionKind::Face)?);
        body.push(crop_resize(frame, bb, RegionKind::Body)?);
    }
    if !degraded_face.is_empty() || !degraded_body.is_empty() {
        debug!(
            "{}: {} face and {} body frames without detection",
            clip.subject_id,
            degraded_face.len(),
            degraded_body.len()
        );
    }
    Ok(ClipCrops {
        face,
        body,
        degraded_face,
        degraded_body,
    })
}

impl ClipCrops {
    /// Keeps the frames at `indices`, in order.
    pub fn select(&self, indices: &[usize]) -> ClipCrops {
        let keep = |v: &[usize]| -> Vec<usize> {
            indices
                .iter()
                .enumerate()
                .filter(|(_, i)| v.contains(i))
                .map(|(k, _)| k)
                .collect()
        };
        ClipCrops {
            face: indices.iter().map(|&i| self.face[i].clone()).collect(),
            body: indices.iter().map(|&i| self.body[i].clone()).collect(),
            degraded_face: keep(&self.degraded_face),
            degraded_body: keep(&self.degraded_body),
        }
    }
}

/// Reads a frame directory, detects and crops at its native rate (stored
/// detections index native frames), then keeps the frames nearest to
/// `target_fps`.
pub fn load_crops(
    dir: &Path,
    subject_id: SubjectId,
    period: Option<RecordingPeriod>,
    target_fps: f64,
    face_detector: &mut dyn DetectorAdapter,
    body_detector: &mut dyn DetectorAdapter,
    thresholds: DetectionThresholds,
) -> Result<ClipCrops> {
    let clip = read_frame_dir(dir, subject_id, period)?;
    let crops = crop_clip(&clip, Some(dir), face_detector, body_detector, thresholds)?;
    let indices = resample_indices(clip.len(), clip.fps, target_fps)?;
    Ok(crops.select(&indices))
}

/// Backbone maps for every frame of one labeled video.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoMaps {
    pub subject_id: SubjectId,
    pub period: Option<RecordingPeriod>,
    pub label: PainClass,
    pub frame_labels: Vec<PainClass>,
    pub face: Vec<FeatureMap>,
    pub body: Vec<FeatureMap>,
}

impl VideoMaps {
    pub fn new(
        subject_id: SubjectId,
        period: Option<RecordingPeriod>,
        label: PainClass,
        frame_labels: Vec<PainClass>,
        face: Vec<FeatureMap>,
        body: Vec<FeatureMap>,
    ) -> Result<Self> {
        if face.is_empty() {
            return Err(Error::EmptyVideo);
        }
        if face.len() != body.len() {
            return Err(Error::LengthMismatch(face.len(), body.len()));
        }
        if frame_labels.len() != face.len() {
            return Err(Error::LengthMismatch(frame_labels.len(), face.len()));
        }
        Ok(VideoMaps {
            subject_id,
            period,
            label,
            frame_labels,
            face,
            body,
        })
    }

    /// Runs both frozen backbones over a clip's crops.
    pub fn extract(
        subject_id: SubjectId,
        period: Option<RecordingPeriod>,
        label: PainClass,
        frame_labels: Vec<PainClass>,
        crops: &ClipCrops,
        face_backbone: &Backbone,
        body_backbone: &Backbone,
    ) -> Result<Self> {
        let face = crops.face.iter().map(|c| face_backbone.extract(c)).collect::<Result<Vec<_>>>()?;
        let body = crops.body.iter().map(|c| body_backbone.extract(c)).collect::<Result<Vec<_>>>()?;
        Self::new(subject_id, period, label, frame_labels, face, body)
    }

    pub fn len(&self) -> usize {
        self.face.len()
    }

    pub fn is_empty(&self) -> bool {
        self.face.is_empty()
    }

    /// Every `stride`-th frame as a head training sample.
    pub fn frame_samples(&self, stride: usize) -> Vec<MapSample<'_>> {
        (0..self.len())
            .step_by(stride.max(1))
            .map(|i| MapSample {
                face: &self.face[i],
                body: &self.body[i],
                label: self.frame_labels[i],
            })
            .collect()
    }

    /// Fused per-frame vectors under `head`.
    pub fn fuse(&self, head: &FusionHead) -> Result<VideoSequence> {
        let pairs: Vec<_> = self.face.iter().zip(&self.body).collect();
        let features = head.fuse_batch(&pairs)?;
        VideoSequence::with_frame_labels(
            self.subject_id.clone(),
            self.period,
            self.label,
            self.frame_labels.clone(),
            features,
        )
    }
}

/// Extracts maps for a batch of videos, logging progress.
pub fn extract_all<'a, I>(items: I, face_backbone: &Backbone, body_backbone: &Backbone) -> Result<Vec<VideoMaps>>
where
    I: IntoIterator<Item = (SubjectId, Option<RecordingPeriod>, PainClass, Vec<PainClass>, &'a ClipCrops)>,
{
    let mut out = Vec::new();
    for (subject, period, label, frame_labels, crops) in items {
        out.push(VideoMaps::extract(
            subject,
            period,
            label,
            frame_labels,
            crops,
            face_backbone,
            body_backbone,
        )?);
        if out.len() % 50 == 0 {
            info!("extracted backbone maps for {} videos", out.len());
        }
    }
    Ok(out)
}

/// Writes `<stem>.bin` (per frame: face map then body map, little-endian
/// f32) and a `<stem>.txt` header.
pub fn write_maps(dir: &Path, stem: &str, maps: &VideoMaps) -> Result<()> {
    let channels = maps.face[0].channels();
    let mut bytes = Vec::with_capacity(8 * maps.len() * maps.face[0].data().len());
    for (f, b) in maps.face.iter().zip(&maps.body) {
        for m in [f, b] {
            for &v in m.data() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let frame_labels: String = maps.frame_labels.iter().map(|l| if l.is_pain() { '1' } else { '0' }).collect();
    let header = format!(
        "subject {}\nperiod {}\nframes {}\nchannels {channels}\nlabel {}\nframe_labels {frame_labels}\n",
        maps.subject_id,
        maps.period.map_or("-".to_owned(), |p| p.to_string()),
        maps.len(),
        maps.label,
    );
    write_atomic(&dir.join(format!("{stem}.bin")), bytes)?;
    write_atomic(&dir.join(format!("{stem}.txt")), header)
}

pub fn read_maps(dir: &Path, stem: &str) -> Result<VideoMaps> {
    let header_path = dir.join(format!("{stem}.txt"));
    let bin_path = dir.join(format!("{stem}.bin"));
    let text = fs::read_to_string(&header_path).map_err(|_| Error::MissingFile {
        path: header_path.clone(),
        row: None,
    })?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: header_path.clone(),
        line,
        message,
    };
    let (mut subject, mut period, mut frames, mut channels, mut label, mut frame_labels) =
        (None, None, None, None, None, None);
    for (i, line) in text.lines().enumerate() {
        let (key, value) = line.split_once(' ').unwrap_or((line, ""));
        let bad = |what: &str| parse_err(i + 1, format!("bad {what} {value:?}"));
        match key {
            "subject" => subject = Some(SubjectId::new(value)),
            "period" if value == "-" => period = None,
            "period" => period = Some(value.parse::<RecordingPeriod>().map_err(|_| bad("period"))?),
            "frames" => frames = Some(value.parse::<usize>().map_err(|_| bad("frame count"))?),
            "channels" => channels = Some(value.parse::<usize>().map_err(|_| bad("channel count"))?),
            "label" => label = Some(value.parse::<PainClass>().map_err(|_| bad("label"))?),
            "frame_labels" => {
                frame_labels = Some(
                    value
                        .chars()
                        .map(|c| match c {
                            '0' => Ok(PainClass::NoPain),
                            '1' => Ok(PainClass::Pain),
                            _ => Err(bad("frame labels")),
                        })
                        .collect::<Result<Vec<_>>>()?,
                )
            }
            "" => {}
            other => return Err(parse_err(i + 1, format!("unknown key {other:?}"))),
        }
    }
    let missing = |k: &str| parse_err(0, format!("missing {k}"));
    let subject = subject.ok_or_else(|| missing("subject"))?;
    let n = frames.ok_or_else(|| missing("frames"))?;
    let channels = channels.ok_or_else(|| missing("channels"))?;
    let label = label.ok_or_else(|| missing("label"))?;
    let frame_labels = frame_labels.unwrap_or_else(|| vec![label; n]);

    let bytes = fs::read(&bin_path).map_err(|_| Error::MissingFile {
        path: bin_path.clone(),
        row: None,
    })?;
    let per_map = FEATURE_GRID * FEATURE_GRID * channels;
    if bytes.len() != 8 * n * per_map {
        return Err(Error::shape("cached map bytes", 8 * n * per_map, bytes.len()));
    }
    let values: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let mut face = Vec::with_capacity(n);
    let mut body = Vec::with_capacity(n);
    for pair in values.chunks_exact(2 * per_map) {
        face.push(FeatureMap::new(channels, pair[..per_map].to_vec())?);
        body.push(FeatureMap::new(channels, pair[per_map..].to_vec())?);
    }
    VideoMaps::new(subject, period, label, frame_labels, face, body)
}

/// Loads every cached video in `dir`, ordered by file stem.
pub fn read_maps_dir(dir: &Path) -> Result<Vec<VideoMaps>> {
    let entries = fs::read_dir(dir).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile {
            path: dir.to_owned(),
            row: None,
        },
        _ => Error::io(format!("listing {}", dir.display()), e),
    })?;
    let mut stems = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(format!("listing {}", dir.display()), e))?.path();
        if path.extension().is_some_and(|e| e == "txt") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                stems.push(stem.to_owned());
            }
        }
    }
    stems.sort();
    stems.iter().map(|s| read_maps(dir, s)).collect()
}
