use crate::error::{Error, Result};
use crate::ingest::{PainClass, RecordingPeriod, SubjectId};
use crate::model::FusedVector;

pub const DEFAULT_WINDOW_LEN: usize = 16;

/// All fused frame vectors of one labeled video.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoSequence {
    pub subject_id: SubjectId,
    pub period: Option<RecordingPeriod>,
    pub label: PainClass,
    /// One label per frame; equal to `label` for clip-level annotations.
    pub frame_labels: Vec<PainClass>,
    pub features: Vec<FusedVector>,
}

impl VideoSequence {
    /// Every frame inherits the video label.
    pub fn new(
        subject_id: SubjectId,
        period: Option<RecordingPeriod>,
        label: PainClass,
        features: Vec<FusedVector>,
    ) -> Result<Self> {
        let frame_labels = vec![label; features.len()];
        Self::with_frame_labels(subject_id, period, label, frame_labels, features)
    }

    pub fn with_frame_labels(
        subject_id: SubjectId,
        period: Option<RecordingPeriod>,
        label: PainClass,
        frame_labels: Vec<PainClass>,
        features: Vec<FusedVector>,
    ) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::EmptyVideo);
        }
        if frame_labels.len() != features.len() {
            return Err(Error::LengthMismatch(frame_labels.len(), features.len()));
        }
        let dim = features[0].len();
        if let Some(bad) = features.iter().find(|f| f.len() != dim) {
            return Err(Error::FeatureLengthMismatch {
                expected: dim,
                actual: bad.len(),
            });
        }
        Ok(VideoSequence {
            subject_id,
            period,
            label,
            frame_labels,
            features,
        })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn feature_len(&self) -> usize {
        self.features[0].len()
    }
}

/// A run of consecutive frames labeled by its last frame. Borrows from the
/// owning [`VideoSequence`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SequenceWindow<'a> {
    pub subject_id: &'a SubjectId,
    pub start_index: usize,
    pub features: &'a [FusedVector],
    pub label: PainClass,
}

impl SequenceWindow<'_> {
    /// Index of the frame the window's prediction belongs to.
    pub fn end_index(&self) -> usize {
        self.start_index + self.features.len() - 1
    }
}

pub fn window_count(n_frames: usize, length: usize, stride: usize) -> usize {
    if length == 0 || stride == 0 || n_frames < length {
        0
    } else {
        (n_frames - length) / stride + 1
    }
}

pub fn make_windows(seq: &VideoSequence, length: usize, stride: usize) -> Result<Vec<SequenceWindow<'_>>> {
    if length == 0 || stride == 0 {
        return Err(Error::BadConfig(format!(
            "window length and stride must be positive (got {length}, {stride})"
        )));
    }
    Ok((0..window_count(seq.len(), length, stride))
        .map(|i| {
            let start = i * stride;
            SequenceWindow {
                subject_id: &seq.subject_id,
                start_index: start,
                features: &seq.features[start..start + length],
                label: seq.frame_labels[start + length - 1],
            }
        })
        .collect())
}
