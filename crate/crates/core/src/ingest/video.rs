use image::RgbImage;

use super::{RecordingPeriod, SubjectId};
use crate::error::{Error, Result};

// Absorbs rounding in `frames * rate / fps` products that should be integral.
const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct VideoClip {
    pub subject_id: SubjectId,
    pub period: Option<RecordingPeriod>,
    pub frames: Vec<RgbImage>,
    pub fps: f64,
}

impl VideoClip {
    pub fn new(
        subject_id: SubjectId,
        period: Option<RecordingPeriod>,
        frames: Vec<RgbImage>,
        fps: f64,
    ) -> Result<Self> {
        if !(fps > 0.0) {
            return Err(Error::BadRate(fps));
        }
        if frames.is_empty() {
            return Err(Error::EmptyVideo);
        }
        let dims = frames[0].dimensions();
        if let Some(bad) = frames.iter().find(|f| f.dimensions() != dims) {
            return Err(Error::FrameSizeMismatch {
                expected: dims,
                actual: bad.dimensions(),
            });
        }
        Ok(VideoClip {
            subject_id,
            period,
            frames,
            fps,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.frames.len() as f64 / self.fps
    }

    pub fn dimensions(&self) -> (u32, u32) {
        self.frames[0].dimensions()
    }
}

/// Source frame indices chosen when converting `n_frames` at `fps` to
/// `target_fps` by nearest-timestamp sampling. Ties go to the earlier frame.
pub fn resample_indices(n_frames: usize, fps: f64, target_fps: f64) -> Result<Vec<usize>> {
    if !(fps > 0.0) {
        return Err(Error::BadRate(fps));
    }
    if !(target_fps > 0.0) {
        return Err(Error::BadRate(target_fps));
    }
    if n_frames == 0 {
        return Err(Error::EmptyVideo);
    }
    let count = (n_frames as f64 * target_fps / fps + TIME_EPS).floor() as usize;
    Ok((0..count)
        .map(|j| {
            let pos = j as f64 * fps / target_fps;
            let nearest = (pos - 0.5 - TIME_EPS).ceil().max(0.0) as usize;
            nearest.min(n_frames - 1)
        })
        .collect())
}

pub fn resample_video(source: &VideoClip, target_fps: f64) -> Result<VideoClip> {
    let indices = resample_indices(source.frames.len(), source.fps, target_fps)?;
    let frames = indices.iter().map(|&i| source.frames[i].clone()).collect();
    Ok(VideoClip {
        subject_id: source.subject_id.clone(),
        period: source.period,
        frames,
        fps: target_fps,
    })
}

/// Splits a recording at period markers (seconds from the start). Segment `i`
/// holds the frames whose timestamps fall in `[marker_i, marker_{i+1})`; the
/// last one runs to the end of the recording.
pub fn segment_periods(
    recording: &VideoClip,
    markers: &[(f64, RecordingPeriod)],
) -> Result<Vec<(RecordingPeriod, VideoClip)>> {
    let duration = recording.duration();
    for (i, &(t, _)) in markers.iter().enumerate() {
        if !(t >= 0.0 && t < duration) {
            return Err(Error::MarkerOutOfRange {
                timestamp: t,
                duration,
            });
        }
        if i > 0 && (t <= markers[i - 1].0 || markers[i].1 <= markers[i - 1].1) {
            return Err(Error::UnsortedMarkers { index: i });
        }
    }

    let first_frame_at = |t: f64| ((t * recording.fps - TIME_EPS).ceil().max(0.0) as usize).min(recording.len());
    let mut out = Vec::with_capacity(markers.len());
    for (i, &(t, period)) in markers.iter().enumerate() {
        let start = first_frame_at(t);
        let end = markers
            .get(i + 1)
            .map(|&(next, _)| first_frame_at(next))
            .unwrap_or(recording.len());
        if start >= end {
            // marker closer to the next one than a frame interval
            continue;
        }
        out.push((
            period,
            VideoClip {
                subject_id: recording.subject_id.clone(),
                period: Some(period),
                frames: recording.frames[start..end].to_vec(),
                fps: recording.fps,
            },
        ));
    }
    Ok(out)
}
