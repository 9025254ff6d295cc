use serde::Serialize;

use super::lstm::TemporalModel;
use crate::error::{Error, Result};
use crate::ingest::PainClass;
use crate::model::FusedVector;

const PREDICT_BATCH: usize = 64;

/// Prediction for one frame. Frames before the first full window are warm-up
/// frames and carry no confidence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FramePrediction {
    pub frame_index: usize,
    pub confidence: Option<f64>,
}

impl FramePrediction {
    pub fn is_warm_up(&self) -> bool {
        self.confidence.is_none()
    }

    pub fn label(&self) -> Option<PainClass> {
        self.confidence.map(PainClass::from_confidence)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VideoPrediction {
    pub confidence: f64,
    pub label: PainClass,
}

/// One prediction per stride-1 window, assigned to the window's last frame.
pub fn predict_frame_level(model: &TemporalModel, frames: &[FusedVector], window_len: usize) -> Result<Vec<FramePrediction>> {
    if window_len == 0 {
        return Err(Error::BadConfig("window length must be positive".into()));
    }
    if frames.len() < window_len {
        return Err(Error::TooFewFrames {
            needed: window_len,
            actual: frames.len(),
        });
    }
    let mut out: Vec<FramePrediction> = (0..window_len - 1)
        .map(|frame_index| FramePrediction {
            frame_index,
            confidence: None,
        })
        .collect();
    let windows: Vec<&[FusedVector]> = frames.windows(window_len).collect();
    for chunk in windows.chunks(PREDICT_BATCH) {
        for c in model.confidences(chunk)? {
            out.push(FramePrediction {
                frame_index: out.len(),
                confidence: Some(c),
            });
        }
    }
    Ok(out)
}

/// One confidence from the whole sequence; exactly 0.5 maps to no pain.
pub fn predict_video_level(model: &TemporalModel, frames: &[FusedVector]) -> Result<VideoPrediction> {
    if frames.is_empty() {
        return Err(Error::EmptyVideo);
    }
    let confidence = model.confidence(frames)?;
    Ok(VideoPrediction {
        confidence,
        label: PainClass::from_confidence(confidence),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::temporal::TemporalSpec;

    fn zeros(n: usize, dim: usize) -> Vec<FusedVector> {
        vec![FusedVector(vec![0.0; dim]); n]
    }

    #[test]
    fn fifty_frames() {
        let m = TemporalModel::zeros(TemporalSpec::default()).unwrap();
        let p = predict_frame_level(&m, &zeros(50, 720), 16).unwrap();
        assert_eq!(p.len(), 50);
        assert!(p[..15].iter().all(|f| f.is_warm_up()));
        let live: Vec<_> = p.iter().filter(|f| !f.is_warm_up()).collect();
        assert_eq!(live.len(), 35);
        assert_eq!(live[0].frame_index, 15);
        assert_eq!(live[34].frame_index, 49);
        assert!(live.iter().all(|f| f.confidence == Some(0.5)));
        assert!(live.iter().all(|f| f.label() == Some(PainClass::NoPain)));
    }

    #[test]
    fn frame_level_matches_single_windows() {
        let m = TemporalModel::new(TemporalSpec::with_input_len(4), 5).unwrap();
        let frames: Vec<_> = (0..100).map(|i| FusedVector(vec![(i as f64 * 0.1).sin(); 4])).collect();
        let p = predict_frame_level(&m, &frames, 16).unwrap();
        for (i, w) in frames.windows(16).enumerate() {
            let want = m.confidence(w).unwrap();
            assert!((p[i + 15].confidence.unwrap() - want).abs() < 1e-14);
        }
    }

    #[test]
    fn too_few_frames() {
        let m = TemporalModel::zeros(TemporalSpec::default()).unwrap();
        assert!(matches!(
            predict_frame_level(&m, &zeros(15, 720), 16),
            Err(Error::TooFewFrames { needed: 16, actual: 15 })
        ));
    }

    #[test]
    fn video_level() {
        let m = TemporalModel::zeros(TemporalSpec::default()).unwrap();
        let p = predict_video_level(&m, &zeros(50, 720)).unwrap();
        assert_eq!(p.confidence, 0.5);
        assert_eq!(p.label, PainClass::NoPain);
        let one = TemporalModel::new(TemporalSpec::default(), 1).unwrap();
        let p = predict_video_level(&one, &zeros(1, 720)).unwrap();
        assert!(p.confidence > 0.0 && p.confidence < 1.0);
        assert!(matches!(predict_video_level(&m, &[]), Err(Error::EmptyVideo)));
    }
}
