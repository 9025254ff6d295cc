//! Video decoding, resampling, period segmentation, label manifests and
//! NIPS ground truth.

mod frames;
mod manifest;
mod nips;
mod video;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use frames::{read_frame_dir, write_frame_dir, FRAME_RATE_FILE};
pub use manifest::{LabelManifest, ManifestRow, Recording, MANIFEST_HEADER};
pub use nips::{
    consensus_label, score_nips, to_binary_label, NipsAssessment, NipsCategory, PainClass,
    PainLabel, MAX_TOTAL, PAIN_THRESHOLD,
};
pub use video::{resample_indices, resample_video, segment_periods, VideoClip};

/// Frame rate every clip is converted to before detection.
pub const TARGET_FPS: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SubjectId(pub String);

impl SubjectId {
    pub fn new(id: impl Into<String>) -> Self {
        SubjectId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SubjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for SubjectId {
    fn from(s: &str) -> Self {
        SubjectId(s.to_owned())
    }
}

/// The eight study periods of a recording.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub enum RecordingPeriod {
    T0,
    T1,
    T2,
    T3,
    T4,
    T5,
    T6,
    T7,
}

impl RecordingPeriod {
    pub const ALL: [RecordingPeriod; 8] = [
        RecordingPeriod::T0,
        RecordingPeriod::T1,
        RecordingPeriod::T2,
        RecordingPeriod::T3,
        RecordingPeriod::T4,
        RecordingPeriod::T5,
        RecordingPeriod::T6,
        RecordingPeriod::T7,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn description(self) -> &'static str {
        match self {
            RecordingPeriod::T0 => "baseline",
            RecordingPeriod::T1 => "procedure preparation",
            RecordingPeriod::T2 => "painful procedure",
            _ => "post-procedure",
        }
    }

    pub fn is_procedure(self) -> bool {
        self == RecordingPeriod::T2
    }
}

impl fmt::Display for RecordingPeriod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "T{}", self.index())
    }
}

impl FromStr for RecordingPeriod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.strip_prefix('T')
            .and_then(|d| d.parse::<usize>().ok())
            .and_then(RecordingPeriod::from_index)
            .ok_or_else(|| Error::BadConfig(format!("unknown recording period {s:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eight_periods() {
        assert_eq!(RecordingPeriod::ALL.len(), 8);
        assert_eq!(RecordingPeriod::T0.description(), "baseline");
        assert_eq!(RecordingPeriod::T1.description(), "procedure preparation");
        assert_eq!(RecordingPeriod::T2.description(), "painful procedure");
        for p in &RecordingPeriod::ALL[3..] {
            assert_eq!(p.description(), "post-procedure");
        }
        for p in RecordingPeriod::ALL {
            assert_eq!(p.to_string().parse::<RecordingPeriod>().unwrap(), p);
        }
        assert!("T8".parse::<RecordingPeriod>().is_err());
    }
}
