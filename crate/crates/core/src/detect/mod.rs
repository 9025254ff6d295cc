//! Turns detector output into clean 224x224 face and body crops.

mod adapter;
mod bbox;
mod region;

pub use adapter::{
    format_detection_line, format_detections, parse_detection_line, parse_detections, DetectorAdapter,
    PrecomputedDetector, SubprocessDetector, DETECTIONS_FILE,
};
pub use bbox::{iou, nms, BoundingBox, RegionKind};
pub use region::{crop_resize, select_region, RegionCrop, Selection, CROP_LEN, CROP_SIZE};

/// Default minimum confidence kept by NMS.
pub const DEFAULT_CONF_THRESH: f64 = 0.5;
/// Default IoU above which the weaker of two boxes is suppressed.
pub const DEFAULT_IOU_THRESH: f64 = 0.45;

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    pub frame_index: usize,
    pub boxes: Vec<BoundingBox>,
}

impl DetectionResult {
    pub fn new(frame_index: usize, boxes: Vec<BoundingBox>) -> Self {
        DetectionResult { frame_index, boxes }
    }
}
