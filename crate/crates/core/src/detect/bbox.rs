use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which body region a box, crop or backbone serves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionKind {
    Face,
    Body,
}

impl RegionKind {
    pub const BOTH: [RegionKind; 2] = [RegionKind::Face, RegionKind::Body];

    pub fn as_str(self) -> &'static str {
        match self {
            RegionKind::Face => "face",
            RegionKind::Body => "body",
        }
    }
}

impl fmt::Display for RegionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RegionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "face" => Ok(RegionKind::Face),
            "body" => Ok(RegionKind::Body),
            other => Err(Error::BadConfig(format!("unknown region class {other:?}"))),
        }
    }
}

/// Axis-aligned box in pixel coordinates, `(x, y)` the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub confidence: f64,
    pub class_tag: RegionKind,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64, confidence: f64, class_tag: RegionKind) -> Result<Self> {
        if !(w > 0.0 && h > 0.0) {
            return Err(Error::InvalidBox(format!("non-positive extent {w}x{h}")));
        }
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::InvalidBox(format!("confidence {confidence} outside [0, 1]")));
        }
        if !(x.is_finite() && y.is_finite() && w.is_finite() && h.is_finite()) {
            return Err(Error::InvalidBox("non-finite coordinate".into()));
        }
        Ok(BoundingBox {
            x,
            y,
            w,
            h,
            confidence,
            class_tag,
        })
    }

    /// A box spanning a whole `width` x `height` frame, confidence 0.
    pub fn whole_frame(width: u32, height: u32, class_tag: RegionKind) -> Self {
        BoundingBox {
            x: 0.0,
            y: 0.0,
            w: width as f64,
            h: height as f64,
            confidence: 0.0,
            class_tag,
        }
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    /// Intersection with the frame rectangle, `None` if empty.
    pub fn clamp_to(&self, width: u32, height: u32) -> Option<BoundingBox> {
        let x0 = self.x.max(0.0);
        let y0 = self.y.max(0.0);
        let x1 = self.right().min(width as f64);
        let y1 = self.bottom().min(height as f64);
        (x1 > x0 && y1 > y0).then_some(BoundingBox {
            x: x0,
            y: y0,
            w: x1 - x0,
            h: y1 - y0,
            ..*self
        })
    }
}

/// Intersection over union. Zero for disjoint or touching boxes.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let iw = (a.right().min(b.right()) - a.x.max(b.x)).max(0.0);
    let ih = (a.bottom().min(b.bottom()) - a.y.max(b.y)).max(0.0);
    let inter = iw * ih;
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Greedy non-maximum suppression, per class.
///
/// Drops boxes below `conf_thresh`, then walks the rest by descending
/// confidence, keeping a box unless a kept box of the same class overlaps it
/// with IoU above `iou_thresh`. Equal confidences keep input order.
pub fn nms(boxes: &[BoundingBox], conf_thresh: f64, iou_thresh: f64) -> Vec<BoundingBox> {
    let mut order: Vec<&BoundingBox> = boxes.iter().filter(|b| b.confidence >= conf_thresh).collect();
    order.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));

    let mut kept: Vec<BoundingBox> = Vec::new();
    for cand in order {
        let suppressed = kept
            .iter()
            .any(|k| k.class_tag == cand.class_tag && iou(k, cand) > iou_thresh);
        if !suppressed {
            kept.push(*cand);
        }
    }
    kept
}
