use image::RgbImage;

use super::{BoundingBox, DetectionResult, RegionKind};
use crate::error::{Error, Result};

/// Side length of the square crops fed to the backbones.
pub const CROP_SIZE: usize = 224;
pub const CROP_LEN: usize = CROP_SIZE * CROP_SIZE * 3;

/// A 224x224 RGB crop, row-major HWC, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionCrop {
    pixels: Vec<f32>,
    pub source_box: BoundingBox,
    pub channel_tag: RegionKind,
}

impl RegionCrop {
    pub fn new(pixels: Vec<f32>, source_box: BoundingBox, channel_tag: RegionKind) -> Result<Self> {
        if pixels.len() != CROP_LEN {
            return Err(Error::shape("region crop", CROP_LEN, pixels.len()));
        }
        if let Some(&bad) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::UnnormalizedInput(bad));
        }
        Ok(RegionCrop {
            pixels,
            source_box,
            channel_tag,
        })
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> f32 {
        self.pixels[(row * CROP_SIZE + col) * 3 + channel]
    }

    pub fn to_image(&self) -> RgbImage {
        let bytes = self
            .pixels
            .iter()
            .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect();
        RgbImage::from_raw(CROP_SIZE as u32, CROP_SIZE as u32, bytes).expect("crop buffer size")
    }

    /// Reads back a crop written by [`RegionCrop::to_image`].
    pub fn from_image(img: &RgbImage, source_box: BoundingBox, channel_tag: RegionKind) -> Result<Self> {
        if img.dimensions() != (CROP_SIZE as u32, CROP_SIZE as u32) {
            return Err(Error::shape(
                "region crop image",
                format!("{CROP_SIZE}x{CROP_SIZE}"),
                format!("{}x{}", img.width(), img.height()),
            ));
        }
        let pixels = img.as_raw().iter().map(|&v| v as f32 / 255.0).collect();
        Self::new(pixels, source_box, channel_tag)
    }
}

/// Outcome of region selection; `degraded` marks a frame without a detection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection {
    pub bbox: BoundingBox,
    pub degraded: bool,
}

/// Picks the most confident box of `class_tag`. Without one, falls back to the
/// previous frame's box, and failing that to the whole frame.
pub fn select_region(
    d: &DetectionResult,
    class_tag: RegionKind,
    fallback: Option<BoundingBox>,
    frame_size: (u32, u32),
) -> Selection {
    let best = d
        .boxes
        .iter()
        .filter(|b| b.class_tag == class_tag)
        .max_by(|a, b| a.confidence.total_cmp(&b.confidence));
    match (best, fallback) {
        (Some(b), _) => Selection {
            bbox: *b,
            degraded: false,
        },
        (None, Some(prev)) => Selection {
            bbox: prev,
            degraded: true,
        },
        (None, None) => Selection {
            bbox: BoundingBox::whole_frame(frame_size.0, frame_size.1, class_tag),
            degraded: true,
        },
    }
}

/// Bilinear resize of the clamped box region to 224x224, half-pixel centers.
pub fn crop_resize(frame: &RgbImage, bbox: &BoundingBox, channel_tag: RegionKind) -> Result<RegionCrop> {
    let (fw, fh) = frame.dimensions();
    let region = bbox.clamp_to(fw, fh).ok_or(Error::DegenerateBox)?;

    let sx = region.w / CROP_SIZE as f64;
    let sy = region.h / CROP_SIZE as f64;
    let x_lo = region.x.floor();
    let x_hi = (region.right().ceil() - 1.0).max(x_lo);
    let y_lo = region.y.floor();
    let y_hi = (region.bottom().ceil() - 1.0).max(y_lo);

    // (lower index, upper index, upper weight) per output column / row
    let taps = |start: f64, scale: f64, lo: f64, hi: f64| -> Vec<(usize, usize, f32)> {
        (0..CROP_SIZE)
            .map(|u| {
                let s = (start + (u as f64 + 0.5) * scale - 0.5).clamp(lo, hi);
                let i0 = s.floor();
                let i1 = (i0 + 1.0).min(hi);
                (i0 as usize, i1 as usize, (s - i0) as f32)
            })
            .collect()
    };
    let cols = taps(region.x, sx, x_lo, x_hi);
    let rows = taps(region.y, sy, y_lo, y_hi);

    let raw = frame.as_raw();
    let stride = fw as usize * 3;
    let px = |r: usize, c: usize, ch: usize| raw[r * stride + c * 3 + ch] as f32;
    let mut pixels = Vec::with_capacity(CROP_LEN);
    for &(r0, r1, wy) in &rows {
        for &(c0, c1, wx) in &cols {
            for ch in 0..3 {
                let top = px(r0, c0, ch) * (1.0 - wx) + px(r0, c1, ch) * wx;
                let bottom = px(r1, c0, ch) * (1.0 - wx) + px(r1, c1, ch) * wx;
                let v = (top * (1.0 - wy) + bottom * wy) / 255.0;
                pixels.push(v.clamp(0.0, 1.0));
            }
        }
    }
    RegionCrop::new(pixels, *bbox, channel_tag)
}
