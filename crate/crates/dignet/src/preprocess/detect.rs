//! Person detection and crop-with-extension.
//!
//! The crop box is the detector box extended by b/a pixels on every side
//! (b = box diagonal, a = user-to-image ratio), clamped to the image, then
//! squared up so the aspect ratio survives the resize to the model grid.

use crate::data::types::Frame;
use crate::error::{DigError, Result};
use crate::imops;

/// Axis-aligned detection box, pixel units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub x: f32,
    pub y: f32,
    pub width: f32,
    pub height: f32,
}

impl BoundingBox {
    pub fn diagonal(&self) -> f32 {
        (self.width * self.width + self.height * self.height).sqrt()
    }
}

/// Per-frame person detector. `frame_idx` indexes into the source video so
/// implementations backed by generator metadata can look boxes up.
pub trait PersonDetector: Send + Sync {
    fn detect(&self, frame_idx: usize, frame: &Frame) -> Option<BoundingBox>;
}

/// Ground-truth boxes recorded by the synthetic generator.
pub struct GroundTruthDetector {
    pub boxes: Vec<BoundingBox>,
}

impl PersonDetector for GroundTruthDetector {
    fn detect(&self, frame_idx: usize, _frame: &Frame) -> Option<BoundingBox> {
        self.boxes.get(frame_idx).copied()
    }
}

/// Always reports the full frame (no localization).
pub struct FullFrameDetector;

impl PersonDetector for FullFrameDetector {
    fn detect(&self, _frame_idx: usize, frame: &Frame) -> Option<BoundingBox> {
        let (h, w, _) = frame.dim();
        Some(BoundingBox { x: 0.0, y: 0.0, width: w as f32, height: h as f32 })
    }
}

/// A detector that never fires, for exercising the fallback path.
pub struct NoneDetector;

impl PersonDetector for NoneDetector {
    fn detect(&self, _frame_idx: usize, _frame: &Frame) -> Option<BoundingBox> {
        None
    }
}

/// Adapter slot for an external pretrained detector. Desk-scale builds have
/// no weights available, so constructing it reports a configuration error.
pub struct ExternalDetectorAdapter;

impl ExternalDetectorAdapter {
    pub fn new() -> Result<Self> {
        Err(DigError::Config(
            "external person detector unavailable; use the ground-truth or full-frame detector".into(),
        ))
    }
}

/// Extends a box by diagonal/a pixels on every side (no clamping).
pub fn extend_box(bbox: &BoundingBox, a: f32) -> BoundingBox {
    let e = bbox.diagonal() / a;
    BoundingBox {
        x: bbox.x - e,
        y: bbox.y - e,
        width: bbox.width + 2.0 * e,
        height: bbox.height + 2.0 * e,
    }
}

/// Integer crop rectangle: (y0, x0, h, w), always inside the frame.
pub fn crop_rect(bbox: &BoundingBox, a: f32, frame_h: usize, frame_w: usize) -> (usize, usize, usize, usize) {
    let ext = extend_box(bbox, a);
    // Square up about the center so the later resize keeps the aspect ratio.
    let side = ext.width.max(ext.height);
    let cx = ext.x + ext.width / 2.0;
    let cy = ext.y + ext.height / 2.0;
    let side = side.min(frame_w as f32).min(frame_h as f32).max(1.0);
    let mut x0 = cx - side / 2.0;
    let mut y0 = cy - side / 2.0;
    x0 = x0.clamp(0.0, frame_w as f32 - side);
    y0 = y0.clamp(0.0, frame_h as f32 - side);
    let xi = x0.round() as usize;
    let yi = y0.round() as usize;
    let s = side.round().max(1.0) as usize;
    let s = s.min(frame_w - xi).min(frame_h - yi);
    (yi, xi, s.max(1), s.max(1))
}

/// Detects, crops with extension, and resizes. Returns the crop plus the
/// detector-miss flag and the crop rectangle in source coordinates.
pub fn detect_and_crop(
    frame_idx: usize,
    frame: &Frame,
    detector: &dyn PersonDetector,
    a: f32,
    out_size: usize,
) -> (Frame, bool, (usize, usize, usize, usize)) {
    assert!(a > 0.0, "extension ratio a must be positive");
    let (h, w, _) = frame.dim();
    match detector.detect(frame_idx, frame) {
        Some(bbox) => {
            let rect = crop_rect(&bbox, a, h, w);
            let cropped = imops::crop_frame(frame, rect.0, rect.1, rect.2, rect.3);
            (imops::resize_frame(&cropped, out_size, out_size), false, rect)
        }
        None => {
            // Specified fallback: full frame, flagged.
            let side = h.min(w);
            let y0 = (h - side) / 2;
            let x0 = (w - side) / 2;
            let cropped = imops::crop_frame(frame, y0, x0, side, side);
            (imops::resize_frame(&cropped, out_size, out_size), true, (y0, x0, side, side))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extension_is_diagonal_over_a() {
        // 30x40 box has diagonal 50; a=10 gives 5 px per side -> 40x50.
        let bbox = BoundingBox { x: 100.0, y: 100.0, width: 30.0, height: 40.0 };
        let ext = extend_box(&bbox, 10.0);
        assert!((ext.width - 40.0).abs() < 1e-5);
        assert!((ext.height - 50.0).abs() < 1e-5);
        assert!((ext.x - 95.0).abs() < 1e-5);
        assert!((ext.y - 95.0).abs() < 1e-5);
    }

    #[test]
    fn missing_detection_falls_back_to_full_frame() {
        let frame = Frame::from_elem((40, 60, 3), 120);
        let (crop, miss, _) = detect_and_crop(0, &frame, &NoneDetector, 10.0, 32);
        assert!(miss);
        assert_eq!(crop.dim(), (32, 32, 3));
    }

    #[test]
    fn edge_box_stays_in_bounds() {
        for bbox in [
            BoundingBox { x: 0.0, y: 0.0, width: 10.0, height: 10.0 },
            BoundingBox { x: 45.0, y: 45.0, width: 10.0, height: 10.0 },
            BoundingBox { x: -5.0, y: 20.0, width: 20.0, height: 60.0 },
        ] {
            let (y0, x0, h, w) = crop_rect(&bbox, 5.0, 50, 50);
            assert!(y0 + h <= 50 && x0 + w <= 50, "rect {:?}", (y0, x0, h, w));
            assert!(h >= 1 && w >= 1);
        }
    }

    #[test]
    fn crop_is_square_before_resize() {
        let bbox = BoundingBox { x: 10.0, y: 12.0, width: 8.0, height: 20.0 };
        let (_, _, h, w) = crop_rect(&bbox, 10.0, 100, 100);
        assert_eq!(h, w);
    }

    #[test]
    fn external_adapter_reports_config_error() {
        assert!(matches!(ExternalDetectorAdapter::new(), Err(DigError::Config(_))));
    }
}
