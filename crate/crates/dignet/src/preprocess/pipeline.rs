//! End-to-end clip preprocessing: keyframe reduction, person crop, resize,
//! per-clip normalization, dense flow, and depth provisioning.

use ndarray::{Array3, Array4};
use serde::{Deserialize, Serialize};

use crate::data::types::{GestureClass, GestureSample};
use crate::error::Result;
use crate::imops;
use crate::preprocess::depth::{depth_map, DepthStrategy};
use crate::preprocess::detect::{detect_and_crop, PersonDetector};
use crate::preprocess::embed::FrameEmbedder;
use crate::preprocess::flow::{clip_flow, FlowConfig};
use crate::preprocess::keyframes::reduce_frames;

/// Channel count of the model input: RGB plus the two flow components.
pub const IN_CHANNELS: usize = 5;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PreprocessConfig {
    /// Keyframes kept per clip.
    pub keyframes: usize,
    /// Crop extension ratio: each side grows by diagonal / a.
    pub extension_ratio: f32,
    /// Output side length in pixels.
    pub out_size: usize,
    pub depth: DepthStrategy,
    #[serde(skip, default)]
    pub flow: FlowConfig,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            keyframes: 8,
            extension_ratio: 10.0,
            out_size: 224,
            depth: DepthStrategy::ConstantFromDistance,
            flow: FlowConfig::default(),
        }
    }
}

/// Model-ready clip: `frames` is (r, 5, s, s) with channels R, G, B, u, v.
#[derive(Debug, Clone)]
pub struct ProcessedClip {
    pub frames: Array4<f32>,
    /// (r, s, s) metres, positive everywhere.
    pub depth: Array3<f32>,
    /// Annotated subject distance, metres.
    pub rho: f32,
    /// Mean flow magnitude over keyframe pairs, pixels per frame step.
    pub xi: f32,
    pub label: GestureClass,
    /// Set when the detector missed on any kept frame.
    pub detector_miss: bool,
}

/// Normalizes the RGB channels in place to zero mean and unit variance per
/// channel over the whole clip. Flow channels are left untouched. Constant
/// channels become zero.
pub fn normalize_rgb_channels(frames: &mut Array4<f32>) {
    let (r, _, h, w) = frames.dim();
    let n = (r * h * w) as f64;
    for ch in 0..3 {
        let mut sum = 0.0f64;
        let mut sumsq = 0.0f64;
        for t in 0..r {
            for y in 0..h {
                for x in 0..w {
                    let v = frames[[t, ch, y, x]] as f64;
                    sum += v;
                    sumsq += v * v;
                }
            }
        }
        let mean = sum / n;
        let var = (sumsq / n - mean * mean).max(0.0);
        let inv_std = if var > 1e-12 { 1.0 / var.sqrt() } else { 0.0 };
        for t in 0..r {
            for y in 0..h {
                for x in 0..w {
                    let v = frames[[t, ch, y, x]] as f64;
                    frames[[t, ch, y, x]] = ((v - mean) * inv_std) as f32;
                }
            }
        }
    }
}

/// Runs the full pipeline on one sample. Deterministic per (sample, config,
/// seed); the detector supplies person boxes by original frame index.
pub fn preprocess(
    sample: &GestureSample,
    detector: &dyn PersonDetector,
    embedder: &dyn FrameEmbedder,
    config: &PreprocessConfig,
    seed: u64,
) -> Result<ProcessedClip> {
    sample.validate()?;
    let r = config.keyframes;
    let s = config.out_size;
    let indices = reduce_frames(&sample.video, r, embedder, seed)?;

    let mut frames = Array4::zeros((r, IN_CHANNELS, s, s));
    let mut depth = Array3::zeros((r, s, s));
    let mut miss_any = false;
    let mut grays = Vec::with_capacity(r);
    for (slot, &idx) in indices.iter().enumerate() {
        let frame = &sample.video.frames[idx];
        let bbox = detector.detect(idx, frame);
        let (crop, miss, rect) = detect_and_crop(idx, frame, detector, config.extension_ratio, s);
        miss_any |= miss;
        for y in 0..s {
            for x in 0..s {
                for ch in 0..3 {
                    frames[[slot, ch, y, x]] = crop[[y, x, ch]] as f32 / 255.0;
                }
            }
        }
        grays.push(imops::to_grayscale(&crop));
        let dm = depth_map(&config.depth, sample.rho, bbox.as_ref(), rect, s)?;
        depth.index_axis_mut(ndarray::Axis(0), slot).assign(&dm);
    }

    // Flow between consecutive kept frames, on the cropped/resized planes so
    // displacements live on the model grid. Entry 0 stays zero.
    let flow = clip_flow(&grays, &config.flow);
    for (slot, (u, v)) in flow.iter().enumerate() {
        for y in 0..s {
            for x in 0..s {
                frames[[slot, 3, y, x]] = u[[y, x]];
                frames[[slot, 4, y, x]] = v[[y, x]];
            }
        }
    }
    // Mean magnitude over the r-1 frame pairs; a single-pair-free clip has
    // xi = 0 by construction.
    let xi = if flow.len() > 1 {
        let mut sum = 0.0f64;
        let mut count = 0usize;
        for (u, v) in &flow[1..] {
            for (a, b) in u.iter().zip(v.iter()) {
                sum += ((a * a + b * b) as f64).sqrt();
                count += 1;
            }
        }
        (sum / count as f64) as f32
    } else {
        0.0
    };

    normalize_rgb_channels(&mut frames);
    Ok(ProcessedClip {
        frames,
        depth,
        rho: sample.rho,
        xi,
        label: sample.label,
        detector_miss: miss_any,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::augment::flip_video;
    use crate::data::synth::{synth_clip_full, SyntheticSceneSpec};
    use crate::data::types::DegradationConfig;
    use crate::preprocess::detect::{BoundingBox, FullFrameDetector, GroundTruthDetector, NoneDetector};
    use crate::preprocess::embed::BlockMeanEmbedder;

    fn small_config(s: usize) -> PreprocessConfig {
        PreprocessConfig { out_size: s, ..PreprocessConfig::default() }
    }

    fn spec(class: GestureClass) -> SyntheticSceneSpec {
        let mut spec = SyntheticSceneSpec::new(8.0, class);
        spec.frame_count = 12;
        spec
    }

    fn gt_detector(boxes: &[crate::data::synth::ActorBox]) -> GroundTruthDetector {
        GroundTruthDetector {
            boxes: boxes
                .iter()
                .map(|b| BoundingBox { x: b.x, y: b.y, width: b.w, height: b.h })
                .collect(),
        }
    }

    #[test]
    fn output_shape_contract() {
        let out = synth_clip_full(&spec(GestureClass::Beckoning), &DegradationConfig::none(), 5).unwrap();
        let det = gt_detector(&out.boxes);
        let clip =
            preprocess(&out.sample, &det, &BlockMeanEmbedder::default(), &small_config(224), 0).unwrap();
        assert_eq!(clip.frames.dim(), (8, 5, 224, 224));
        assert_eq!(clip.depth.dim(), (8, 224, 224));
        assert!(!clip.detector_miss);
        assert!(clip.depth.iter().all(|&z| z > 0.0));
    }

    #[test]
    fn rgb_channels_are_standardized() {
        let out = synth_clip_full(&spec(GestureClass::Stop), &DegradationConfig::none(), 2).unwrap();
        let det = gt_detector(&out.boxes);
        let clip =
            preprocess(&out.sample, &det, &BlockMeanEmbedder::default(), &small_config(64), 0).unwrap();
        let (r, _, h, w) = clip.frames.dim();
        let n = (r * h * w) as f64;
        for ch in 0..3 {
            let mut sum = 0.0f64;
            let mut sumsq = 0.0f64;
            for t in 0..r {
                for y in 0..h {
                    for x in 0..w {
                        let v = clip.frames[[t, ch, y, x]] as f64;
                        sum += v;
                        sumsq += v * v;
                    }
                }
            }
            let mean = sum / n;
            let var = sumsq / n - mean * mean;
            assert!(mean.abs() < 1e-5, "channel {ch} mean {mean}");
            assert!((var - 1.0).abs() < 1e-3, "channel {ch} var {var}");
        }
    }

    #[test]
    fn normalization_is_idempotent() {
        let out = synth_clip_full(&spec(GestureClass::GoUp), &DegradationConfig::none(), 3).unwrap();
        let det = gt_detector(&out.boxes);
        let clip =
            preprocess(&out.sample, &det, &BlockMeanEmbedder::default(), &small_config(48), 0).unwrap();
        let mut again = clip.frames.clone();
        normalize_rgb_channels(&mut again);
        for (a, b) in clip.frames.iter().zip(again.iter()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn static_clip_has_negligible_motion() {
        let out = synth_clip_full(&spec(GestureClass::Pointing), &DegradationConfig::none(), 4).unwrap();
        let det = gt_detector(&out.boxes);
        let clip =
            preprocess(&out.sample, &det, &BlockMeanEmbedder::default(), &small_config(64), 0).unwrap();
        assert!(clip.xi < 0.1, "xi = {}", clip.xi);
    }

    #[test]
    fn moving_clip_has_motion() {
        let out = synth_clip_full(&spec(GestureClass::Beckoning), &DegradationConfig::none(), 4).unwrap();
        let det = gt_detector(&out.boxes);
        let clip =
            preprocess(&out.sample, &det, &BlockMeanEmbedder::default(), &small_config(64), 0).unwrap();
        assert!(clip.xi > 0.05, "xi = {}", clip.xi);
    }

    #[test]
    fn detector_miss_flag_propagates() {
        let out = synth_clip_full(&spec(GestureClass::Stop), &DegradationConfig::none(), 6).unwrap();
        let clip =
            preprocess(&out.sample, &NoneDetector, &BlockMeanEmbedder::default(), &small_config(32), 0)
                .unwrap();
        assert!(clip.detector_miss);
    }

    #[test]
    fn deterministic_given_seed() {
        let out = synth_clip_full(&spec(GestureClass::GoBack), &DegradationConfig::none(), 9).unwrap();
        let det = gt_detector(&out.boxes);
        let a = preprocess(&out.sample, &det, &BlockMeanEmbedder::default(), &small_config(32), 7).unwrap();
        let b = preprocess(&out.sample, &det, &BlockMeanEmbedder::default(), &small_config(32), 7).unwrap();
        assert_eq!(a.frames, b.frames);
        assert_eq!(a.depth, b.depth);
        assert_eq!(a.xi, b.xi);
    }

    #[test]
    fn flip_preserves_motion_magnitude() {
        let out = synth_clip_full(&spec(GestureClass::MoveRight), &DegradationConfig::none(), 8).unwrap();
        let mut flipped = out.sample.clone();
        flipped.video = flip_video(&flipped.video);
        flipped.label = flipped.label.mirrored();
        let orig = preprocess(&out.sample, &FullFrameDetector, &BlockMeanEmbedder::default(), &small_config(64), 0)
            .unwrap();
        let mirr = preprocess(&flipped, &FullFrameDetector, &BlockMeanEmbedder::default(), &small_config(64), 0)
            .unwrap();
        let rel = (orig.xi - mirr.xi).abs() / orig.xi.max(1e-6);
        assert!(rel < 0.05, "xi {} vs {}", orig.xi, mirr.xi);
    }
}
