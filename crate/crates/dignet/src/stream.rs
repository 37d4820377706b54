//! Sliding-window streaming inference.
//!
//! Frames arrive one at a time into a bounded ring buffer; once `window`
//! frames are buffered, every `stride`-th arrival triggers a full
//! preprocess-and-classify pass over the buffered window. Wall-clock frames
//! per second are measured over the processing calls, and the per-window
//! prediction history feeds the stability metric.

use std::collections::VecDeque;
use std::time::Instant;

use crate::data::types::{Frame, GestureSample, RawVideo};
use crate::error::{DigError, Result};
use crate::model::net::{forward, predict};
use crate::model::ModelConfig;
use crate::preprocess::detect::PersonDetector;
use crate::preprocess::embed::FrameEmbedder;
use crate::preprocess::pipeline::{preprocess, PreprocessConfig};
use crate::nn::params::ParamStore;
use crate::train::TrainItem;

/// Number of stride-1 windows of length `n` over `frames` frames.
pub fn window_count(frames: usize, n: usize) -> usize {
    frames.saturating_sub(n.saturating_sub(1)).min(frames)
}

/// Shifts window-local frame indices back to source coordinates so
/// detectors indexed by original frame keep working.
struct ShiftedDetector<'a> {
    inner: &'a dyn PersonDetector,
    offset: usize,
}

impl PersonDetector for ShiftedDetector<'_> {
    fn detect(&self, frame_idx: usize, frame: &Frame) -> Option<crate::preprocess::detect::BoundingBox> {
        self.inner.detect(frame_idx + self.offset, frame)
    }
}

#[derive(Debug, Clone)]
pub struct WindowPrediction {
    /// Source index of the last frame in the window.
    pub end_frame: usize,
    pub predicted: usize,
    pub logits: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct StreamReport {
    pub predictions: Vec<WindowPrediction>,
    /// Windows processed per wall-clock second.
    pub fps: f64,
    /// Frames consumed, including those before the first full window.
    pub frames_seen: usize,
}

impl StreamReport {
    /// Per-window predicted labels, the stability-metric input.
    pub fn window_labels(&self) -> Vec<usize> {
        self.predictions.iter().map(|p| p.predicted).collect()
    }
}

/// Ring buffer plus prediction history for one stream.
pub struct StreamState {
    window: usize,
    stride: usize,
    buffer: VecDeque<Frame>,
    frames_seen: usize,
    since_last: usize,
}

impl StreamState {
    pub fn new(window: usize, stride: usize) -> Result<StreamState> {
        if window == 0 || stride == 0 {
            return Err(DigError::Config("window and stride must be positive".into()));
        }
        Ok(StreamState {
            window,
            stride,
            buffer: VecDeque::with_capacity(window),
            frames_seen: 0,
            since_last: 0,
        })
    }

    pub fn buffered(&self) -> usize {
        self.buffer.len()
    }

    /// Absorbs one frame; returns the window to classify, if due.
    pub fn push(&mut self, frame: Frame) -> Option<(usize, Vec<Frame>)> {
        if self.buffer.len() == self.window {
            self.buffer.pop_front();
        }
        self.buffer.push_back(frame);
        self.frames_seen += 1;
        if self.buffer.len() < self.window {
            return None;
        }
        // First full window always fires; afterwards every stride frames.
        if self.frames_seen > self.window {
            self.since_last += 1;
            if self.since_last < self.stride {
                return None;
            }
        }
        self.since_last = 0;
        Some((self.frames_seen - 1, self.buffer.iter().cloned().collect()))
    }
}

/// Classifies one buffered window through the full pipeline.
fn classify_window(
    store: &mut ParamStore,
    model_cfg: &ModelConfig,
    sample: &GestureSample,
    window_frames: Vec<Frame>,
    end_frame: usize,
    detector: &dyn PersonDetector,
    embedder: &dyn FrameEmbedder,
    pre_cfg: &PreprocessConfig,
    seed: u64,
) -> Result<WindowPrediction> {
    let n = window_frames.len();
    let sub = GestureSample {
        video: RawVideo::new(window_frames, sample.video.fps)?,
        rho: sample.rho,
        label: sample.label,
        split: sample.split,
        environment: sample.environment,
    };
    let shifted = ShiftedDetector { inner: detector, offset: end_frame + 1 - n };
    let clip = preprocess(&sub, &shifted, embedder, pre_cfg, seed)?;
    let item = TrainItem::from_clip(&clip, model_cfg)?;
    let pass = forward(store, model_cfg, &item.input, None)?;
    Ok(WindowPrediction {
        end_frame,
        predicted: predict(&pass),
        logits: pass.graph.value(pass.logits).iter().copied().collect(),
    })
}

/// Streams a clip frame by frame through a sliding window.
///
/// A clip shorter than the window yields zero predictions, which is a
/// notice, not an error. Deterministic per seed.
#[allow(clippy::too_many_arguments)]
pub fn stream_clip(
    store: &mut ParamStore,
    model_cfg: &ModelConfig,
    sample: &GestureSample,
    detector: &dyn PersonDetector,
    embedder: &dyn FrameEmbedder,
    pre_cfg: &PreprocessConfig,
    window: usize,
    stride: usize,
    seed: u64,
) -> Result<StreamReport> {
    let mut state = StreamState::new(window, stride)?;
    let mut predictions = Vec::new();
    let start = Instant::now();
    for frame in &sample.video.frames {
        if let Some((end_frame, frames)) = state.push(frame.clone()) {
            predictions.push(classify_window(
                store, model_cfg, sample, frames, end_frame, detector, embedder, pre_cfg, seed,
            )?);
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let fps = if predictions.is_empty() || elapsed == 0.0 {
        0.0
    } else {
        predictions.len() as f64 / elapsed
    };
    if predictions.is_empty() {
        log::info!(
            "clip has {} frames, fewer than the {window}-frame window: no predictions",
            sample.video.frame_count()
        );
    }
    Ok(StreamReport { predictions, fps, frames_seen: sample.video.frame_count() })
}

/// Offline evaluation of exactly the windows the stream would process;
/// used to verify online/offline agreement.
#[allow(clippy::too_many_arguments)]
pub fn batch_windows(
    store: &mut ParamStore,
    model_cfg: &ModelConfig,
    sample: &GestureSample,
    detector: &dyn PersonDetector,
    embedder: &dyn FrameEmbedder,
    pre_cfg: &PreprocessConfig,
    window: usize,
    stride: usize,
    seed: u64,
) -> Result<Vec<WindowPrediction>> {
    let total = sample.video.frame_count();
    let mut out = Vec::new();
    if total < window {
        return Ok(out);
    }
    for start in (0..=total - window).step_by(stride) {
        let end_frame = start + window - 1;
        let frames = sample.video.frames[start..=end_frame].to_vec();
        out.push(classify_window(
            store, model_cfg, sample, frames, end_frame, detector, embedder, pre_cfg, seed,
        )?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::{synth_clip_full, SyntheticSceneSpec};
    use crate::data::types::{DegradationConfig, GestureClass};
    use crate::model::net::register_params;
    use crate::preprocess::detect::{BoundingBox, GroundTruthDetector};
    use crate::preprocess::embed::BlockMeanEmbedder;
    use crate::preprocess::DepthStrategy;

    fn small_setup() -> (GestureSample, GroundTruthDetector, PreprocessConfig, ModelConfig) {
        let mut spec = SyntheticSceneSpec::new(6.0, GestureClass::Beckoning);
        spec.frame_count = 12;
        spec.frame_h = 48;
        spec.frame_w = 64;
        let out = synth_clip_full(&spec, &DegradationConfig::none(), 5).unwrap();
        let detector = GroundTruthDetector {
            boxes: out
                .boxes
                .iter()
                .map(|b| BoundingBox { x: b.x, y: b.y, width: b.w, height: b.h })
                .collect(),
        };
        let pre = PreprocessConfig {
            keyframes: 2,
            out_size: 32,
            depth: DepthStrategy::SyntheticGroundTruth,
            ..PreprocessConfig::default()
        };
        let model = ModelConfig { frames: 2, ..ModelConfig::tiny() };
        (out.sample, detector, pre, model)
    }

    #[test]
    fn window_count_arithmetic() {
        assert_eq!(window_count(84, 8), 77);
        assert_eq!(window_count(8, 8), 1);
        assert_eq!(window_count(7, 8), 0);
        assert_eq!(window_count(0, 8), 0);
        assert_eq!(window_count(5, 1), 5);
    }

    #[test]
    fn state_emits_only_when_full() {
        let mut s = StreamState::new(3, 1).unwrap();
        let f = Frame::zeros((4, 4, 3));
        assert!(s.push(f.clone()).is_none());
        assert!(s.push(f.clone()).is_none());
        let (end, w) = s.push(f.clone()).unwrap();
        assert_eq!((end, w.len()), (2, 3));
        assert_eq!(s.buffered(), 3);
        let (end, _) = s.push(f).unwrap();
        assert_eq!(end, 3);
    }

    #[test]
    fn stride_two_skips_alternate_windows() {
        let mut s = StreamState::new(2, 2).unwrap();
        let f = Frame::zeros((2, 2, 3));
        let fired: Vec<usize> = (0..7)
            .filter_map(|_| s.push(f.clone()).map(|(e, _)| e))
            .collect();
        assert_eq!(fired, vec![1, 3, 5]);
    }

    #[test]
    fn short_clip_yields_no_predictions_without_error() {
        let (sample, det, pre, model) = small_setup();
        let mut store = ParamStore::new(1);
        register_params(&mut store, &model);
        let report = stream_clip(
            &mut store, &model, &sample, &det, &BlockMeanEmbedder::default(), &pre, 100, 1, 0,
        )
        .unwrap();
        assert!(report.predictions.is_empty());
        assert_eq!(report.frames_seen, 12);
    }

    #[test]
    fn online_matches_offline_on_identical_windows() {
        let (sample, det, pre, model) = small_setup();
        let mut store = ParamStore::new(2);
        register_params(&mut store, &model);
        let emb = BlockMeanEmbedder::default();
        let online =
            stream_clip(&mut store, &model, &sample, &det, &emb, &pre, 6, 2, 3).unwrap();
        let offline =
            batch_windows(&mut store, &model, &sample, &det, &emb, &pre, 6, 2, 3).unwrap();
        assert_eq!(online.predictions.len(), offline.len());
        assert!(!online.predictions.is_empty());
        for (a, b) in online.predictions.iter().zip(&offline) {
            assert_eq!(a.end_frame, b.end_frame);
            assert_eq!(a.predicted, b.predicted);
            for (x, y) in a.logits.iter().zip(&b.logits) {
                assert!((x - y).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn stream_window_count_matches_formula() {
        let (sample, det, pre, model) = small_setup();
        let mut store = ParamStore::new(3);
        register_params(&mut store, &model);
        let report = stream_clip(
            &mut store, &model, &sample, &det, &BlockMeanEmbedder::default(), &pre, 6, 1, 0,
        )
        .unwrap();
        assert_eq!(report.predictions.len(), window_count(12, 6));
        assert!(report.fps > 0.0);
    }
}
