//! Clip preprocessing: keyframe selection, person crop, flow, depth, and
//! normalization, producing the 5-channel model input.

pub mod depth;
pub mod detect;
pub mod embed;
pub mod flow;
pub mod keyframes;
pub mod pipeline;
pub mod store;

pub use depth::{depth_map, DepthStrategy, Z_MIN};
pub use detect::{detect_and_crop, BoundingBox, FullFrameDetector, GroundTruthDetector, PersonDetector};
pub use embed::{BlockMeanEmbedder, FrameEmbedder};
pub use flow::{clip_flow, dense_flow, FlowConfig};
pub use keyframes::reduce_frames;
pub use pipeline::{normalize_rgb_channels, preprocess, PreprocessConfig, ProcessedClip, IN_CHANNELS};
pub use store::{read_store, write_store};
