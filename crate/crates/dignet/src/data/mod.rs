//! Data model, manifest ingestion, augmentation, synthetic clip generation,
//! and physical degradation simulators.

pub mod augment;
pub mod clipio;
pub mod degrade;
pub mod manifest;
pub mod synth;
pub mod types;

pub use augment::{augment, AugmentConfig};
pub use degrade::degrade;
pub use manifest::{load_manifest, write_manifest, ManifestRow};
pub use synth::{synth_clip, SyntheticSceneSpec};
pub use types::{
    ClutterLevel, DegradationConfig, Environment, Frame, GestureClass, GestureSample, RawVideo,
    Split, NUM_CLASSES,
};
