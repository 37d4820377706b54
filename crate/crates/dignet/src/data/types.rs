//! Core domain types: gesture classes, videos, samples, degradation settings.

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::error::{DigError, Result};

/// Number of gesture classes in the fixed vocabulary.
pub const NUM_CLASSES: usize = 13;

/// The 13-class gesture vocabulary: eight dynamic, four static, one null.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GestureClass {
    GoBack,
    GoUp,
    GoDown,
    MoveRight,
    MoveLeft,
    TurnAround,
    Beckoning,
    FollowMe,
    Pointing,
    ThumbsUp,
    ThumbsDown,
    Stop,
    Null,
}

impl GestureClass {
    pub const ALL: [GestureClass; NUM_CLASSES] = [
        GestureClass::GoBack,
        GestureClass::GoUp,
        GestureClass::GoDown,
        GestureClass::MoveRight,
        GestureClass::MoveLeft,
        GestureClass::TurnAround,
        GestureClass::Beckoning,
        GestureClass::FollowMe,
        GestureClass::Pointing,
        GestureClass::ThumbsUp,
        GestureClass::ThumbsDown,
        GestureClass::Stop,
        GestureClass::Null,
    ];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&c| c == self).unwrap()
    }

    pub fn from_index(i: usize) -> Result<GestureClass> {
        Self::ALL
            .get(i)
            .copied()
            .ok_or_else(|| DigError::Validation(format!("class index {i} out of range [0,12]")))
    }

    pub fn name(self) -> &'static str {
        match self {
            GestureClass::GoBack => "go-back",
            GestureClass::GoUp => "go-up",
            GestureClass::GoDown => "go-down",
            GestureClass::MoveRight => "move-right",
            GestureClass::MoveLeft => "move-left",
            GestureClass::TurnAround => "turn-around",
            GestureClass::Beckoning => "beckoning",
            GestureClass::FollowMe => "follow-me",
            GestureClass::Pointing => "pointing",
            GestureClass::ThumbsUp => "thumbs-up",
            GestureClass::ThumbsDown => "thumbs-down",
            GestureClass::Stop => "stop",
            GestureClass::Null => "null",
        }
    }

    pub fn from_name(name: &str) -> Result<GestureClass> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.name() == name)
            .ok_or_else(|| DigError::Validation(format!("unknown class name {name:?}")))
    }

    /// Dynamic gestures carry their meaning in motion; static ones in pose.
    pub fn is_dynamic(self) -> bool {
        matches!(
            self,
            GestureClass::GoBack
                | GestureClass::GoUp
                | GestureClass::GoDown
                | GestureClass::MoveRight
                | GestureClass::MoveLeft
                | GestureClass::TurnAround
                | GestureClass::Beckoning
                | GestureClass::FollowMe
        )
    }

    pub fn is_static(self) -> bool {
        matches!(
            self,
            GestureClass::Pointing
                | GestureClass::ThumbsUp
                | GestureClass::ThumbsDown
                | GestureClass::Stop
        )
    }

    /// Label remap under horizontal mirroring. Only the left/right sweep pair
    /// changes meaning; every other gesture may be performed with either arm.
    pub fn mirrored(self) -> GestureClass {
        match self {
            GestureClass::MoveRight => GestureClass::MoveLeft,
            GestureClass::MoveLeft => GestureClass::MoveRight,
            other => other,
        }
    }
}

/// A single RGB frame, shape (height, width, 3), 8-bit.
pub type Frame = Array3<u8>;

/// An ordered RGB frame sequence with a nominal frame rate.
#[derive(Debug, Clone, PartialEq)]
pub struct RawVideo {
    pub frames: Vec<Frame>,
    pub fps: f32,
}

impl RawVideo {
    pub fn new(frames: Vec<Frame>, fps: f32) -> Result<RawVideo> {
        if frames.is_empty() {
            return Err(DigError::Validation("video must have at least one frame".into()));
        }
        let dims = frames[0].dim();
        if frames.iter().any(|f| f.dim() != dims) {
            return Err(DigError::Validation("all frames must share dimensions".into()));
        }
        Ok(RawVideo { frames, fps })
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    /// (height, width) of every frame.
    pub fn dims(&self) -> (usize, usize) {
        let (h, w, _) = self.frames[0].dim();
        (h, w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Environment {
    Indoor,
    OutdoorSun,
    OutdoorOvercast,
    Synthetic,
}

/// Valid actor distance range in meters.
pub const RHO_MIN: f32 = 2.0;
pub const RHO_MAX: f32 = 30.0;

/// A labeled clip with annotated actor distance.
#[derive(Debug, Clone)]
pub struct GestureSample {
    pub video: RawVideo,
    /// Actor distance in meters, fixed for the whole clip.
    pub rho: f32,
    pub label: GestureClass,
    pub split: Split,
    pub environment: Environment,
}

impl GestureSample {
    pub fn validate(&self) -> Result<()> {
        if !(RHO_MIN..=RHO_MAX).contains(&self.rho) {
            return Err(DigError::Validation(format!(
                "distance rho={} outside [{RHO_MIN},{RHO_MAX}]",
                self.rho
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClutterLevel {
    None,
    Mild,
    Moderate,
    Severe,
}

impl ClutterLevel {
    /// Number of moving distractor blobs for each preset.
    pub fn distractor_count(self) -> usize {
        match self {
            ClutterLevel::None => 0,
            ClutterLevel::Mild => 1,
            ClutterLevel::Moderate => 2,
            ClutterLevel::Severe => 4,
        }
    }

    /// Background texture amplitude in gray levels.
    pub fn texture_amplitude(self) -> f32 {
        match self {
            ClutterLevel::None => 0.0,
            ClutterLevel::Mild => 6.0,
            ClutterLevel::Moderate => 12.0,
            ClutterLevel::Severe => 24.0,
        }
    }
}

/// Physical degradation settings for the simulators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegradationConfig {
    /// Beer-Lambert attenuation coefficient, 1/meter.
    pub attenuation: f32,
    /// Defocus blur sigma base in pixels (scaled by rho/16 in the generator).
    pub defocus_sigma: f32,
    /// Fog density in [0,1]; 1 saturates every pixel to the fog color.
    pub fog_density: f32,
    /// Motion blur kernel length in pixels.
    pub motion_blur_len: f32,
    /// Sensor noise standard deviation, fraction of full scale.
    pub noise_std: f32,
    pub clutter: ClutterLevel,
}

impl DegradationConfig {
    pub fn none() -> DegradationConfig {
        DegradationConfig {
            attenuation: 0.0,
            defocus_sigma: 0.0,
            fog_density: 0.0,
            motion_blur_len: 0.0,
            noise_std: 0.0,
            clutter: ClutterLevel::None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.attenuation >= 0.0
            && self.defocus_sigma >= 0.0
            && (0.0..=1.0).contains(&self.fog_density)
            && self.motion_blur_len >= 0.0
            && (0.0..=1.0).contains(&self.noise_std);
        if ok {
            Ok(())
        } else {
            Err(DigError::Validation(format!("degradation config out of range: {self:?}")))
        }
    }

    /// Named presets used by the robustness sweeps.
    pub fn preset(name: &str) -> Result<DegradationConfig> {
        let base = DegradationConfig::none();
        match name {
            "clean" => Ok(base),
            "mild" => Ok(DegradationConfig {
                attenuation: 0.02,
                defocus_sigma: 0.5,
                fog_density: 0.1,
                noise_std: 0.01,
                clutter: ClutterLevel::Mild,
                ..base
            }),
            "moderate" => Ok(DegradationConfig {
                attenuation: 0.04,
                defocus_sigma: 1.0,
                fog_density: 0.25,
                motion_blur_len: 3.0,
                noise_std: 0.02,
                clutter: ClutterLevel::Moderate,
            }),
            "severe" => Ok(DegradationConfig {
                attenuation: 0.06,
                defocus_sigma: 2.0,
                fog_density: 0.4,
                motion_blur_len: 5.0,
                noise_std: 0.04,
                clutter: ClutterLevel::Severe,
            }),
            other => Err(DigError::Config(format!("unknown degradation preset {other:?}"))),
        }
    }
}
