//! Synthetic long-range gesture clips.
//!
//! The actor is a 2-D articulated stick figure (torso, head, two 2-segment
//! arms) rendered with anti-aliasing at a pixel height of
//! `focal_scale / rho` (pinhole size law). Gesture classes are parameterized
//! joint-angle trajectories. Degradations follow the physical light path:
//! clutter compositing, distance-scaled defocus, Beer-Lambert contrast
//! attenuation, fog, motion blur, sensor noise.

use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::degrade::FOG_COLOR;
use crate::data::types::{
    DegradationConfig, Environment, Frame, GestureClass, GestureSample, RawVideo, Split,
};
use crate::error::{DigError, Result};
use crate::imops;

/// Reference distance for defocus scaling, meters.
pub const DEFOCUS_RHO_REF: f32 = 16.0;

/// Background gray level before illumination gain.
pub const BACKGROUND_GRAY: f32 = 180.0;

/// Actor ink gray level before attenuation (dark figure on light ground).
pub const ACTOR_GRAY: f32 = 40.0;

/// Minimum renderable actor height in pixels.
pub const MIN_ACTOR_PX: f32 = 4.0;

/// Scene description for one synthetic clip.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticSceneSpec {
    /// Actor distance in meters.
    pub rho: f32,
    /// Pinhole constant in pixel-meters: actor pixel height = focal_scale/rho.
    pub focal_scale: f32,
    pub class: GestureClass,
    /// Gesture repetition rate, cycles per second.
    pub tempo: f32,
    pub background_seed: u64,
    /// Multiplier on scene brightness.
    pub illumination: f32,
    pub frame_count: usize,
    pub fps: f32,
    /// Frame size (height, width).
    pub frame_h: usize,
    pub frame_w: usize,
}

impl SyntheticSceneSpec {
    pub fn new(rho: f32, class: GestureClass) -> SyntheticSceneSpec {
        SyntheticSceneSpec {
            rho,
            focal_scale: 232.0,
            class,
            tempo: 0.8,
            background_seed: 0,
            illumination: 1.0,
            frame_count: 84,
            fps: 21.0,
            frame_h: 120,
            frame_w: 160,
        }
    }

    pub fn actor_height_px(&self) -> f32 {
        self.focal_scale / self.rho
    }
}

/// Axis-aligned pixel box, inclusive coordinates in frame space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActorBox {
    pub x: f32,
    pub y: f32,
    pub w: f32,
    pub h: f32,
}

/// Generator output: the labeled sample plus per-frame ground-truth boxes.
pub struct SynthOutput {
    pub sample: GestureSample,
    /// One actor bounding box per frame, in pixels.
    pub boxes: Vec<ActorBox>,
}

pub fn synth_clip(spec: &SyntheticSceneSpec, deg: &DegradationConfig, seed: u64) -> Result<GestureSample> {
    Ok(synth_clip_full(spec, deg, seed)?.sample)
}

pub fn synth_clip_full(spec: &SyntheticSceneSpec, deg: &DegradationConfig, seed: u64) -> Result<SynthOutput> {
    deg.validate()?;
    let height_px = spec.actor_height_px();
    if height_px < MIN_ACTOR_PX {
        return Err(DigError::Generation(format!(
            "actor below minimum renderable size: {:.2} px at rho={} (min {MIN_ACTOR_PX})",
            height_px, spec.rho
        )));
    }
    if spec.frame_count == 0 {
        return Err(DigError::Generation("frame_count must be >= 1".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ spec.background_seed.rotate_left(17));
    // Vertical placement jitter only; horizontal stays centered so that a
    // mirrored clip is the exact left/right counterpart.
    let max_jitter = ((spec.frame_h as f32 - height_px) * 0.5 - 1.0).max(0.0);
    let jitter_y = rng.gen_range(-1.0f32..1.0) * max_jitter.min(4.0);
    let sway_phase = rng.gen_range(0.0..std::f32::consts::TAU);

    let bg_level = (BACKGROUND_GRAY * spec.illumination).min(255.0);
    let actor_level_clean = (ACTOR_GRAY * spec.illumination).min(255.0);
    // Beer-Lambert contrast collapse toward the background.
    let contrast = (-deg.attenuation * spec.rho).exp();
    let actor_level = bg_level + (actor_level_clean - bg_level) * contrast;
    let defocus_sigma = deg.defocus_sigma * spec.rho / DEFOCUS_RHO_REF;

    let clutter = super::degrade::clutter_field(deg.clutter, spec.frame_h, spec.frame_w, &mut rng);
    let noise_seed = rng.gen::<u64>();
    let mut noise_rng = ChaCha8Rng::seed_from_u64(noise_seed);

    let mut frames = Vec::with_capacity(spec.frame_count);
    let mut boxes = Vec::with_capacity(spec.frame_count);
    for t in 0..spec.frame_count {
        let t_sec = t as f32 / spec.fps;
        let pose = pose_at(spec.class, spec.tempo, t_sec, sway_phase);
        let figure = place_figure(&pose, spec, jitter_y);
        boxes.push(figure.bbox());

        let mut img = Array3::from_elem((spec.frame_h, spec.frame_w, 3), bg_level);
        figure.rasterize(&mut img, actor_level);
        clutter.composite(&mut img, t);
        if defocus_sigma > 0.0 {
            img = imops::gaussian_blur_rgb(&img, defocus_sigma);
        }
        if deg.fog_density > 0.0 {
            let f = deg.fog_density;
            img.mapv_inplace(|v| v * (1.0 - f) + FOG_COLOR * f);
        }
        if deg.motion_blur_len >= 2.0 {
            img = imops::motion_blur_rgb(&img, deg.motion_blur_len);
        }
        if deg.noise_std > 0.0 {
            let std = deg.noise_std * 255.0;
            for v in img.iter_mut() {
                let n: f32 = noise_rng.gen_range(-1.0f32..1.0)
                    + noise_rng.gen_range(-1.0f32..1.0)
                    + noise_rng.gen_range(-1.0f32..1.0);
                *v += n * std / (0.75f32).sqrt() * 0.5;
            }
        }
        frames.push(imops::frame_from_f32(&img));
    }

    let video = RawVideo::new(frames, spec.fps)?;
    Ok(SynthOutput {
        sample: GestureSample {
            video,
            rho: spec.rho,
            label: spec.class,
            split: Split::Train,
            environment: Environment::Synthetic,
        },
        boxes,
    })
}

// ---------------------------------------------------------------------------
// Pose model
// ---------------------------------------------------------------------------

/// One arm: shoulder and elbow angles in radians. Angle 0 hangs straight
/// down, pi/2 is horizontal outward, pi is straight up. The elbow angle is
/// relative to the upper-arm direction, positive bending upward/outward.
#[derive(Debug, Clone, Copy)]
struct ArmPose {
    shoulder: f32,
    elbow: f32,
    /// Hand blob radius in actor units; static thumb gestures use a bigger one.
    hand_r: f32,
}

/// Full body pose in actor units (mask spans y in [0,1], y up).
#[derive(Debug, Clone, Copy)]
struct Pose {
    right: ArmPose,
    left: ArmPose,
    /// Small whole-body lean for the null class.
    lean: f32,
}

const ARM_DOWN: ArmPose = ArmPose { shoulder: 0.05, elbow: 0.05, hand_r: 0.035 };

fn frac(x: f32) -> f32 {
    x - x.floor()
}

/// Joint-angle trajectory for each gesture class.
fn pose_at(class: GestureClass, tempo: f32, t_sec: f32, sway_phase: f32) -> Pose {
    use std::f32::consts::PI;
    let phi = std::f32::consts::TAU * tempo * t_sec;
    let act = |shoulder: f32, elbow: f32| ArmPose { shoulder, elbow, hand_r: 0.035 };
    let mut pose = Pose { right: ARM_DOWN, left: ARM_DOWN, lean: 0.0 };
    match class {
        // Dynamic gestures, acting with the right arm unless mirrored.
        GestureClass::GoBack => {
            // Near-vertical arm sweeping forward and back; single frames
            // resemble the static stop pose by construction.
            pose.right = act(PI - 0.22 + 0.22 * phi.sin(), 0.05);
        }
        GestureClass::GoUp => {
            // Sawtooth sweep from horizontal up to vertical.
            pose.right = act(PI / 2.0 + (PI / 2.0) * frac(phi / std::f32::consts::TAU), 0.05);
        }
        GestureClass::GoDown => {
            // Time-reversal of go-up: same frame set, opposite motion.
            pose.right = act(PI - (PI / 2.0) * frac(phi / std::f32::consts::TAU), 0.05);
        }
        GestureClass::MoveRight => {
            // Horizontal sweep of the forearm on the right side.
            pose.right = act(PI / 2.0, 0.65 * phi.sin());
        }
        GestureClass::MoveLeft => {
            // Exact mirror of move-right.
            let mirrored = pose_at(GestureClass::MoveRight, tempo, t_sec, sway_phase);
            pose.left = mirrored.right;
            pose.right = mirrored.left;
        }
        GestureClass::TurnAround => {
            // Forearm traces a full circle; many frames share the pointing
            // silhouette.
            pose.right = act(0.75 * PI, phi);
        }
        GestureClass::Beckoning => {
            // Fast small flexion of the raised forearm.
            pose.right = act(0.70 * PI, 0.55 + 0.35 * (2.0 * phi).sin());
        }
        GestureClass::FollowMe => {
            // Hand tapping near the head.
            pose.right = act(0.92 * PI, 1.05 + 0.30 * phi.sin());
        }
        // Static gestures.
        GestureClass::Pointing => pose.right = act(PI / 2.0, 0.0),
        GestureClass::ThumbsUp => {
            pose.right = ArmPose { shoulder: PI / 2.0, elbow: 1.35, hand_r: 0.06 };
        }
        GestureClass::ThumbsDown => {
            pose.right = ArmPose { shoulder: PI / 2.0, elbow: -1.35, hand_r: 0.06 };
        }
        GestureClass::Stop => pose.right = act(PI, 0.05),
        GestureClass::Null => {
            pose.lean = 0.06 * (0.5 * phi + sway_phase).sin();
        }
    }
    pose
}

// ---------------------------------------------------------------------------
// Rasterization
// ---------------------------------------------------------------------------

/// Stroke width in actor units.
const STROKE: f32 = 0.055;
const TORSO_BOTTOM: f32 = STROKE / 2.0;
const SHOULDER_Y: f32 = 0.64;
const HEAD_CY: f32 = 0.82;
const HEAD_R: f32 = 0.18;
const SHOULDER_DX: f32 = 0.07;
const UPPER_ARM: f32 = 0.26;
const FOREARM: f32 = 0.26;

struct Capsule {
    a: (f32, f32),
    b: (f32, f32),
    r: f32,
}

struct Circle {
    c: (f32, f32),
    r: f32,
}

/// The figure placed in pixel coordinates (y down).
struct PlacedFigure {
    capsules: Vec<Capsule>,
    circles: Vec<Circle>,
    aa: f32,
}

/// Joint positions for one arm in actor units (x right, y up).
fn arm_points(side: f32, arm: &ArmPose) -> [(f32, f32); 3] {
    let sx = side * SHOULDER_DX;
    let shoulder = (sx, SHOULDER_Y);
    // Angle 0 points down; positive rotates outward on the arm's side.
    let dir1 = (side * arm.shoulder.sin(), -arm.shoulder.cos());
    let elbow = (shoulder.0 + UPPER_ARM * dir1.0, shoulder.1 + UPPER_ARM * dir1.1);
    let total = arm.shoulder + arm.elbow;
    let dir2 = (side * total.sin(), -total.cos());
    let hand = (elbow.0 + FOREARM * dir2.0, elbow.1 + FOREARM * dir2.1);
    [shoulder, elbow, hand]
}

fn place_figure(pose: &Pose, spec: &SyntheticSceneSpec, jitter_y: f32) -> PlacedFigure {
    let scale = spec.actor_height_px();
    let cx = (spec.frame_w as f32 - 1.0) / 2.0;
    // Vertical span [0,1] in actor units maps so the figure is centered.
    let base_y = (spec.frame_h as f32 - 1.0) / 2.0 + scale / 2.0 + jitter_y;

    // actor units (y up) -> pixels (y down)
    let to_px = |p: (f32, f32)| -> (f32, f32) {
        let x = cx + (p.0 + pose.lean * p.1) * scale;
        let y = base_y - p.1 * scale;
        (x, y)
    };

    let mut capsules = Vec::new();
    let mut circles = Vec::new();
    let r = STROKE / 2.0 * scale;

    // Torso.
    capsules.push(Capsule {
        a: to_px((0.0, TORSO_BOTTOM)),
        b: to_px((0.0, SHOULDER_Y)),
        r,
    });
    // Head.
    circles.push(Circle { c: to_px((0.0, HEAD_CY)), r: HEAD_R * scale });
    // Arms.
    for (side, arm) in [(1.0f32, &pose.right), (-1.0f32, &pose.left)] {
        let [shoulder, elbow, hand] = arm_points(side, arm);
        capsules.push(Capsule { a: to_px(shoulder), b: to_px(elbow), r });
        capsules.push(Capsule { a: to_px(elbow), b: to_px(hand), r });
        circles.push(Circle { c: to_px(hand), r: arm.hand_r * scale });
    }

    PlacedFigure { capsules, circles, aa: 1.0 }
}

fn dist_capsule(p: (f32, f32), c: &Capsule) -> f32 {
    let (ax, ay) = c.a;
    let (bx, by) = c.b;
    let (px, py) = p;
    let abx = bx - ax;
    let aby = by - ay;
    let len2 = abx * abx + aby * aby;
    let t = if len2 > 0.0 {
        (((px - ax) * abx + (py - ay) * aby) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let dx = px - (ax + t * abx);
    let dy = py - (ay + t * aby);
    (dx * dx + dy * dy).sqrt() - c.r
}

impl PlacedFigure {
    fn signed_distance(&self, x: f32, y: f32) -> f32 {
        let mut d = f32::INFINITY;
        for c in &self.capsules {
            d = d.min(dist_capsule((x, y), c));
        }
        for c in &self.circles {
            let dx = x - c.c.0;
            let dy = y - c.c.1;
            d = d.min((dx * dx + dy * dy).sqrt() - c.r);
        }
        d
    }

    fn bbox(&self) -> ActorBox {
        let mut x0 = f32::INFINITY;
        let mut y0 = f32::INFINITY;
        let mut x1 = f32::NEG_INFINITY;
        let mut y1 = f32::NEG_INFINITY;
        let mut grow = |x: f32, y: f32, r: f32| {
            x0 = x0.min(x - r);
            y0 = y0.min(y - r);
            x1 = x1.max(x + r);
            y1 = y1.max(y + r);
        };
        for c in &self.capsules {
            grow(c.a.0, c.a.1, c.r);
            grow(c.b.0, c.b.1, c.r);
        }
        for c in &self.circles {
            grow(c.c.0, c.c.1, c.r);
        }
        ActorBox { x: x0, y: y0, w: x1 - x0, h: y1 - y0 }
    }

    fn rasterize(&self, img: &mut Array3<f32>, ink: f32) {
        let (h, w, _) = img.dim();
        let bb = self.bbox();
        let x_lo = (bb.x - 2.0).floor().max(0.0) as usize;
        let y_lo = (bb.y - 2.0).floor().max(0.0) as usize;
        let x_hi = ((bb.x + bb.w + 2.0).ceil() as usize).min(w.saturating_sub(1));
        let y_hi = ((bb.y + bb.h + 2.0).ceil() as usize).min(h.saturating_sub(1));
        for y in y_lo..=y_hi {
            for x in x_lo..=x_hi {
                let d = self.signed_distance(x as f32, y as f32);
                let cover = (0.5 - d / self.aa).clamp(0.0, 1.0);
                if cover > 0.0 {
                    for c in 0..3 {
                        let bg = img[[y, x, c]];
                        img[[y, x, c]] = bg + (ink - bg) * cover;
                    }
                }
            }
        }
    }
}

/// Background far-plane depth in meters for generator ground-truth depth maps
/// (actor pixels carry rho, everything else this constant).
pub const FAR_PLANE_M: f32 = 50.0;

/// Measures the vertical extent of non-background pixels, for tests and the
/// contrast probes.
pub fn mask_height(frame: &Frame, bg_level: f32, threshold: f32) -> f32 {
    let (h, w, _) = frame.dim();
    let mut y_min = None;
    let mut y_max = None;
    for y in 0..h {
        for x in 0..w {
            let v = (frame[[y, x, 0]] as f32 + frame[[y, x, 1]] as f32 + frame[[y, x, 2]] as f32) / 3.0;
            if (v - bg_level).abs() > threshold {
                if y_min.is_none() {
                    y_min = Some(y);
                }
                y_max = Some(y);
            }
        }
    }
    match (y_min, y_max) {
        (Some(a), Some(b)) => (b - a + 1) as f32,
        _ => 0.0,
    }
}

/// Mean absolute deviation from the background level, a contrast proxy.
pub fn mean_abs_deviation(frame: &Frame, bg_level: f32) -> f32 {
    let gray = imops::to_grayscale(frame);
    gray.mapv(|v| (v - bg_level).abs()).mean().unwrap()
}

/// Smooth value-noise plane helper re-export for clutter tests.
pub fn background_level(spec: &SyntheticSceneSpec) -> f32 {
    (BACKGROUND_GRAY * spec.illumination).min(255.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::types::ClutterLevel;

    fn clean_spec(rho: f32, class: GestureClass) -> SyntheticSceneSpec {
        let mut s = SyntheticSceneSpec::new(rho, class);
        s.frame_count = 6;
        s
    }

    #[test]
    fn no_degradation_contrast_equals_illumination_scaled_ink() {
        let spec = clean_spec(8.0, GestureClass::Null);
        let out = synth_clip(&spec, &DegradationConfig::none(), 3).unwrap();
        let frame = &out.video.frames[0];
        // Some pixel deep inside the torso should be at full actor level.
        let min = frame.iter().copied().min().unwrap();
        assert!((min as f32 - ACTOR_GRAY).abs() <= 1.0, "min {min}");
    }

    #[test]
    fn pinhole_half_height_at_double_distance() {
        let near = clean_spec(15.0, GestureClass::Null);
        let far = clean_spec(30.0, GestureClass::Null);
        let h_near = mask_height(
            &synth_clip(&near, &DegradationConfig::none(), 5).unwrap().video.frames[0],
            background_level(&near),
            20.0,
        );
        let h_far = mask_height(
            &synth_clip(&far, &DegradationConfig::none(), 5).unwrap().video.frames[0],
            background_level(&far),
            20.0,
        );
        assert!((h_near / 2.0 - h_far).abs() <= 1.0, "near {h_near} far {h_far}");
    }

    #[test]
    fn actor_height_matches_pinhole_law() {
        for rho in [4.0f32, 8.0, 16.0, 29.0] {
            let spec = clean_spec(rho, GestureClass::Null);
            let frame = &synth_clip(&spec, &DegradationConfig::none(), 9).unwrap().video.frames[0];
            let h = mask_height(frame, background_level(&spec), 20.0);
            assert!(
                (h - spec.actor_height_px()).abs() <= 1.5,
                "rho {rho}: measured {h}, expected {}",
                spec.actor_height_px()
            );
        }
    }

    #[test]
    fn height_strictly_decreasing_in_rho() {
        let mut last = f32::INFINITY;
        for rho in [5.0f32, 10.0, 15.0, 20.0, 25.0, 30.0] {
            let spec = clean_spec(rho, GestureClass::Null);
            let h = spec.actor_height_px();
            assert!(h < last);
            last = h;
        }
    }

    #[test]
    fn attenuation_contrast_follows_beer_lambert() {
        let eta = 0.05f32;
        let rho = 20.0f32;
        let spec = clean_spec(rho, GestureClass::Stop);
        let clean = synth_clip(&spec, &DegradationConfig::none(), 11).unwrap();
        let deg = DegradationConfig { attenuation: eta, ..DegradationConfig::none() };
        let hazy = synth_clip(&spec, &deg, 11).unwrap();
        let bg = background_level(&spec);
        let c0 = mean_abs_deviation(&clean.video.frames[0], bg);
        let c1 = mean_abs_deviation(&hazy.video.frames[0], bg);
        let ratio = c1 / c0;
        let expected = (-eta * rho).exp();
        assert!(
            (ratio - expected).abs() / expected < 0.01,
            "ratio {ratio} expected {expected}"
        );
    }

    #[test]
    fn below_minimum_size_errors() {
        let mut spec = clean_spec(30.0, GestureClass::Stop);
        spec.focal_scale = 100.0; // 3.3 px at 30 m
        let err = synth_clip(&spec, &DegradationConfig::none(), 0).unwrap_err();
        assert!(err.to_string().contains("minimum renderable size"));
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = clean_spec(12.0, GestureClass::Beckoning);
        let deg = DegradationConfig {
            noise_std: 0.02,
            clutter: ClutterLevel::Mild,
            ..DegradationConfig::none()
        };
        let a = synth_clip(&spec, &deg, 77).unwrap();
        let b = synth_clip(&spec, &deg, 77).unwrap();
        assert_eq!(a.video, b.video);
    }

    #[test]
    fn boxes_cover_actor() {
        let spec = clean_spec(10.0, GestureClass::GoUp);
        let out = synth_clip_full(&spec, &DegradationConfig::none(), 2).unwrap();
        assert_eq!(out.boxes.len(), spec.frame_count);
        for b in &out.boxes {
            assert!(b.w > 0.0 && b.h > 0.0);
        }
    }
}
