//! Seeded video augmentation: crop, horizontal flip, rotation, scale,
//! brightness/contrast, and synthetic noise. Frame count, label semantics
//! (up to the left/right remap), and the distance annotation are preserved.

use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::types::{Frame, GestureSample, RawVideo};
use crate::error::Result;
use crate::imops;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AugmentConfig {
    /// Probability of a horizontal flip (remaps move-right <-> move-left).
    pub flip_prob: f64,
    /// Max crop fraction removed per side.
    pub crop_frac: f32,
    /// Max rotation in degrees.
    pub rotation_deg: f32,
    /// Max relative scale change.
    pub scale_frac: f32,
    /// Max brightness shift in gray levels.
    pub brightness: f32,
    /// Max relative contrast change.
    pub contrast_frac: f32,
    /// Gaussian noise std, fraction of full scale.
    pub noise_std: f32,
}

impl AugmentConfig {
    pub fn identity() -> AugmentConfig {
        AugmentConfig {
            flip_prob: 0.0,
            crop_frac: 0.0,
            rotation_deg: 0.0,
            scale_frac: 0.0,
            brightness: 0.0,
            contrast_frac: 0.0,
            noise_std: 0.0,
        }
    }

    pub fn default_train() -> AugmentConfig {
        AugmentConfig {
            flip_prob: 0.5,
            crop_frac: 0.08,
            rotation_deg: 8.0,
            scale_frac: 0.1,
            brightness: 18.0,
            contrast_frac: 0.15,
            noise_std: 0.01,
        }
    }

    fn is_identity(&self) -> bool {
        self.flip_prob == 0.0
            && self.crop_frac == 0.0
            && self.rotation_deg == 0.0
            && self.scale_frac == 0.0
            && self.brightness == 0.0
            && self.contrast_frac == 0.0
            && self.noise_std == 0.0
    }
}

/// Mirrors every frame left-right.
pub fn flip_video(video: &RawVideo) -> RawVideo {
    let (_, w) = video.dims();
    let frames = video
        .frames
        .iter()
        .map(|f| {
            let (h, _, _) = f.dim();
            Frame::from_shape_fn((h, w, 3), |(y, x, c)| f[[y, w - 1 - x, c]])
        })
        .collect();
    RawVideo::new(frames, video.fps).unwrap()
}

/// Applies one seeded draw of the augmentation policy. The whole clip shares
/// one transform so temporal coherence is preserved.
pub fn augment(sample: &GestureSample, cfg: &AugmentConfig, seed: u64) -> Result<GestureSample> {
    sample.validate()?;
    if cfg.is_identity() {
        return Ok(sample.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let flip = rng.gen_bool(cfg.flip_prob.clamp(0.0, 1.0));
    let crop = rng.gen_range(0.0..=cfg.crop_frac.max(0.0));
    let angle = rng.gen_range(-1.0f32..=1.0) * cfg.rotation_deg.to_radians();
    let scale = 1.0 + rng.gen_range(-1.0f32..=1.0) * cfg.scale_frac;
    let brightness = rng.gen_range(-1.0f32..=1.0) * cfg.brightness;
    let contrast = 1.0 + rng.gen_range(-1.0f32..=1.0) * cfg.contrast_frac;
    let noise_seed = rng.gen::<u64>();

    let video = if flip { flip_video(&sample.video) } else { sample.video.clone() };
    let (h, w) = video.dims();
    let (ch, cw) = ((h as f32 - 1.0) / 2.0, (w as f32 - 1.0) / 2.0);
    let (sin_a, cos_a) = angle.sin_cos();
    // Combined inverse map: output pixel -> source pixel (rotate + scale about
    // the center, then the crop window).
    let crop_scale = 1.0 - 2.0 * crop;
    let mut noise_rng = ChaCha8Rng::seed_from_u64(noise_seed);

    let frames: Vec<Frame> = video
        .frames
        .iter()
        .map(|frame| {
            let src = imops::frame_to_f32(frame);
            let mut planes = Vec::with_capacity(3);
            for c in 0..3 {
                planes.push(ndarray::Array2::from_shape_fn((h, w), |(y, x)| src[[y, x, c]]));
            }
            let mut out = Array3::from_shape_fn((h, w, 3), |(y, x, c)| {
                let yy = (y as f32 - ch) * crop_scale / scale;
                let xx = (x as f32 - cw) * crop_scale / scale;
                let sx = cos_a * xx + sin_a * yy + cw;
                let sy = -sin_a * xx + cos_a * yy + ch;
                imops::bilinear_sample(&planes[c], sy, sx)
            });
            out.mapv_inplace(|v| (v - 127.5) * contrast + 127.5 + brightness);
            if cfg.noise_std > 0.0 {
                let std = cfg.noise_std * 255.0;
                for v in out.iter_mut() {
                    let n: f32 = noise_rng.gen_range(-1.0f32..1.0)
                        + noise_rng.gen_range(-1.0f32..1.0)
                        + noise_rng.gen_range(-1.0f32..1.0);
                    *v += n * std / (0.75f32).sqrt() * 0.5;
                }
            }
            imops::frame_from_f32(&out)
        })
        .collect();

    Ok(GestureSample {
        video: RawVideo::new(frames, video.fps)?,
        rho: sample.rho,
        label: if flip { sample.label.mirrored() } else { sample.label },
        split: sample.split,
        environment: sample.environment,
    })
}
