//! Physical degradation simulator for whole videos.
//!
//! Degradations are applied in the order of the physical light path:
//! defocus -> medium attenuation -> fog -> motion blur -> sensor noise,
//! with clutter compositing first (it belongs to the scene, not the optics).
//! The all-zero configuration is the bit-exact identity.

use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::types::{ClutterLevel, DegradationConfig, RawVideo};
use crate::error::Result;
use crate::imops;

/// Gray level of fully saturated fog.
pub const FOG_COLOR: f32 = 200.0;

/// Reference distance (meters) for the standalone attenuation factor; the
/// generator scales attenuation by the true actor distance instead.
pub const RHO_REF: f32 = 16.0;

pub fn degrade(video: &RawVideo, deg: &DegradationConfig, seed: u64) -> Result<RawVideo> {
    deg.validate()?;
    if *deg == DegradationConfig::none() {
        return Ok(video.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w) = video.dims();
    let clutter = clutter_field(deg.clutter, h, w, &mut rng);
    let atten_factor = (-deg.attenuation * RHO_REF).exp();

    let mut frames = Vec::with_capacity(video.frame_count());
    for (t, frame) in video.frames.iter().enumerate() {
        let mut img = imops::frame_to_f32(frame);
        clutter.composite(&mut img, t);
        if deg.defocus_sigma > 0.0 {
            img = imops::gaussian_blur_rgb(&img, deg.defocus_sigma);
        }
        if deg.attenuation > 0.0 {
            // Contrast collapse toward the frame mean, Beer-Lambert factor at
            // the reference distance.
            let mean = img.mean().unwrap();
            img.mapv_inplace(|v| mean + (v - mean) * atten_factor);
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
                let n: f32 = rng.gen_range(-1.0f32..1.0) + rng.gen_range(-1.0f32..1.0) + rng.gen_range(-1.0f32..1.0);
                // Sum of three uniforms, variance 1/4 per term -> scale to std.
                *v += n * std / (0.75f32).sqrt() * 0.5;
            }
        }
        frames.push(imops::frame_from_f32(&img));
    }
    RawVideo::new(frames, video.fps)
}

/// Moving distractor blobs plus a static background texture.
pub(crate) struct ClutterField {
    texture: Option<ndarray::Array2<f32>>,
    blobs: Vec<Blob>,
}

struct Blob {
    x0: f32,
    y0: f32,
    vx: f32,
    vy: f32,
    radius: f32,
    intensity: f32,
}

pub(crate) fn clutter_field(level: ClutterLevel, h: usize, w: usize, rng: &mut ChaCha8Rng) -> ClutterField {
    let texture = if level.texture_amplitude() > 0.0 {
        let amp = level.texture_amplitude();
        Some(imops::value_noise(rng, h, w, 8).mapv(|v| v * amp))
    } else {
        None
    };
    let blobs = (0..level.distractor_count())
        .map(|_| Blob {
            x0: rng.gen_range(0.0..w as f32),
            y0: rng.gen_range(0.0..h as f32),
            vx: rng.gen_range(-2.0f32..2.0),
            vy: rng.gen_range(-1.0f32..1.0),
            radius: rng.gen_range(2.0f32..(w as f32 / 10.0).max(3.0)),
            intensity: rng.gen_range(-60.0f32..60.0),
        })
        .collect();
    ClutterField { texture, blobs }
}

impl ClutterField {
    pub(crate) fn composite(&self, img: &mut Array3<f32>, t: usize) {
        let (h, w, _) = img.dim();
        if let Some(tex) = &self.texture {
            for y in 0..h {
                for x in 0..w {
                    for c in 0..3 {
                        img[[y, x, c]] += tex[[y, x]];
                    }
                }
            }
        }
        for blob in &self.blobs {
            let cx = (blob.x0 + blob.vx * t as f32).rem_euclid(w as f32);
            let cy = (blob.y0 + blob.vy * t as f32).rem_euclid(h as f32);
            let r = blob.radius;
            let y_lo = (cy - r).floor().max(0.0) as usize;
            let y_hi = ((cy + r).ceil() as usize).min(h - 1);
            let x_lo = (cx - r).floor().max(0.0) as usize;
            let x_hi = ((cx + r).ceil() as usize).min(w - 1);
            for y in y_lo..=y_hi {
                for x in x_lo..=x_hi {
                    let d2 = (y as f32 - cy).powi(2) + (x as f32 - cx).powi(2);
                    if d2 <= r * r {
                        let fade = 1.0 - (d2.sqrt() / r);
                        for c in 0..3 {
                            img[[y, x, c]] += blob.intensity * fade;
                        }
                    }
                }
            }
        }
    }
}
