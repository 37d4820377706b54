//! Small shared image kernels: float conversion, separable Gaussian blur,
//! bilinear resize, and seeded value noise.

use ndarray::{Array2, Array3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::data::types::Frame;

/// u8 RGB frame -> f32 (h, w, 3) in [0, 255].
pub fn frame_to_f32(frame: &Frame) -> Array3<f32> {
    frame.mapv(|v| v as f32)
}

/// f32 frame -> u8 with rounding and clamping.
pub fn frame_from_f32(data: &Array3<f32>) -> Frame {
    data.mapv(|v| v.round().clamp(0.0, 255.0) as u8)
}

/// Mean of the three channels, in [0, 255].
pub fn to_grayscale(frame: &Frame) -> Array2<f32> {
    let (h, w, _) = frame.dim();
    Array2::from_shape_fn((h, w), |(y, x)| {
        (frame[[y, x, 0]] as f32 + frame[[y, x, 1]] as f32 + frame[[y, x, 2]] as f32) / 3.0
    })
}

/// Normalized 1-D Gaussian taps with radius ceil(3 sigma).
pub fn gaussian_kernel(sigma: f32) -> Vec<f32> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let mut taps: Vec<f32> = (-radius..=radius)
        .map(|i| (-((i * i) as f32) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f32 = taps.iter().sum();
    for t in &mut taps {
        *t /= sum;
    }
    taps
}

/// Horizontal 1-D convolution with edge clamping.
fn convolve_rows(plane: &Array2<f32>, taps: &[f32]) -> Array2<f32> {
    let (h, w) = plane.dim();
    let radius = (taps.len() / 2) as i64;
    Array2::from_shape_fn((h, w), |(y, x)| {
        taps.iter()
            .enumerate()
            .map(|(i, t)| {
                let xs = (x as i64 + i as i64 - radius).clamp(0, w as i64 - 1) as usize;
                t * plane[[y, xs]]
            })
            .sum()
    })
}

/// Separable Gaussian blur of a single plane, edge-clamped.
pub fn gaussian_blur_plane(plane: &Array2<f32>, sigma: f32) -> Array2<f32> {
    if sigma <= 0.0 {
        return plane.clone();
    }
    let taps = gaussian_kernel(sigma);
    let horiz = convolve_rows(plane, &taps);
    convolve_rows(&horiz.t().to_owned(), &taps).t().to_owned()
}

/// Separable Gaussian blur applied per channel.
pub fn gaussian_blur_rgb(frame: &Array3<f32>, sigma: f32) -> Array3<f32> {
    if sigma <= 0.0 {
        return frame.clone();
    }
    let (h, w, c) = frame.dim();
    let mut out = Array3::zeros((h, w, c));
    for ch in 0..c {
        let plane = Array2::from_shape_fn((h, w), |(y, x)| frame[[y, x, ch]]);
        let blurred = gaussian_blur_plane(&plane, sigma);
        for y in 0..h {
            for x in 0..w {
                out[[y, x, ch]] = blurred[[y, x]];
            }
        }
    }
    out
}

/// Horizontal box blur of integer length, for motion streaks.
pub fn motion_blur_rgb(frame: &Array3<f32>, len: f32) -> Array3<f32> {
    let taps_n = len.round() as usize;
    if taps_n < 2 {
        return frame.clone();
    }
    let taps = vec![1.0 / taps_n as f32; taps_n];
    let (h, w, c) = frame.dim();
    let mut out = Array3::zeros((h, w, c));
    for ch in 0..c {
        let plane = Array2::from_shape_fn((h, w), |(y, x)| frame[[y, x, ch]]);
        let blurred = convolve_rows(&plane, &taps);
        for y in 0..h {
            for x in 0..w {
                out[[y, x, ch]] = blurred[[y, x]];
            }
        }
    }
    out
}

/// Bilinear sample of one plane at fractional (y, x), edge-clamped.
pub fn bilinear_sample(plane: &Array2<f32>, y: f32, x: f32) -> f32 {
    let (h, w) = plane.dim();
    let xc = x.clamp(0.0, (w - 1) as f32);
    let yc = y.clamp(0.0, (h - 1) as f32);
    let x0 = xc.floor() as usize;
    let y0 = yc.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = xc - x0 as f32;
    let fy = yc - y0 as f32;
    let top = plane[[y0, x0]] * (1.0 - fx) + plane[[y0, x1]] * fx;
    let bot = plane[[y1, x0]] * (1.0 - fx) + plane[[y1, x1]] * fx;
    top * (1.0 - fy) + bot * fy
}

/// Bilinear resize of an RGB u8 frame.
pub fn resize_frame(frame: &Frame, out_h: usize, out_w: usize) -> Frame {
    let (h, w, _) = frame.dim();
    let fy = h as f32 / out_h as f32;
    let fx = w as f32 / out_w as f32;
    let src = frame_to_f32(frame);
    let mut planes = Vec::with_capacity(3);
    for ch in 0..3 {
        planes.push(Array2::from_shape_fn((h, w), |(y, x)| src[[y, x, ch]]));
    }
    let out = Array3::from_shape_fn((out_h, out_w, 3), |(y, x, ch)| {
        // Sample at the source-space center of the destination pixel.
        let sy = (y as f32 + 0.5) * fy - 0.5;
        let sx = (x as f32 + 0.5) * fx - 0.5;
        bilinear_sample(&planes[ch], sy, sx)
    });
    frame_from_f32(&out)
}

/// Crop a rectangle (already in bounds) from a frame.
pub fn crop_frame(frame: &Frame, y0: usize, x0: usize, h: usize, w: usize) -> Frame {
    Frame::from_shape_fn((h, w, 3), |(y, x, c)| frame[[y0 + y, x0 + x, c]])
}

/// Smooth seeded value noise in [-1, 1], bilinearly interpolated from a coarse
/// lattice of `cells` x `cells` random values.
pub fn value_noise(rng: &mut ChaCha8Rng, h: usize, w: usize, cells: usize) -> Array2<f32> {
    let lattice = Array2::from_shape_fn((cells + 1, cells + 1), |_| rng.gen_range(-1.0f32..1.0));
    Array2::from_shape_fn((h, w), |(y, x)| {
        let gy = y as f32 / h as f32 * cells as f32;
        let gx = x as f32 / w as f32 * cells as f32;
        bilinear_sample(&lattice, gy, gx)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_normalized() {
        let taps = gaussian_kernel(2.0);
        let sum: f32 = taps.iter().sum();
        assert!((sum - 1.0).abs() < 1e-6);
        assert_eq!(taps.len(), 13);
    }

    #[test]
    fn blur_preserves_constant() {
        let plane = Array2::from_elem((9, 9), 3.5f32);
        let out = gaussian_blur_plane(&plane, 1.5);
        for v in out.iter() {
            assert!((v - 3.5).abs() < 1e-5);
        }
    }

    #[test]
    fn resize_identity() {
        let frame = Frame::from_shape_fn((6, 7, 3), |(y, x, c)| (y * 31 + x * 7 + c) as u8);
        assert_eq!(resize_frame(&frame, 6, 7), frame);
    }
}
