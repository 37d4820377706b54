//! Frame embedders for keyframe clustering.
//!
//! The default embedder is a 16x16 block-mean grayscale downsample (d = 256):
//! deterministic, dependency-free, and local (a pixel change touches exactly
//! one cell). A pretrained-CNN embedder can be plugged in behind the same
//! trait.

use ndarray::Array1;

use crate::data::types::Frame;
use crate::imops;

pub trait FrameEmbedder: Send + Sync {
    /// Embedding dimension, fixed per embedder.
    fn dim(&self) -> usize;
    fn embed(&self, frame: &Frame) -> Array1<f32>;
}

/// Block-mean grayscale downsample to a `grid` x `grid` cell average.
pub struct BlockMeanEmbedder {
    pub grid: usize,
}

impl Default for BlockMeanEmbedder {
    fn default() -> Self {
        BlockMeanEmbedder { grid: 16 }
    }
}

impl BlockMeanEmbedder {
    /// Cell index covering pixel (y, x) of an (h, w) frame.
    pub fn cell_of(&self, y: usize, x: usize, h: usize, w: usize) -> (usize, usize) {
        let cy = (y * self.grid / h).min(self.grid - 1);
        let cx = (x * self.grid / w).min(self.grid - 1);
        (cy, cx)
    }
}

impl FrameEmbedder for BlockMeanEmbedder {
    fn dim(&self) -> usize {
        self.grid * self.grid
    }

    fn embed(&self, frame: &Frame) -> Array1<f32> {
        let gray = imops::to_grayscale(frame);
        let (h, w) = gray.dim();
        let g = self.grid;
        let mut sums = vec![0.0f64; g * g];
        let mut counts = vec![0u32; g * g];
        for y in 0..h {
            for x in 0..w {
                let (cy, cx) = self.cell_of(y, x, h, w);
                sums[cy * g + cx] += gray[[y, x]] as f64;
                counts[cy * g + cx] += 1;
            }
        }
        Array1::from_iter(sums.iter().zip(&counts).map(|(s, &c)| {
            if c > 0 {
                (*s / c as f64 / 255.0) as f32
            } else {
                0.0
            }
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn black_frame_embeds_to_zero() {
        let e = BlockMeanEmbedder::default();
        let v = e.embed(&Frame::zeros((64, 64, 3)));
        assert_eq!(v.len(), 256);
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn deterministic() {
        let e = BlockMeanEmbedder::default();
        let f = Frame::from_shape_fn((48, 64, 3), |(y, x, c)| ((y * 3 + x * 5 + c) % 251) as u8);
        assert_eq!(e.embed(&f), e.embed(&f));
    }

    #[test]
    fn single_pixel_change_touches_exactly_one_cell() {
        let e = BlockMeanEmbedder::default();
        let a = Frame::zeros((64, 64, 3));
        let mut b = a.clone();
        b[[37, 11, 0]] = 255;
        b[[37, 11, 1]] = 255;
        b[[37, 11, 2]] = 255;
        let va = e.embed(&a);
        let vb = e.embed(&b);
        let diffs: Vec<usize> = (0..256).filter(|&i| va[i] != vb[i]).collect();
        let (cy, cx) = e.cell_of(37, 11, 64, 64);
        assert_eq!(diffs, vec![cy * 16 + cx]);
    }
}
