//! Keyframe reduction: K-means over frame embeddings, one representative per
//! cluster (closest to the centroid, lowest frame index on ties), indices
//! restored to temporal order.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::types::RawVideo;
use crate::error::Result;
use crate::preprocess::embed::FrameEmbedder;

const MAX_ITERS: usize = 50;

/// Selects `r` representative frame indices, sorted ascending. When fewer
/// distinct embeddings exist than `r`, the final index is repeated to pad the
/// output to exactly `r`.
pub fn reduce_frames(
    video: &RawVideo,
    r: usize,
    embedder: &dyn FrameEmbedder,
    seed: u64,
) -> Result<Vec<usize>> {
    assert!(r >= 1, "r must be >= 1");
    let n = video.frame_count();
    let embeddings: Vec<Array1<f32>> = video.frames.iter().map(|f| embedder.embed(f)).collect();

    // Count distinct embeddings; k cannot exceed that.
    let mut distinct: Vec<usize> = Vec::new();
    'outer: for i in 0..n {
        for &j in &distinct {
            if embeddings[i] == embeddings[j] {
                continue 'outer;
            }
        }
        distinct.push(i);
    }
    let k = r.min(distinct.len());

    let assignments = kmeans(&embeddings, k, seed);

    // Representative per cluster: argmin distance to centroid, ties to the
    // lowest frame index.
    let d = embeddings[0].len();
    let mut centroids = Array2::<f64>::zeros((k, d));
    let mut counts = vec![0usize; k];
    for (i, &c) in assignments.iter().enumerate() {
        counts[c] += 1;
        for j in 0..d {
            centroids[[c, j]] += embeddings[i][j] as f64;
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            for j in 0..d {
                centroids[[c, j]] /= counts[c] as f64;
            }
        }
    }
    let mut reps = Vec::with_capacity(k);
    for c in 0..k {
        let mut best = None;
        let mut best_d = f64::INFINITY;
        for (i, &a) in assignments.iter().enumerate() {
            if a != c {
                continue;
            }
            let dist: f64 = (0..d)
                .map(|j| (embeddings[i][j] as f64 - centroids[[c, j]]).powi(2))
                .sum();
            if dist < best_d {
                best_d = dist;
                best = Some(i);
            }
        }
        if let Some(i) = best {
            reps.push(i);
        }
    }
    reps.sort_unstable();
    reps.dedup();
    while reps.len() < r {
        let last = *reps.last().unwrap();
        reps.push(last);
    }
    Ok(reps)
}

/// Seeded k-means++ assignment of points to k clusters.
fn kmeans(points: &[Array1<f32>], k: usize, seed: u64) -> Vec<usize> {
    let n = points.len();
    if k <= 1 {
        return vec![0; n];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = points[0].len();

    // k-means++ seeding.
    let mut centers: Vec<Array1<f32>> = Vec::with_capacity(k);
    centers.push(points[rng.gen_range(0..n)].clone());
    let mut dists: Vec<f64> = vec![f64::INFINITY; n];
    while centers.len() < k {
        for i in 0..n {
            let c = centers.last().unwrap();
            let dd: f64 = (0..d).map(|j| (points[i][j] - c[j]) as f64).map(|x| x * x).sum();
            dists[i] = dists[i].min(dd);
        }
        let total: f64 = dists.iter().sum();
        if total <= 0.0 {
            // All points coincide with an existing center.
            centers.push(points[rng.gen_range(0..n)].clone());
            continue;
        }
        let mut target = rng.gen_range(0.0..total);
        let mut pick = n - 1;
        for i in 0..n {
            target -= dists[i];
            if target <= 0.0 {
                pick = i;
                break;
            }
        }
        centers.push(points[pick].clone());
    }

    let mut assign = vec![0usize; n];
    for _ in 0..MAX_ITERS {
        let mut changed = false;
        for i in 0..n {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, center) in centers.iter().enumerate() {
                let dd: f64 = (0..d).map(|j| (points[i][j] - center[j]) as f64).map(|x| x * x).sum();
                if dd < best_d {
                    best_d = dd;
                    best = c;
                }
            }
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
        }
        // Recompute centers.
        let mut sums = vec![vec![0.0f64; d]; k];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            counts[assign[i]] += 1;
            for j in 0..d {
                sums[assign[i]][j] += points[i][j] as f64;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for j in 0..d {
                    centers[c][j] = (sums[c][j] / counts[c] as f64) as f32;
                }
            }
        }
        if !changed {
            break;
        }
    }
    assign
}
