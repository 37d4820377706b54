//! Per-pixel depth maps for the distance-aware aggregation stage.
//!
//! Depth is consumed in metres and clamped below at Z_MIN so the ray step
//! k/z stays bounded.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::synth::FAR_PLANE_M;
use crate::error::{DigError, Result};
use crate::preprocess::detect::BoundingBox;

/// Depth floor, metres.
pub const Z_MIN: f32 = 0.5;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case", tag = "strategy")]
pub enum DepthStrategy {
    /// Whole map set to the annotated subject distance.
    ConstantFromDistance,
    /// Subject distance inside the detection box, far plane elsewhere.
    SyntheticGroundTruth,
    /// Placeholder for a pretrained monocular estimator; not available in
    /// desk-scale builds.
    ExternalEstimator,
}

/// Builds the depth map for one frame. `bbox` is the detection in the
/// original frame and `rect` the crop rectangle (y0, x0, h, w) it produced,
/// so the box can be mapped into crop coordinates.
pub fn depth_map(
    strategy: &DepthStrategy,
    rho: f32,
    bbox: Option<&BoundingBox>,
    rect: (usize, usize, usize, usize),
    out_size: usize,
) -> Result<Array2<f32>> {
    let z = rho.max(Z_MIN);
    match strategy {
        DepthStrategy::ConstantFromDistance => Ok(Array2::from_elem((out_size, out_size), z)),
        DepthStrategy::SyntheticGroundTruth => {
            let far = FAR_PLANE_M.max(Z_MIN);
            let mut map = Array2::from_elem((out_size, out_size), far);
            if let Some(b) = bbox {
                // Map the box through the crop and resize.
                let (ry0, rx0, rh, rw) = rect;
                let sy = out_size as f32 / rh as f32;
                let sx = out_size as f32 / rw as f32;
                let x0 = ((b.x - rx0 as f32) * sx).floor().max(0.0) as usize;
                let y0 = ((b.y - ry0 as f32) * sy).floor().max(0.0) as usize;
                let x1 = (((b.x + b.width - rx0 as f32) * sx).ceil() as usize).min(out_size);
                let y1 = (((b.y + b.height - ry0 as f32) * sy).ceil() as usize).min(out_size);
                for y in y0..y1 {
                    for x in x0..x1 {
                        map[[y, x]] = z;
                    }
                }
            }
            Ok(map)
        }
        DepthStrategy::ExternalEstimator => Err(DigError::Config(
            "external depth estimator unavailable; use constant-from-distance or synthetic-ground-truth".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_map_matches_distance() {
        let map = depth_map(&DepthStrategy::ConstantFromDistance, 12.0, None, (0, 0, 64, 64), 8).unwrap();
        assert!(map.iter().all(|&z| z == 12.0));
    }

    #[test]
    fn depth_floor_applies() {
        let map = depth_map(&DepthStrategy::ConstantFromDistance, 0.1, None, (0, 0, 64, 64), 4).unwrap();
        assert!(map.iter().all(|&z| z == Z_MIN));
    }

    #[test]
    fn ground_truth_splits_actor_and_background() {
        let bbox = BoundingBox { x: 16.0, y: 16.0, width: 32.0, height: 32.0 };
        let map =
            depth_map(&DepthStrategy::SyntheticGroundTruth, 10.0, Some(&bbox), (0, 0, 64, 64), 64).unwrap();
        assert_eq!(map[[32, 32]], 10.0);
        assert_eq!(map[[0, 0]], FAR_PLANE_M);
        assert_eq!(map[[63, 63]], FAR_PLANE_M);
    }

    #[test]
    fn missing_box_means_far_plane() {
        let map = depth_map(&DepthStrategy::SyntheticGroundTruth, 10.0, None, (0, 0, 64, 64), 8).unwrap();
        assert!(map.iter().all(|&z| z == FAR_PLANE_M));
    }

    #[test]
    fn external_estimator_is_a_config_error() {
        assert!(matches!(
            depth_map(&DepthStrategy::ExternalEstimator, 10.0, None, (0, 0, 64, 64), 8),
            Err(DigError::Config(_))
        ));
    }
}
