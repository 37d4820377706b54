//! The recognizer model: configuration, lattice graph topology, network
//! forward pass, and checkpoint serialization.

pub mod checkpoint;
pub mod config;
pub mod net;
pub mod topology;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::{HeadKind, ModelConfig};
pub use net::{
    forward, model_input_from_clip, predict, ray_offset, register_params, ForwardPass, ModelInput,
};
pub use topology::GraphTopology;

#[cfg(test)]
mod tests {
    use ndarray::{arr1, Array2, Array3, Array4, Ix4};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::config::{HeadKind, ModelConfig};
    use super::net::{
        dada_stage, forward, model_input_from_clip, predict, ray_offset, register_params,
        ModelInput,
    };
    use crate::nn::gradcheck::max_rel_error;
    use crate::nn::graph::{Arr, Graph};
    use crate::nn::params::ParamStore;
    use crate::preprocess::ProcessedClip;

    fn toy_input(cfg: &ModelConfig, seed: u64) -> ModelInput {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frames = Array4::from_shape_fn(
            (cfg.in_channels, cfg.frames, cfg.input_hw, cfg.input_hw),
            |_| rng.gen_range(-1.0..1.0f64),
        );
        let depth = Array3::from_shape_fn((cfg.frames, cfg.input_hw, cfg.input_hw), |_| {
            rng.gen_range(2.0..20.0f64)
        });
        ModelInput { frames: frames.into_dyn(), depth: depth.into_dyn() }
    }

    #[test]
    fn ray_offset_matches_direct_evaluation() {
        // (u,v)=(3,4), z=1, k=2: unit direction (0.6,0.8), so dx=1.2, dy=1.6.
        let (dy, dx) = ray_offset(3.0, 4.0, 1.0, 2);
        assert!((dx - 1.2).abs() < 1e-5, "dx {dx}");
        assert!((dy - 1.6).abs() < 1e-5, "dy {dy}");
        // Exactly linear in k and inverse-linear in z.
        let (dy1, dx1) = ray_offset(3.0, 4.0, 1.0, 1);
        assert!((dy - 2.0 * dy1).abs() < 1e-12 && (dx - 2.0 * dx1).abs() < 1e-12);
        let (dy_z2, dx_z2) = ray_offset(3.0, 4.0, 2.0, 2);
        assert!((dy_z2 - dy / 2.0).abs() < 1e-12 && (dx_z2 - dx / 2.0).abs() < 1e-12);
        // Zero flow contributes nothing.
        let (zy, zx) = ray_offset(0.0, 0.0, 1.0, 2);
        assert_eq!((zy, zx), (0.0, 0.0));
    }

    #[test]
    fn offsets_start_at_zero() {
        // The final offset conv is zero-initialized, so a fresh model warps
        // with the identity ray only.
        let cfg = ModelConfig::tiny();
        let mut store = ParamStore::new(5);
        register_params(&mut store, &cfg);
        assert!(store.value("s0.off2.w").iter().all(|&v| v == 0.0));
        assert!(store.value("s0.off2.b").iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_contract_probs_and_embedding() {
        let cfg = ModelConfig::tiny();
        let mut store = ParamStore::new(11);
        let input = toy_input(&cfg, 3);
        let pass = forward(&mut store, &cfg, &input, None).unwrap();
        let p = pass.graph.value(pass.probs);
        assert_eq!(p.len(), 13);
        assert!(p.iter().all(|&v| v >= 0.0));
        assert!((p.sum() - 1.0).abs() < 1e-6);
        let e = pass.graph.value(pass.embedding);
        let norm: f64 = e.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6);
        let pred = predict(&pass);
        assert!(pred < 13);
    }

    #[test]
    fn forward_is_deterministic_without_dropout() {
        let cfg = ModelConfig::tiny();
        let input = toy_input(&cfg, 9);
        let mut s1 = ParamStore::new(21);
        let p1 = forward(&mut s1, &cfg, &input, None).unwrap();
        let mut s2 = ParamStore::new(21);
        let p2 = forward(&mut s2, &cfg, &input, None).unwrap();
        assert_eq!(p1.graph.value(p1.probs), p2.graph.value(p2.probs));
    }

    #[test]
    fn duplicated_clip_gives_identical_outputs() {
        // Per-sample processing: running the same clip twice through one
        // store must give identical rows.
        let cfg = ModelConfig::tiny();
        let input = toy_input(&cfg, 13);
        let mut store = ParamStore::new(4);
        let a = forward(&mut store, &cfg, &input, None).unwrap();
        let b = forward(&mut store, &cfg, &input, None).unwrap();
        assert_eq!(a.graph.value(a.probs), b.graph.value(b.probs));
    }

    #[test]
    fn head_scale_preserves_argmax() {
        let base = ModelConfig::tiny();
        let input = toy_input(&base, 17);
        let cfg_a = ModelConfig { head: HeadKind::Prototype { scale: 30.0 }, ..base.clone() };
        let cfg_b = ModelConfig { head: HeadKind::Prototype { scale: 90.0 }, ..base };
        let mut s1 = ParamStore::new(8);
        let mut s2 = ParamStore::new(8);
        let a = forward(&mut s1, &cfg_a, &input, None).unwrap();
        let b = forward(&mut s2, &cfg_b, &input, None).unwrap();
        assert_eq!(predict(&a), predict(&b));
    }

    #[test]
    fn non_finite_input_is_a_numeric_error() {
        let cfg = ModelConfig::tiny();
        let mut input = toy_input(&cfg, 1);
        input.frames[[0, 0, 0, 0]] = f64::NAN;
        let mut store = ParamStore::new(2);
        match forward(&mut store, &cfg, &input, None) {
            Err(crate::error::DigError::Numeric(_)) => {}
            Err(other) => panic!("wrong error kind: {other}"),
            Ok(_) => panic!("NaN input was accepted"),
        }
    }

    #[test]
    fn dropout_only_in_training_mode() {
        let cfg = ModelConfig::tiny();
        let input = toy_input(&cfg, 2);
        let mut store = ParamStore::new(6);
        let infer = forward(&mut store, &cfg, &input, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let train = forward(&mut store, &cfg, &input, Some(&mut rng)).unwrap();
        assert_ne!(infer.graph.value(infer.probs), train.graph.value(train.probs));
    }

    /// Sets the channel-mix conv of stage `name` to the identity (center tap
    /// one per channel).
    fn set_identity_mix(store: &mut ParamStore, name: &str, ch: usize) {
        let mut w = Array2::zeros((ch, ch * 27));
        for o in 0..ch {
            w[[o, o * 27 + 13]] = 1.0;
        }
        store.set(&format!("{name}.mix.w"), w.into_dyn());
    }

    /// Composed-identities check: zero flow, zero offsets, negligible eta,
    /// identity channel-mix. The stage must reduce to strided subsampling.
    #[test]
    fn dada_stage_composed_identity_is_subsampling() {
        let cfg = ModelConfig {
            stem_channels: 3,
            stage_channels: vec![3],
            ..ModelConfig::tiny()
        };
        let mut store = ParamStore::new(7);
        register_params(&mut store, &cfg);
        set_identity_mix(&mut store, "s0", 3);
        store.set("s0.eta_raw", arr1(&[-40.0]).into_dyn());

        let (t, h) = (2, 8);
        let f0v = Array4::from_shape_fn((3, t, h, h), |(c, tt, y, x)| {
            0.1 + ((c * 31 + tt * 17 + y * 5 + x) % 13) as f64 * 0.07
        });
        let depth = Array3::from_elem((t, h, h), 8.0);
        let flow = Array4::zeros((2, t, h, h));
        let mut g = Graph::new();
        let f0 = g.input(f0v.clone().into_dyn());
        let (out, clamps) = dada_stage(&mut g, &store, &cfg, "s0", f0, &depth, &flow, 3);
        assert_eq!(clamps, 0);
        let o = g.value(out).view().into_dimensionality::<Ix4>().unwrap().to_owned();
        assert_eq!(o.dim(), (3, 1, 4, 4));
        for c in 0..3 {
            for y in 0..4 {
                for x in 0..4 {
                    let expect = f0v[[c, 0, y * 2, x * 2]];
                    assert!(
                        (o[[c, 0, y, x]] - expect).abs() < 1e-9,
                        "({c},{y},{x}): {} vs {}",
                        o[[c, 0, y, x]],
                        expect
                    );
                }
            }
        }
    }

    /// Hand-set ray weights (0.25, 0.5, 0.25) with unit horizontal flow and
    /// z=1 must reproduce a weighted integer-shift gather.
    #[test]
    fn ray_warp_matches_hand_weighted_gather() {
        let cfg = ModelConfig {
            stem_channels: 2,
            stage_channels: vec![2],
            ray_k: 1,
            ..ModelConfig::tiny()
        };
        let mut store = ParamStore::new(19);
        register_params(&mut store, &cfg);
        set_identity_mix(&mut store, "s0", 2);
        store.set("s0.eta_raw", arr1(&[-40.0]).into_dyn());
        // Zero the weighting net so its bias fixes the softmax output.
        store.set("s0.gk2.w", Array2::zeros((cfg.gk_hidden, 3)).into_dyn());
        store.set(
            "s0.gk2.b",
            arr1(&[0.25f64.ln(), 0.5f64.ln(), 0.25f64.ln()]).into_dyn(),
        );

        let (t, h) = (1, 6);
        let f0v = Array4::from_shape_fn((2, t, h, h), |(c, _, y, x)| {
            0.2 + ((c * 23 + y * 7 + x * 3) % 11) as f64 * 0.09
        });
        let depth = Array3::from_elem((t, h, h), 1.0);
        let mut flow = Array4::zeros((2, t, h, h));
        flow.index_axis_mut(ndarray::Axis(0), 0).fill(1.0); // u=1, v=0
        let mut g = Graph::new();
        let f0 = g.input(f0v.clone().into_dyn());
        let (out, _) = dada_stage(&mut g, &store, &cfg, "s0", f0, &depth, &flow, 2);
        let o = g.value(out).view().into_dimensionality::<Ix4>().unwrap().to_owned();
        // Stride 2 means output (y,x) reads input (2y, 2x); the warp mixes
        // x-1, x, x+1 with the hand weights, edges clamped.
        for c in 0..2 {
            for y in 0..3 {
                for x in 0..3 {
                    let (sy, sx): (usize, usize) = (y * 2, x * 2);
                    let left = f0v[[c, 0, sy, sx.saturating_sub(1)]];
                    let mid = f0v[[c, 0, sy, sx]];
                    let right = f0v[[c, 0, sy, (sx + 1).min(h - 1)]];
                    let expect = 0.25 * left + 0.5 * mid + 0.25 * right;
                    assert!(
                        (o[[c, 0, y, x]] - expect).abs() < 1e-3,
                        "({c},{y},{x}): {} vs {expect}",
                        o[[c, 0, y, x]]
                    );
                }
            }
        }
    }

    #[test]
    fn constant_volume_warps_to_constant() {
        // Convex ray weights preserve constants regardless of flow.
        let cfg = ModelConfig { stem_channels: 2, stage_channels: vec![2], ..ModelConfig::tiny() };
        let mut store = ParamStore::new(23);
        register_params(&mut store, &cfg);
        set_identity_mix(&mut store, "s0", 2);
        store.set("s0.eta_raw", arr1(&[-40.0]).into_dyn());
        let (t, h) = (2, 6);
        let f0v = Array4::from_elem((2, t, h, h), 0.37);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let depth = Array3::from_shape_fn((t, h, h), |_| rng.gen_range(1.0..10.0f64));
        let flow = Array4::from_shape_fn((2, t, h, h), |_| rng.gen_range(-2.0..2.0f64));
        let mut g = Graph::new();
        let f0 = g.input(f0v.into_dyn());
        let (out, _) = dada_stage(&mut g, &store, &cfg, "s0", f0, &depth, &flow, 2);
        assert!(g.value(out).iter().all(|&v| (v - 0.37).abs() < 1e-9));
    }

    fn model_loss(store: &ParamStore, cfg: &ModelConfig, input: &ModelInput, name: &str) -> (f64, Arr) {
        let mut s = ParamStore::new(store.seed());
        // Rebuild a mutable store view with identical values.
        register_params(&mut s, cfg);
        for i in 0..store.len() {
            s.set(store.name_at(i), store.value_at(i).clone());
        }
        let pass = forward(&mut s, cfg, input, None).unwrap();
        let mut g = pass.graph;
        // Weighted sum of logits: smooth scalar objective.
        let wts = g.input(arr1(&(0..cfg.num_classes).map(|i| 0.1 * i as f64 - 0.5).collect::<Vec<_>>()).into_dyn());
        let prod = g.mul(pass.logits, wts);
        let loss = g.sum_all(prod);
        let grads = g.backward_from(loss, arr1(&[1.0]).into_dyn());
        let pg = g.param_grads(&s, &grads);
        let idx = s.index_of(name).unwrap();
        (g.value(loss)[[0]], pg[idx].clone())
    }

    #[test]
    fn end_to_end_gradients_match_finite_differences() {
        let cfg = ModelConfig::tiny();
        let mut store = ParamStore::new(31);
        register_params(&mut store, &cfg);
        // Move the offset net off its zero initialization so bilinear
        // sampling sits away from integer-lattice kinks.
        {
            let mut rng = ChaCha8Rng::seed_from_u64(77);
            for name in ["s0.off2.w", "s0.off2.b", "s1.off2.w", "s1.off2.b"] {
                let shaped = store.value(name).mapv(|_| rng.gen_range(-0.05..0.05f64));
                store.set(name, shaped);
            }
        }
        let input = toy_input(&cfg, 41);
        // Parameters across every submodule; tolerances per depth of path.
        let checks: &[(&str, f64)] = &[
            ("s0.eta_raw", 1e-4),
            ("s0.gk2.b", 1e-4),
            ("s0.gk2.w", 1e-4),
            // Offset params steer bilinear sample positions; the interpolant
            // has kinks at integer coordinates, so central differences are
            // noisier here.
            ("s0.off2.b", 3e-3),
            ("s1.eta_raw", 1e-4),
            ("stg0.nbr.w", 1e-4),
            ("tf0.adj_bias", 1e-4),
            ("prototypes", 1e-4),
            ("stem.b", 1e-3),
        ];
        for &(name, tol) in checks {
            let cfg = cfg.clone();
            let input = input.clone();
            let err = max_rel_error(&mut store, name, 1e-4, &move |s| {
                model_loss(s, &cfg, &input, name)
            });
            assert!(err < tol, "{name}: rel err {err}");
        }
    }

    #[test]
    fn model_input_pools_and_rescales_flow() {
        let mut clip_frames = ndarray::Array4::<f32>::zeros((2, 5, 8, 8));
        clip_frames.index_axis_mut(ndarray::Axis(1), 0).fill(0.5);
        clip_frames.index_axis_mut(ndarray::Axis(1), 3).fill(4.0); // u, in 8-grid pixels
        let clip = ProcessedClip {
            frames: clip_frames,
            depth: ndarray::Array3::from_elem((2, 8, 8), 10.0),
            rho: 10.0,
            xi: 1.0,
            label: crate::data::types::GestureClass::Stop,
            detector_miss: false,
        };
        let cfg = ModelConfig { input_hw: 4, frames: 2, ..ModelConfig::tiny() };
        let input = model_input_from_clip(&clip, &cfg).unwrap();
        assert_eq!(input.frames.shape(), &[5, 2, 4, 4]);
        // RGB pooled unchanged; flow halved with the grid.
        assert!((input.frames[[0, 0, 0, 0]] - 0.5).abs() < 1e-9);
        assert!((input.frames[[3, 0, 0, 0]] - 2.0).abs() < 1e-9);
        assert!((input.depth[[0, 0, 0]] - 10.0).abs() < 1e-9);
    }
}
