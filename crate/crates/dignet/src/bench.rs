//! Deterministic in-memory benchmark: synthetic long-range clips rendered,
//! preprocessed with ground-truth person boxes and synthetic depth, and
//! converted straight to model inputs so no corpus ever touches disk.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::synth::{synth_clip_full, SyntheticSceneSpec};
use crate::data::types::{DegradationConfig, GestureClass};
use crate::error::{DigError, Result};
use crate::model::ModelConfig;
use crate::preprocess::detect::{BoundingBox, GroundTruthDetector};
use crate::preprocess::embed::BlockMeanEmbedder;
use crate::preprocess::pipeline::{preprocess, PreprocessConfig};
use crate::preprocess::DepthStrategy;
use crate::train::TrainItem;

/// Benchmark recipe; every field participates in the deterministic stream.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub classes: Vec<GestureClass>,
    pub clips_per_class: usize,
    /// Subject distance range in meters, sampled stratified per class.
    pub rho_min: f32,
    pub rho_max: f32,
    /// Source clip length in frames before keyframe reduction.
    pub frame_count: usize,
    pub frame_h: usize,
    pub frame_w: usize,
    pub degradation: DegradationConfig,
    pub preprocess: PreprocessConfig,
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl BenchmarkConfig {
    /// Paper-scale corpus: 13 classes, ~5k clips, 2-30 m.
    pub fn full() -> BenchmarkConfig {
        BenchmarkConfig {
            classes: GestureClass::ALL.to_vec(),
            clips_per_class: 385,
            rho_min: 2.0,
            rho_max: 30.0,
            frame_count: 84,
            frame_h: 120,
            frame_w: 160,
            degradation: DegradationConfig::none(),
            preprocess: PreprocessConfig {
                depth: DepthStrategy::SyntheticGroundTruth,
                ..PreprocessConfig::default()
            },
            val_fraction: 0.15,
            test_fraction: 0.15,
            seed: 0,
        }
    }

    /// Desk-scale corpus for the verification harness: same structure, small
    /// frames and few clips so a full training fits a single CPU core.
    pub fn reduced() -> BenchmarkConfig {
        BenchmarkConfig {
            classes: GestureClass::ALL.to_vec(),
            clips_per_class: 6,
            rho_min: 2.0,
            rho_max: 30.0,
            frame_count: 24,
            frame_h: 48,
            frame_w: 64,
            degradation: DegradationConfig::none(),
            preprocess: PreprocessConfig {
                keyframes: 8,
                out_size: 32,
                depth: DepthStrategy::SyntheticGroundTruth,
                ..PreprocessConfig::default()
            },
            val_fraction: 0.17,
            test_fraction: 0.17,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() || self.clips_per_class == 0 {
            return Err(DigError::Config("benchmark needs classes and clips".into()));
        }
        if !(self.rho_min > 0.0 && self.rho_max > self.rho_min) {
            return Err(DigError::Config("need 0 < rho_min < rho_max".into()));
        }
        if self.val_fraction < 0.0
            || self.test_fraction < 0.0
            || self.val_fraction + self.test_fraction >= 1.0
        {
            return Err(DigError::Config("split fractions must leave training data".into()));
        }
        Ok(())
    }
}

/// One benchmark clip in model coordinates plus its evaluation metadata.
#[derive(Debug, Clone)]
pub struct BenchClip {
    pub item: TrainItem,
    pub clip_id: String,
    pub class: GestureClass,
    pub rho: f32,
}

#[derive(Debug, Clone)]
pub struct Benchmark {
    pub train: Vec<BenchClip>,
    pub val: Vec<BenchClip>,
    pub test: Vec<BenchClip>,
}

impl Benchmark {
    pub fn items(split: &[BenchClip]) -> Vec<TrainItem> {
        split.iter().map(|c| c.item.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Scene spec for clip `i` of `class`: distance stratified over the range
/// with seeded jitter, tempo and illumination lightly varied.
pub fn clip_spec(cfg: &BenchmarkConfig, class: GestureClass, i: usize) -> SyntheticSceneSpec {
    let mut rng =
        ChaCha8Rng::seed_from_u64(cfg.seed ^ ((class.index() as u64) << 32) ^ i as u64);
    let n = cfg.clips_per_class as f32;
    let rho = cfg.rho_min
        + (cfg.rho_max - cfg.rho_min) * ((i as f32 + rng.gen_range(0.0..1.0f32)) / n).min(1.0);
    let mut spec = SyntheticSceneSpec::new(rho, class);
    spec.frame_count = cfg.frame_count;
    spec.frame_h = cfg.frame_h;
    spec.frame_w = cfg.frame_w;
    spec.tempo = rng.gen_range(0.6..1.0);
    spec.illumination = rng.gen_range(0.85..1.15);
    spec.background_seed = rng.gen();
    spec
}

/// Renders and preprocesses one benchmark clip.
pub fn make_clip(
    cfg: &BenchmarkConfig,
    model_cfg: &ModelConfig,
    class: GestureClass,
    i: usize,
) -> Result<BenchClip> {
    let spec = clip_spec(cfg, class, i);
    let clip_seed = cfg.seed ^ 0x636c6970 ^ ((class.index() as u64) << 40) ^ (i as u64);
    let out = synth_clip_full(&spec, &cfg.degradation, clip_seed)?;
    let boxes: Vec<BoundingBox> = out
        .boxes
        .iter()
        .map(|b| BoundingBox { x: b.x, y: b.y, width: b.w, height: b.h })
        .collect();
    let detector = GroundTruthDetector { boxes };
    let embedder = BlockMeanEmbedder::default();
    let processed = preprocess(&out.sample, &detector, &embedder, &cfg.preprocess, clip_seed)?;
    Ok(BenchClip {
        item: TrainItem::from_clip(&processed, model_cfg)?,
        clip_id: format!("{}-{i:04}", class.name()),
        class,
        rho: spec.rho,
    })
}

#[derive(Clone, Copy, PartialEq)]
enum SplitTag {
    Train,
    Val,
    Test,
}

/// Deterministic per-class split assignment, independent of build order.
fn split_plan(cfg: &BenchmarkConfig, class: GestureClass) -> Vec<(usize, SplitTag)> {
    let n = cfg.clips_per_class;
    let n_val = ((n as f64 * cfg.val_fraction).round() as usize).min(n.saturating_sub(1));
    let n_test =
        ((n as f64 * cfg.test_fraction).round() as usize).min(n.saturating_sub(1 + n_val));
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x73706c6974 ^ class.index() as u64);
    use rand::seq::SliceRandom;
    order.shuffle(&mut rng);
    order
        .into_iter()
        .enumerate()
        .map(|(pos, i)| {
            let tag = if pos < n_val {
                SplitTag::Val
            } else if pos < n_val + n_test {
                SplitTag::Test
            } else {
                SplitTag::Train
            };
            (i, tag)
        })
        .collect()
}

/// Generates the whole benchmark, deterministically split per class.
pub fn generate(cfg: &BenchmarkConfig, model_cfg: &ModelConfig) -> Result<Benchmark> {
    generate_with_workers(cfg, model_cfg, 1)
}

/// Like [`generate`], optionally fanning clip construction out over
/// threads. Every clip is seeded independently, so the output is identical
/// for any worker count.
pub fn generate_with_workers(
    cfg: &BenchmarkConfig,
    model_cfg: &ModelConfig,
    workers: usize,
) -> Result<Benchmark> {
    cfg.validate()?;
    if cfg.preprocess.keyframes != model_cfg.frames {
        return Err(DigError::Config(format!(
            "preprocess keeps {} keyframes but the model expects {}",
            cfg.preprocess.keyframes, model_cfg.frames
        )));
    }
    let mut tasks: Vec<(GestureClass, usize, SplitTag)> = Vec::new();
    for &class in &cfg.classes {
        for (i, tag) in split_plan(cfg, class) {
            tasks.push((class, i, tag));
        }
    }

    let workers = workers.max(1).min(tasks.len().max(1));
    let clips: Vec<Result<BenchClip>> = if workers == 1 {
        tasks.iter().map(|&(c, i, _)| make_clip(cfg, model_cfg, c, i)).collect()
    } else {
        let mut out: Vec<Option<Result<BenchClip>>> = (0..tasks.len()).map(|_| None).collect();
        let chunk = tasks.len().div_ceil(workers);
        std::thread::scope(|scope| {
            let handles: Vec<_> = tasks
                .chunks(chunk)
                .map(|part| {
                    scope.spawn(move || {
                        part.iter()
                            .map(|&(c, i, _)| make_clip(cfg, model_cfg, c, i))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            let mut at = 0;
            for h in handles {
                for r in h.join().expect("benchmark worker panicked") {
                    out[at] = Some(r);
                    at += 1;
                }
            }
        });
        out.into_iter().map(|o| o.unwrap()).collect()
    };

    let mut bench = Benchmark { train: Vec::new(), val: Vec::new(), test: Vec::new() };
    for ((_, _, tag), clip) in tasks.into_iter().zip(clips) {
        let clip = clip?;
        match tag {
            SplitTag::Train => bench.train.push(clip),
            SplitTag::Val => bench.val.push(clip),
            SplitTag::Test => bench.test.push(clip),
        }
    }
    Ok(bench)
}

/// Uniform seeded subsample of a split, without replacement; used by the
/// data-size sweep.
pub fn subsample(split: &[BenchClip], count: usize, seed: u64) -> Vec<BenchClip> {
    use rand::seq::SliceRandom;
    let mut idx: Vec<usize> = (0..split.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    idx.truncate(count.min(split.len()));
    idx.sort_unstable();
    idx.into_iter().map(|i| split[i].clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_bench_cfg() -> (BenchmarkConfig, ModelConfig) {
        let mut cfg = BenchmarkConfig::reduced();
        cfg.classes = vec![GestureClass::Stop, GestureClass::Beckoning];
        cfg.clips_per_class = 3;
        cfg.frame_count = 8;
        cfg.preprocess.keyframes = 2;
        let model = ModelConfig { frames: 2, ..ModelConfig::tiny() };
        (cfg, model)
    }

    #[test]
    fn generation_is_deterministic() {
        let (cfg, model) = tiny_bench_cfg();
        let a = generate(&cfg, &model).unwrap();
        let b = generate(&cfg, &model).unwrap();
        assert_eq!(a.len(), b.len());
        assert_eq!(a.train[0].clip_id, b.train[0].clip_id);
        assert_eq!(a.train[0].item.input.frames, b.train[0].item.input.frames);
    }

    #[test]
    fn splits_cover_everything_and_stay_in_range() {
        let (cfg, model) = tiny_bench_cfg();
        let bench = generate(&cfg, &model).unwrap();
        assert_eq!(bench.len(), 6);
        assert!(!bench.train.is_empty() && !bench.val.is_empty() && !bench.test.is_empty());
        for clip in bench.train.iter().chain(&bench.val).chain(&bench.test) {
            assert!(clip.rho >= cfg.rho_min && clip.rho <= cfg.rho_max);
            assert_eq!(clip.item.label, clip.class.index());
            assert_eq!(
                clip.item.input.frames.shape(),
                &[5, model.frames, model.input_hw, model.input_hw]
            );
        }
    }

    #[test]
    fn clip_distance_is_stratified() {
        let (mut cfg, _) = tiny_bench_cfg();
        cfg.clips_per_class = 10;
        let rhos: Vec<f32> = (0..10)
            .map(|i| clip_spec(&cfg, GestureClass::Stop, i).rho)
            .collect();
        assert!(rhos.windows(2).all(|w| w[0] < w[1]));
        assert!(rhos[0] < 6.0 && rhos[9] > 26.0);
    }

    #[test]
    fn mismatched_keyframes_is_a_config_error() {
        let (cfg, _) = tiny_bench_cfg();
        let model = ModelConfig { frames: 4, ..ModelConfig::tiny() };
        assert!(generate(&cfg, &model).is_err());
    }

    #[test]
    fn dynamic_gesture_clips_carry_motion() {
        let (cfg, model) = tiny_bench_cfg();
        let clip = make_clip(&cfg, &model, GestureClass::Beckoning, 0).unwrap();
        assert!(clip.item.xi >= 0.0);
        assert!(clip.item.input.frames.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn worker_count_does_not_change_the_output() {
        let (cfg, model) = tiny_bench_cfg();
        let serial = generate_with_workers(&cfg, &model, 1).unwrap();
        let parallel = generate_with_workers(&cfg, &model, 3).unwrap();
        assert_eq!(serial.train.len(), parallel.train.len());
        for (a, b) in serial.train.iter().zip(&parallel.train) {
            assert_eq!(a.clip_id, b.clip_id);
            assert_eq!(a.item.input.frames, b.item.input.frames);
        }
    }

    #[test]
    fn subsample_is_deterministic_and_bounded() {
        let (cfg, model) = tiny_bench_cfg();
        let bench = generate(&cfg, &model).unwrap();
        let a = subsample(&bench.train, 2, 5);
        let b = subsample(&bench.train, 2, 5);
        assert_eq!(a.len(), 2);
        assert_eq!(a[0].clip_id, b[0].clip_id);
        assert_eq!(subsample(&bench.train, 100, 5).len(), bench.train.len());
    }
}
