//! Command-line harness: dataset synthesis, preprocessing, training,
//! evaluation sweeps, ablations, fine-tuning, and streaming inference.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use dignet::bench::{self, BenchClip, Benchmark, BenchmarkConfig};
use dignet::data::manifest::{write_manifest, ManifestRow};
use dignet::data::types::{
    DegradationConfig, Environment, GestureClass, Split,
};
use dignet::data::{clipio, synth};
use dignet::error::{DigError, Result};
use dignet::metrics::{self, PredictionRecord};
use dignet::model::net::{forward, predict};
use dignet::model::{load_checkpoint, save_checkpoint, ModelConfig};
use dignet::nn::params::ParamStore;
use dignet::preprocess::detect::{BoundingBox, FullFrameDetector, GroundTruthDetector, PersonDetector};
use dignet::preprocess::embed::BlockMeanEmbedder;
use dignet::preprocess::pipeline::preprocess;
use dignet::preprocess::{read_store, write_store, ProcessedClip};
use dignet::report::{self, Series};
use dignet::stream::stream_clip;
use dignet::train::{
    self, extend_head, train as run_train, AblationVariant, TrainConfig, TrainItem,
};

/// Distance-bin edges used by every evaluation.
const BIN_EDGES: [f64; 5] = [2.0, 9.0, 16.0, 23.0, 30.0];

#[derive(Parser)]
#[command(name = "dignet", about = "Hyper-range gesture recognition harness")]
struct Cli {
    /// Master seed; every stage derives its streams from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory for artifacts.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// JSON harness config; missing fields take defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for clip generation. Training is always serial.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Render a synthetic corpus to disk with a manifest and ground-truth
    /// person boxes.
    Synth {
        #[arg(long)]
        clips_per_class: Option<usize>,
        /// Degradation preset name (default none).
        #[arg(long)]
        degradation: Option<String>,
    },
    /// Preprocess a manifest into per-split feature stores.
    Prepare {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Train on prepared stores and save the best checkpoint.
    Train {
        /// Directory holding train.dgps and val.dgps.
        #[arg(long)]
        data_dir: PathBuf,
    },
    /// Evaluate a checkpoint on a prepared store; writes report and figures.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Feature store to evaluate (e.g. test.dgps).
        #[arg(long)]
        data: PathBuf,
    },
    /// Train and evaluate every ablation variant on the in-memory benchmark.
    Ablate,
    /// Success rate versus source clip length.
    SweepFrames {
        /// Comma-separated clip lengths.
        #[arg(long, value_delimiter = ',', default_values_t = vec![1, 8, 16])]
        frames: Vec<usize>,
    },
    /// Success rate versus training-set size.
    SweepData {
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.1, 0.25, 0.5, 1.0])]
        fractions: Vec<f64>,
        #[arg(long, default_value_t = 10)]
        repeats: usize,
    },
    /// Train on a class subset, then fine-tune the extended head on
    /// growing numbers of new-class clips.
    Finetune {
        #[arg(long, default_value_t = 8)]
        base_classes: usize,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0, 2, 4, 6])]
        counts: Vec<usize>,
    },
    /// Sliding-window inference over one synthetic clip with FPS report.
    Stream {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 8)]
        window: usize,
        #[arg(long, default_value_t = 1)]
        stride: usize,
    },
}

/// Everything the harness needs in one config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct HarnessConfig {
    model: ModelConfig,
    train: TrainConfig,
    benchmark: BenchmarkConfig,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig {
            model: ModelConfig::desk(),
            train: TrainConfig { epochs: 30, ..TrainConfig::default() },
            benchmark: BenchmarkConfig::reduced(),
        }
    }
}

fn load_config(path: Option<&Path>, seed: u64) -> Result<HarnessConfig> {
    let mut cfg = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| DigError::Load(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| DigError::Config(format!("{}: {e}", p.display())))?
        }
        None => HarnessConfig::default(),
    };
    cfg.train.seed = seed;
    cfg.benchmark.seed = seed;
    cfg.model.validate()?;
    cfg.train.validate()?;
    cfg.benchmark.validate()?;
    if cfg.benchmark.preprocess.keyframes != cfg.model.frames {
        return Err(DigError::Config(format!(
            "benchmark keeps {} keyframes but the model expects {}",
            cfg.benchmark.preprocess.keyframes, cfg.model.frames
        )));
    }
    Ok(cfg)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| DigError::Load(format!("{}: {e}", dir.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| DigError::Validation(format!("serialization: {e}")))?;
    std::fs::write(path, text).map_err(|e| DigError::Load(format!("{}: {e}", path.display())))
}

fn class_names() -> Vec<&'static str> {
    GestureClass::ALL.iter().map(|c| c.name()).collect()
}

fn boxes_path(clip_path: &Path) -> PathBuf {
    let mut p = clip_path.as_os_str().to_owned();
    p.push(".boxes.json");
    PathBuf::from(p)
}

fn cmd_synth(
    cli: &Cli,
    cfg: &HarnessConfig,
    clips_per_class: Option<usize>,
    degradation: Option<&str>,
) -> Result<()> {
    let mut bcfg = cfg.benchmark.clone();
    if let Some(n) = clips_per_class {
        bcfg.clips_per_class = n;
    }
    if let Some(name) = degradation {
        bcfg.degradation = DegradationConfig::preset(name)?;
    }
    let clip_dir = cli.out_dir.join("clips");
    ensure_dir(&clip_dir)?;
    let mut rows = Vec::new();
    for &class in &bcfg.classes {
        for i in 0..bcfg.clips_per_class {
            let spec = bench::clip_spec(&bcfg, class, i);
            let clip_seed =
                bcfg.seed ^ 0x636c6970 ^ ((class.index() as u64) << 40) ^ (i as u64);
            let out = synth::synth_clip_full(&spec, &bcfg.degradation, clip_seed)?;
            let rel = format!("clips/{}-{i:04}.dgv", class.name());
            let clip_path = cli.out_dir.join(&rel);
            clipio::write_packed(&clip_path, &out.sample.video)?;
            let boxes: Vec<(f32, f32, f32, f32)> =
                out.boxes.iter().map(|b| (b.x, b.y, b.w, b.h)).collect();
            write_json(&boxes_path(&clip_path), &boxes)?;
            // Deterministic split by clip index within each class.
            let split = match i % 6 {
                0 => Split::Val,
                1 => Split::Test,
                _ => Split::Train,
            };
            rows.push(ManifestRow {
                clip: rel,
                rho: spec.rho,
                class: class.name().to_string(),
                split,
                environment: Environment::Synthetic,
            });
        }
    }
    let manifest = cli.out_dir.join("manifest.jsonl");
    write_manifest(&manifest, &rows)?;
    println!("wrote {} clips and {}", rows.len(), manifest.display());
    Ok(())
}

fn cmd_prepare(cli: &Cli, cfg: &HarnessConfig, manifest: &Path) -> Result<()> {
    let rows = dignet::data::manifest::read_rows(manifest)?;
    let samples = dignet::data::manifest::load_manifest(manifest)?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let embedder = BlockMeanEmbedder::default();
    let mut by_split: Vec<(Split, Vec<ProcessedClip>)> =
        vec![(Split::Train, Vec::new()), (Split::Val, Vec::new()), (Split::Test, Vec::new())];
    for (idx, ((_, row), sample)) in rows.iter().zip(&samples).enumerate() {
        let clip_path = base.join(&row.clip);
        let bp = boxes_path(&clip_path);
        let detector: Box<dyn PersonDetector> = if bp.exists() {
            let text = std::fs::read_to_string(&bp)
                .map_err(|e| DigError::Load(format!("{}: {e}", bp.display())))?;
            let boxes: Vec<(f32, f32, f32, f32)> = serde_json::from_str(&text)
                .map_err(|e| DigError::Validation(format!("{}: {e}", bp.display())))?;
            Box::new(GroundTruthDetector {
                boxes: boxes
                    .into_iter()
                    .map(|(x, y, w, h)| BoundingBox { x, y, width: w, height: h })
                    .collect(),
            })
        } else {
            Box::new(FullFrameDetector)
        };
        let clip = preprocess(
            sample,
            detector.as_ref(),
            &embedder,
            &cfg.benchmark.preprocess,
            cli.seed ^ idx as u64,
        )?;
        by_split
            .iter_mut()
            .find(|(s, _)| *s == row.split)
            .unwrap()
            .1
            .push(clip);
    }
    ensure_dir(&cli.out_dir)?;
    for (split, clips) in &by_split {
        let name = match split {
            Split::Train => "train.dgps",
            Split::Val => "val.dgps",
            Split::Test => "test.dgps",
        };
        let path = cli.out_dir.join(name);
        write_store(&path, clips)?;
        println!("{}: {} clips", path.display(), clips.len());
    }
    Ok(())
}

fn items_from_store(path: &Path, model: &ModelConfig) -> Result<Vec<(TrainItem, f32)>> {
    let clips = read_store(path)?;
    clips
        .iter()
        .map(|c| Ok((TrainItem::from_clip(c, model)?, c.rho)))
        .collect()
}

fn cmd_train(cli: &Cli, cfg: &HarnessConfig, data_dir: &Path) -> Result<()> {
    let train_items: Vec<TrainItem> = items_from_store(&data_dir.join("train.dgps"), &cfg.model)?
        .into_iter()
        .map(|(i, _)| i)
        .collect();
    let val_items: Vec<TrainItem> = items_from_store(&data_dir.join("val.dgps"), &cfg.model)?
        .into_iter()
        .map(|(i, _)| i)
        .collect();
    let outcome = run_train(&cfg.model, &cfg.train, &train_items, &val_items)?;
    ensure_dir(&cli.out_dir)?;
    save_checkpoint(&cli.out_dir.join("best.dgck"), &cfg.model, &outcome.store)?;
    train::write_log_jsonl(&cli.out_dir.join("log.jsonl"), &outcome.logs)?;
    println!(
        "trained {} epochs, best val loss {:.4} at epoch {}, diverged: {}",
        outcome.logs.len(),
        outcome.best_val_loss,
        outcome.best_epoch,
        outcome.diverged
    );
    Ok(())
}

/// Whole-clip prediction records for a set of items.
fn predict_records(
    store: &mut ParamStore,
    model: &ModelConfig,
    items: &[(TrainItem, f32)],
) -> Result<Vec<PredictionRecord>> {
    items
        .iter()
        .enumerate()
        .map(|(i, (item, rho))| {
            let pass = forward(store, model, &item.input, None)?;
            let predicted = predict(&pass);
            Ok(PredictionRecord {
                clip_id: format!("clip-{i:04}"),
                true_label: item.label,
                predicted,
                rho: *rho as f64,
                window_predictions: vec![predicted],
                scores: pass.graph.value(pass.probs).iter().copied().collect(),
            })
        })
        .collect()
}

fn cmd_eval(cli: &Cli, checkpoint: &Path, data: &Path) -> Result<()> {
    let (model, mut store) = load_checkpoint(checkpoint)?;
    let items = items_from_store(data, &model)?;
    let records = predict_records(&mut store, &model, &items)?;
    let rep = metrics::compute_report(&records, model.num_classes, &BIN_EDGES)?;
    ensure_dir(&cli.out_dir)?;
    report::write_report_json(&cli.out_dir.join("report.json"), &rep)?;
    report::emit_figures(&cli.out_dir.join("figures"), &rep, &class_names())?;
    println!(
        "success {:.3}  dwa {:.3}  gss {:.3}  f1 {:.3}  map {:.3}",
        rep.success_rate, rep.dwa_normalized, rep.gss, rep.macro_f1, rep.mean_ap
    );
    Ok(())
}

fn bench_records(
    store: &mut ParamStore,
    model: &ModelConfig,
    clips: &[BenchClip],
) -> Result<Vec<PredictionRecord>> {
    clips
        .iter()
        .map(|c| {
            let pass = forward(store, model, &c.item.input, None)?;
            let predicted = predict(&pass);
            Ok(PredictionRecord {
                clip_id: c.clip_id.clone(),
                true_label: c.item.label,
                predicted,
                rho: c.rho as f64,
                window_predictions: vec![predicted],
                scores: pass.graph.value(pass.probs).iter().copied().collect(),
            })
        })
        .collect()
}

/// Trains on a benchmark and reports test success rate.
fn train_and_score(
    model: &ModelConfig,
    tcfg: &TrainConfig,
    bench: &Benchmark,
) -> Result<(f64, ParamStore)> {
    let outcome = run_train(
        model,
        tcfg,
        &Benchmark::items(&bench.train),
        &Benchmark::items(&bench.val),
    )?;
    let mut store = outcome.store;
    let records = bench_records(&mut store, model, &bench.test)?;
    Ok((metrics::success_rate(&records)?, store))
}

#[derive(Debug, Serialize)]
struct VariantResult {
    variant: String,
    success: Option<f64>,
    error: Option<String>,
}

fn cmd_ablate(cli: &Cli, cfg: &HarnessConfig) -> Result<()> {
    ensure_dir(&cli.out_dir)?;
    let mut results = Vec::new();
    for v in AblationVariant::all() {
        let (model, tcfg, frames) =
            train::variant_configs(&cfg.model, &cfg.train, cfg.benchmark.frame_count, v);
        let mut bcfg = cfg.benchmark.clone();
        bcfg.frame_count = frames;
        let run = bench::generate_with_workers(&bcfg, &model, cli.workers)
            .and_then(|bench| train_and_score(&model, &tcfg, &bench));
        // A failing variant is recorded, not fatal: the rest still run.
        let result = match run {
            Ok((success, _)) => VariantResult {
                variant: v.name().into(),
                success: Some(success),
                error: None,
            },
            Err(e) => {
                log::warn!("variant {} failed: {e}", v.name());
                VariantResult { variant: v.name().into(), success: None, error: Some(e.to_string()) }
            }
        };
        if let Some(s) = result.success {
            println!("{:<22} {:.3}", result.variant, s);
        } else {
            println!("{:<22} FAILED", result.variant);
        }
        results.push(result);
    }
    write_json(&cli.out_dir.join("ablation.json"), &results)
}

fn cmd_sweep_frames(cli: &Cli, cfg: &HarnessConfig, frames: &[usize]) -> Result<()> {
    ensure_dir(&cli.out_dir)?;
    let mut table = Vec::new();
    for &n in frames {
        let mut bcfg = cfg.benchmark.clone();
        bcfg.frame_count = n;
        let run = bench::generate_with_workers(&bcfg, &cfg.model, cli.workers)
            .and_then(|bench| train_and_score(&cfg.model, &cfg.train, &bench));
        match run {
            Ok((success, _)) => {
                println!("n={n:<4} success {success:.3}");
                table.push(serde_json::json!({"frames": n, "success": success}));
            }
            Err(e) => {
                log::warn!("frame count {n} failed: {e}");
                table.push(serde_json::json!({"frames": n, "error": e.to_string()}));
            }
        }
    }
    write_json(&cli.out_dir.join("sweep_frames.json"), &table)?;
    let pts: Vec<(f64, f64)> = table
        .iter()
        .filter_map(|r| Some((r["frames"].as_u64()? as f64, r["success"].as_f64()?)))
        .collect();
    if pts.len() >= 2 {
        report::line_plot(
            &cli.out_dir.join("sweep_frames.svg"),
            "Success rate vs clip length",
            "frames",
            "success rate",
            &[Series { label: "success".into(), points: pts }],
        )?;
    }
    Ok(())
}

fn cmd_sweep_data(
    cli: &Cli,
    cfg: &HarnessConfig,
    fractions: &[f64],
    repeats: usize,
) -> Result<()> {
    if fractions.iter().any(|&f| !(0.0..=1.0).contains(&f) || f == 0.0) {
        return Err(DigError::Config("fractions must lie in (0, 1]".into()));
    }
    ensure_dir(&cli.out_dir)?;
    let bench = bench::generate_with_workers(&cfg.benchmark, &cfg.model, cli.workers)?;
    let mut table = Vec::new();
    for &frac in fractions {
        let count = ((bench.train.len() as f64 * frac).round() as usize).max(1);
        let mut scores = Vec::new();
        for rep in 0..repeats {
            let sub = bench::subsample(&bench.train, count, cli.seed ^ (rep as u64) << 8);
            let reduced = Benchmark {
                train: sub,
                val: bench.val.clone(),
                test: bench.test.clone(),
            };
            let mut tcfg = cfg.train.clone();
            tcfg.seed = cli.seed ^ (rep as u64);
            match train_and_score(&cfg.model, &tcfg, &reduced) {
                Ok((s, _)) => scores.push(s),
                Err(e) => log::warn!("fraction {frac} repeat {rep} failed: {e}"),
            }
        }
        if scores.is_empty() {
            table.push(serde_json::json!({"fraction": frac, "error": "all repeats failed"}));
            continue;
        }
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / scores.len() as f64;
        println!("fraction {frac:<5} clips {count:<5} mean {mean:.3} std {:.3}", var.sqrt());
        table.push(serde_json::json!({
            "fraction": frac, "clips": count, "mean": mean, "std": var.sqrt(),
            "scores": scores,
        }));
    }
    write_json(&cli.out_dir.join("sweep_data.json"), &table)
}

fn cmd_finetune(
    cli: &Cli,
    cfg: &HarnessConfig,
    base_classes: usize,
    counts: &[usize],
) -> Result<()> {
    if base_classes == 0 || base_classes >= GestureClass::ALL.len() {
        return Err(DigError::Config(format!(
            "base_classes must be in 1..{}",
            GestureClass::ALL.len()
        )));
    }
    ensure_dir(&cli.out_dir)?;
    // Base phase: train on the first `base_classes` classes only.
    let mut base_bcfg = cfg.benchmark.clone();
    base_bcfg.classes = GestureClass::ALL[..base_classes].to_vec();
    let mut base_model = cfg.model.clone();
    base_model.num_classes = base_classes;
    let base_bench = bench::generate_with_workers(&base_bcfg, &base_model, cli.workers)?;
    let (base_success, base_store) = train_and_score(&base_model, &cfg.train, &base_bench)?;
    println!("base model ({base_classes} classes): success {base_success:.3}");

    // Extension phase: new classes appear only in the fine-tuning pool.
    let (full_model, extended_store) =
        extend_head(&base_store, &base_model, GestureClass::ALL.len())?;
    let mut new_bcfg = cfg.benchmark.clone();
    new_bcfg.classes = GestureClass::ALL[base_classes..].to_vec();
    let new_bench = bench::generate_with_workers(&new_bcfg, &full_model, cli.workers)?;

    let mut curve = Vec::new();
    for &count in counts {
        let mut store = train::store_with_params(&full_model, &extended_store);
        let success = if count == 0 {
            let records = bench_records(&mut store, &full_model, &new_bench.test)?;
            metrics::success_rate(&records)?
        } else {
            let mut pool = Vec::new();
            for class in &new_bcfg.classes {
                let of_class: Vec<BenchClip> = new_bench
                    .train
                    .iter()
                    .filter(|c| c.class == *class)
                    .take(count)
                    .cloned()
                    .collect();
                pool.extend(of_class);
            }
            // Mix in old-class clips so the old prototypes stay anchored.
            pool.extend(base_bench.train.iter().take(pool.len()).cloned());
            let tune_cfg = TrainConfig {
                epochs: cfg.train.epochs.min(10),
                lr: cfg.train.lr * 0.5,
                ..cfg.train.clone()
            };
            let outcome = train::train_with_init(
                &full_model,
                &tune_cfg,
                Some(&extended_store),
                &Benchmark::items(&pool),
                &Benchmark::items(&new_bench.val),
            )?;
            store = train::store_with_params(&full_model, &outcome.store);
            let records = bench_records(&mut store, &full_model, &new_bench.test)?;
            metrics::success_rate(&records)?
        };
        println!("fine-tune clips per class {count:<4} new-class success {success:.3}");
        curve.push(serde_json::json!({"clips_per_class": count, "new_class_success": success}));
    }
    write_json(&cli.out_dir.join("finetune_curve.json"), &curve)
}

fn cmd_stream(
    cli: &Cli,
    cfg: &HarnessConfig,
    checkpoint: &Path,
    window: usize,
    stride: usize,
) -> Result<()> {
    let (model, mut store) = load_checkpoint(checkpoint)?;
    let bcfg = &cfg.benchmark;
    let spec = bench::clip_spec(bcfg, GestureClass::Beckoning, 0);
    let out = synth::synth_clip_full(&spec, &bcfg.degradation, cli.seed)?;
    let detector = GroundTruthDetector {
        boxes: out
            .boxes
            .iter()
            .map(|b| BoundingBox { x: b.x, y: b.y, width: b.w, height: b.h })
            .collect(),
    };
    let rep = stream_clip(
        &mut store,
        &model,
        &out.sample,
        &detector,
        &BlockMeanEmbedder::default(),
        &bcfg.preprocess,
        window,
        stride,
        cli.seed,
    )?;
    ensure_dir(&cli.out_dir)?;
    write_json(
        &cli.out_dir.join("stream.json"),
        &serde_json::json!({
            "window": window,
            "stride": stride,
            "frames": rep.frames_seen,
            "predictions": rep.window_labels(),
            "fps": rep.fps,
        }),
    )?;
    println!(
        "{} windows over {} frames at {:.1} windows/s",
        rep.predictions.len(),
        rep.frames_seen,
        rep.fps
    );
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli.config.as_deref(), cli.seed)?;
    match &cli.cmd {
        Cmd::Synth { clips_per_class, degradation } => {
            cmd_synth(cli, &cfg, *clips_per_class, degradation.as_deref())
        }
        Cmd::Prepare { manifest } => cmd_prepare(cli, &cfg, manifest),
        Cmd::Train { data_dir } => cmd_train(cli, &cfg, data_dir),
        Cmd::Eval { checkpoint, data } => cmd_eval(cli, checkpoint, data),
        Cmd::Ablate => cmd_ablate(cli, &cfg),
        Cmd::SweepFrames { frames } => cmd_sweep_frames(cli, &cfg, frames),
        Cmd::SweepData { fractions, repeats } => cmd_sweep_data(cli, &cfg, fractions, *repeats),
        Cmd::Finetune { base_classes, counts } => {
            cmd_finetune(cli, &cfg, *base_classes, counts)
        }
        Cmd::Stream { checkpoint, window, stride } => {
            cmd_stream(cli, &cfg, checkpoint, *window, *stride)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
