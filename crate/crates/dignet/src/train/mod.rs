//! Training loop: class-balanced batching, cosine-annealed sign-momentum
//! optimization, decoupled weight decay, early stopping on validation loss,
//! ablation variant wiring, and head extension for new classes.

use std::io::Write as _;
use std::path::Path;

use ndarray::{Array1, Ix1, Ix2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DigError, Result};
use crate::loss::{cross_entropy, register_margin_params, rstdal_loss, MarginRaws};
use crate::model::net::{forward, predict, register_params, ModelInput};
use crate::model::{HeadKind, ModelConfig};
use crate::nn::graph::Arr;
use crate::nn::optim::{cosine_lr, Optimizer, OptimizerConfig, OptimizerKind};
use crate::nn::params::ParamStore;
use crate::preprocess::ProcessedClip;

/// One training sample in model coordinates.
#[derive(Debug, Clone)]
pub struct TrainItem {
    pub input: ModelInput,
    pub label: usize,
    /// Subject distance in meters.
    pub rho: f64,
    /// Motion magnitude from preprocessing.
    pub xi: f64,
}

impl TrainItem {
    pub fn from_clip(clip: &ProcessedClip, cfg: &ModelConfig) -> Result<TrainItem> {
        Ok(TrainItem {
            input: crate::model::net::model_input_from_clip(clip, cfg)?,
            label: clip.label.index(),
            rho: clip.rho as f64,
            xi: clip.xi as f64,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    Rstdal,
    CrossEntropy,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub optimizer: OptimizerKind,
    pub loss: LossKind,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.0037,
            epochs: 100,
            batch_size: 16,
            weight_decay: 1e-4,
            patience: 10,
            optimizer: OptimizerKind::Lion,
            loss: LossKind::Rstdal,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr <= 0.0 && self.lr != 0.0 {
            return Err(DigError::Config("learning rate must be >= 0".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(DigError::Config("epochs and batch size must be positive".into()));
        }
        if self.weight_decay < 0.0 {
            return Err(DigError::Config("weight decay must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_success: f64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    /// Parameters of the best validation epoch (or the initial parameters if
    /// training diverged before completing an epoch).
    pub store: ParamStore,
    pub logs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub diverged: bool,
}

/// Writes one JSON object per epoch.
pub fn write_log_jsonl(path: &Path, logs: &[EpochLog]) -> Result<()> {
    let mut f = std::fs::File::create(path)
        .map_err(|e| DigError::Load(format!("{}: {e}", path.display())))?;
    for l in logs {
        let line = serde_json::to_string(l)
            .map_err(|e| DigError::Validation(format!("log serialization: {e}")))?;
        writeln!(f, "{line}").map_err(|e| DigError::Load(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn head_scale(cfg: &ModelConfig) -> Result<f64> {
    match cfg.head {
        HeadKind::Prototype { scale } => Ok(scale),
        HeadKind::Affine => Err(DigError::Config(
            "the margin loss requires the prototype head".into(),
        )),
    }
}

/// Loss and store-aligned gradients for one sample.
fn sample_grads(
    store: &mut ParamStore,
    cfg: &ModelConfig,
    item: &TrainItem,
    loss_kind: LossKind,
    dropout_rng: &mut ChaCha8Rng,
) -> Result<(f64, Vec<Arr>)> {
    let pass = forward(store, cfg, &item.input, Some(dropout_rng))?;
    match loss_kind {
        LossKind::Rstdal => {
            let scale = head_scale(cfg)?;
            let embedding = pass
                .graph
                .value(pass.embedding)
                .view()
                .into_dimensionality::<Ix1>()
                .map_err(|e| DigError::Shape(e.to_string()))?
                .to_owned();
            let protos = store
                .value("prototypes")
                .view()
                .into_dimensionality::<Ix2>()
                .map_err(|e| DigError::Shape(e.to_string()))?
                .to_owned();
            let raws = MarginRaws::from_store(store);
            let out = rstdal_loss(
                &embedding, &protos, item.label, item.rho, item.xi, scale, &raws,
            )?;
            let grads = pass
                .graph
                .backward_from(pass.embedding, out.grad_embedding.into_dyn());
            let mut pg = pass.graph.param_grads(store, &grads);
            let pi = store.index_of("prototypes").unwrap();
            pg[pi] += &out.grad_prototypes.into_dyn();
            for (name, g) in [
                ("margin.mu_raw", out.grad_margin_raws[0]),
                ("margin.lambda_raw", out.grad_margin_raws[1]),
                ("margin.rho0_raw", out.grad_margin_raws[2]),
            ] {
                let i = store.index_of(name).unwrap();
                pg[i] += &ndarray::arr1(&[g]).into_dyn();
            }
            Ok((out.loss, pg))
        }
        LossKind::CrossEntropy => {
            let logits = pass
                .graph
                .value(pass.logits)
                .view()
                .into_dimensionality::<Ix1>()
                .map_err(|e| DigError::Shape(e.to_string()))?
                .to_owned();
            let (loss, grad) = cross_entropy(&logits, item.label)?;
            let grads = pass.graph.backward_from(pass.logits, grad.into_dyn());
            Ok((loss, pass.graph.param_grads(store, &grads)))
        }
    }
}

/// Loss and hit flag for one sample without dropout or gradients.
pub fn evaluate_item(
    store: &mut ParamStore,
    cfg: &ModelConfig,
    item: &TrainItem,
    loss_kind: LossKind,
) -> Result<(f64, bool)> {
    let pass = forward(store, cfg, &item.input, None)?;
    let hit = predict(&pass) == item.label;
    let loss = match loss_kind {
        LossKind::Rstdal => {
            let scale = head_scale(cfg)?;
            let embedding = pass
                .graph
                .value(pass.embedding)
                .view()
                .into_dimensionality::<Ix1>()
                .unwrap()
                .to_owned();
            let protos = store
                .value("prototypes")
                .view()
                .into_dimensionality::<Ix2>()
                .unwrap()
                .to_owned();
            let raws = MarginRaws::from_store(store);
            rstdal_loss(&embedding, &protos, item.label, item.rho, item.xi, scale, &raws)?.loss
        }
        LossKind::CrossEntropy => {
            let logits = pass
                .graph
                .value(pass.logits)
                .view()
                .into_dimensionality::<Ix1>()
                .unwrap()
                .to_owned();
            cross_entropy(&logits, item.label)?.0
        }
    };
    Ok((loss, hit))
}

/// Class-balanced epoch order: per-class shuffles interleaved round-robin.
fn balanced_order(items: &[TrainItem], num_classes: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, it) in items.iter().enumerate() {
        by_class[it.label].push(i);
    }
    for bucket in &mut by_class {
        bucket.shuffle(rng);
    }
    let mut order = Vec::with_capacity(items.len());
    let mut cursor = vec![0usize; num_classes];
    while order.len() < items.len() {
        for c in 0..num_classes {
            if cursor[c] < by_class[c].len() {
                order.push(by_class[c][cursor[c]]);
                cursor[c] += 1;
            }
        }
    }
    order
}

/// Rescales each prototype row back to unit norm in place.
fn renormalize_prototypes(store: &mut ParamStore) {
    let i = match store.index_of("prototypes") {
        Some(i) => i,
        None => return,
    };
    let v = store.value_at_mut(i);
    let mut m = v.view_mut().into_dimensionality::<Ix2>().unwrap();
    for mut row in m.rows_mut() {
        let n = row.dot(&row).sqrt();
        if n > 0.0 {
            row.mapv_inplace(|x| x / n);
        }
    }
}

/// Trains a model, returning the best-validation-loss parameters.
///
/// Deterministic given the seed: data order, dropout, and gradient
/// accumulation order are all fixed. A non-finite loss or a failed forward
/// pass aborts the run and returns the best parameters seen so far with
/// `diverged` set.
pub fn train(
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    train_items: &[TrainItem],
    val_items: &[TrainItem],
) -> Result<TrainOutcome> {
    train_with_init(model_cfg, cfg, None, train_items, val_items)
}

/// [`train`], optionally warm-starting from an existing parameter set
/// (same-shaped entries are copied; anything else keeps its fresh init).
pub fn train_with_init(
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    init: Option<&ParamStore>,
    train_items: &[TrainItem],
    val_items: &[TrainItem],
) -> Result<TrainOutcome> {
    cfg.validate()?;
    model_cfg.validate()?;
    if train_items.is_empty() || val_items.is_empty() {
        return Err(DigError::Validation("train and val splits must be nonempty".into()));
    }
    if cfg.loss == LossKind::Rstdal {
        head_scale(model_cfg)?;
    }
    for it in train_items.iter().chain(val_items) {
        if it.label >= model_cfg.num_classes {
            return Err(DigError::Validation(format!(
                "label {} out of range for {} classes",
                it.label, model_cfg.num_classes
            )));
        }
    }

    let mut store = ParamStore::new(cfg.seed);
    register_params(&mut store, model_cfg);
    if cfg.loss == LossKind::Rstdal {
        register_margin_params(&mut store);
    }
    if let Some(init) = init {
        for i in 0..store.len() {
            let name = store.name_at(i).to_string();
            if let Some(j) = init.index_of(&name) {
                if init.value_at(j).shape() == store.value_at(i).shape() {
                    store.set(&name, init.value_at(j).clone());
                }
            }
        }
    }

    let opt_cfg = match cfg.optimizer {
        OptimizerKind::Lion => OptimizerConfig::lion(cfg.lr, cfg.weight_decay),
        OptimizerKind::AdamW => OptimizerConfig::adamw(cfg.lr, cfg.weight_decay),
    };
    let mut opt = Optimizer::new(opt_cfg, &store);
    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x6f72646572);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x64726f70);

    let mut logs = Vec::new();
    let mut best_store = store.clone();
    let mut best_val_loss = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut since_best = 0usize;

    for epoch in 0..cfg.epochs {
        let lr = cosine_lr(cfg.lr, epoch, cfg.epochs);
        let order = balanced_order(train_items, model_cfg.num_classes, &mut order_rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut acc: Option<Vec<Arr>> = None;
            let mut batch_loss = 0.0;
            for &i in batch {
                let (loss, pg) = match sample_grads(
                    &mut store,
                    model_cfg,
                    &train_items[i],
                    cfg.loss,
                    &mut dropout_rng,
                ) {
                    Ok(v) => v,
                    Err(DigError::Numeric(msg)) => {
                        log::warn!("training diverged at epoch {epoch}: {msg}");
                        return Ok(TrainOutcome {
                            store: best_store,
                            logs,
                            best_epoch,
                            best_val_loss,
                            diverged: true,
                        });
                    }
                    Err(e) => return Err(e),
                };
                batch_loss += loss;
                match &mut acc {
                    None => acc = Some(pg),
                    Some(a) => {
                        for (s, g) in a.iter_mut().zip(pg) {
                            *s += &g;
                        }
                    }
                }
            }
            if !batch_loss.is_finite() {
                log::warn!("training diverged at epoch {epoch}: non-finite batch loss");
                return Ok(TrainOutcome {
                    store: best_store,
                    logs,
                    best_epoch,
                    best_val_loss,
                    diverged: true,
                });
            }
            let n = batch.len() as f64;
            let mut grads = acc.unwrap();
            for g in &mut grads {
                g.mapv_inplace(|v| v / n);
            }
            opt.step(&mut store, &grads, lr);
            if cfg.loss == LossKind::Rstdal {
                renormalize_prototypes(&mut store);
            }
            epoch_loss += batch_loss;
        }
        let train_loss = epoch_loss / train_items.len() as f64;

        let mut val_loss = 0.0;
        let mut hits = 0usize;
        let mut val_failed = false;
        for it in val_items {
            match evaluate_item(&mut store, model_cfg, it, cfg.loss) {
                Ok((l, hit)) => {
                    val_loss += l;
                    hits += usize::from(hit);
                }
                Err(DigError::Numeric(msg)) => {
                    log::warn!("validation diverged at epoch {epoch}: {msg}");
                    val_failed = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        if val_failed || !val_loss.is_finite() {
            return Ok(TrainOutcome {
                store: best_store,
                logs,
                best_epoch,
                best_val_loss,
                diverged: true,
            });
        }
        val_loss /= val_items.len() as f64;
        let val_success = hits as f64 / val_items.len() as f64;
        logs.push(EpochLog { epoch, lr, train_loss, val_loss, val_success });

        if val_loss < best_val_loss {
            best_val_loss = val_loss;
            best_epoch = epoch;
            best_store = store.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }

    Ok(TrainOutcome { store: best_store, logs, best_epoch, best_val_loss, diverged: false })
}

/// The component-removal grid plus the shortened-input variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AblationVariant {
    Full,
    NoDada,
    NoStg,
    NoGraphTransformer,
    NoRstdal,
    ShortSequence,
}

impl AblationVariant {
    pub fn all() -> [AblationVariant; 6] {
        [
            AblationVariant::Full,
            AblationVariant::NoDada,
            AblationVariant::NoStg,
            AblationVariant::NoGraphTransformer,
            AblationVariant::NoRstdal,
            AblationVariant::ShortSequence,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            AblationVariant::Full => "full",
            AblationVariant::NoDada => "no-dada",
            AblationVariant::NoStg => "no-stg",
            AblationVariant::NoGraphTransformer => "no-graph-transformer",
            AblationVariant::NoRstdal => "no-rstdal",
            AblationVariant::ShortSequence => "short-sequence",
        }
    }

    pub fn parse(name: &str) -> Result<AblationVariant> {
        AblationVariant::all()
            .into_iter()
            .find(|v| v.name() == name)
            .ok_or_else(|| DigError::Config(format!("unknown ablation variant '{name}'")))
    }
}

/// Applies one variant to the base configs. Returns the model and training
/// configs plus the source clip length in frames (before keyframe
/// reduction); only the shortened-input variant changes the latter.
pub fn variant_configs(
    base_model: &ModelConfig,
    base_train: &TrainConfig,
    base_clip_frames: usize,
    v: AblationVariant,
) -> (ModelConfig, TrainConfig, usize) {
    let mut m = base_model.clone();
    let mut t = base_train.clone();
    let mut frames = base_clip_frames;
    match v {
        AblationVariant::Full => {}
        AblationVariant::NoDada => m.use_dada = false,
        AblationVariant::NoStg => m.use_stg = false,
        AblationVariant::NoGraphTransformer => m.use_transformer = false,
        AblationVariant::NoRstdal => t.loss = LossKind::CrossEntropy,
        AblationVariant::ShortSequence => frames = 16,
    }
    (m, t, frames)
}

/// Grows a trained head from `old` classes to `new_num_classes`.
///
/// Every parameter except the head is copied bit-identically; old prototype
/// rows are preserved and new rows are unit-initialized from the store seed.
pub fn extend_head(
    store: &ParamStore,
    old_cfg: &ModelConfig,
    new_num_classes: usize,
) -> Result<(ModelConfig, ParamStore)> {
    if new_num_classes <= old_cfg.num_classes {
        return Err(DigError::Config(format!(
            "new class count {new_num_classes} must exceed old count {}",
            old_cfg.num_classes
        )));
    }
    let mut new_cfg = old_cfg.clone();
    new_cfg.num_classes = new_num_classes;
    let mut new_store = ParamStore::new(store.seed());
    register_params(&mut new_store, &new_cfg);
    for i in 0..new_store.len() {
        let name = new_store.name_at(i).to_string();
        let Some(old_i) = store.index_of(&name) else { continue };
        let old_val = store.value_at(old_i).clone();
        if new_store.value_at(i).shape() == old_val.shape() {
            new_store.set(&name, old_val);
        } else if name == "prototypes" || name == "head.w" {
            let old_m = old_val.view().into_dimensionality::<Ix2>().unwrap();
            let mut grown = new_store
                .value_at(i)
                .view()
                .into_dimensionality::<Ix2>()
                .unwrap()
                .to_owned();
            if name == "prototypes" {
                // Fresh unit rows for the new classes.
                let mut rng = ChaCha8Rng::seed_from_u64(store.seed() ^ 0x657874656e64);
                for mut row in grown.slice_mut(ndarray::s![old_cfg.num_classes.., ..]).rows_mut() {
                    let mut v: Array1<f64> =
                        Array1::from_shape_fn(row.len(), |_| rng.gen_range(-1.0..1.0));
                    let n = v.dot(&v).sqrt();
                    v.mapv_inplace(|x| x / n);
                    row.assign(&v);
                }
            }
            grown.slice_mut(ndarray::s![..old_cfg.num_classes, ..]).assign(&old_m);
            new_store.set(&name, grown.into_dyn());
        } else if name == "head.b" {
            let old_b = old_val.view().into_dimensionality::<Ix1>().unwrap();
            let mut grown = new_store
                .value_at(i)
                .view()
                .into_dimensionality::<Ix1>()
                .unwrap()
                .to_owned();
            grown.slice_mut(ndarray::s![..old_cfg.num_classes]).assign(&old_b);
            new_store.set(&name, grown.into_dyn());
        }
    }
    Ok((new_cfg, new_store))
}

/// Copies every same-shaped parameter from `from` into a fresh store built
/// for `cfg`; used to resume or fine-tune.
pub fn store_with_params(cfg: &ModelConfig, from: &ParamStore) -> ParamStore {
    let mut s = ParamStore::new(from.seed());
    register_params(&mut s, cfg);
    for i in 0..s.len() {
        let name = s.name_at(i).to_string();
        if let Some(j) = from.index_of(&name) {
            if from.value_at(j).shape() == s.value_at(i).shape() {
                s.set(&name, from.value_at(j).clone());
            }
        }
    }
    s
}
