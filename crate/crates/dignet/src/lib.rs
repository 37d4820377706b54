//! dignet — hyper-range dynamic gesture recognition.
//!
//! The pipeline stages are:
//!
//! 1. **data** – gesture samples, manifest ingestion, augmentation, a synthetic
//!    long-range clip generator, and physical degradation simulators.
//! 2. **preprocess** – keyframe reduction via feature clustering, person crop
//!    with diagonal-ratio extension, resize/normalize, dense optical flow, and
//!    depth provisioning.
//! 3. **model** – depth-conditioned deformable alignment (DADA) stages feeding
//!    a spatio-temporal graph, message passing, graph-transformer encoding,
//!    mean pooling, and a 13-way classification head.
//! 4. **loss** – the distance/motion-adaptive margin softmax objective
//!    (RSTDAL) over unit embeddings and class prototypes.
//! 5. **metrics** – distance-weighted accuracy, gesture stability score, and
//!    standard classification metrics.
//! 6. **train** – Lion/AdamW optimization, cosine schedule, early stopping,
//!    ablations, and fine-tuning for class extension.
//! 7. **stream** – sliding-window online inference with FPS measurement.

pub mod bench;
pub mod data;
pub mod error;
pub mod imops;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod preprocess;
pub mod report;
pub mod stream;
pub mod train;

pub use error::{DigError, Result};
