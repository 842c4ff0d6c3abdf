//! Core algorithms for 3D-mask presentation-attack detection experiments.
//!
//! The crate is organised around a synthetic, fully attribute-labelled face
//! catalog and a supervised contrastive training loop:
//!
//! * [`context`] — the context-attribute schema and the folder-name codec.
//! * [`catalog`] — sample records and the deterministic synthetic generator.
//! * [`protocol`] — train/dev/test split builders for the five protocols.
//! * [`pairs`] — the six contextual pair patterns and batch assembly.
//! * [`model`] — online/target networks, momentum schedule and EMA update.
//! * [`cgd`] — context-guided channel dropout with its ablation variants.
//! * [`loss`] — classification, signed-similarity and total losses.
//! * [`grad`] — reverse-mode derivatives for the fixed architecture.
//! * [`train`] — the full training loop with SGD and per-step schedules.
//! * [`metrics`] — APCER/BPCER/ACER/EER/HTER/AUC and protocol reports.
//! * [`rppg`] — ROI intensity traces, pulse extraction and periodograms.
//!
//! Everything is `no_std` (alloc only) and deterministic given explicit
//! seeds; IO, file formats and the CLI live in the companion `maskpad`
//! crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod catalog;
pub mod cgd;
pub mod context;
pub mod grad;
pub mod loss;
pub mod math;
pub mod metrics;
pub mod model;
pub mod pairs;
pub mod protocol;
pub mod rppg;
pub mod train;

pub use catalog::{Catalog, CatalogView, SampleRecord, SynthConfig};
pub use cgd::{CgdConfig, CgdMask, CgdVariant};
pub use context::VideoAttrs;
pub use metrics::{EvalReport, ScoreSet};
pub use model::{ModelDims, ModelState};
pub use pairs::{ContextPair, PairPattern};
pub use protocol::{ProtocolId, ProtocolSplit};
pub use train::{TrainConfig, TrainLog};
