//! Simulation framework for multilingual annotation-budget allocation with
//! active learning.
//!
//! The crate is organised bottom-up:
//!
//! - [`corpus`]: instances, pools, file ingestion, preprocessing and split sampling
//! - [`tasks`]: task kinds and evaluation metrics (accuracy, span F1, UAS/LAS)
//! - [`features`]: hashed feature space shared across languages
//! - [`graph`]: maximum spanning arborescence decoding and tree partition functions
//! - [`models`]: log-linear classifier, tagger and arc-factored parser
//! - [`acquisition`]: uncertainty scores and budget-constrained batch selection
//! - [`experiment`]: MonoA / MMA / SMA allocation, round protocol, curriculum and aggregation
//! - [`synth`]: synthetic multilingual corpus generator
//!
//! Data-parallel loops (pool scoring, evaluation, replicate sweeps) go through
//! [`par`], which uses rayon when the `parallel` feature is enabled and falls
//! back to plain iteration otherwise.

pub mod acquisition;
pub mod corpus;
pub mod experiment;
pub mod features;
pub mod graph;
pub mod models;
pub mod par;
pub mod synth;
pub mod tasks;

pub use acquisition::{AcquisitionScore, StrategyKind};
pub use corpus::{Instance, InstanceId, LanguageTag, Payload, Pool};
pub use experiment::{BudgetSpec, RoundResult, SettingKind};
pub use tasks::{BudgetUnit, MetricReport, TaskKind};
