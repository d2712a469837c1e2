//! Closed-loop, information-gap-guided data augmentation for labeled
//! multivariate time-series datasets.
//!
//! The pipeline models what each generator is good at per class
//! (entropy-normalized, permutation-corrected mutual information between
//! real and generated embeddings), quantifies per-class information gaps
//! (size, distribution, boundary, uncertainty), schedules generation
//! budgets hierarchically across classes and generators, and accepts or
//! rejects each round's candidate augmentation on a joint
//! gap-reduction / model-performance gate.
//!
//! Modules map onto the pipeline stages:
//!
//! * [`dataset`] — windows, ingestion, leakage-safe splitting
//! * [`stats`] — embeddings and the MI / entropy / JS estimators
//! * [`generators`] — the generation strategies and the exploratory
//!   mixture generator, behind one contract
//! * [`capability`] — the generator-capability tensor
//! * [`model`] — downstream classifiers and evaluation metrics
//! * [`gap`] — gap vectors and hierarchical budget scheduling
//! * [`closed_loop`] — the multi-round accept/reject loop
//! * [`energy`] — sampling-frequency energy accounting
//! * [`config`] / [`commands`] — run configuration and CLI entry points

pub mod capability;
pub mod closed_loop;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod energy;
pub mod error;
pub mod gap;
pub mod generators;
pub mod model;
pub mod seeding;
pub mod stats;

pub use error::{Error, Result};
