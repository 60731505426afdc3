//! Supervised influencer detection on discrete-time dynamic graphs.
//!
//! The crate is organised in four layers:
//!
//! - [`numcore`]: a small dense tensor engine with a reverse-mode tape, the
//!   Adam optimizer and a finite-difference gradient checker.
//! - [`graph`]: monthly network snapshots with colored edges, per-component
//!   PageRank, the on-disk bundle format and a synthetic referral-network
//!   generator.
//! - [`models`]: GCN / multi-head GAT snapshot encoders, LSTM / GRU decoders,
//!   the classifier head and the ten model assemblies.
//! - [`pipeline`]: sliding windows, SMOTE in embedding space, training with
//!   early stopping, AUC with bootstrap intervals and grid search.

pub mod error;
pub mod graph;
pub mod models;
pub mod numcore;
pub mod pipeline;
pub mod seed;

pub use error::{Error, Result};
