//! Coupled multi-task learning for a K-way classification task and an
//! M-way binary attribute task whose annotations barely overlap.
//!
//! Two small prediction heads share an MLP trunk. Besides the usual masked
//! per-task cross-entropy terms, training can couple the heads through an
//! explicit class-attribute relatedness matrix:
//!
//! * a **distribution-matching** loss that pushes attribute predictions
//!   toward the mixture of per-class attribute profiles implied by the
//!   class predictions, and
//! * a **soft co-annotation** loss that turns ground-truth attribute
//!   labels into soft class labels and matches the class predictions
//!   against them.
//!
//! The crate also ships the machinery around those losses: relatedness
//! loading and empirical inference, a synthetic generator for the
//! non-overlapping-annotation regime, mask-respecting metrics, a
//! deterministic training harness with five experiment modes, and a
//! multi-seed comparison suite with a negative-transfer report.

pub mod data;
pub mod error;
pub mod gradcheck;
pub mod harness;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod relatedness;

pub use error::{Error, Result};
