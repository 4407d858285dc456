//! A desk-scale laboratory for multi-teacher progressive distillation.
//!
//! The crate provides, bottom to top:
//!
//! * [`tensor`] / [`rng`] — dense double-precision tensors and a
//!   counter-indexed deterministic random stream.
//! * [`model`] — tiny affine+ReLU classifiers that expose mid-network feature
//!   maps, built and trained entirely in this crate.
//! * [`train`] — SGD with momentum, learning-rate schedules, and a pluggable
//!   per-batch loss provider.
//! * [`distill`] — feature-matching distillation: dimension adapters,
//!   the combined task+feature loss, and single-teacher / ensemble stages.
//! * [`costgraph`] — closed-form ridge-regression adaptation costs between
//!   models, assembled into a directed cost graph.
//! * [`curriculum`] — teacher-sequence planners over a cost graph and a
//!   performance table: backward greedy selection plus four baselines.
//! * [`harness`] — config-driven experiments: data synthesis, teacher
//!   training, planning, distillation runs, order sweeps, loss-landscape
//!   probes, and report emission.
//! * [`cli`] — the `mtpd` command-line front end.

// Float validation here uses `!(x >= 0.0)` on purpose: the negated form is
// true for NaN, so NaN inputs are rejected along with negative ones.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod costgraph;
pub mod curriculum;
pub mod distill;
pub mod error;
pub mod harness;
pub mod io;
pub mod model;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
