//! Byzantine-resilient peer-to-peer distributed gradient descent: a simulator
//! for four resilient aggregation algorithms (SDMMFD, SDFD, CWTM, RVO), the
//! directed-graph robustness machinery they rely on, and closed-form
//! convergence/consensus bounds, so the geometric-convergence and
//! approximate-consensus behavior can be checked empirically.
//!
//! Crate layout:
//!
//! * [`functions`] — local cost functions, global minimizer, enclosing balls
//! * [`graph`] — digraphs, `r`-robustness, rootedness, certified generation
//! * [`filters`] — the per-round aggregation/filtering operations
//! * [`adversary`] — Byzantine placement validation and payload fabrication
//! * [`engine`] — the synchronous round loop and per-algorithm wiring
//! * [`theory`] — convergence radius, rate, consensus diameter formulas
//! * [`metrics`] — per-round measurement, rate fitting, CSV output
//! * [`config`] — experiment configuration documents
//! * [`harness`] — run-grid execution (rayon-parallel by default; build with
//!   `--no-default-features` for the sequential fallback)

pub mod adversary;
pub mod config;
pub mod engine;
pub mod error;
pub mod filters;
pub mod functions;
pub mod graph;
pub mod harness;
pub mod lp;
pub mod metrics;
pub mod seed;
pub mod theory;

pub use error::{Error, Result};
