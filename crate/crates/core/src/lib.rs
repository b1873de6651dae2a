//! Latent role discovery for node-attributed graphs and the multi-resolution
//! maps built on top of it.
//!
//! A graph is explained by a nonnegative node-role membership matrix `X`, a
//! nonnegative role-role interaction matrix `R` and logistic attribute
//! weights `W`. Links form with probability `1 - exp(-x_u' R x_v)` and
//! attributes with probability `sigmoid(w_i' x_v)`. Fitting runs
//! block-coordinate projected gradient ascent whose outer iterations cost
//! time linear in the number of nodes plus edges. Fitted roles are rendered
//! as landmarks joined by roads, and any landmark can be split into
//! sub-roles while the rest of the map is held in place.

pub mod cartographer;
pub mod error;
pub mod graph;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod optimizer;
pub mod par;
pub mod pipeline;
pub mod synth;

pub use cartographer::{build_map, d_map, reduce, zoom, CMode, Lineage, NetworkMap, ZoomSpec};
pub use error::{Error, Result};
pub use graph::{AttributedGraph, LoadOptions};
pub use linalg::Matrix;
pub use metrics::{evaluate, EvaluationReport, HomogeneityReport};
pub use model::{Hyperparams, ModelParams};
pub use optimizer::{fit, FitResult, IterationRecord, OptimizerState};
pub use par::Execution;
pub use synth::{plant_params, sample_graph, PlantedSpec, Structure};
