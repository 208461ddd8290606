//! Reply-structure analysis, bipartite hierarchical block-model topics and
//! Jensen-Shannon clustering of chat-based debates.
//!
//! Numeric types that reach users (distributions, distance matrices,
//! dendrograms, reports) are generic over [`Scalar`]; the aliases below fix
//! them to `f32` or `f64`.

pub mod blockmodel;
pub mod clustering;
pub mod corpus;
pub mod labels;
pub mod network;
pub mod pipeline;
pub mod reply;
pub mod scalar;
pub mod score;
pub mod stats;
pub mod synth;
pub mod topics;

pub use scalar::Scalar;

pub type LabelDistributionF64 = reply::LabelDistribution<f64>;
pub type LabelDistributionF32 = reply::LabelDistribution<f32>;
pub type DistanceMatrixF64 = reply::DistanceMatrix<f64>;
pub type DistanceMatrixF32 = reply::DistanceMatrix<f32>;
pub type DendrogramF64 = clustering::Dendrogram<f64>;
pub type DendrogramF32 = clustering::Dendrogram<f32>;
pub type DebateReportF64 = stats::DebateReport<f64>;
pub type DebateReportF32 = stats::DebateReport<f32>;
