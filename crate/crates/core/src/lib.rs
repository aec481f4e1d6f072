//! Cluster-curve based control of software development projects.
//!
//! Historical projects are turned into characteristic curves on a shared
//! grid ([`curve`]), grouped by threshold complete-linkage clustering
//! ([`clustering`]) into cluster curves with aggregated contexts
//! ([`context`]), and stored as an [`experience::ExperienceBase`]. A new
//! project is planned from the cluster whose context matches best, tracked
//! against a tolerance corridor, and replanned by static, dynamic or hybrid
//! reselection ([`controller`]). [`simulator`] generates synthetic
//! portfolios and evaluates the whole loop; [`report`] renders plot-ready
//! output.

pub mod clustering;
pub mod context;
pub mod controller;
pub mod curve;
pub mod error;
pub mod experience;
pub mod persist;
pub mod report;
pub mod simulator;

pub use clustering::{cluster_curves, suggest_threshold, Cluster, ClusteringConfig, Dendrogram, Merge};
pub use context::{
    aggregate_contexts, compute_ranges, similarity, AggregatedContext, AggregatedFactor, ContextSchema, ContextVector,
    FactorKind, FactorRanges, FactorSpec, FactorValue,
};
pub use controller::{
    Adaptation, ControlConfig, ControlEvent, Controller, EventKind, ReplanCause, ReplanReason, SelectionStrategy,
    TrackedProject,
};
pub use curve::{
    distance, prefix_distance, resample, CharacteristicCurve, CurveMetric, CurveMode, Grid, RawSeries,
};
pub use error::{Error, Result};
pub use experience::{build, ingest, BuildConfig, ExperienceBase, ProjectRecord, ProjectSet, ThresholdRule};
