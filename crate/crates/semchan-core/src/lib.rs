//! Semantic channel model toolkit.
//!
//! Models a vehicular sensing channel on three levels — per-object
//! status, per-trajectory behavior, and whole-scene events — and closes
//! the loop both ways: a generator that synthesizes time-varying channel
//! impulse responses from an event script, and an analyzer/fitting stack
//! that recovers the model parameters back from power-delay-profile data.

pub mod analyzer;
pub mod behavior;
pub mod dist;
pub mod error;
pub mod event;
pub mod files;
pub mod fitting;
pub mod generator;
pub mod semantic;
pub mod status;

pub use analyzer::{
    analyze_pdp, bind_labels, compare_realizations, dbscan_cluster, rmsds, threshold_pdp,
    DbscanParams, DepthTable, LabeledCluster, SnapshotAnalysis,
};
pub use behavior::{BehaviorLibrary, BehaviorProfile, MarkovState, TurnGeometry};
pub use dist::{fit_mle, sample, select_best_family, DistributionSpec, Family};
pub use error::{Error, Result};
pub use event::{EventMatrices, EventScript, ScriptToken};
pub use fitting::{fit_status_library, ClusterObservation, StatusFit};
pub use generator::{generate, generate_batch, generate_batch_seq, GeneratorConfig};
pub use semantic::{
    BehaviorKind, ChannelRealization, DelayGrid, SemanticLabel, Snapshot, SPEED_OF_LIGHT,
};
pub use status::{StatusLibrary, StatusProfile};
