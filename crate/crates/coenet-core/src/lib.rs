//! Core algorithms for co-enrolment network analysis.
//!
//! Builds bipartite student–standard graphs, projects them onto the
//! standard set with co-enrolment weights, normalizes weights to Revealed
//! Comparative Preference (RCP), detects communities by two-level
//! map-equation minimization, and scores sub-population enrolment entropy
//! with bootstrap confidence bands.
//!
//! The crate is `no_std` + `alloc`; all IO, file formats, and the CLI live
//! in the companion `coenet` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod cohort;
pub mod community;
pub mod entropy;
pub mod filter;
pub mod graph;
pub mod rcp;
pub mod seeds;
pub mod synth;
pub mod types;

pub use community::{
    detect_infomap, map_equation, modularity, normalized_mutual_information,
    stationary_visit_rates, InfomapResult, Partition, VisitRates,
};
pub use entropy::{bootstrap_entropy, entropy, subpop_counts, EntropyEstimate, SubpopCounts};
pub use graph::{build_bipartite, project_standards, BipartiteGraph, CoGraph, WeightMode};
pub use rcp::{compute_rcp, prune, RcpResult};
pub use types::{
    AssessmentMode, DecileBand, EnrolmentRecord, Ethnicity, Sex, SliceSpec, StandardKind,
    StudentMeta, SubpopSelector,
};
