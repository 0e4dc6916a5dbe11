//! Simulation of DAG-aware cache eviction in data-parallel clusters.
//!
//! The crate models jobs as DAGs of blocks and tasks ([`dag`]), ranks cached
//! blocks with pluggable eviction policies ([`policy`]), and replays
//! workloads on a simulated cluster ([`sim`]) whose workers keep peer-group
//! labels in sync through a driver ([`protocol`]).

pub mod dag;
pub mod experiment;
pub mod format;
pub mod par;
pub mod policy;
pub mod protocol;
pub mod sim;
pub mod topology;
pub mod workload;
