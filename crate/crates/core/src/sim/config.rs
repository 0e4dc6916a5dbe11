use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::TieBreak;

/// Where sources without a pinned worker are homed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Placement {
    /// The k-th source (jobs in order, then listing order) goes to worker k mod W.
    #[default]
    RoundRobin,
    /// Each source independently, uniform over workers, from `placement_seed`.
    Random,
}

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Placement::RoundRobin => "round-robin",
            Placement::Random => "random",
        })
    }
}

impl FromStr for Placement {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "round-robin" => Ok(Placement::RoundRobin),
            "random" => Ok(Placement::Random),
            other => Err(ConfigError::UnknownPlacement(other.to_owned())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("need at least one worker")]
    NoWorkers,
    #[error("need at least one slot per worker")]
    NoSlots,
    #[error("read costs must satisfy disk > mem > 0 (mem {mem}, disk {disk})")]
    ReadCosts { mem: f64, disk: f64 },
    #[error("broadcast latency must be finite and non-negative, got {0}")]
    Latency(f64),
    #[error("unknown placement {0:?} (expected round-robin or random)")]
    UnknownPlacement(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterConfig {
    pub workers: usize,
    pub slots_per_worker: usize,
    pub cache_capacity_per_worker: u64,
    /// Time per size unit read from memory.
    pub mem_read_cost: f64,
    /// Time per size unit read from disk.
    pub disk_read_cost: f64,
    pub broadcast_latency: f64,
    /// Seeds the per-worker tie-break RNGs.
    pub seed: u64,
    pub tie_break: TieBreak,
    pub placement: Placement,
    pub placement_seed: u64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            workers: 1,
            slots_per_worker: 1,
            cache_capacity_per_worker: 16,
            mem_read_cost: 1.0,
            disk_read_cost: 10.0,
            broadcast_latency: 0.0,
            seed: 0,
            tie_break: TieBreak::LruFallback,
            placement: Placement::RoundRobin,
            placement_seed: 0,
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.workers == 0 {
            return Err(ConfigError::NoWorkers);
        }
        if self.slots_per_worker == 0 {
            return Err(ConfigError::NoSlots);
        }
        let (mem, disk) = (self.mem_read_cost, self.disk_read_cost);
        if !(mem > 0.0 && disk > mem && disk.is_finite()) {
            return Err(ConfigError::ReadCosts { mem, disk });
        }
        if !(self.broadcast_latency >= 0.0 && self.broadcast_latency.is_finite()) {
            return Err(ConfigError::Latency(self.broadcast_latency));
        }
        Ok(())
    }

    pub fn total_slots(&self) -> usize {
        self.workers * self.slots_per_worker
    }
}
