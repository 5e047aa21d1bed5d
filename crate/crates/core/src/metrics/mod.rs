//! Evaluation statistics. Every function here is a pure function of its
//! input records.

pub mod balance;
pub mod coherence;
pub mod events;
pub mod point_process;
pub mod spatial;
pub mod stats;
pub mod temporal;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use balance::{morans_i, region_counts, spatial_balance, BalanceStats};
pub use coherence::{front_coherence, sawtooth, Coherence};
pub use events::{duty_cycle, fano_factor, inactivity_gap_p95, isi_stats, second_difference_energy, IsiStats};
pub use point_process::{coverage_distance, k_ratio, mean_nn_distance, pair_correlation, ripley_k, EdgeMode};
pub use spatial::{
    directional_similarity_within, diversity_stats, heading_entropy, polarization, spatial_stats, DistanceBins,
    DiversityStats, SpatialStats,
};
pub use stats::SeedSummary;
pub use temporal::{
    coverage_and_paths, hf_lf_ratio, jerk_stats, kinetic_signal, lag1_autocorrelations, CoverageGrid, CoverageStats,
    JerkStats, SpectralRatio, TrackSet, SPECTRUM_WINDOW,
};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("need at least {needed} items, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("distance bin edges must be nonnegative and strictly increasing")]
    InvalidBins,
}

/// Named scalar results; `None` serialises as `null` and means undefined.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub values: BTreeMap<String, Option<f64>>,
    /// Names of values whose definition hit an edge case (empty bin, short
    /// series, capped tortuosity, ...).
    pub flags: Vec<String>,
    /// Parameters the values depend on (window sizes, grid resolutions).
    pub meta: BTreeMap<String, String>,
}

impl MetricReport {
    pub fn set(&mut self, name: &str, value: Option<f64>) {
        let v = value.filter(|x| x.is_finite());
        if v.is_none() {
            self.flag(name);
        }
        self.values.insert(name.to_string(), v);
    }

    pub fn flag(&mut self, name: &str) {
        if !self.flags.iter().any(|f| f == name) {
            self.flags.push(name.to_string());
        }
    }

    pub fn meta(&mut self, key: &str, value: impl ToString) {
        self.meta.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied().flatten()
    }

    pub fn merge(&mut self, other: MetricReport) {
        self.values.extend(other.values);
        for f in other.flags {
            self.flag(&f);
        }
        self.meta.extend(other.meta);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_flags_undefined_values() {
        let mut r = MetricReport::default();
        r.set("a", Some(1.0));
        r.set("b", None);
        r.set("c", Some(f64::NAN));
        assert_eq!(r.get("a"), Some(1.0));
        assert_eq!(r.flags, vec!["b", "c"]);
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"b\":null"));
    }
}
