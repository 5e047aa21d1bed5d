//! Front coherence: agreement between event counts and a cyclic driver.

use serde::{Deserialize, Serialize};

use super::stats::pearson;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coherence {
    /// Mean of the per-cycle correlations; `None` if no cycle was usable.
    pub value: Option<f64>,
    pub cycles_used: usize,
    /// Complete cycles skipped because one of the series was constant.
    pub cycles_flat: usize,
}

/// Pearson correlation of `counts` against `driver` within each complete
/// cycle of `cycle` ticks starting at `offset`, averaged over cycles.
pub fn front_coherence(counts: &[f64], driver: &[f64], cycle: usize, offset: usize) -> Coherence {
    assert_eq!(counts.len(), driver.len());
    let mut sum = 0.0;
    let (mut used, mut flat) = (0, 0);
    let mut start = offset;
    while start + cycle <= counts.len() {
        match pearson(&counts[start..start + cycle], &driver[start..start + cycle]) {
            Some(r) => {
                sum += r;
                used += 1;
            }
            None => flat += 1,
        }
        start += cycle;
    }
    Coherence { value: (used > 0).then(|| sum / used as f64), cycles_used: used, cycles_flat: flat }
}

/// Sawtooth level `(t mod T) / T`: the cycle-indexed time-to-level map.
pub fn sawtooth(len: usize, cycle: usize) -> Vec<f64> {
    (0..len).map(|t| (t % cycle) as f64 / cycle as f64).collect()
}
