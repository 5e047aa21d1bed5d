//! Spawn placement in a bounded world: policies propose sites, a
//! replenishment controller admits them under a per-cycle quota, monsters
//! wander and scripted players remove them.

mod controller;
mod policy;
mod run;
mod world;

pub use controller::{Admission, Controller, Ticket};
pub use policy::{bridson, farthest_point, normalize, PolicyKind, SpawnPolicy};
pub use run::{run_spawn, summarize, Elimination, SpawnEvent, SpawnRun, SpawnTick, Violations};
pub use world::{Mover, MoverParams, World};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crowd::Scale;
use crate::noise::NoiseSpec;

#[derive(Debug, Error, PartialEq)]
pub enum SpawnError {
    #[error("invalid spawn config: {0}")]
    InvalidConfig(String),
    #[error("unknown spawn policy {0:?}")]
    UnknownPolicy(String),
    #[error(transparent)]
    Noise(#[from] crate::noise::NoiseError),
}

/// What the respawn delay holds back.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayTarget {
    /// An eliminated entity's replacement is admissible `respawn_delay`
    /// ticks after the elimination.
    Monsters,
    /// A player that eliminated something cannot eliminate again for
    /// `respawn_delay` ticks; replacements are admissible at once.
    Players,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlayerParams {
    pub speed: f64,
    pub kill_radius: f64,
    pub respawn_delay: u64,
    pub delay_applies_to: DelayTarget,
}

impl Default for PlayerParams {
    fn default() -> Self {
        Self { speed: 2.4, kill_radius: 1.75, respawn_delay: 90, delay_applies_to: DelayTarget::Players }
    }
}

impl PlayerParams {
    pub fn ticket_delay(&self) -> u64 {
        match self.delay_applies_to {
            DelayTarget::Monsters => self.respawn_delay,
            DelayTarget::Players => 0,
        }
    }

    pub fn player_cooldown(&self) -> u64 {
        match self.delay_applies_to {
            DelayTarget::Monsters => 0,
            DelayTarget::Players => self.respawn_delay,
        }
    }
}

/// How raw field values become unit values before phase binning.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `(n + 1) / 2`.
    Affine,
    /// Rescaled so this cycle's candidates span `[0, 1]`.
    MinMax,
}

/// Space-to-time phase binning of stratified candidates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerlinAParams {
    pub field: NoiseSpec,
    pub normalization: Normalization,
    /// Candidates drawn per cycle, one per stratum of a square grid.
    pub candidates: usize,
    /// Candidates that receive a phase each cycle.
    pub cycle_sites: usize,
    /// Thinning: a due site is proposed with probability `1 - eps`.
    pub eps: f64,
}

impl Default for PerlinAParams {
    fn default() -> Self {
        Self {
            field: NoiseSpec::new(0.06, 3, 0.55, 2.0),
            normalization: Normalization::MinMax,
            candidates: 256,
            cycle_sites: 128,
            eps: 0.1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    Random,
    Farthest,
}

/// Time-to-space iso-band fronts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerlinBParams {
    pub field: NoiseSpec,
    /// Side of the evaluation grid.
    pub grid: usize,
    pub band: f64,
    /// Evaluation-tick spacing, jitter and minimum separation.
    pub spacing: u64,
    pub jitter: u64,
    pub min_separation: u64,
    pub selection: Selection,
    pub count_mean: f64,
    pub count_min: usize,
    pub count_max: usize,
}

impl Default for PerlinBParams {
    fn default() -> Self {
        Self {
            field: NoiseSpec::new(0.06, 3, 0.55, 2.0),
            grid: 128,
            band: 0.1,
            spacing: 30,
            jitter: 5,
            min_separation: 8,
            selection: Selection::Random,
            count_mean: 3.0,
            count_min: 1,
            count_max: 6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilteredParams {
    /// Minimum distance to any player.
    pub safety_radius: f64,
    /// Minimum distance to any live entity.
    pub spacing_radius: f64,
    /// Uniform draws per proposal slot before the slot is given up.
    pub attempts: usize,
}

impl Default for FilteredParams {
    fn default() -> Self {
        Self { safety_radius: 8.0, spacing_radius: 3.0, attempts: 8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoissonDiskParams {
    /// Disk radius; derived from the quota when absent.
    pub radius: Option<f64>,
    pub attempts: usize,
}

impl Default for PoissonDiskParams {
    fn default() -> Self {
        Self { radius: None, attempts: 30 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MvnParams {
    pub components: usize,
    /// Component standard deviation as a fraction of the side.
    pub sd_fraction: f64,
}

impl Default for MvnParams {
    fn default() -> Self {
        Self { components: 4, sd_fraction: 0.08 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FacilityParams {
    /// Side of the candidate grid.
    pub grid: usize,
    pub desirability: NoiseSpec,
}

impl Default for FacilityParams {
    fn default() -> Self {
        Self { grid: 24, desirability: NoiseSpec::new(0.03, 3, 0.5, 2.0) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SinusoidParams {
    pub amplitude: f64,
}

impl Default for SinusoidParams {
    fn default() -> Self {
        Self { amplitude: 0.3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpawnConfig {
    pub side: f64,
    pub cycle: u64,
    pub ticks: u64,
    pub target_pop: usize,
    pub cycle_quota: usize,
    /// Replacements that may leave the respawn queue per cycle.
    pub cooldown_budget: usize,
    pub players: usize,
    pub coverage_samples: usize,
    pub snapshot_period: u64,
    pub spatial_radii: Vec<f64>,
    /// Window for the spectral summary of the spawn series.
    pub temporal_window: usize,
    /// Ticks excluded from summaries.
    pub warmup: u64,
    pub regions: usize,
    pub monster: MoverParams,
    pub player: PlayerParams,
    pub perlin_a: PerlinAParams,
    pub perlin_b: PerlinBParams,
    pub filtered: FilteredParams,
    pub poisson_disk: PoissonDiskParams,
    pub mvn: MvnParams,
    pub facility: FacilityParams,
    pub sinusoid: SinusoidParams,
}

impl Default for SpawnConfig {
    fn default() -> Self {
        Self::scale(Scale::Medium)
    }
}

impl SpawnConfig {
    pub fn scale(scale: Scale) -> Self {
        let (ticks, side, target_pop, quota, players, samples) = match scale {
            Scale::Small => (2400, 90.0, 80, 48, 6, 1024),
            Scale::Medium => (3600, 120.0, 128, 96, 8, 2048),
            Scale::Large => (7200, 240.0, 256, 192, 12, 4096),
        };
        Self {
            side,
            cycle: 600,
            ticks,
            target_pop,
            cycle_quota: quota,
            cooldown_budget: quota,
            players,
            coverage_samples: samples,
            snapshot_period: 120,
            spatial_radii: vec![5.0, 10.0, 20.0],
            temporal_window: 180,
            warmup: 600,
            regions: 8,
            monster: MoverParams::default(),
            player: PlayerParams::default(),
            perlin_a: PerlinAParams::default(),
            perlin_b: PerlinBParams::default(),
            filtered: FilteredParams::default(),
            poisson_disk: PoissonDiskParams::default(),
            mvn: MvnParams::default(),
            facility: FacilityParams::default(),
            sinusoid: SinusoidParams::default(),
        }
    }

    /// Mean proposals per tick for the rate-driven baselines.
    pub fn base_rate(&self) -> f64 {
        self.cycle_quota as f64 / self.cycle as f64
    }

    pub fn player_movers(&self) -> MoverParams {
        MoverParams { speed: self.player.speed, ..self.monster.clone() }
    }

    pub fn validate(&self) -> Result<(), SpawnError> {
        let bad = |m: &str| Err(SpawnError::InvalidConfig(m.into()));
        if !(self.side > 0.0) || self.cycle == 0 || self.ticks == 0 {
            return bad("side, cycle and ticks must be > 0");
        }
        if self.target_pop == 0 || self.cycle_quota > 2 * self.target_pop {
            return bad("need target_pop > 0 and cycle_quota <= 2 * target_pop");
        }
        if self.monster.speed < 0.0 || self.player.speed < 0.0 || self.player.kill_radius < 0.0 {
            return bad("speeds and kill radius must be >= 0");
        }
        if !(0.0..=1.0).contains(&self.monster.persistence) || self.monster.turn_noise < 0.0 || self.monster.jitter < 0.0 {
            return bad("persistence must lie in [0, 1]; noise terms must be >= 0");
        }
        if self.snapshot_period == 0 || self.regions == 0 || self.coverage_samples == 0 || self.temporal_window == 0 {
            return bad("snapshot period, regions, samples and window must be > 0");
        }
        let a = &self.perlin_a;
        if a.candidates == 0 || a.cycle_sites > a.candidates || !(0.0..1.0).contains(&a.eps) {
            return bad("perlin_a needs candidates > 0, cycle_sites <= candidates, eps in [0, 1)");
        }
        let b = &self.perlin_b;
        if b.grid == 0 || b.spacing == 0 || !(b.band > 0.0) || b.count_min > b.count_max {
            return bad("perlin_b needs grid, spacing, band > 0 and count_min <= count_max");
        }
        if self.facility.grid == 0 || self.mvn.components == 0 || self.poisson_disk.attempts == 0 {
            return bad("facility grid, mvn components and disk attempts must be > 0");
        }
        if self.poisson_disk.radius.is_some_and(|r| !(r > 0.0)) {
            return bad("poisson-disk radius must be > 0");
        }
        for spec in [&a.field, &b.field, &self.facility.desirability] {
            spec.validate()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_match_the_scale_table() {
        let s = SpawnConfig::scale(Scale::Small);
        assert_eq!((s.ticks, s.side, s.target_pop, s.cycle_quota, s.players, s.coverage_samples), (2400, 90.0, 80, 48, 6, 1024));
        let l = SpawnConfig::scale(Scale::Large);
        assert_eq!((l.ticks, l.side, l.target_pop, l.cycle_quota, l.players, l.coverage_samples), (7200, 240.0, 256, 192, 12, 4096));
        for sc in Scale::ALL {
            SpawnConfig::scale(sc).validate().unwrap();
        }
    }

    #[test]
    fn rejects_quota_above_twice_the_population() {
        let cfg = SpawnConfig { cycle_quota: 300, ..SpawnConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = SpawnConfig { monster: MoverParams { speed: -1.0, ..MoverParams::default() }, ..SpawnConfig::default() };
        assert!(cfg.validate().is_err());
    }
}
