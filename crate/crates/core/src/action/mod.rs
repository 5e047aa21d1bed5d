//! Per-agent action starts under hazard, phase and baseline schedulers.
//!
//! Every method decides, each tick, which agents start an action. An action
//! lasts `duration` ticks; a new start while active restarts it, except under
//! the capacity schedulers, where only idle agents may request a slot.

mod run;
mod scheduler;

pub use run::{run_action_timing, summarize, ActionRun, EventLog, StartEvent};
pub use scheduler::{Method, Scheduler};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crowd::Scale;
use crate::noise::{hazard_rate, rate_to_probability, NoiseSpec};

#[derive(Debug, Error, PartialEq)]
pub enum ActionError {
    #[error("invalid action-timing config: {0}")]
    InvalidConfig(String),
    #[error("unknown scheduling method {0:?}")]
    UnknownMethod(String),
    #[error(transparent)]
    Noise(#[from] crate::noise::NoiseError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilteredParams {
    pub radius: f64,
    /// Maximum accepted starts within `radius` over the window.
    pub cap: usize,
    pub window: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixedParams {
    pub period_mean: f64,
    pub period_sd: f64,
    /// Each scheduled start is shifted by a uniform integer in `[-jitter, jitter]`.
    pub jitter: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TokenParams {
    /// Token cells per axis.
    pub cells: usize,
    pub capacity: usize,
    pub max_wait: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoundRobinParams {
    pub slots: usize,
    pub rotation: u64,
    /// Region groups taking turns; group of region `(rx, ry)` is
    /// `(rx mod 2) + 2 (ry mod 2)` for four groups.
    pub groups: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SinusoidParams {
    pub amplitude: f64,
    pub period: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HawkesParams {
    pub radius: f64,
    pub window: u64,
    pub tau: f64,
    /// Excitation as a multiple of the baseline intensity (negative inhibits).
    pub alpha_ratio: f64,
}

impl Default for FilteredParams {
    fn default() -> Self {
        Self { radius: 20.0, cap: 2, window: 2 }
    }
}

impl Default for FixedParams {
    fn default() -> Self {
        Self { period_mean: 8.0, period_sd: 2.0, jitter: 1 }
    }
}

impl Default for TokenParams {
    fn default() -> Self {
        Self { cells: 20, capacity: 3, max_wait: 8 }
    }
}

impl Default for RoundRobinParams {
    fn default() -> Self {
        Self { slots: 12, rotation: 30, groups: 4 }
    }
}

impl Default for SinusoidParams {
    fn default() -> Self {
        Self { amplitude: 0.3, period: 120.0 }
    }
}

impl Default for HawkesParams {
    fn default() -> Self {
        Self { radius: 20.0, window: 3, tau: 3.0, alpha_ratio: -0.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ActionConfig {
    pub n_agents: usize,
    pub side: f64,
    pub ticks: u64,
    pub warmup: u64,
    pub duration: u64,
    pub lambda0: f64,
    pub eps: f64,
    pub alpha_ema: f64,
    pub cycle: u64,
    pub sigma: f64,
    pub phase_jitter: i64,
    pub hybrid_alpha: f64,
    pub field: NoiseSpec,
    pub v_drift: f64,
    /// Neutral wander of the agents: heading noise and constant speed.
    pub wander_sigma: f64,
    pub wander_speed: f64,
    pub regions: usize,
    pub coverage_cells: usize,
    pub coverage_window: usize,
    pub fano_window: usize,
    pub filtered: FilteredParams,
    pub fixed: FixedParams,
    pub token: TokenParams,
    pub round_robin: RoundRobinParams,
    pub sinusoid: SinusoidParams,
    pub hawkes: HawkesParams,
}

impl Default for ActionConfig {
    fn default() -> Self {
        Self::scale(Scale::Medium)
    }
}

impl ActionConfig {
    pub fn scale(scale: Scale) -> Self {
        let (n_agents, side, ticks) = match scale {
            Scale::Small => (800, 600.0, 1200),
            Scale::Medium => (2000, 1000.0, 1800),
            Scale::Large => (8000, 2000.0, 3600),
        };
        Self {
            n_agents,
            side,
            ticks,
            warmup: 60,
            duration: 8,
            lambda0: 0.025,
            eps: 0.2,
            alpha_ema: 0.5,
            cycle: 60,
            sigma: 8.0,
            phase_jitter: 1,
            hybrid_alpha: 0.5,
            field: NoiseSpec::new(0.01, 4, 0.5, 2.0),
            v_drift: 0.002,
            wander_sigma: 0.2,
            wander_speed: 0.5,
            regions: 8,
            coverage_cells: 32,
            coverage_window: 60,
            fano_window: 60,
            filtered: FilteredParams::default(),
            fixed: FixedParams::default(),
            token: TokenParams::default(),
            round_robin: RoundRobinParams::default(),
            sinusoid: SinusoidParams::default(),
            hawkes: HawkesParams::default(),
        }
    }

    /// `lambda0 (eps + 0.5 (1 - eps))`: the mean hazard of a field whose unit
    /// values average one half.
    pub fn lambda_target(&self) -> f64 {
        self.lambda0 * (self.eps + 0.5 * (1.0 - self.eps))
    }

    /// Active fraction of a retriggerable Bernoulli starter at the target
    /// rate: `1 - exp(-lambda_target D)`.
    pub fn target_duty(&self) -> f64 {
        1.0 - (-self.lambda_target() * self.duration as f64).exp()
    }

    pub fn validate(&self) -> Result<(), ActionError> {
        let bad = |m: &str| Err(ActionError::InvalidConfig(m.into()));
        if self.n_agents == 0 || self.ticks == 0 {
            return bad("n_agents and ticks must be > 0");
        }
        if !(self.side > 0.0) {
            return bad("side must be > 0");
        }
        if self.warmup >= self.ticks {
            return bad("warmup must be shorter than the horizon");
        }
        if self.duration == 0 || self.cycle == 0 {
            return bad("duration and cycle must be > 0");
        }
        if !(self.lambda0 > 0.0) || !(0.0..1.0).contains(&self.eps) {
            return bad("need lambda0 > 0 and eps in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.alpha_ema) || !(0.0..=1.0).contains(&self.hybrid_alpha) {
            return bad("alpha_ema and hybrid_alpha must lie in [0, 1]");
        }
        if !(self.sigma > 0.0) {
            return bad("phase bandwidth must be > 0");
        }
        if self.regions == 0 || self.coverage_cells == 0 || self.coverage_window == 0 || self.fano_window == 0 {
            return bad("grid sizes and windows must be > 0");
        }
        if self.token.cells == 0 || self.token.capacity == 0 || self.round_robin.groups == 0 || self.round_robin.rotation == 0 {
            return bad("token and round-robin sizes must be > 0");
        }
        self.field.validate()?;
        Ok(())
    }
}

/// Result of one mean-normalised hazard step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HazardStep {
    /// Scale applied to every rate; `None` when all rates were zero.
    pub gamma: Option<f64>,
}

/// Hazard rates from unit field values, exponentially smoothed against the
/// previous rates, then scaled so their mean is `lambda_target`. Writes
/// activation probabilities into `probs`. An empty `smoothed` is seeded with
/// the raw rates.
pub fn hazard_tick(
    u: &[f64],
    lambda0: f64,
    eps: f64,
    alpha_ema: f64,
    lambda_target: f64,
    smoothed: &mut Vec<f64>,
    probs: &mut [f64],
) -> HazardStep {
    smooth_hazard(u, lambda0, eps, alpha_ema, smoothed);
    normalize_to_target(smoothed, lambda_target, probs)
}

/// Exponentially smoothed hazard rates, seeded with the raw rates when
/// `smoothed` is empty.
pub fn smooth_hazard(u: &[f64], lambda0: f64, eps: f64, alpha_ema: f64, smoothed: &mut Vec<f64>) {
    let first = smoothed.is_empty();
    if first {
        smoothed.resize(u.len(), 0.0);
    }
    for (s, &ui) in smoothed.iter_mut().zip(u) {
        let raw = hazard_rate(ui, lambda0, eps);
        *s = if first { raw } else { alpha_ema * *s + (1.0 - alpha_ema) * raw };
    }
}

/// Writes `1 - exp(-gamma lambda_i)` with `gamma = target / mean(lambda)`.
pub fn normalize_to_target(rates: &[f64], target: f64, probs: &mut [f64]) -> HazardStep {
    let mean = rates.iter().sum::<f64>() / rates.len().max(1) as f64;
    if !(mean > 0.0) {
        probs.iter_mut().for_each(|p| *p = 0.0);
        return HazardStep { gamma: None };
    }
    let gamma = target / mean;
    for (p, &r) in probs.iter_mut().zip(rates) {
        *p = rate_to_probability(gamma * r, 1.0);
    }
    HazardStep { gamma: Some(gamma) }
}

/// Tick distance between two phases on a cycle of length `cycle`.
#[inline]
pub fn circular_distance(a: u64, b: u64, cycle: u64) -> u64 {
    let d = a.abs_diff(b) % cycle;
    d.min(cycle - d)
}

#[inline]
pub fn phase_kernel(delta: f64, sigma: f64) -> f64 {
    (-0.5 * (delta / sigma).powi(2)).exp()
}

/// `lambda0 (eps + (1 - eps) kappa(d))` for the circular distance between
/// `t mod cycle` and `tau`.
#[inline]
pub fn phase_intensity(tau: u64, t: u64, cycle: u64, sigma: f64, lambda0: f64, eps: f64) -> f64 {
    let d = circular_distance(t % cycle, tau, cycle) as f64;
    lambda0 * (eps + (1.0 - eps) * phase_kernel(d, sigma))
}

#[inline]
pub fn hybrid_rate(hazard: f64, phase: f64, alpha: f64) -> f64 {
    (1.0 - alpha) * hazard + alpha * phase
}
