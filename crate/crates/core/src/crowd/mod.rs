//! Crowd motion on a torus under pluggable motion policies.

mod policy;
mod run;

pub use policy::{MotionPolicy, NeighborSearch, PiecewiseField, PolicyState};
pub use run::{run_crowd, summarize, CrowdRun, TickRecord};

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{wrap, wrap_angle};

#[derive(Debug, Error, PartialEq)]
pub enum CrowdError {
    #[error("invalid crowd config: {0}")]
    InvalidConfig(String),
    #[error("unknown motion policy {0:?}")]
    UnknownPolicy(String),
    #[error(transparent)]
    Noise(#[from] crate::noise::NoiseError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Small,
    Medium,
    Large,
}

impl Scale {
    pub const ALL: [Scale; 3] = [Scale::Small, Scale::Medium, Scale::Large];

    pub fn name(self) -> &'static str {
        match self {
            Scale::Small => "small",
            Scale::Medium => "medium",
            Scale::Large => "large",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|x| x.name() == s)
    }
}

/// Speed relaxation rule applied to policy speed targets.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SpeedUpdate {
    Ema,
    Ou { beta: f64, sigma: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CrowdConfig {
    pub side: f64,
    pub n_agents: usize,
    pub ticks: u64,
    pub dt: f64,
    pub v_min: f64,
    pub v_max: f64,
    /// Heading inertia in the vector blend.
    pub beta: f64,
    /// Speed EMA weight on the previous speed.
    pub rho: f64,
    /// Half-width of the uniform angular jitter on field headings.
    pub jitter: f64,
    pub speed_update: SpeedUpdate,
    pub snapshot_period: u64,
    pub coverage_cells: usize,
    pub coverage_window: usize,
    pub distance_bins: Vec<f64>,
    pub decay_fraction: f64,
}

impl Default for CrowdConfig {
    fn default() -> Self {
        Self::scale(Scale::Medium)
    }
}

impl CrowdConfig {
    pub fn scale(scale: Scale) -> Self {
        let (n_agents, ticks, snapshot_period) = match scale {
            Scale::Small => (200, 360, 5),
            Scale::Medium => (1200, 720, 10),
            Scale::Large => (3200, 1080, 15),
        };
        Self {
            side: 1000.0,
            n_agents,
            ticks,
            dt: 1.0,
            v_min: 0.6,
            v_max: 1.4,
            beta: 0.9,
            rho: 0.8,
            jitter: 0.02,
            speed_update: SpeedUpdate::Ema,
            snapshot_period,
            coverage_cells: 50,
            coverage_window: 60,
            distance_bins: crate::metrics::DistanceBins::extended().edges().to_vec(),
            decay_fraction: 0.5,
        }
    }

    pub fn validate(&self) -> Result<(), CrowdError> {
        let bad = |m: &str| Err(CrowdError::InvalidConfig(m.into()));
        if self.n_agents == 0 {
            return bad("n_agents must be > 0");
        }
        if self.ticks == 0 {
            return bad("ticks must be > 0");
        }
        if !(self.side > 0.0) {
            return bad("side must be > 0");
        }
        if !(self.v_min >= 0.0 && self.v_min <= self.v_max) {
            return bad("need 0 <= v_min <= v_max");
        }
        if !(0.0..=1.0).contains(&self.beta) || !(0.0..=1.0).contains(&self.rho) {
            return bad("beta and rho must lie in [0, 1]");
        }
        if self.snapshot_period == 0 || self.coverage_cells == 0 || self.coverage_window == 0 {
            return bad("snapshot period, coverage cells and window must be > 0");
        }
        crate::metrics::DistanceBins::new(self.distance_bins.clone())
            .map_err(|e| CrowdError::InvalidConfig(e.to_string()))?;
        Ok(())
    }
}

/// Structure-of-arrays agent state.
#[derive(Clone, Debug, PartialEq)]
pub struct CrowdState {
    pub positions: Vec<[f64; 2]>,
    pub headings: Vec<f64>,
    pub speeds: Vec<f64>,
}

impl CrowdState {
    /// Uniform positions and headings; speeds at the middle of the range.
    pub fn random<R: rand::Rng>(cfg: &CrowdConfig, rng: &mut R) -> Self {
        let n = cfg.n_agents;
        let mut positions = Vec::with_capacity(n);
        let mut headings = Vec::with_capacity(n);
        for _ in 0..n {
            positions.push([rng.random::<f64>() * cfg.side, rng.random::<f64>() * cfg.side]);
            headings.push(rng.random::<f64>() * TAU);
        }
        Self { positions, headings, speeds: vec![0.5 * (cfg.v_min + cfg.v_max); n] }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Advance one position along its heading and wrap onto the torus.
#[inline]
pub fn step_kinematics(pos: [f64; 2], heading: f64, speed: f64, dt: f64, l: f64) -> [f64; 2] {
    [wrap(pos[0] + speed * heading.cos() * dt, l), wrap(pos[1] + speed * heading.sin() * dt, l)]
}

/// `arg(beta e^{i prev} + (1 - beta) e^{i target})` in `[0, 2pi)`.
/// A vanishing resultant keeps the previous heading.
#[inline]
pub fn blend_heading(prev: f64, target: f64, beta: f64) -> f64 {
    blend_with_unit(prev, prev.cos(), prev.sin(), target, beta)
}

/// [`blend_heading`] with the previous heading's cosine and sine supplied.
#[inline]
pub(crate) fn blend_with_unit(prev: f64, pc: f64, ps: f64, target: f64, beta: f64) -> f64 {
    if beta >= 1.0 {
        return wrap_angle(prev);
    }
    if beta <= 0.0 {
        return wrap_angle(target);
    }
    let (ts, tc) = target.sin_cos();
    let x = beta * pc + (1.0 - beta) * tc;
    let y = beta * ps + (1.0 - beta) * ts;
    if x * x + y * y < 1e-24 {
        return wrap_angle(prev);
    }
    wrap_angle(y.atan2(x))
}

#[inline]
pub fn update_speed_ema(prev: f64, target: f64, rho: f64) -> f64 {
    rho * prev + (1.0 - rho) * target
}

#[inline]
pub fn update_speed_ou(prev: f64, target: f64, beta: f64, sigma: f64, normal: f64, v_min: f64, v_max: f64) -> f64 {
    (prev + beta * (target - prev) + sigma * normal).clamp(v_min, v_max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    #[test]
    fn kinematics_examples() {
        assert_eq!(step_kinematics([0.0, 0.0], 0.0, 1.0, 1.0, 10.0), [1.0, 0.0]);
        assert_eq!(step_kinematics([9.5, 0.0], 0.0, 1.0, 1.0, 10.0), [0.5, 0.0]);
        assert_eq!(step_kinematics([3.0, 4.0], 1.0, 0.0, 1.0, 10.0), [3.0, 4.0]);
    }

    #[test]
    fn blend_examples() {
        assert_eq!(blend_heading(0.3, 2.0, 1.0), 0.3);
        assert_eq!(blend_heading(0.3, 2.0, 0.0), 2.0);
        assert!((blend_heading(0.0, FRAC_PI_2, 0.5) - FRAC_PI_4).abs() < 1e-12);
        // Antipodal tie keeps the previous heading.
        assert_eq!(blend_heading(0.25, 0.25 + PI, 0.5), 0.25);
        // Wrap-safe averaging across zero.
        let b = blend_heading(TAU - 0.1, 0.1, 0.5);
        assert!(b < 1e-12 || (TAU - b) < 1e-12);
    }

    #[test]
    fn speed_updates() {
        assert_eq!(update_speed_ema(1.0, 2.0, 1.0), 1.0);
        assert_eq!(update_speed_ema(1.0, 2.0, 0.0), 2.0);
        assert!((update_speed_ema(1.0, 2.0, 0.8) - 1.2).abs() < 1e-12);
        assert_eq!(update_speed_ou(1.0, 1.3, 1.0, 0.0, 0.7, 0.6, 1.4), 1.3);
        assert_eq!(update_speed_ou(1.0, 1.3, 0.0, 0.0, 0.7, 0.6, 1.4), 1.0);
    }

    #[test]
    fn ou_speed_band_occupancy() {
        // Stationary sd of v <- v + b(m - v) + s xi is s / sqrt(2b - b^2).
        let (b, s, m): (f64, f64, f64) = (0.3, 0.02, 1.0);
        let sd = s / (2.0 * b - b * b).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut v = m;
        let mut inside = 0;
        let steps = 100_000;
        for _ in 0..steps {
            v = update_speed_ou(v, m, b, s, StandardNormal.sample(&mut rng), 0.0, 10.0);
            if (v - m).abs() <= 3.0 * sd {
                inside += 1;
            }
        }
        let frac = inside as f64 / steps as f64;
        assert!((frac - 0.9973).abs() < 0.003, "{frac}");
    }

    #[test]
    fn config_validation() {
        assert!(CrowdConfig::default().validate().is_ok());
        let mut c = CrowdConfig::default();
        c.n_agents = 0;
        assert!(c.validate().is_err());
        let mut c = CrowdConfig::default();
        c.ticks = 0;
        assert!(c.validate().is_err());
        let mut c = CrowdConfig::default();
        c.v_min = 2.0;
        assert!(c.validate().is_err());
    }
}
