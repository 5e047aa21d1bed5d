use std::collections::VecDeque;
use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{hybrid_rate, normalize_to_target, phase_intensity, smooth_hazard, ActionConfig, ActionError, HazardStep};
use crate::geom::torus_dist2;
use crate::noise::{
    phase_map, rate_to_probability, to_unit, BoundaryMode, FieldSampler, SeedBundle, SimRng,
    TemporalMode,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Field hazard with mean normalisation (the default field driver).
    Perlin,
    PerlinPhase,
    PerlinHybrid,
    Poisson,
    Filtered,
    Fixed,
    ConstraintToken,
    ConstraintRoundrobin,
    Sinusoid,
    HawkesInhib,
}

impl Method {
    pub const ALL: [Method; 10] = [
        Method::Perlin,
        Method::PerlinPhase,
        Method::PerlinHybrid,
        Method::Poisson,
        Method::Filtered,
        Method::Fixed,
        Method::ConstraintToken,
        Method::ConstraintRoundrobin,
        Method::Sinusoid,
        Method::HawkesInhib,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Perlin => "perlin",
            Method::PerlinPhase => "perlin_phase",
            Method::PerlinHybrid => "perlin_hybrid",
            Method::Poisson => "poisson",
            Method::Filtered => "filtered",
            Method::Fixed => "fixed",
            Method::ConstraintToken => "constraint_token",
            Method::ConstraintRoundrobin => "constraint_roundrobin",
            Method::Sinusoid => "sinusoid",
            Method::HawkesInhib => "hawkes_inhib",
        }
    }

    pub fn parse(name: &str) -> Result<Self, ActionError> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == name)
            .ok_or_else(|| ActionError::UnknownMethod(name.to_string()))
    }

    /// Methods tuned to the common target rate.
    pub fn rate_matched(self) -> bool {
        !matches!(self, Method::Fixed | Method::ConstraintRoundrobin)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum FieldMode {
    Hazard,
    Phase,
    Hybrid,
}

#[derive(Clone, Debug)]
enum State {
    Field {
        mode: FieldMode,
        field: FieldSampler,
        smoothed: Vec<f64>,
        taus: Vec<u64>,
        u: Vec<f64>,
    },
    Poisson,
    Filtered {
        recent: VecDeque<(u64, [f64; 2])>,
    },
    Fixed {
        period: Vec<u64>,
        next: Vec<u64>,
    },
    Token {
        held: Vec<Option<usize>>,
        in_use: Vec<usize>,
        queue: VecDeque<(usize, u64)>,
        queued: Vec<bool>,
    },
    RoundRobin {
        held: Vec<Option<usize>>,
        in_use: Vec<usize>,
    },
    Sinusoid,
    Hawkes {
        recent: VecDeque<(u64, [f64; 2])>,
    },
}

/// Per-run scheduler state plus its diagnostics counters.
#[derive(Clone, Debug)]
pub struct Scheduler {
    pub method: Method,
    state: State,
    rng: SimRng,
    rates: Vec<f64>,
    probs: Vec<f64>,
    pub noise_evals: u64,
    /// Token requests granted after exceeding the maximum wait.
    pub forced_grants: u64,
    /// Proposals dropped by a capacity or rotation rule.
    pub dropped: u64,
    /// Ticks on which mean normalisation was undefined.
    pub gamma_undefined: u64,
}

impl Scheduler {
    pub fn new(method: Method, cfg: &ActionConfig, seeds: &SeedBundle) -> Result<Self, ActionError> {
        let n = cfg.n_agents;
        let state = match method {
            Method::Perlin | Method::PerlinPhase | Method::PerlinHybrid => State::Field {
                mode: match method {
                    Method::Perlin => FieldMode::Hazard,
                    Method::PerlinPhase => FieldMode::Phase,
                    _ => FieldMode::Hybrid,
                },
                field: FieldSampler::new(
                    cfg.field.clone().with_seed(seeds.substream("action.field")),
                    TemporalMode::Drift { velocity: cfg.v_drift },
                    BoundaryMode::Toroidal { period: cfg.side },
                )?,
                smoothed: Vec::new(),
                taus: vec![0; n],
                u: vec![0.0; n],
            },
            Method::Poisson => State::Poisson,
            Method::Filtered => State::Filtered { recent: VecDeque::new() },
            Method::Fixed => {
                let mut rng = seeds.rng("action.fixed");
                let normal = Normal::new(cfg.fixed.period_mean, cfg.fixed.period_sd.max(0.0))
                    .map_err(|e| ActionError::InvalidConfig(e.to_string()))?;
                let period: Vec<u64> = (0..n).map(|_| normal.sample(&mut rng).round().max(1.0) as u64).collect();
                let next = period.iter().map(|&p| rng.random_range(0..p)).collect();
                State::Fixed { period, next }
            }
            Method::ConstraintToken => State::Token {
                held: vec![None; n],
                in_use: vec![0; cfg.token.cells * cfg.token.cells],
                queue: VecDeque::new(),
                queued: vec![false; n],
            },
            Method::ConstraintRoundrobin => {
                State::RoundRobin { held: vec![None; n], in_use: vec![0; cfg.regions * cfg.regions] }
            }
            Method::Sinusoid => State::Sinusoid,
            Method::HawkesInhib => State::Hawkes { recent: VecDeque::new() },
        };
        Ok(Self {
            method,
            state,
            rng: seeds.rng("action.decide"),
            rates: vec![0.0; n],
            probs: vec![0.0; n],
            noise_evals: 0,
            forced_grants: 0,
            dropped: 0,
            gamma_undefined: 0,
        })
    }

    /// Pushes the agents starting at tick `t` into `starts` (ascending).
    /// Agent `i` is idle when `active_until[i] <= t`; only the capacity
    /// schedulers look at that, the rest may restart a running action.
    pub fn decide(&mut self, cfg: &ActionConfig, t: u64, positions: &[[f64; 2]], active_until: &[u64], starts: &mut Vec<usize>) {
        let n = positions.len();
        let idle = |i: usize| active_until[i] <= t;
        let target = cfg.lambda_target();
        let rng = &mut self.rng;
        match &mut self.state {
            State::Field { mode, field, smoothed, taus, u } => {
                let need_hazard = *mode != FieldMode::Phase;
                let cycle_start = t % cfg.cycle == 0;
                if need_hazard || cycle_start {
                    for (ui, p) in u.iter_mut().zip(positions) {
                        *ui = to_unit(field.sample(p[0], p[1]));
                    }
                    self.noise_evals += n as u64;
                }
                if cycle_start && *mode != FieldMode::Hazard {
                    for (tau, &ui) in taus.iter_mut().zip(u.iter()) {
                        let j = if cfg.phase_jitter > 0 { rng.random_range(-cfg.phase_jitter..=cfg.phase_jitter) } else { 0 };
                        *tau = (phase_map(ui, cfg.cycle) as i64 + j).rem_euclid(cfg.cycle as i64) as u64;
                    }
                }
                let mut hazard_gamma = None;
                if need_hazard {
                    smooth_hazard(u, cfg.lambda0, cfg.eps, cfg.alpha_ema, smoothed);
                    let mean = smoothed.iter().sum::<f64>() / n as f64;
                    hazard_gamma = (mean > 0.0).then(|| target / mean);
                }
                let mut phase_gamma = None;
                if *mode != FieldMode::Hazard {
                    for (r, &tau) in self.rates.iter_mut().zip(taus.iter()) {
                        *r = phase_intensity(tau, t, cfg.cycle, cfg.sigma, cfg.lambda0, cfg.eps);
                    }
                    let mean = self.rates.iter().sum::<f64>() / n as f64;
                    phase_gamma = (mean > 0.0).then(|| target / mean);
                }
                // Weight on the phase component.
                let wp = match mode {
                    FieldMode::Hazard => 0.0,
                    FieldMode::Phase => 1.0,
                    FieldMode::Hybrid => cfg.hybrid_alpha,
                };
                if (wp < 1.0 && hazard_gamma.is_none()) || (wp > 0.0 && phase_gamma.is_none()) {
                    self.gamma_undefined += 1;
                }
                for i in 0..n {
                    let h = hazard_gamma.map_or(0.0, |g| g * smoothed.get(i).copied().unwrap_or(0.0));
                    let q = phase_gamma.map_or(0.0, |g| g * self.rates[i]);
                    self.probs[i] = rate_to_probability(hybrid_rate(h, q, wp), 1.0);
                }
                bernoulli(&self.probs, rng, starts);
                field.advance(1);
            }
            State::Poisson => {
                let p = rate_to_probability(target, 1.0);
                for i in 0..n {
                    if rng.random::<f64>() < p {
                        starts.push(i);
                    }
                }
            }
            State::Sinusoid => {
                let s = &cfg.sinusoid;
                let lam = target * (1.0 + s.amplitude * (TAU * t as f64 / s.period).sin());
                let p = rate_to_probability(lam.max(0.0), 1.0);
                for i in 0..n {
                    if rng.random::<f64>() < p {
                        starts.push(i);
                    }
                }
            }
            State::Filtered { recent } => {
                let f = &cfg.filtered;
                while recent.front().is_some_and(|&(tk, _)| tk + f.window <= t) {
                    recent.pop_front();
                }
                let p = rate_to_probability(target, 1.0);
                let r2 = f.radius * f.radius;
                for i in 0..n {
                    if rng.random::<f64>() >= p {
                        continue;
                    }
                    let near = recent.iter().filter(|(_, q)| torus_dist2(positions[i], *q, cfg.side) <= r2).count();
                    if near >= f.cap {
                        self.dropped += 1;
                    } else {
                        recent.push_back((t, positions[i]));
                        starts.push(i);
                    }
                }
            }
            State::Fixed { period, next } => {
                let j = cfg.fixed.jitter;
                for i in 0..n {
                    if next[i] != t {
                        continue;
                    }
                    starts.push(i);
                    let shift = if j > 0 { rng.random_range(-j..=j) } else { 0 };
                    next[i] = (t as i64 + (period[i] as i64 + shift).max(1)) as u64;
                }
            }
            State::Token { held, in_use, queue, queued } => {
                let tk = &cfg.token;
                let cell_w = cfg.side / tk.cells as f64;
                let cell = |p: [f64; 2]| {
                    let cx = ((p[0] / cell_w) as usize).min(tk.cells - 1);
                    let cy = ((p[1] / cell_w) as usize).min(tk.cells - 1);
                    cy * tk.cells + cx
                };
                release(held, in_use, active_until, t);
                let mut granted = Vec::new();
                let mut waiting = VecDeque::with_capacity(queue.len());
                while let Some((i, since)) = queue.pop_front() {
                    let c = cell(positions[i]);
                    if in_use[c] < tk.capacity || t - since >= tk.max_wait {
                        if in_use[c] >= tk.capacity {
                            self.forced_grants += 1;
                        }
                        in_use[c] += 1;
                        held[i] = Some(c);
                        queued[i] = false;
                        granted.push(i);
                    } else {
                        waiting.push_back((i, since));
                    }
                }
                *queue = waiting;
                let p = idle_start_probability(cfg.target_duty(), cfg.duration);
                for i in 0..n {
                    if !idle(i) || queued[i] || held[i].is_some() {
                        continue;
                    }
                    if rng.random::<f64>() >= p {
                        continue;
                    }
                    let c = cell(positions[i]);
                    if in_use[c] < tk.capacity {
                        in_use[c] += 1;
                        held[i] = Some(c);
                        granted.push(i);
                    } else {
                        queued[i] = true;
                        queue.push_back((i, t));
                    }
                }
                granted.sort_unstable();
                starts.extend(granted);
            }
            State::RoundRobin { held, in_use } => {
                let rr = &cfg.round_robin;
                let k = cfg.regions;
                let w = cfg.side / k as f64;
                release(held, in_use, active_until, t);
                let enabled = ((t / rr.rotation) % rr.groups as u64) as usize;
                let p = rate_to_probability(target, 1.0);
                for i in 0..n {
                    if !idle(i) || rng.random::<f64>() >= p {
                        continue;
                    }
                    let rx = ((positions[i][0] / w) as usize).min(k - 1);
                    let ry = ((positions[i][1] / w) as usize).min(k - 1);
                    let region = ry * k + rx;
                    if (rx % 2 + 2 * (ry % 2)) % rr.groups == enabled && in_use[region] < rr.slots {
                        in_use[region] += 1;
                        held[i] = Some(region);
                        starts.push(i);
                    } else {
                        self.dropped += 1;
                    }
                }
            }
            State::Hawkes { recent } => {
                let hk = &cfg.hawkes;
                while recent.front().is_some_and(|&(tk, _)| tk + hk.window < t) {
                    recent.pop_front();
                }
                let r2 = hk.radius * hk.radius;
                let alpha = hk.alpha_ratio;
                for i in 0..n {
                    let mut s = 0.0;
                    for &(tk, q) in recent.iter() {
                        if torus_dist2(positions[i], q, cfg.side) <= r2 {
                            s += (-((t - tk) as f64) / hk.tau).exp();
                        }
                    }
                    self.rates[i] = (1.0 + alpha * s).max(0.0);
                }
                let HazardStep { gamma } = normalize_to_target(&self.rates, target, &mut self.probs);
                if gamma.is_none() {
                    self.gamma_undefined += 1;
                }
                let before = starts.len();
                bernoulli(&self.probs, rng, starts);
                for &i in &starts[before..] {
                    recent.push_back((t, positions[i]));
                }
            }
        }
    }
}

fn bernoulli(probs: &[f64], rng: &mut SimRng, starts: &mut Vec<usize>) {
    for (i, &p) in probs.iter().enumerate() {
        if rng.random::<f64>() < p {
            starts.push(i);
        }
    }
}

/// Per-tick request probability for agents that may only start when idle,
/// chosen so the renewal duty `D p / (1 + (D - 1) p)` equals `duty`.
fn idle_start_probability(duty: f64, duration: u64) -> f64 {
    let d = duration as f64;
    (duty / (d - (d - 1.0) * duty)).clamp(0.0, 1.0)
}

/// Returns tokens or slots held by agents whose action has ended.
fn release(held: &mut [Option<usize>], in_use: &mut [usize], active_until: &[u64], t: u64) {
    for (h, &until) in held.iter_mut().zip(active_until) {
        if until <= t {
            if let Some(c) = h.take() {
                in_use[c] -= 1;
            }
        }
    }
}
