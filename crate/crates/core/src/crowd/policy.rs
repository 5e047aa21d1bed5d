//! Motion policies: the dual/single field drivers and the six baselines.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{blend_with_unit, step_kinematics, update_speed_ema, update_speed_ou, CrowdConfig, CrowdError, CrowdState, SpeedUpdate};
use crate::geom::{angle_diff, torus_delta, wrap, wrap_angle};
use crate::noise::{to_unit, BoundaryMode, FieldSampler, NoiseSpec, SeedBundle, SimRng, TemporalMode};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeighborSearch {
    /// Every pair is tested each tick.
    AllPairs,
    /// Uniform torus grid with cells no smaller than the radius.
    Grid,
}

fn default_field() -> NoiseSpec {
    NoiseSpec::new(0.01, 4, 0.5, 2.0)
}

fn default_speed_field() -> NoiseSpec {
    NoiseSpec::new(0.011, 4, 0.5, 2.0)
}

fn default_drift() -> f64 {
    0.002
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum MotionPolicy {
    PerlinDual {
        #[serde(default = "default_field")]
        heading: NoiseSpec,
        #[serde(default = "default_speed_field")]
        speed: NoiseSpec,
        #[serde(default = "default_drift")]
        v_drift: f64,
    },
    PerlinSingle {
        #[serde(default = "default_field")]
        field: NoiseSpec,
        #[serde(default = "default_drift")]
        v_drift: f64,
    },
    Urw {
        sigma_theta: f64,
        speed: f64,
    },
    OuHeading {
        beta: f64,
        sigma_theta: f64,
        speed: f64,
    },
    CurlNoise {
        #[serde(default = "default_field")]
        potential: NoiseSpec,
        #[serde(default = "default_drift")]
        v_drift: f64,
        /// Finite-difference step in world units.
        h: f64,
    },
    Vicsek {
        radius: f64,
        eta: f64,
        speed: f64,
        neighbor_search: NeighborSearch,
    },
    Piecewise {
        cell_size: f64,
    },
}

impl MotionPolicy {
    pub const NAMES: [&'static str; 7] = ["perlin_dual", "perlin_single", "urw", "ou", "curl_noise", "vicsek", "piecewise"];

    /// Policy with its default parameters.
    pub fn by_name(name: &str) -> Result<Self, CrowdError> {
        Ok(match name {
            "perlin_dual" => Self::PerlinDual { heading: default_field(), speed: default_speed_field(), v_drift: default_drift() },
            "perlin_single" => Self::PerlinSingle { field: default_field(), v_drift: default_drift() },
            "urw" => Self::Urw { sigma_theta: 0.4, speed: 1.0 },
            "ou" | "ou_heading" => Self::OuHeading { beta: 0.9, sigma_theta: 0.1, speed: 1.0 },
            "curl_noise" | "curlnoise" => Self::CurlNoise { potential: default_field(), v_drift: default_drift(), h: 0.25 },
            "vicsek" => Self::Vicsek { radius: 20.0, eta: 0.25, speed: 1.0, neighbor_search: NeighborSearch::AllPairs },
            "piecewise" => Self::Piecewise { cell_size: 80.0 },
            other => return Err(CrowdError::UnknownPolicy(other.to_string())),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::PerlinDual { .. } => "perlin_dual",
            Self::PerlinSingle { .. } => "perlin_single",
            Self::Urw { .. } => "urw",
            Self::OuHeading { .. } => "ou",
            Self::CurlNoise { .. } => "curl_noise",
            Self::Vicsek { .. } => "vicsek",
            Self::Piecewise { .. } => "piecewise",
        }
    }
}

/// Random constant vectors at cell centres of an `n x n` torus grid,
/// bilinearly interpolated between the four surrounding centres.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseField {
    n: usize,
    cell: f64,
    vectors: Vec<[f64; 2]>,
}

impl PiecewiseField {
    pub fn new(n: usize, side: f64, vectors: Vec<[f64; 2]>) -> Self {
        assert_eq!(vectors.len(), n * n);
        Self { n, cell: side / n as f64, vectors }
    }

    /// `round(side / cell_size)` cells per axis, random directions with
    /// magnitudes uniform in `[v_min, v_max]`.
    pub fn random<R: Rng>(side: f64, cell_size: f64, v_min: f64, v_max: f64, rng: &mut R) -> Self {
        let n = ((side / cell_size).round() as usize).max(1);
        let vectors = (0..n * n)
            .map(|_| {
                let th = rng.random::<f64>() * TAU;
                let m = v_min + (v_max - v_min) * rng.random::<f64>();
                [m * th.cos(), m * th.sin()]
            })
            .collect();
        Self::new(n, side, vectors)
    }

    pub fn cells(&self) -> usize {
        self.n
    }

    pub fn center(&self, i: usize, j: usize) -> [f64; 2] {
        [(i as f64 + 0.5) * self.cell, (j as f64 + 0.5) * self.cell]
    }

    pub fn vector(&self, i: usize, j: usize) -> [f64; 2] {
        self.vectors[j * self.n + i]
    }

    pub fn velocity(&self, p: [f64; 2]) -> [f64; 2] {
        let n = self.n as isize;
        let u = p[0] / self.cell - 0.5;
        let v = p[1] / self.cell - 0.5;
        let (i0, j0) = (u.floor(), v.floor());
        let (fx, fy) = (u - i0, v - j0);
        let idx = |i: isize, j: isize| (j.rem_euclid(n) * n + i.rem_euclid(n)) as usize;
        let (i0, j0) = (i0 as isize, j0 as isize);
        let a = self.vectors[idx(i0, j0)];
        let b = self.vectors[idx(i0 + 1, j0)];
        let c = self.vectors[idx(i0, j0 + 1)];
        let d = self.vectors[idx(i0 + 1, j0 + 1)];
        let mut out = [0.0; 2];
        for k in 0..2 {
            let bottom = a[k] + fx * (b[k] - a[k]);
            let top = c[k] + fx * (d[k] - c[k]);
            out[k] = bottom + fy * (top - bottom);
        }
        out
    }
}

/// Runtime state of a policy: samplers, per-agent memory and its RNG.
#[derive(Clone, Debug)]
pub struct PolicyState {
    kind: Kind,
    rng: SimRng,
    /// Field evaluations performed so far.
    pub noise_evals: u64,
    /// Raw random draws performed so far (jitter, turn noise, OU noise).
    pub rng_draws: u64,
    targets_theta: Vec<f64>,
    targets_v: Vec<f64>,
}

#[derive(Clone, Debug)]
enum Kind {
    PerlinDual { heading: FieldSampler, speed: FieldSampler },
    PerlinSingle { field: FieldSampler },
    Urw { sigma: f64, speed: f64 },
    Ou { beta: f64, sigma: f64, speed: f64, preferred: Vec<f64> },
    Curl { psi: FieldSampler, h: f64, scale: f64 },
    Vicsek { radius: f64, eta: f64, speed: f64, search: NeighborSearch },
    Piecewise(PiecewiseField),
}

fn drifting(spec: &NoiseSpec, seed: u64, v_drift: f64, side: f64) -> Result<FieldSampler, CrowdError> {
    Ok(FieldSampler::new(
        spec.clone().with_seed(seed),
        TemporalMode::Drift { velocity: v_drift },
        BoundaryMode::Toroidal { period: side },
    )?)
}

impl PolicyState {
    pub fn new(policy: &MotionPolicy, cfg: &CrowdConfig, seeds: &SeedBundle, initial: &CrowdState) -> Result<Self, CrowdError> {
        let rng = seeds.rng("crowd.policy");
        let kind = match policy {
            MotionPolicy::PerlinDual { heading, speed, v_drift } => Kind::PerlinDual {
                heading: drifting(heading, seeds.substream("crowd.heading"), *v_drift, cfg.side)?,
                speed: drifting(speed, seeds.substream("crowd.speed"), *v_drift, cfg.side)?,
            },
            MotionPolicy::PerlinSingle { field, v_drift } => {
                Kind::PerlinSingle { field: drifting(field, seeds.substream("crowd.heading"), *v_drift, cfg.side)? }
            }
            MotionPolicy::Urw { sigma_theta, speed } => Kind::Urw { sigma: *sigma_theta, speed: *speed },
            MotionPolicy::OuHeading { beta, sigma_theta, speed } => {
                Kind::Ou { beta: *beta, sigma: *sigma_theta, speed: *speed, preferred: initial.headings.clone() }
            }
            MotionPolicy::CurlNoise { potential, v_drift, h } => {
                let psi = drifting(potential, seeds.substream("crowd.potential"), *v_drift, cfg.side)?;
                let scale = 1.0 / mean_curl_speed(&psi, *h, cfg.side, 64);
                Kind::Curl { psi, h: *h, scale }
            }
            MotionPolicy::Vicsek { radius, eta, speed, neighbor_search } => {
                Kind::Vicsek { radius: *radius, eta: *eta, speed: *speed, search: *neighbor_search }
            }
            MotionPolicy::Piecewise { cell_size } => {
                let mut prng = seeds.rng("crowd.piecewise");
                Kind::Piecewise(PiecewiseField::random(cfg.side, *cell_size, cfg.v_min, cfg.v_max, &mut prng))
            }
        };
        Ok(Self {
            kind,
            rng,
            noise_evals: 0,
            rng_draws: 0,
            targets_theta: vec![0.0; cfg.n_agents],
            targets_v: vec![0.0; cfg.n_agents],
        })
    }

    /// One tick: targets at the current positions, move with the current
    /// heading and speed, then relax heading and speed (or set them directly
    /// for velocity-field policies), then advance the fields.
    pub fn tick(&mut self, cfg: &CrowdConfig, state: &mut CrowdState) {
        let n = state.len();
        let direct = match &self.kind {
            Kind::Vicsek { .. } | Kind::Curl { .. } | Kind::Piecewise(_) => true,
            _ => false,
        };
        self.compute_targets(cfg, state);
        if direct {
            for i in 0..n {
                state.positions[i] = step_kinematics(state.positions[i], state.headings[i], state.speeds[i], cfg.dt, cfg.side);
            }
            state.headings.copy_from_slice(&self.targets_theta);
            state.speeds.copy_from_slice(&self.targets_v);
        } else {
            let (l, dt) = (cfg.side, cfg.dt);
            for i in 0..n {
                let (h, v) = (state.headings[i], state.speeds[i]);
                let (s, c) = h.sin_cos();
                let p = state.positions[i];
                state.positions[i] = [wrap(p[0] + v * c * dt, l), wrap(p[1] + v * s * dt, l)];
                state.headings[i] = blend_with_unit(h, c, s, self.targets_theta[i], cfg.beta);
                state.speeds[i] = match cfg.speed_update {
                    SpeedUpdate::Ema => update_speed_ema(state.speeds[i], self.targets_v[i], cfg.rho),
                    SpeedUpdate::Ou { beta, sigma } => {
                        self.rng_draws += 1;
                        let z: f64 = StandardNormal.sample(&mut self.rng);
                        update_speed_ou(state.speeds[i], self.targets_v[i], beta, sigma, z, cfg.v_min, cfg.v_max)
                    }
                };
            }
        }
        match &mut self.kind {
            Kind::PerlinDual { heading, speed } => {
                heading.advance(1);
                speed.advance(1);
            }
            Kind::PerlinSingle { field } => field.advance(1),
            Kind::Curl { psi, .. } => psi.advance(1),
            _ => {}
        }
    }

    fn compute_targets(&mut self, cfg: &CrowdConfig, state: &CrowdState) {
        let n = state.len();
        let (vmin, vspan) = (cfg.v_min, cfg.v_max - cfg.v_min);
        let jitter = cfg.jitter;
        let rng = &mut self.rng;
        let (tt, tv) = (&mut self.targets_theta, &mut self.targets_v);
        match &self.kind {
            Kind::PerlinDual { heading, speed } => {
                for i in 0..n {
                    let [x, y] = state.positions[i];
                    let z = jitter * (2.0 * rng.random::<f64>() - 1.0);
                    tt[i] = TAU * to_unit(heading.sample(x, y)) + z;
                    tv[i] = vmin + to_unit(speed.sample(x, y)) * vspan;
                }
                self.noise_evals += 2 * n as u64;
                self.rng_draws += n as u64;
            }
            Kind::PerlinSingle { field } => {
                for i in 0..n {
                    let [x, y] = state.positions[i];
                    let u = to_unit(field.sample(x, y));
                    tt[i] = TAU * u + jitter * (2.0 * rng.random::<f64>() - 1.0);
                    tv[i] = vmin + u * vspan;
                }
                self.noise_evals += n as u64;
                self.rng_draws += n as u64;
            }
            Kind::Urw { sigma, speed } => {
                for i in 0..n {
                    let z: f64 = StandardNormal.sample(rng);
                    tt[i] = state.headings[i] + sigma * z;
                    tv[i] = *speed;
                }
                self.rng_draws += n as u64;
            }
            Kind::Ou { beta, sigma, speed, preferred } => {
                for i in 0..n {
                    let z: f64 = StandardNormal.sample(rng);
                    let th = state.headings[i];
                    tt[i] = th + beta * angle_diff(preferred[i], th) + sigma * z;
                    tv[i] = *speed;
                }
                self.rng_draws += n as u64;
            }
            Kind::Curl { psi, h, scale } => {
                for i in 0..n {
                    let [x, y] = state.positions[i];
                    let [vx, vy] = curl_velocity(psi, x, y, *h, *scale);
                    let m = (vx * vx + vy * vy).sqrt();
                    tt[i] = if m > 0.0 { wrap_angle(vy.atan2(vx)) } else { state.headings[i] };
                    tv[i] = m.clamp(cfg.v_min, cfg.v_max);
                }
                self.noise_evals += 4 * n as u64;
            }
            Kind::Vicsek { radius, eta, speed, search } => {
                match search {
                    NeighborSearch::AllPairs => vicsek_all_pairs(state, cfg.side, *radius, tt),
                    NeighborSearch::Grid => vicsek_grid(state, cfg.side, *radius, tt),
                }
                for t in tt.iter_mut() {
                    *t = wrap_angle(*t + eta * (rng.random::<f64>() - 0.5));
                }
                tv.iter_mut().for_each(|v| *v = *speed);
                self.rng_draws += n as u64;
            }
            Kind::Piecewise(field) => {
                for i in 0..n {
                    let [vx, vy] = field.velocity(state.positions[i]);
                    let m = (vx * vx + vy * vy).sqrt();
                    tt[i] = if m > 0.0 { wrap_angle(vy.atan2(vx)) } else { state.headings[i] };
                    tv[i] = m;
                }
            }
        }
    }

    pub fn field_samplers(&self) -> Vec<&FieldSampler> {
        match &self.kind {
            Kind::PerlinDual { heading, speed } => vec![heading, speed],
            Kind::PerlinSingle { field } => vec![field],
            Kind::Curl { psi, .. } => vec![psi],
            _ => vec![],
        }
    }
}

/// `scale * (d psi/dy, -d psi/dx)` by central differences.
#[inline]
pub fn curl_velocity(psi: &FieldSampler, x: f64, y: f64, h: f64, scale: f64) -> [f64; 2] {
    let dpx = (psi.sample(x + h, y) - psi.sample(x - h, y)) / (2.0 * h);
    let dpy = (psi.sample(x, y + h) - psi.sample(x, y - h)) / (2.0 * h);
    [scale * dpy, -scale * dpx]
}

/// Mean unscaled curl speed over a `k x k` grid of cell centres.
fn mean_curl_speed(psi: &FieldSampler, h: f64, side: f64, k: usize) -> f64 {
    let c = side / k as f64;
    let mut s = 0.0;
    for j in 0..k {
        for i in 0..k {
            let [vx, vy] = curl_velocity(psi, (i as f64 + 0.5) * c, (j as f64 + 0.5) * c, h, 1.0);
            s += (vx * vx + vy * vy).sqrt();
        }
    }
    let m = s / (k * k) as f64;
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

/// Circular mean heading over all agents within `radius` (self included).
/// Sums run in index order with a branch-free mask so the result matches the
/// grid route bit for bit.
fn vicsek_all_pairs(state: &CrowdState, side: f64, radius: f64, out: &mut [f64]) {
    let n = state.len();
    let xs: Vec<f64> = state.positions.iter().map(|p| p[0]).collect();
    let ys: Vec<f64> = state.positions.iter().map(|p| p[1]).collect();
    let cs: Vec<f64> = state.headings.iter().map(|t| t.cos()).collect();
    let ss: Vec<f64> = state.headings.iter().map(|t| t.sin()).collect();
    let r2 = radius * radius;
    for i in 0..n {
        let (xi, yi) = (xs[i], ys[i]);
        let (mut sc, mut sn) = (0.0, 0.0);
        for j in 0..n {
            let mut dx = (xs[j] - xi).abs();
            dx = dx.min(side - dx);
            let mut dy = (ys[j] - yi).abs();
            dy = dy.min(side - dy);
            let m = if dx * dx + dy * dy <= r2 { 1.0 } else { 0.0 };
            sc += m * cs[j];
            sn += m * ss[j];
        }
        out[i] = mean_angle(sc, sn, state.headings[i]);
    }
}

fn vicsek_grid(state: &CrowdState, side: f64, radius: f64, out: &mut [f64]) {
    let n = state.len();
    let cells = ((side / radius).floor() as usize).max(1);
    let cell = side / cells as f64;
    let cell_of = |p: [f64; 2]| (((p[0] / cell) as usize).min(cells - 1), ((p[1] / cell) as usize).min(cells - 1));
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); cells * cells];
    for (i, &p) in state.positions.iter().enumerate() {
        let (cx, cy) = cell_of(p);
        buckets[cy * cells + cx].push(i);
    }
    let cs: Vec<f64> = state.headings.iter().map(|t| t.cos()).collect();
    let ss: Vec<f64> = state.headings.iter().map(|t| t.sin()).collect();
    let r2 = radius * radius;
    let mut nbrs = Vec::new();
    let mut seen_cells = Vec::with_capacity(9);
    for i in 0..n {
        let (cx, cy) = cell_of(state.positions[i]);
        nbrs.clear();
        seen_cells.clear();
        for oy in -1isize..=1 {
            for ox in -1isize..=1 {
                let nx = (cx as isize + ox).rem_euclid(cells as isize) as usize;
                let ny = (cy as isize + oy).rem_euclid(cells as isize) as usize;
                let c = ny * cells + nx;
                // Small grids revisit the same cell from several offsets.
                if seen_cells.contains(&c) {
                    continue;
                }
                seen_cells.push(c);
                for &j in &buckets[c] {
                    let dx = torus_delta(state.positions[i][0], state.positions[j][0], side);
                    let dy = torus_delta(state.positions[i][1], state.positions[j][1], side);
                    if dx * dx + dy * dy <= r2 {
                        nbrs.push(j);
                    }
                }
            }
        }
        nbrs.sort_unstable();
        let (mut sc, mut sn) = (0.0, 0.0);
        for &j in &nbrs {
            sc += cs[j];
            sn += ss[j];
        }
        out[i] = mean_angle(sc, sn, state.headings[i]);
    }
}

#[inline]
fn mean_angle(sc: f64, sn: f64, fallback: f64) -> f64 {
    if sc * sc + sn * sn < 1e-24 {
        fallback
    } else {
        wrap_angle(sn.atan2(sc))
    }
}
