use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Normalization, Selection, SpawnConfig, SpawnError};
use crate::geom::{dist2, Vec2};
use crate::noise::{phase_map, to_unit, BoundaryMode, FieldSampler, SeedBundle, SimRng, TemporalMode};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    PerlinA,
    PerlinB,
    Uniform,
    Filtered,
    PoissonDisk,
    MvnPoisson,
    Facility,
    Sinusoid,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 8] = [
        PolicyKind::PerlinA,
        PolicyKind::PerlinB,
        PolicyKind::Uniform,
        PolicyKind::Filtered,
        PolicyKind::PoissonDisk,
        PolicyKind::MvnPoisson,
        PolicyKind::Facility,
        PolicyKind::Sinusoid,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::PerlinA => "perlin_a",
            PolicyKind::PerlinB => "perlin_b",
            PolicyKind::Uniform => "uniform",
            PolicyKind::Filtered => "filtered",
            PolicyKind::PoissonDisk => "poisson_disk",
            PolicyKind::MvnPoisson => "mvn_poisson",
            PolicyKind::Facility => "facility",
            PolicyKind::Sinusoid => "sinusoid",
        }
    }

    pub fn parse(name: &str) -> Result<Self, SpawnError> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == name)
            .ok_or_else(|| SpawnError::UnknownPolicy(name.to_string()))
    }
}

#[derive(Clone, Debug)]
enum State {
    PerlinA {
        field: FieldSampler,
        /// `(phase, position)` of this cycle's sites, sorted by phase.
        sites: Vec<(u64, Vec2)>,
        next: usize,
    },
    PerlinB {
        field: FieldSampler,
        values: Vec<f64>,
        eval_ticks: Vec<u64>,
        next: usize,
    },
    Uniform {
        acc: f64,
    },
    Filtered {
        acc: f64,
    },
    PoissonDisk {
        radius: f64,
    },
    Mvn {
        means: Vec<Vec2>,
        sd: f64,
    },
    Facility {
        acc: f64,
        candidates: Vec<Vec2>,
        desirability: Vec<f64>,
    },
    Sinusoid {
        acc: f64,
    },
}

/// A spawn-placement policy with its per-run state.
#[derive(Clone, Debug)]
pub struct SpawnPolicy {
    pub kind: PolicyKind,
    state: State,
    rng: SimRng,
    pub noise_evals: u64,
    /// Iso-band evaluations that needed the widened band, and ones skipped.
    pub band_widened: u64,
    pub band_skipped: u64,
    /// Filtered slots given up after every attempt was rejected.
    pub rejected_slots: u64,
    /// Proposals moved back inside the bounds.
    pub clipped: u64,
}

fn field_sampler(spec: &crate::noise::NoiseSpec, seed: u64, cycle: u64) -> Result<FieldSampler, SpawnError> {
    Ok(FieldSampler::new(spec.clone().with_seed(seed), TemporalMode::Resample { cycle }, BoundaryMode::Unbounded)?)
}

impl SpawnPolicy {
    pub fn new(kind: PolicyKind, cfg: &SpawnConfig, seeds: &SeedBundle) -> Result<Self, SpawnError> {
        cfg.validate()?;
        let state = match kind {
            PolicyKind::PerlinA => State::PerlinA {
                field: field_sampler(&cfg.perlin_a.field, seeds.substream("spawn.field"), cfg.cycle)?,
                sites: Vec::new(),
                next: 0,
            },
            PolicyKind::PerlinB => State::PerlinB {
                field: field_sampler(&cfg.perlin_b.field, seeds.substream("spawn.field"), cfg.cycle)?,
                values: Vec::new(),
                eval_ticks: Vec::new(),
                next: 0,
            },
            PolicyKind::Uniform => State::Uniform { acc: 0.0 },
            PolicyKind::Filtered => State::Filtered { acc: 0.0 },
            PolicyKind::PoissonDisk => State::PoissonDisk {
                // About twice the quota fits in a maximal packing at this radius.
                radius: cfg.poisson_disk.radius.unwrap_or(cfg.side * (0.35 / cfg.cycle_quota.max(1) as f64).sqrt()),
            },
            PolicyKind::MvnPoisson => {
                let mut place = seeds.rng("spawn.place");
                let means = (0..cfg.mvn.components)
                    .map(|_| [place.random::<f64>() * cfg.side, place.random::<f64>() * cfg.side])
                    .collect();
                State::Mvn { means, sd: cfg.mvn.sd_fraction * cfg.side }
            }
            PolicyKind::Facility => {
                let g = cfg.facility.grid;
                let cell = cfg.side / g as f64;
                let field = FieldSampler::stationary(
                    cfg.facility.desirability.clone().with_seed(seeds.substream("spawn.facility")),
                    BoundaryMode::Unbounded,
                )?;
                let desirability = field.raster(g, g, cell, [0.0, 0.0]).into_iter().map(to_unit).collect();
                let candidates = (0..g * g).map(|k| [((k % g) as f64 + 0.5) * cell, ((k / g) as f64 + 0.5) * cell]).collect();
                State::Facility { acc: 0.0, candidates, desirability }
            }
            PolicyKind::Sinusoid => State::Sinusoid { acc: 0.0 },
        };
        let noise_evals = match kind {
            PolicyKind::Facility => (cfg.facility.grid * cfg.facility.grid) as u64 * cfg.facility.desirability.octaves as u64,
            _ => 0,
        };
        Ok(Self {
            kind,
            state,
            rng: seeds.rng("spawn.policy"),
            noise_evals,
            band_widened: 0,
            band_skipped: 0,
            rejected_slots: 0,
            clipped: 0,
        })
    }

    /// This cycle's Perlin-A sites as `(phase, position)`, sorted by phase.
    pub fn phases(&self) -> Option<&[(u64, Vec2)]> {
        match &self.state {
            State::PerlinA { sites, .. } => Some(sites),
            _ => None,
        }
    }

    /// This cycle's Perlin-B grid of unit field values (row-major).
    pub fn band_grid(&self) -> Option<&[f64]> {
        match &self.state {
            State::PerlinB { values, .. } => Some(values),
            _ => None,
        }
    }

    pub fn eval_ticks(&self) -> Option<&[u64]> {
        match &self.state {
            State::PerlinB { eval_ticks, .. } => Some(eval_ticks),
            _ => None,
        }
    }

    /// Appends this tick's proposals to `out`. Must be called once per tick
    /// in increasing `t`, starting at 0.
    pub fn propose(&mut self, cfg: &SpawnConfig, t: u64, entities: &[Vec2], players: &[Vec2], out: &mut Vec<Vec2>) {
        let start = out.len();
        let side = cfg.side;
        let phase = t % cfg.cycle;
        let rng = &mut self.rng;
        match &mut self.state {
            State::PerlinA { field, sites, next } => {
                if phase == 0 {
                    let p = &cfg.perlin_a;
                    let cands = stratified(p.candidates, side, rng);
                    let raw: Vec<f64> = cands.iter().map(|c| field.sample(c[0], c[1])).collect();
                    let taus: Vec<u64> = normalize(&raw, p.normalization).into_iter().map(|u| phase_map(u, cfg.cycle)).collect();
                    self.noise_evals += (p.candidates as u64) * field.evaluations_per_sample();
                    let mut idx = choose(p.candidates, p.cycle_sites, rng);
                    idx.sort_unstable();
                    *sites = idx.into_iter().map(|i| (taus[i], cands[i])).collect();
                    sites.sort_by_key(|s| s.0);
                    *next = 0;
                }
                while *next < sites.len() && sites[*next].0 == phase {
                    if rng.random::<f64>() >= cfg.perlin_a.eps {
                        out.push(sites[*next].1);
                    }
                    *next += 1;
                }
                field.advance(1);
            }
            State::PerlinB { field, values, eval_ticks, next } => {
                let p = &cfg.perlin_b;
                let cell = side / p.grid as f64;
                if phase == 0 {
                    *values = field.raster(p.grid, p.grid, cell, [0.0, 0.0]).into_iter().map(to_unit).collect();
                    self.noise_evals += (p.grid * p.grid) as u64 * field.evaluations_per_sample();
                    *eval_ticks = eval_schedule(cfg.cycle, p.spacing, p.jitter, p.min_separation, rng);
                    *next = 0;
                }
                if *next < eval_ticks.len() && eval_ticks[*next] == phase {
                    *next += 1;
                    let level = phase as f64 / cfg.cycle as f64;
                    let mut band = iso_band(values, level, p.band);
                    if band.is_empty() {
                        self.band_widened += 1;
                        band = iso_band(values, level, 2.0 * p.band);
                    }
                    let count = {
                        let z: f64 = rng.sample(StandardNormal);
                        ((p.count_mean + z).round().max(0.0) as usize).clamp(p.count_min, p.count_max)
                    };
                    if band.is_empty() {
                        self.band_skipped += 1;
                    } else {
                        let centre = |k: usize| [((k % p.grid) as f64 + 0.5) * cell, ((k / p.grid) as f64 + 0.5) * cell];
                        let pts: Vec<Vec2> = band.iter().map(|&k| centre(k)).collect();
                        match p.selection {
                            Selection::Random => {
                                for i in choose(pts.len(), count.min(pts.len()), rng) {
                                    out.push(pts[i]);
                                }
                            }
                            Selection::Farthest => {
                                let mut existing = entities.to_vec();
                                for _ in 0..count.min(pts.len()) {
                                    let i = farthest_point(&pts, &existing).expect("band is non-empty");
                                    out.push(pts[i]);
                                    existing.push(pts[i]);
                                }
                            }
                        }
                    }
                }
                field.advance(1);
            }
            State::Uniform { acc } => {
                for _ in 0..due(acc, cfg.base_rate()) {
                    out.push(uniform(side, rng));
                }
            }
            State::Sinusoid { acc } => {
                let rate = cfg.base_rate() * (1.0 + cfg.sinusoid.amplitude * (TAU * phase as f64 / cfg.cycle as f64).sin());
                for _ in 0..due(acc, rate.max(0.0)) {
                    out.push(uniform(side, rng));
                }
            }
            State::Filtered { acc } => {
                let f = &cfg.filtered;
                let (s2, c2) = (f.safety_radius * f.safety_radius, f.spacing_radius * f.spacing_radius);
                for _ in 0..due(acc, cfg.base_rate()) {
                    let mut placed = false;
                    for _ in 0..f.attempts {
                        let q = uniform(side, rng);
                        let ok = players.iter().all(|&p| dist2(p, q) > s2)
                            && entities.iter().chain(&out[start..]).all(|&e| dist2(e, q) > c2);
                        if ok {
                            out.push(q);
                            placed = true;
                            break;
                        }
                    }
                    if !placed {
                        self.rejected_slots += 1;
                    }
                }
            }
            State::PoissonDisk { radius } => {
                if phase == 0 {
                    out.extend(bridson(side, *radius, cfg.poisson_disk.attempts, rng));
                }
            }
            State::Mvn { means, sd } => {
                if phase == 0 {
                    let count = Poisson::new(cfg.cycle_quota.max(1) as f64).expect("positive mean").sample(rng) as usize;
                    let normal = Normal::new(0.0, *sd).expect("finite sd");
                    for _ in 0..count {
                        let m = means[rng.random_range(0..means.len())];
                        let p = [m[0] + normal.sample(rng), m[1] + normal.sample(rng)];
                        let q = [p[0].clamp(0.0, side), p[1].clamp(0.0, side)];
                        if q != p {
                            self.clipped += 1;
                        }
                        out.push(q);
                    }
                }
            }
            State::Facility { acc, candidates, desirability } => {
                let k = due(acc, cfg.base_rate());
                if k > 0 {
                    let mut existing = entities.to_vec();
                    for _ in 0..k {
                        let mut best = (f64::NEG_INFINITY, 0);
                        for (i, c) in candidates.iter().enumerate() {
                            let d = existing.iter().map(|&e| dist2(e, *c)).fold(side * side, f64::min).sqrt();
                            let score = d * desirability[i];
                            if score > best.0 {
                                best = (score, i);
                            }
                        }
                        out.push(candidates[best.1]);
                        existing.push(candidates[best.1]);
                    }
                }
            }
        }
        debug_assert!(out[start..].iter().all(|p| (0.0..=side).contains(&p[0]) && (0.0..=side).contains(&p[1])));
    }
}

/// Whole proposals due this tick from a fractional accumulator.
fn due(acc: &mut f64, rate: f64) -> usize {
    *acc += rate;
    let k = acc.floor();
    *acc -= k;
    k as usize
}

fn uniform(side: f64, rng: &mut SimRng) -> Vec2 {
    [rng.random::<f64>() * side, rng.random::<f64>() * side]
}

/// One uniform point in each of the first `m` cells of a `g x g` grid with
/// `g = ceil(sqrt(m))`.
fn stratified(m: usize, side: f64, rng: &mut SimRng) -> Vec<Vec2> {
    let g = (m as f64).sqrt().ceil() as usize;
    let cell = side / g as f64;
    (0..m)
        .map(|k| [((k % g) as f64 + rng.random::<f64>()) * cell, ((k / g) as f64 + rng.random::<f64>()) * cell])
        .collect()
}

/// `k` distinct indices from `0..n` in draw order (partial Fisher-Yates).
fn choose(n: usize, k: usize, rng: &mut SimRng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k.min(n) {
        let j = rng.random_range(i..n);
        idx.swap(i, j);
    }
    idx.truncate(k.min(n));
    idx
}

/// Unit values for a batch of raw field samples.
pub fn normalize(raw: &[f64], how: Normalization) -> Vec<f64> {
    match how {
        Normalization::Affine => raw.iter().map(|&n| to_unit(n)).collect(),
        Normalization::MinMax => {
            let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if hi > lo {
                raw.iter().map(|&n| (n - lo) / (hi - lo)).collect()
            } else {
                vec![0.5; raw.len()]
            }
        }
    }
}

fn iso_band(values: &[f64], level: f64, eps: f64) -> Vec<usize> {
    values.iter().enumerate().filter(|(_, v)| (*v - level).abs() <= eps).map(|(k, _)| k).collect()
}

/// Jittered evaluation ticks within one cycle, strictly increasing and at
/// least `min_sep` apart.
fn eval_schedule(cycle: u64, spacing: u64, jitter: u64, min_sep: u64, rng: &mut SimRng) -> Vec<u64> {
    let mut out: Vec<u64> = Vec::new();
    let j = jitter as i64;
    for k in 0..(cycle / spacing).max(1) {
        let base = (k * spacing + spacing / 2) as i64;
        let mut t = (base + if j > 0 { rng.random_range(-j..=j) } else { 0 }).max(0) as u64;
        if let Some(&prev) = out.last() {
            t = t.max(prev + min_sep.max(1));
        }
        if t < cycle {
            out.push(t);
        }
    }
    out
}

/// Index of the candidate whose nearest existing point is farthest away;
/// ties go to the lowest index. With no existing points the first candidate
/// wins.
pub fn farthest_point(candidates: &[Vec2], existing: &[Vec2]) -> Option<usize> {
    let mut best: Option<(f64, usize)> = None;
    for (i, c) in candidates.iter().enumerate() {
        let d = existing.iter().map(|&e| dist2(e, *c)).fold(f64::INFINITY, f64::min);
        if best.is_none_or(|(b, _)| d > b) {
            best = Some((d, i));
        }
    }
    best.map(|(_, i)| i)
}

/// Bridson dart throwing in `[0, side]^2`: `attempts` annulus samples per
/// active point before it retires.
pub fn bridson(side: f64, r: f64, attempts: usize, rng: &mut SimRng) -> Vec<Vec2> {
    let cell = r / std::f64::consts::SQRT_2;
    let g = (side / cell).ceil() as usize + 1;
    let mut grid: Vec<Option<usize>> = vec![None; g * g];
    let at = |p: Vec2| ((p[0] / cell) as usize).min(g - 1) + g * ((p[1] / cell) as usize).min(g - 1);
    let mut pts = vec![uniform(side, rng)];
    grid[at(pts[0])] = Some(0);
    let mut active = vec![0usize];
    let r2 = r * r;
    while !active.is_empty() {
        let a = rng.random_range(0..active.len());
        let base = pts[active[a]];
        let mut found = false;
        for _ in 0..attempts {
            let rad = r * (1.0 + rng.random::<f64>());
            let ang = rng.random::<f64>() * TAU;
            let q = [base[0] + rad * ang.cos(), base[1] + rad * ang.sin()];
            if !(0.0..=side).contains(&q[0]) || !(0.0..=side).contains(&q[1]) {
                continue;
            }
            let (cx, cy) = (((q[0] / cell) as usize).min(g - 1), ((q[1] / cell) as usize).min(g - 1));
            let mut clear = true;
            'scan: for y in cy.saturating_sub(2)..=(cy + 2).min(g - 1) {
                for x in cx.saturating_sub(2)..=(cx + 2).min(g - 1) {
                    if let Some(k) = grid[x + g * y] {
                        if dist2(pts[k], q) < r2 {
                            clear = false;
                            break 'scan;
                        }
                    }
                }
            }
            if clear {
                grid[at(q)] = Some(pts.len());
                active.push(pts.len());
                pts.push(q);
                found = true;
                break;
            }
        }
        if !found {
            active.swap_remove(a);
        }
    }
    pts
}
